//! Descriptor matching with the nearest-neighbor ratio test, and match
//! correctness against the ground-truth homography.

use std::collections::HashSet;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evaluation::DetectionSet;
use crate::geometry::{overlap_error, reproject_region, EllipticalRegion, Homography};
use crate::masks::{accumulate, count_keypoints, DescriptorMaskConfig, DomainRect};

pub const DEFAULT_RATIO_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, PartialEq)]
pub struct DescribedDetection {
    pub region: EllipticalRegion,
    pub descriptor: Vec<f64>,
}

/// A ratio-test match from image a (reference) to image b.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub index_a: usize,
    pub index_b: usize,
    /// Euclidean distance to the nearest neighbor.
    pub distance: f64,
    /// Nearest over second-nearest distance.
    pub nn_ratio: f64,
}

fn check_dimensions<A: AsRef<[f64]>, B: AsRef<[f64]>>(a: &[A], b: &[B]) -> Result<usize> {
    let dim = a
        .first()
        .map(|d| d.as_ref().len())
        .or_else(|| b.first().map(|d| d.as_ref().len()))
        .unwrap_or(0);
    let lens = a
        .iter()
        .map(|d| d.as_ref().len())
        .chain(b.iter().map(|d| d.as_ref().len()));
    for found in lens {
        if found != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found,
            });
        }
    }
    if dim == 0 && !(a.is_empty() && b.is_empty()) {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    Ok(dim)
}

fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Ratio-test matching on raw descriptor vectors.
///
/// For each a-descriptor the two nearest b-descriptors are found (ties go to
/// the lower b index); a match is kept when `d1 < ratio_threshold · d2`.
pub fn nn_ratio_match_descriptors<A, B>(
    a: &[A],
    b: &[B],
    ratio_threshold: f64,
) -> Result<Vec<Match>>
where
    A: AsRef<[f64]> + Sync,
    B: AsRef<[f64]> + Sync,
{
    if !(ratio_threshold > 0.0 && ratio_threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "ratio threshold must lie in (0, 1], got {ratio_threshold}"
        )));
    }
    check_dimensions(a, b)?;
    if b.len() < 2 {
        return Err(Error::TooFewCandidates(b.len()));
    }
    let found: Vec<Option<Match>> = a
        .par_iter()
        .enumerate()
        .map(|(i, query)| {
            let query = query.as_ref();
            let mut best = (f64::INFINITY, usize::MAX);
            let mut second = f64::INFINITY;
            for (j, cand) in b.iter().enumerate() {
                let d = squared_distance(query, cand.as_ref());
                if d < best.0 {
                    second = best.0;
                    best = (d, j);
                } else if d < second {
                    second = d;
                }
            }
            let (d1, d2) = (best.0.sqrt(), second.sqrt());
            (d1 < ratio_threshold * d2).then(|| Match {
                index_a: i,
                index_b: best.1,
                distance: d1,
                nn_ratio: d1 / d2,
            })
        })
        .collect();
    Ok(found.into_iter().flatten().collect())
}

pub fn nn_ratio_match(
    set_a: &[DescribedDetection],
    set_b: &[DescribedDetection],
    ratio_threshold: f64,
) -> Result<Vec<Match>> {
    let a: Vec<&[f64]> = set_a.iter().map(|d| d.descriptor.as_slice()).collect();
    let b: Vec<&[f64]> = set_b.iter().map(|d| d.descriptor.as_slice()).collect();
    nn_ratio_match_descriptors(&a, &b, ratio_threshold)
}

/// A match is correct when the overlap error of the two regions, compared in
/// frame a, is below `epsilon`.
///
/// Coincident regions (error 0) are always correct and `epsilon ≥ 1` accepts
/// every match.
pub fn is_correct(error: f64, epsilon: f64) -> bool {
    error < epsilon || error == 0.0 || epsilon >= 1.0
}

pub fn classify_matches(
    matches: &[Match],
    regions_a: &[EllipticalRegion],
    regions_b: &[EllipticalRegion],
    h: &Homography,
    epsilon: f64,
) -> Result<Vec<bool>> {
    matches
        .par_iter()
        .map(|m| {
            let ra = regions_a
                .get(m.index_a)
                .ok_or_else(|| bad_index("a", m.index_a))?;
            let rb = regions_b
                .get(m.index_b)
                .ok_or_else(|| bad_index("b", m.index_b))?;
            let rba = reproject_region(rb, h)?;
            Ok(is_correct(overlap_error(ra, &rba)?, epsilon))
        })
        .collect()
}

fn bad_index(side: &str, index: usize) -> Error {
    Error::InvalidParameter(format!("match references missing {side}-detection {index}"))
}

/// Non-redundant count of the frame-a regions of the correct matches.
pub fn nr_correct_count(
    correct_regions: &[EllipticalRegion],
    mask: &DescriptorMaskConfig,
    omega: &DomainRect,
) -> f64 {
    count_keypoints(&accumulate(correct_regions, mask, omega)).1
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub matches: Vec<Match>,
    pub correct_flags: Vec<bool>,
    pub total: usize,
    pub correct: usize,
    pub nr_correct: f64,
    /// Tallies over distinct frame-a keypoints rather than descriptor rows.
    pub total_keypoints: usize,
    pub correct_keypoints: usize,
}

fn region_key(r: &EllipticalRegion) -> [u64; 5] {
    let c = r.center();
    let (sxx, sxy, syy) = r.entries();
    [c.x, c.y, sxx, sxy, syy].map(f64::to_bits)
}

/// Match two described detection sets and score the result.
pub fn evaluate_matches(
    set_a: &DetectionSet,
    set_b: &DetectionSet,
    h: &Homography,
    ratio_threshold: f64,
    epsilon: f64,
    mask: &DescriptorMaskConfig,
    omega: &DomainRect,
) -> Result<MatchResult> {
    let (Some(desc_a), Some(desc_b)) = (&set_a.descriptors, &set_b.descriptors) else {
        return Err(Error::InvalidParameter(
            "matching needs descriptors on both images".into(),
        ));
    };
    let matches = nn_ratio_match_descriptors(desc_a, desc_b, ratio_threshold)?;
    let correct_flags =
        classify_matches(&matches, &set_a.detections, &set_b.detections, h, epsilon)?;
    let correct_regions: Vec<EllipticalRegion> = matches
        .iter()
        .zip(&correct_flags)
        .filter(|(_, &ok)| ok)
        .map(|(m, _)| set_a.detections[m.index_a])
        .collect();
    let nr_correct = nr_correct_count(&correct_regions, mask, omega);

    let distinct = |regions: &mut dyn Iterator<Item = &EllipticalRegion>| {
        regions.map(region_key).collect::<HashSet<_>>().len()
    };
    let total_keypoints = distinct(&mut matches.iter().map(|m| &set_a.detections[m.index_a]));
    let correct_keypoints = distinct(&mut correct_regions.iter());

    Ok(MatchResult {
        total: matches.len(),
        correct: correct_regions.len(),
        nr_correct,
        total_keypoints,
        correct_keypoints,
        matches,
        correct_flags,
    })
}
