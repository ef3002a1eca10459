//! Pair-level evaluation: common-region filtering, one-to-one correspondences,
//! repeatability and non-redundant repeatability.

use std::cmp::Ordering;

use nalgebra::Vector2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{
    compare_in_reference_frame, normalize_region, reproject_region, CriterionConfig,
    CriterionVariant, EllipticalRegion, Homography,
};
use crate::masks::{accumulate, count_keypoints, nr_ratio, DescriptorMaskConfig, DomainRect};
use crate::matching::{evaluate_matches, MatchResult};

/// The detections of one detector on one image.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    pub detections: Vec<EllipticalRegion>,
    /// One descriptor per detection, when the region file carries them.
    pub descriptors: Option<Vec<Vec<f64>>>,
    pub detector_label: String,
    pub image_domain: DomainRect,
}

impl DetectionSet {
    pub fn new(
        detector_label: impl Into<String>,
        image_domain: DomainRect,
        detections: Vec<EllipticalRegion>,
    ) -> Self {
        Self {
            detections,
            descriptors: None,
            detector_label: detector_label.into(),
            image_domain,
        }
    }

    pub fn with_descriptors(mut self, descriptors: Vec<Vec<f64>>) -> Result<Self> {
        if descriptors.len() != self.detections.len() {
            return Err(Error::InvalidParameter(format!(
                "{} descriptors for {} detections",
                descriptors.len(),
                self.detections.len()
            )));
        }
        if let Some(first) = descriptors.first() {
            if let Some(bad) = descriptors.iter().find(|d| d.len() != first.len()) {
                return Err(Error::DimensionMismatch {
                    expected: first.len(),
                    found: bad.len(),
                });
            }
        }
        self.descriptors = Some(descriptors);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    /// Keep the detections at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            detections: indices.iter().map(|&i| self.detections[i]).collect(),
            descriptors: self
                .descriptors
                .as_ref()
                .map(|d| indices.iter().map(|&i| d[i].clone()).collect()),
            detector_label: self.detector_label.clone(),
            image_domain: self.image_domain.clone(),
        }
    }

    /// Multiply every radius by `factor`.
    pub fn scale_regions(&self, factor: f64) -> Result<Self> {
        let detections = self
            .detections
            .iter()
            .map(|r| r.scaled(factor))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            detections,
            ..self.clone()
        })
    }
}

/// Both detection sets restricted to the area seen by both images.
#[derive(Debug, Clone)]
pub struct CommonRegion {
    pub filtered_a: DetectionSet,
    pub filtered_b: DetectionSet,
    /// Original indices of the kept detections.
    pub kept_a: Vec<usize>,
    pub kept_b: Vec<usize>,
    /// Pixels of image a whose preimage lies inside image b.
    pub omega: DomainRect,
    /// Pixels of image b whose image lies inside image a.
    pub omega_b: DomainRect,
    /// Detections dropped because their center could not be mapped.
    pub unmappable_a: usize,
    pub unmappable_b: usize,
}

fn maps_inside(h: &Homography, p: Vector2<f64>, target: &DomainRect) -> Option<bool> {
    h.apply(p).ok().map(|q| target.contains_point(q))
}

fn common_mask(source: &DomainRect, h: &Homography, target: &DomainRect) -> Result<DomainRect> {
    let (w, ht) = (source.width(), source.height());
    let valid: Vec<bool> = (0..w * ht)
        .into_par_iter()
        .map(|i| {
            let p = Vector2::new((i % w) as f64, (i / w) as f64);
            maps_inside(h, p, target).unwrap_or(false)
        })
        .collect();
    DomainRect::with_mask(w, ht, valid)
}

/// Keep detections whose centers fall in the part of their image seen by the other one.
///
/// `h` maps frame-b points to frame a.
pub fn filter_common_region(
    set_a: &DetectionSet,
    set_b: &DetectionSet,
    h: &Homography,
) -> Result<CommonRegion> {
    let h_inv = h.inverse()?;
    let classify = |set: &DetectionSet, map: &Homography, target: &DomainRect| {
        let mut kept = Vec::new();
        let mut unmappable = 0;
        for (i, r) in set.detections.iter().enumerate() {
            match maps_inside(map, r.center(), target) {
                Some(true) => kept.push(i),
                Some(false) => {}
                None => unmappable += 1,
            }
        }
        (kept, unmappable)
    };
    let (kept_a, unmappable_a) = classify(set_a, &h_inv, &set_b.image_domain);
    let (kept_b, unmappable_b) = classify(set_b, h, &set_a.image_domain);
    Ok(CommonRegion {
        filtered_a: set_a.subset(&kept_a),
        filtered_b: set_b.subset(&kept_b),
        kept_a,
        kept_b,
        omega: common_mask(&set_a.image_domain, &h_inv, &set_b.image_domain)?,
        omega_b: common_mask(&set_b.image_domain, h, &set_a.image_domain)?,
        unmappable_a,
        unmappable_b,
    })
}

/// A repeated pair of detections with its overlap error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub index_a: usize,
    pub index_b: usize,
    pub overlap_error: f64,
}

fn bbox(r: &EllipticalRegion) -> [f64; 4] {
    let (sxx, _, syy) = r.entries();
    let c = r.center();
    let (ex, ey) = (sxx.sqrt(), syy.sqrt());
    [c.x - ex, c.y - ey, c.x + ex, c.y + ey]
}

fn boxes_meet(a: &[f64; 4], b: &[f64; 4]) -> bool {
    a[0] <= b[2] && b[0] <= a[2] && a[1] <= b[3] && b[1] <= a[3]
}

/// All candidate pairs satisfying the criterion, in (index_a, index_b) order.
pub fn repeated_candidates(
    regions_a: &[EllipticalRegion],
    regions_b: &[EllipticalRegion],
    h: &Homography,
    cfg: &CriterionConfig,
) -> Vec<Correspondence> {
    let reprojected: Vec<Option<EllipticalRegion>> = regions_b
        .par_iter()
        .map(|r| reproject_region(r, h).ok())
        .collect();
    // Boxes of the regions actually compared, used to skip disjoint pairs.
    let compared_box = |r: &EllipticalRegion| match cfg.variant {
        CriterionVariant::Original => Some(bbox(r)),
        _ => normalize_region(r, cfg.kappa).ok().map(|n| bbox(&n)),
    };
    let boxes_b: Vec<Option<[f64; 4]>> = reprojected
        .iter()
        .map(|r| r.as_ref().and_then(compared_box))
        .collect();

    regions_a
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, ra)| {
            let box_a = compared_box(ra);
            let reprojected = &reprojected;
            let boxes_b = &boxes_b;
            (0..regions_b.len()).filter_map(move |j| {
                let rb = reprojected[j].as_ref()?;
                if !boxes_meet(box_a.as_ref()?, boxes_b[j].as_ref()?) {
                    return None;
                }
                let t = compare_in_reference_frame(ra, rb, cfg).ok()?;
                t.repeated.then_some(Correspondence {
                    index_a: i,
                    index_b: j,
                    overlap_error: t.overlap_error,
                })
            })
        })
        .collect()
}

/// Greedy one-to-one assignment by ascending overlap error.
///
/// Ties are broken by `(index_a, index_b)`.
pub fn greedy_assignment(
    mut candidates: Vec<Correspondence>,
    count_a: usize,
    count_b: usize,
) -> Vec<Correspondence> {
    candidates.sort_by(candidate_order);
    let mut used_a = vec![false; count_a];
    let mut used_b = vec![false; count_b];
    let mut out = Vec::new();
    for c in candidates {
        if !used_a[c.index_a] && !used_b[c.index_b] {
            used_a[c.index_a] = true;
            used_b[c.index_b] = true;
            out.push(c);
        }
    }
    out
}

/// One-to-one repeated pairs between two (filtered) detection lists.
pub fn find_correspondences(
    regions_a: &[EllipticalRegion],
    regions_b: &[EllipticalRegion],
    h: &Homography,
    cfg: &CriterionConfig,
) -> Vec<Correspondence> {
    let candidates = repeated_candidates(regions_a, regions_b, h, cfg);
    greedy_assignment(candidates, regions_a.len(), regions_b.len())
}

fn min_count(count_a: usize, count_b: usize) -> Result<f64> {
    match count_a.min(count_b) {
        0 => Err(Error::EmptyCommonRegion),
        n => Ok(n as f64),
    }
}

/// Repeated pairs over the smaller detection count.
pub fn repeatability(pairs: &[Correspondence], count_a: usize, count_b: usize) -> Result<f64> {
    Ok(pairs.len() as f64 / min_count(count_a, count_b)?)
}

/// Non-redundant count of the repeated frame-a detections over the smaller detection count.
pub fn nr_repeatability(
    pairs: &[Correspondence],
    filtered_a: &[EllipticalRegion],
    mask: &DescriptorMaskConfig,
    omega: &DomainRect,
    count_a: usize,
    count_b: usize,
) -> Result<f64> {
    let denom = min_count(count_a, count_b)?;
    let repeated: Vec<EllipticalRegion> = pairs.iter().map(|p| filtered_a[p.index_a]).collect();
    let (_, k_nr) = count_keypoints(&accumulate(&repeated, mask, omega));
    Ok(k_nr / denom)
}

/// Every detection repeated `n` times: the original block followed by `n − 1` copies.
pub fn duplicate_set(set: &DetectionSet, n: usize) -> Result<DetectionSet> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "duplication factor must be ≥ 2, got {n}"
        )));
    }
    let indices: Vec<usize> = (0..n).flat_map(|_| 0..set.len()).collect();
    Ok(set.subset(&indices))
}

/// Settings shared by every pair of a run.
#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub criterion: CriterionConfig,
    pub mask: DescriptorMaskConfig,
    pub ratio_threshold: f64,
    /// Overlap error below which a descriptor match counts as correct.
    pub match_epsilon: f64,
}

impl EvalConfig {
    pub fn new(mask: DescriptorMaskConfig) -> Self {
        Self {
            criterion: CriterionConfig::default(),
            mask,
            ratio_threshold: crate::matching::DEFAULT_RATIO_THRESHOLD,
            match_epsilon: crate::geometry::DEFAULT_EPSILON_OVERLAP,
        }
    }
}

/// Metrics of one image pair.
#[derive(Debug, Clone)]
pub struct PairEvaluation {
    pub count_a: usize,
    pub count_b: usize,
    /// Indices refer to the filtered sets.
    pub repeated_pairs: Vec<Correspondence>,
    pub rep: f64,
    pub nr_rep: f64,
    pub nr_ratio_a: f64,
    pub nr_ratio_b: f64,
    pub unmappable_a: usize,
    pub unmappable_b: usize,
    /// Present when both sets carry descriptors.
    pub matches: Option<MatchResult>,
}

/// Run the whole pair pipeline.
pub fn evaluate_pair(
    set_a: &DetectionSet,
    set_b: &DetectionSet,
    h: &Homography,
    cfg: &EvalConfig,
) -> Result<PairEvaluation> {
    cfg.criterion.validate()?;
    let common = filter_common_region(set_a, set_b, h)?;
    let (count_a, count_b) = (common.filtered_a.len(), common.filtered_b.len());
    min_count(count_a, count_b)?;

    let pairs = find_correspondences(
        &common.filtered_a.detections,
        &common.filtered_b.detections,
        h,
        &cfg.criterion,
    );
    let rep = repeatability(&pairs, count_a, count_b)?;
    let nr_rep = nr_repeatability(
        &pairs,
        &common.filtered_a.detections,
        &cfg.mask,
        &common.omega,
        count_a,
        count_b,
    )?;
    let nr_ratio_a = nr_ratio(&common.filtered_a.detections, &cfg.mask, &common.omega)?;
    let nr_ratio_b = nr_ratio(&common.filtered_b.detections, &cfg.mask, &common.omega_b)?;

    let matches = match (
        &common.filtered_a.descriptors,
        &common.filtered_b.descriptors,
    ) {
        (Some(_), Some(_)) if count_b >= 2 => Some(evaluate_matches(
            &common.filtered_a,
            &common.filtered_b,
            h,
            cfg.ratio_threshold,
            cfg.match_epsilon,
            &cfg.mask,
            &common.omega,
        )?),
        _ => None,
    };

    Ok(PairEvaluation {
        count_a,
        count_b,
        repeated_pairs: pairs,
        rep,
        nr_rep,
        nr_ratio_a,
        nr_ratio_b,
        unmappable_a: common.unmappable_a,
        unmappable_b: common.unmappable_b,
        matches,
    })
}

/// Evaluate a pair as detected and with every detection duplicated `copies` times.
pub fn duplication_experiment(
    set_a: &DetectionSet,
    set_b: &DetectionSet,
    h: &Homography,
    cfg: &EvalConfig,
    copies: usize,
) -> Result<(PairEvaluation, PairEvaluation)> {
    let base = evaluate_pair(set_a, set_b, h, cfg)?;
    let dup = evaluate_pair(
        &duplicate_set(set_a, copies)?,
        &duplicate_set(set_b, copies)?,
        h,
        cfg,
    )?;
    Ok((base, dup))
}

/// Orders correspondences the way [`greedy_assignment`] consumes them.
pub fn candidate_order(x: &Correspondence, y: &Correspondence) -> Ordering {
    x.overlap_error
        .total_cmp(&y.overlap_error)
        .then(x.index_a.cmp(&y.index_a))
        .then(x.index_b.cmp(&y.index_b))
}
