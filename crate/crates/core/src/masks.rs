//! Descriptor masks and coverage maps.
//!
//! Every detection is given a truncated elliptical Gaussian
//! `f(x) ∝ exp(−q(x) / 2ζ²)` on `{ q(x) ≤ ρ² }`, where `q` is the Mahalanobis
//! form of the detected region. Masks are sampled once per pixel (pixel `(i, j)`
//! sits at coordinates `(i, j)`) and scaled to unit mass over the visible part
//! of the domain. Summing them gives the detection count `K`; taking their
//! pointwise maximum gives the non-redundant count `K_nr`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::EllipticalRegion;

/// Extent parameters of a descriptor mask, in units of the region radii.
///
/// `zeta = f64::INFINITY` marks an unweighted (flat) mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorMaskConfig {
    pub rho: f64,
    pub zeta: f64,
    pub label: String,
}

impl DescriptorMaskConfig {
    pub fn new(label: impl Into<String>, rho: f64, zeta: f64) -> Result<Self> {
        if rho <= 0.0 || !rho.is_finite() || zeta <= 0.0 || zeta.is_nan() {
            return Err(Error::InvalidParameter(format!(
                "mask parameters must be positive (rho = {rho}, zeta = {zeta})"
            )));
        }
        Ok(Self {
            rho,
            zeta,
            label: label.into(),
        })
    }

    fn builtin(label: &str, rho: f64, zeta: f64) -> Self {
        Self {
            rho,
            zeta,
            label: label.to_string(),
        }
    }

    /// SIFT patch: radius 6√2σ, Gaussian weight of deviation 6σ.
    pub fn sift() -> Self {
        Self::builtin("SIFT", 6.0 * std::f64::consts::SQRT_2, 6.0)
    }

    /// SURF patch: radius 10√2σ, Gaussian weight of deviation 3.3σ.
    pub fn surf() -> Self {
        Self::builtin("SURF", 10.0 * std::f64::consts::SQRT_2, 3.3)
    }

    /// BRISK patch in units of the raw size `s`: radius (3/2)√2 s, deviation (3/2) s.
    pub fn brisk() -> Self {
        Self::builtin("BRISK", 1.5 * std::f64::consts::SQRT_2, 1.5)
    }

    /// MSER: unweighted patch at twice the detected region.
    pub fn mser() -> Self {
        Self::builtin("MSER", 2.0, f64::INFINITY)
    }

    /// EBR / IBR: the detected ellipse itself, unweighted.
    pub fn affine_region(label: &str) -> Self {
        Self::builtin(label, 1.0, f64::INFINITY)
    }

    /// Built-in parameters by detector name (case-insensitive).
    pub fn for_label(label: &str) -> Result<Self> {
        let key: String = label
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        let sift_like = [
            "sift",
            "sifts",
            "siftsingle",
            "harrislaplace",
            "hessianlaplace",
            "harrisaffine",
            "hessianaffine",
            "harlap",
            "heslap",
            "haraff",
            "hesaff",
            "sfop",
            "sifer",
        ];
        let cfg = if sift_like.contains(&key.as_str()) {
            Self::sift()
        } else {
            match key.as_str() {
                "surf" => Self::surf(),
                "brisk" => Self::brisk(),
                "mser" => Self::mser(),
                "ebr" => Self::affine_region("EBR"),
                "ibr" => Self::affine_region("IBR"),
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "no built-in descriptor mask for detector {label:?}"
                    )))
                }
            }
        };
        Ok(Self {
            label: label.to_string(),
            ..cfg
        })
    }

    pub fn is_flat(&self) -> bool {
        self.zeta.is_infinite()
    }

    /// Same footprint for regions whose radii were multiplied by `1 / factor`.
    pub fn with_region_scale(&self, factor: f64) -> Self {
        Self {
            rho: self.rho * factor,
            zeta: self.zeta * factor,
            label: self.label.clone(),
        }
    }

    /// Unnormalized weight at Mahalanobis form `q`.
    pub fn weight(&self, q: f64) -> f64 {
        if q > self.rho * self.rho {
            0.0
        } else if self.is_flat() {
            1.0
        } else {
            (-q / (2.0 * self.zeta * self.zeta)).exp()
        }
    }
}

/// Integer pixel domain with an optional validity mask (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct DomainRect {
    width: usize,
    height: usize,
    valid: Option<Vec<bool>>,
}

impl DomainRect {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "domain must be at least 1×1, got {width}×{height}"
            )));
        }
        Ok(Self {
            width,
            height,
            valid: None,
        })
    }

    pub fn with_mask(width: usize, height: usize, valid: Vec<bool>) -> Result<Self> {
        let mut d = Self::new(width, height)?;
        if valid.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "validity mask has {} cells, expected {}",
                valid.len(),
                width * height
            )));
        }
        d.valid = Some(valid);
        Ok(d)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.valid.as_deref()
    }

    /// The same rectangle with every pixel valid.
    pub fn full(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            valid: None,
        }
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        x < self.width
            && y < self.height
            && self.valid.as_ref().is_none_or(|m| m[y * self.width + x])
    }

    pub fn valid_count(&self) -> usize {
        self.valid
            .as_ref()
            .map_or(self.len(), |m| m.iter().filter(|&&v| v).count())
    }

    /// Whether a continuous point lies in `[0, w−1] × [0, h−1]`.
    pub fn contains_point(&self, p: Vector2<f64>) -> bool {
        p.x >= 0.0
            && p.y >= 0.0
            && p.x <= (self.width - 1) as f64
            && p.y <= (self.height - 1) as f64
    }
}

/// A mask sampled on the bounding box of its support, clipped to the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPatch {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl MaskPatch {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        if x < self.x0 || y < self.y0 || x >= self.x0 + self.width || y >= self.y0 + self.height {
            return 0.0;
        }
        self.values[(y - self.y0) * self.width + (x - self.x0)]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `(x, y, value)` over the patch.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (self.x0 + i % self.width, self.y0 + i / self.width, v))
    }
}

/// Sample the normalized mask of one detection on `domain`.
///
/// A support too small to contain any pixel center puts all of its mass on
/// the pixel nearest to the region center, when that pixel is valid.
pub fn mask_values(
    region: &EllipticalRegion,
    cfg: &DescriptorMaskConfig,
    domain: &DomainRect,
) -> Result<MaskPatch> {
    let (sxx, _, syy) = region.entries();
    let c = region.center();
    let ex = cfg.rho * sxx.sqrt();
    let ey = cfg.rho * syy.sqrt();
    let max_x = (domain.width() - 1) as f64;
    let max_y = (domain.height() - 1) as f64;
    let lo_x = (c.x - ex).ceil().max(0.0);
    let hi_x = (c.x + ex).floor().min(max_x);
    let lo_y = (c.y - ey).ceil().max(0.0);
    let hi_y = (c.y + ey).floor().min(max_y);

    if lo_x <= hi_x && lo_y <= hi_y {
        let (x0, y0) = (lo_x as usize, lo_y as usize);
        let width = (hi_x - lo_x) as usize + 1;
        let height = (hi_y - lo_y) as usize + 1;
        let mut values = vec![0.0; width * height];
        let mut total = 0.0;
        for (i, v) in values.iter_mut().enumerate() {
            let (x, y) = (x0 + i % width, y0 + i / width);
            if !domain.is_valid(x, y) {
                continue;
            }
            let w = cfg.weight(region.mahalanobis(Vector2::new(x as f64, y as f64)));
            *v = w;
            total += w;
        }
        if total > 0.0 {
            values.iter_mut().for_each(|v| *v /= total);
            return Ok(MaskPatch {
                x0,
                y0,
                width,
                height,
                values,
            });
        }
    }

    let (nx, ny) = (c.x.round(), c.y.round());
    if nx >= 0.0
        && ny >= 0.0
        && nx <= max_x
        && ny <= max_y
        && domain.is_valid(nx as usize, ny as usize)
    {
        return Ok(MaskPatch {
            x0: nx as usize,
            y0: ny as usize,
            width: 1,
            height: 1,
            values: vec![1.0],
        });
    }
    Err(Error::EmptySupport)
}

/// Sum and max of the descriptor masks of a detection set.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageMap {
    pub domain: DomainRect,
    pub sum_field: Vec<f64>,
    pub max_field: Vec<f64>,
    pub pixel_area: f64,
    /// Masks merged into the fields.
    pub accumulated: usize,
    /// Detections whose mask support missed the valid domain.
    pub skipped: usize,
}

/// Which field of a coverage map to export.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Sum,
    Max,
}

impl CoverageMap {
    pub fn empty(domain: &DomainRect) -> Self {
        Self {
            domain: domain.clone(),
            sum_field: vec![0.0; domain.len()],
            max_field: vec![0.0; domain.len()],
            pixel_area: 1.0,
            accumulated: 0,
            skipped: 0,
        }
    }

    pub fn add_patch(&mut self, patch: &MaskPatch) {
        let w = self.domain.width();
        for (x, y, v) in patch.iter() {
            let idx = y * w + x;
            self.sum_field[idx] += v;
            if v > self.max_field[idx] {
                self.max_field[idx] = v;
            }
        }
        self.accumulated += 1;
    }

    pub fn field(&self, which: Field) -> &[f64] {
        match which {
            Field::Sum => &self.sum_field,
            Field::Max => &self.max_field,
        }
    }

    /// Write a field as a plain (P2) 16-bit PGM, linearly scaled to 65535.
    ///
    /// The factor mapping values to gray levels goes to `<path>.scale`.
    pub fn write_pgm(&self, which: Field, path: &Path) -> Result<PathBuf> {
        let field = self.field(which);
        let peak = field.iter().copied().fold(0.0, f64::max);
        let scale = if peak > 0.0 { 65535.0 / peak } else { 1.0 };
        let (w, h) = (self.domain.width(), self.domain.height());
        let mut out = String::with_capacity(field.len() * 6 + 32);
        let _ = writeln!(out, "P2\n{w} {h}\n65535");
        for row in field.chunks(w) {
            let line: Vec<String> = row
                .iter()
                .map(|v| ((v * scale).round() as u32).min(65535).to_string())
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::from(e).in_file(path))?;
        let mut sidecar = path.as_os_str().to_owned();
        sidecar.push(".scale");
        let sidecar = PathBuf::from(sidecar);
        fs::write(&sidecar, format!("{scale:e}\n"))
            .map_err(|e| Error::from(e).in_file(&sidecar))?;
        Ok(sidecar)
    }
}

/// Accumulate the masks of `regions` into sum and max fields.
///
/// Masks are sampled in parallel and merged sequentially in input order, so
/// the result does not depend on the number of worker threads.
pub fn accumulate(
    regions: &[EllipticalRegion],
    cfg: &DescriptorMaskConfig,
    domain: &DomainRect,
) -> CoverageMap {
    let patches: Vec<Option<MaskPatch>> = regions
        .par_iter()
        .map(|r| mask_values(r, cfg, domain).ok())
        .collect();
    let mut map = CoverageMap::empty(domain);
    for patch in &patches {
        match patch {
            Some(p) => map.add_patch(p),
            None => map.skipped += 1,
        }
    }
    map
}

/// `(K, K_nr)`: integrals of the sum and max fields.
pub fn count_keypoints(map: &CoverageMap) -> (f64, f64) {
    let k: f64 = map.sum_field.iter().sum::<f64>() * map.pixel_area;
    let k_nr: f64 = map.max_field.iter().sum::<f64>() * map.pixel_area;
    (k, k_nr)
}

/// `K_nr / K` of a detection set.
pub fn nr_ratio(
    regions: &[EllipticalRegion],
    cfg: &DescriptorMaskConfig,
    domain: &DomainRect,
) -> Result<f64> {
    if regions.is_empty() {
        return Err(Error::EmptySet);
    }
    let map = accumulate(regions, cfg, domain);
    let (k, k_nr) = count_keypoints(&map);
    if map.accumulated == 0 || k <= 0.0 {
        return Err(Error::EmptySet);
    }
    Ok(k_nr / k)
}
