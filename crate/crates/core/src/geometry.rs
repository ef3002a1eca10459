//! Ellipse algebra, homography reprojection and the repeated-detection criteria.
//!
//! Regions are stored as `R(x, Σ) = { y : (y - x)ᵀ Σ⁻¹ (y - x) ≤ 1 }`, so the
//! eigenvalues of `Σ` are the squared radii. Homographies map frame-b points
//! into frame a; detections of image b are reprojected onto the reference
//! image a before being compared.
//!
//! Overlap areas are measured by counting lattice samples. Both regions are
//! first rescaled by a common factor about the midpoint of their centers so
//! that the larger one has a geometric-mean radius of [`REFERENCE_RADIUS`];
//! the lattice spacing is [`RASTER_STEP`]. A common rescaling leaves the
//! intersection-over-union ratio unchanged, so the discretization error is the
//! same at every detection scale.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};

/// Geometric-mean radius (in lattice units) of the larger region once both are rescaled.
pub const REFERENCE_RADIUS: f64 = 30.0;
/// Lattice spacing used for overlap areas.
pub const RASTER_STEP: f64 = 0.1;
/// Projective denominators below this magnitude are rejected.
pub const PROJECTION_EPS: f64 = 1e-12;
/// Upper bound on the condition number of an accepted shape matrix.
pub const MAX_CONDITION: f64 = 1e8;
/// Lower bound on the smallest eigenvalue of an accepted shape matrix.
pub const MIN_EIGENVALUE: f64 = 1e-12;

pub const DEFAULT_EPSILON_OVERLAP: f64 = 0.40;
pub const DEFAULT_KAPPA: f64 = 30.0;

/// Eigenvalues `(min, max)` of the symmetric matrix `[[a, b], [b, c]]`.
pub(crate) fn sym_eigenvalues(a: f64, b: f64, c: f64) -> (f64, f64) {
    let mean = 0.5 * (a + c);
    let half_diff = 0.5 * (a - c);
    let disc = half_diff.hypot(b);
    (mean - disc, mean + disc)
}

/// An elliptical detection: center plus symmetric positive-definite shape matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticalRegion {
    center: Vector2<f64>,
    shape: Matrix2<f64>,
}

impl EllipticalRegion {
    /// Build a region from its center and the three distinct entries of `Σ`.
    pub fn new(center: [f64; 2], sxx: f64, sxy: f64, syy: f64) -> Result<Self> {
        let (lo, hi) = sym_eigenvalues(sxx, sxy, syy);
        if !(lo > 0.0 && lo.is_finite() && hi.is_finite()) {
            return Err(Error::NonPositiveDefinite(lo, hi));
        }
        if !(center[0].is_finite() && center[1].is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite region center ({}, {})",
                center[0], center[1]
            )));
        }
        Ok(Self {
            center: Vector2::new(center[0], center[1]),
            shape: Matrix2::new(sxx, sxy, sxy, syy),
        })
    }

    /// Build a region from a 2×2 matrix. The off-diagonal entries are averaged.
    pub fn from_matrix(center: Vector2<f64>, shape: Matrix2<f64>) -> Result<Self> {
        let sxy = 0.5 * (shape[(0, 1)] + shape[(1, 0)]);
        Self::new([center.x, center.y], shape[(0, 0)], sxy, shape[(1, 1)])
    }

    pub fn circle(center: [f64; 2], radius: f64) -> Result<Self> {
        let r2 = radius * radius;
        Self::new(center, r2, 0.0, r2)
    }

    /// Build a region from the conic `a(x−u)² + 2b(x−u)(y−v) + c(y−v)² = 1`.
    pub fn from_conic(u: f64, v: f64, a: f64, b: f64, c: f64) -> Result<Self> {
        let (lo, hi) = sym_eigenvalues(a, b, c);
        if !(lo > 0.0 && hi.is_finite()) {
            return Err(Error::NonPositiveDefinite(lo, hi));
        }
        let det = a * c - b * b;
        Self::new([u, v], c / det, -b / det, a / det)
    }

    /// Conic coefficients `(a, b, c)`, the entries of `Σ⁻¹`.
    pub fn to_conic(&self) -> (f64, f64, f64) {
        let (sxx, sxy, syy) = self.entries();
        let det = sxx * syy - sxy * sxy;
        (syy / det, -sxy / det, sxx / det)
    }

    pub fn center(&self) -> Vector2<f64> {
        self.center
    }

    pub fn shape(&self) -> Matrix2<f64> {
        self.shape
    }

    /// `(Σxx, Σxy, Σyy)`.
    pub fn entries(&self) -> (f64, f64, f64) {
        (self.shape[(0, 0)], self.shape[(0, 1)], self.shape[(1, 1)])
    }

    pub fn determinant(&self) -> f64 {
        let (sxx, sxy, syy) = self.entries();
        sxx * syy - sxy * sxy
    }

    pub fn eigenvalues(&self) -> (f64, f64) {
        let (sxx, sxy, syy) = self.entries();
        sym_eigenvalues(sxx, sxy, syy)
    }

    /// Geometric mean of the two radii, `det(Σ)^(1/4)`.
    pub fn mean_radius(&self) -> f64 {
        self.determinant().sqrt().sqrt()
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.determinant().sqrt()
    }

    /// Same center, `Σ` multiplied by `factor²` (radii multiplied by `factor`).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let f2 = factor * factor;
        let (sxx, sxy, syy) = self.entries();
        Self::new([self.center.x, self.center.y], sxx * f2, sxy * f2, syy * f2)
    }

    pub fn with_center(&self, center: [f64; 2]) -> Self {
        Self {
            center: Vector2::new(center[0], center[1]),
            shape: self.shape,
        }
    }

    /// Reject shapes too ill-conditioned to be meaningful detections.
    pub fn check_nondegenerate(&self) -> Result<()> {
        let (lo, hi) = self.eigenvalues();
        if lo < MIN_EIGENVALUE || hi / lo > MAX_CONDITION {
            return Err(Error::NonPositiveDefinite(lo, hi));
        }
        Ok(())
    }

    /// Mahalanobis form `(p − x)ᵀ Σ⁻¹ (p − x)`.
    pub fn mahalanobis(&self, p: Vector2<f64>) -> f64 {
        let (sxx, sxy, syy) = self.entries();
        let det = sxx * syy - sxy * sxy;
        let d = p - self.center;
        (syy * d.x * d.x - 2.0 * sxy * d.x * d.y + sxx * d.y * d.y) / det
    }
}

/// A planar homography, stored with its last entry normalized to 1.
///
/// The matrix maps frame-b coordinates to frame-a coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    matrix: Matrix3<f64>,
}

impl Homography {
    pub fn new(matrix: Matrix3<f64>) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::MalformedMatrix("non-finite entry".into()));
        }
        let scale = matrix[(2, 2)];
        if scale.abs() < PROJECTION_EPS {
            return Err(Error::MalformedMatrix(
                "entry (3,3) is zero and cannot be normalized".into(),
            ));
        }
        let matrix = matrix / scale;
        let det = matrix.determinant();
        if det.abs() < PROJECTION_EPS || !det.is_finite() {
            return Err(Error::Singular(det));
        }
        Ok(Self { matrix })
    }

    pub fn from_row_slice(values: &[f64]) -> Result<Self> {
        if values.len() != 9 {
            return Err(Error::MalformedMatrix(format!(
                "expected 9 entries, found {}",
                values.len()
            )));
        }
        Self::new(Matrix3::from_row_slice(values))
    }

    pub fn identity() -> Self {
        Self {
            matrix: Matrix3::identity(),
        }
    }

    /// `p ↦ M p + t`.
    pub fn affine(linear: Matrix2<f64>, translation: [f64; 2]) -> Result<Self> {
        Self::new(Matrix3::new(
            linear[(0, 0)],
            linear[(0, 1)],
            translation[0],
            linear[(1, 0)],
            linear[(1, 1)],
            translation[1],
            0.0,
            0.0,
            1.0,
        ))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> Result<Self> {
        let inv = self
            .matrix
            .try_inverse()
            .ok_or_else(|| Error::Singular(self.matrix.determinant()))?;
        Self::new(inv)
    }

    fn denominator(&self, p: Vector2<f64>) -> Result<f64> {
        let w = self.matrix[(2, 0)] * p.x + self.matrix[(2, 1)] * p.y + self.matrix[(2, 2)];
        if w.abs() < PROJECTION_EPS || !w.is_finite() {
            return Err(Error::DegenerateProjection {
                x: p.x,
                y: p.y,
                denominator: w,
            });
        }
        Ok(w)
    }

    pub fn apply(&self, p: Vector2<f64>) -> Result<Vector2<f64>> {
        let w = self.denominator(p)?;
        let q = self.matrix * Vector3::new(p.x, p.y, 1.0);
        Ok(Vector2::new(q.x / w, q.y / w))
    }

    /// Jacobian of the point map at `p`.
    pub fn jacobian(&self, p: Vector2<f64>) -> Result<Matrix2<f64>> {
        let w = self.denominator(p)?;
        let m = &self.matrix;
        let u = (m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)]) / w;
        let v = (m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)]) / w;
        Ok(Matrix2::new(
            (m[(0, 0)] - u * m[(2, 0)]) / w,
            (m[(0, 1)] - u * m[(2, 1)]) / w,
            (m[(1, 0)] - v * m[(2, 0)]) / w,
            (m[(1, 1)] - v * m[(2, 1)]) / w,
        ))
    }
}

/// Local affine approximation (Jacobian) of `h` at `x`.
pub fn local_affine_approx(h: &Homography, x: Vector2<f64>) -> Result<Matrix2<f64>> {
    h.jacobian(x)
}

/// Map a frame-b region into frame a.
///
/// The center goes through `h`; the shape becomes `A Σ Aᵀ` with `A` the
/// Jacobian of `h` at the frame-b center (equivalently `B⁻¹ Σ B⁻ᵀ` with `B`
/// the Jacobian of the inverse map at the projected center).
pub fn reproject_region(r_b: &EllipticalRegion, h: &Homography) -> Result<EllipticalRegion> {
    let center = h.apply(r_b.center())?;
    let a = h.jacobian(r_b.center())?;
    let shape = a * r_b.shape() * a.transpose();
    EllipticalRegion::from_matrix(center, shape)
}

/// `(small, large)` radii, the square roots of the eigenvalues of `Σ`.
pub fn ellipse_radii(r: &EllipticalRegion) -> Result<(f64, f64)> {
    let (lo, hi) = r.eigenvalues();
    if lo <= 0.0 || lo.is_nan() {
        return Err(Error::NonPositiveDefinite(lo, hi));
    }
    Ok((lo.sqrt(), hi.sqrt()))
}

/// Rescale a region so the geometric mean of its radii equals `kappa`.
pub fn normalize_region(r: &EllipticalRegion, kappa: f64) -> Result<EllipticalRegion> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "kappa must be positive, got {kappa}"
        )));
    }
    let (small, large) = ellipse_radii(r)?;
    let factor = kappa * kappa / (small * large);
    let (sxx, sxy, syy) = r.entries();
    let c = r.center();
    EllipticalRegion::new([c.x, c.y], sxx * factor, sxy * factor, syy * factor)
}

/// Lattice samples of one region row by row.
struct RasterEllipse {
    cx: f64,
    cy: f64,
    sxy: f64,
    syy: f64,
    det: f64,
}

impl RasterEllipse {
    fn new(r: &EllipticalRegion, origin: Vector2<f64>, scale: f64) -> Self {
        let c = (r.center() - origin) * scale;
        let s2 = scale * scale;
        let (sxx, sxy, syy) = r.entries();
        let (sxx, sxy, syy) = (sxx * s2, sxy * s2, syy * s2);
        Self {
            cx: c.x,
            cy: c.y,
            sxy,
            syy,
            det: sxx * syy - sxy * sxy,
        }
    }

    /// Inclusive range of lattice row indices touching the ellipse.
    fn rows(&self) -> (i64, i64) {
        let ey = self.syy.sqrt();
        lattice_range(self.cy - ey, self.cy + ey)
    }

    /// Inclusive lattice column range inside the ellipse on row `y`.
    fn span(&self, y: f64) -> Option<(f64, f64)> {
        let dy = y - self.cy;
        let rem = self.syy - dy * dy;
        if rem < 0.0 {
            return None;
        }
        let mid = self.cx + self.sxy * dy / self.syy;
        let half = (rem * self.det).sqrt() / self.syy;
        Some((mid - half, mid + half))
    }
}

/// Integer indices `i` with `lo ≤ (i + ½)·step ≤ hi`.
fn lattice_range(lo: f64, hi: f64) -> (i64, i64) {
    let first = (lo / RASTER_STEP - 0.5).ceil() as i64;
    let last = (hi / RASTER_STEP - 0.5).floor() as i64;
    (first, last)
}

fn span_count(span: (f64, f64)) -> i64 {
    let (first, last) = lattice_range(span.0, span.1);
    (last - first + 1).max(0)
}

fn lattice_y(j: i64) -> f64 {
    (j as f64 + 0.5) * RASTER_STEP
}

fn raster_count(e: &RasterEllipse) -> i64 {
    let (j0, j1) = e.rows();
    (j0..=j1)
        .filter_map(|j| e.span(lattice_y(j)))
        .map(span_count)
        .sum()
}

/// Overlap error `1 − |A ∩ B| / |A ∪ B|` of two regions expressed in the same frame.
pub fn overlap_error(a: &EllipticalRegion, b: &EllipticalRegion) -> Result<f64> {
    let larger = a.mean_radius().max(b.mean_radius());
    if !(larger > 0.0 && larger.is_finite()) {
        return Err(Error::ZeroArea);
    }
    let scale = REFERENCE_RADIUS / larger;
    let origin = (a.center() + b.center()) * 0.5;
    let ea = RasterEllipse::new(a, origin, scale);
    let eb = RasterEllipse::new(b, origin, scale);

    let count_a = raster_count(&ea);
    let count_b = raster_count(&eb);
    if count_a == 0 || count_b == 0 {
        return Err(Error::ZeroArea);
    }

    let (a0, a1) = ea.rows();
    let (b0, b1) = eb.rows();
    let mut inter = 0i64;
    for j in a0.max(b0)..=a1.min(b1) {
        let y = lattice_y(j);
        if let (Some(sa), Some(sb)) = (ea.span(y), eb.span(y)) {
            let lo = sa.0.max(sb.0);
            let hi = sa.1.min(sb.1);
            if lo <= hi {
                inter += span_count((lo, hi));
            }
        }
    }
    let union = count_a + count_b - inter;
    Ok(1.0 - inter as f64 / union as f64)
}

/// Which repeated-detection rule to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum CriterionVariant {
    /// Plain overlap error of the detected regions.
    #[default]
    Original,
    /// Both regions normalized to geometric-mean radius `kappa` first.
    Normalized,
    /// Normalized test plus the center-distance gate `|x_a − H x_b| ≤ 4√(r_a R_a)`.
    CodeVariant,
}

impl CriterionVariant {
    pub fn name(self) -> &'static str {
        match self {
            CriterionVariant::Original => "original",
            CriterionVariant::Normalized => "normalized",
            CriterionVariant::CodeVariant => "code",
        }
    }
}

impl std::str::FromStr for CriterionVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "original" => Ok(CriterionVariant::Original),
            "normalized" | "normalised" => Ok(CriterionVariant::Normalized),
            "code" | "code-variant" | "codevariant" => Ok(CriterionVariant::CodeVariant),
            other => Err(Error::InvalidParameter(format!(
                "unknown criterion variant {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionConfig {
    pub variant: CriterionVariant,
    pub epsilon_overlap: f64,
    pub kappa: f64,
}

impl Default for CriterionConfig {
    fn default() -> Self {
        Self {
            variant: CriterionVariant::Original,
            epsilon_overlap: DEFAULT_EPSILON_OVERLAP,
            kappa: DEFAULT_KAPPA,
        }
    }
}

impl CriterionConfig {
    pub fn new(variant: CriterionVariant, epsilon_overlap: f64, kappa: f64) -> Result<Self> {
        let cfg = Self {
            variant,
            epsilon_overlap,
            kappa,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_overlap > 0.0 && self.epsilon_overlap < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon_overlap must lie in (0, 1), got {}",
                self.epsilon_overlap
            )));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kappa must be positive, got {}",
                self.kappa
            )));
        }
        Ok(())
    }
}

/// Outcome of a repeated-detection test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepeatTest {
    pub repeated: bool,
    pub overlap_error: f64,
}

/// Apply the criterion to a frame-a region and a frame-b region already mapped into frame a.
///
/// The threshold is inclusive: a pair is repeated when its error is `≤ ε`.
pub fn compare_in_reference_frame(
    r_a: &EllipticalRegion,
    r_ba: &EllipticalRegion,
    cfg: &CriterionConfig,
) -> Result<RepeatTest> {
    let overlap_error = match cfg.variant {
        CriterionVariant::Original => overlap_error(r_a, r_ba)?,
        CriterionVariant::Normalized | CriterionVariant::CodeVariant => overlap_error(
            &normalize_region(r_a, cfg.kappa)?,
            &normalize_region(r_ba, cfg.kappa)?,
        )?,
    };
    let mut repeated = overlap_error <= cfg.epsilon_overlap;
    if cfg.variant == CriterionVariant::CodeVariant {
        let (small, large) = ellipse_radii(r_a)?;
        let distance = (r_a.center() - r_ba.center()).norm();
        repeated &= distance <= 4.0 * (small * large).sqrt();
    }
    Ok(RepeatTest {
        repeated,
        overlap_error,
    })
}

/// Reproject `r_b` into frame a through `h` and apply the criterion.
pub fn is_repeated(
    r_a: &EllipticalRegion,
    r_b: &EllipticalRegion,
    h: &Homography,
    cfg: &CriterionConfig,
) -> Result<RepeatTest> {
    let r_ba = reproject_region(r_b, h)?;
    compare_in_reference_frame(r_a, &r_ba, cfg)
}

/// Largest center distance at which two equal disks of radius `r` still count as repeated.
///
/// Bisection on the center distance, stopped once the bracket is narrower
/// than `1e-3` px (scaled down further for sub-pixel radii).
pub fn max_distance_curve(r: f64, cfg: &CriterionConfig) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "radius must be positive, got {r}"
        )));
    }
    cfg.validate()?;
    let disk_a = EllipticalRegion::circle([0.0, 0.0], r)?;
    let repeated_at = |d: f64| -> Result<bool> {
        let disk_b = disk_a.with_center([d, 0.0]);
        Ok(compare_in_reference_frame(&disk_a, &disk_b, cfg)?.repeated)
    };

    // Past these distances the compared disks no longer intersect.
    let mut hi = match cfg.variant {
        CriterionVariant::Original => 2.0 * r,
        CriterionVariant::Normalized | CriterionVariant::CodeVariant => 2.0 * cfg.kappa,
    };
    let mut lo = 0.0;
    if repeated_at(hi)? {
        return Ok(hi);
    }
    let tol = 1e-3 * r.min(1.0);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if repeated_at(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}
