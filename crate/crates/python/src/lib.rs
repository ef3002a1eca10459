//! Python bindings for `nrrep`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use nalgebra::Vector2;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use nrrep::{
    io, CriterionConfig, CriterionVariant, DescriptorMaskConfig, DetectionSet, DomainRect,
    ErrorClass, EvalConfig,
};

fn to_py(err: nrrep::Error) -> PyErr {
    match err.class() {
        ErrorClass::Io => PyIOError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

#[pyclass(name = "EllipticalRegion", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyRegion(nrrep::EllipticalRegion);

#[pymethods]
impl PyRegion {
    /// Region with center `(x, y)` and shape matrix `[[sxx, sxy], [sxy, syy]]`.
    #[new]
    fn new(center: (f64, f64), sxx: f64, sxy: f64, syy: f64) -> PyResult<Self> {
        nrrep::EllipticalRegion::new([center.0, center.1], sxx, sxy, syy)
            .map(Self)
            .map_err(to_py)
    }

    #[staticmethod]
    fn circle(center: (f64, f64), radius: f64) -> PyResult<Self> {
        nrrep::EllipticalRegion::circle([center.0, center.1], radius)
            .map(Self)
            .map_err(to_py)
    }

    /// Region bounded by `a(x-u)^2 + 2b(x-u)(y-v) + c(y-v)^2 = 1`.
    #[staticmethod]
    fn from_conic(u: f64, v: f64, a: f64, b: f64, c: f64) -> PyResult<Self> {
        nrrep::EllipticalRegion::from_conic(u, v, a, b, c)
            .map(Self)
            .map_err(to_py)
    }

    #[getter]
    fn center(&self) -> (f64, f64) {
        let c = self.0.center();
        (c.x, c.y)
    }

    #[getter]
    fn shape(&self) -> ((f64, f64), (f64, f64)) {
        let (sxx, sxy, syy) = self.0.entries();
        ((sxx, sxy), (sxy, syy))
    }

    fn radii(&self) -> PyResult<(f64, f64)> {
        nrrep::ellipse_radii(&self.0).map_err(to_py)
    }

    fn scaled(&self, factor: f64) -> PyResult<Self> {
        self.0.scaled(factor).map(Self).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let c = self.0.center();
        let (sxx, sxy, syy) = self.0.entries();
        format!(
            "EllipticalRegion(center=({}, {}), sxx={sxx}, sxy={sxy}, syy={syy})",
            c.x, c.y
        )
    }
}

#[pyclass(name = "Homography", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyHomography(nrrep::Homography);

#[pymethods]
impl PyHomography {
    /// From 9 row-major entries; maps frame-b points to frame a.
    #[new]
    fn new(entries: Vec<f64>) -> PyResult<Self> {
        nrrep::Homography::from_row_slice(&entries)
            .map(Self)
            .map_err(to_py)
    }

    #[staticmethod]
    fn identity() -> Self {
        Self(nrrep::Homography::identity())
    }

    fn inverse(&self) -> PyResult<Self> {
        self.0.inverse().map(Self).map_err(to_py)
    }

    fn apply(&self, x: f64, y: f64) -> PyResult<(f64, f64)> {
        let p = self.0.apply(Vector2::new(x, y)).map_err(to_py)?;
        Ok((p.x, p.y))
    }

    fn jacobian(&self, x: f64, y: f64) -> PyResult<((f64, f64), (f64, f64))> {
        let j = nrrep::local_affine_approx(&self.0, Vector2::new(x, y)).map_err(to_py)?;
        Ok(((j[(0, 0)], j[(0, 1)]), (j[(1, 0)], j[(1, 1)])))
    }

    fn entries(&self) -> Vec<f64> {
        let m = self.0.matrix();
        (0..3)
            .flat_map(|r| (0..3).map(move |c| m[(r, c)]))
            .collect()
    }
}

fn criterion(variant: &str, epsilon: f64, kappa: f64) -> PyResult<CriterionConfig> {
    let v: CriterionVariant = variant.parse().map_err(to_py)?;
    CriterionConfig::new(v, epsilon, kappa).map_err(to_py)
}

fn regions(list: &[PyRegion]) -> Vec<nrrep::EllipticalRegion> {
    list.iter().map(|r| r.0).collect()
}

#[pyfunction]
fn overlap_error(a: PyRegion, b: PyRegion) -> PyResult<f64> {
    nrrep::overlap_error(&a.0, &b.0).map_err(to_py)
}

#[pyfunction]
fn reproject_region(region: PyRegion, h: PyHomography) -> PyResult<PyRegion> {
    nrrep::reproject_region(&region.0, &h.0)
        .map(PyRegion)
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (region, kappa = 30.0))]
fn normalize_region(region: PyRegion, kappa: f64) -> PyResult<PyRegion> {
    nrrep::normalize_region(&region.0, kappa)
        .map(PyRegion)
        .map_err(to_py)
}

/// Returns `(repeated, overlap_error)`.
#[pyfunction]
#[pyo3(signature = (region_a, region_b, h, variant = "original", epsilon = 0.4, kappa = 30.0))]
fn is_repeated(
    region_a: PyRegion,
    region_b: PyRegion,
    h: PyHomography,
    variant: &str,
    epsilon: f64,
    kappa: f64,
) -> PyResult<(bool, f64)> {
    let cfg = criterion(variant, epsilon, kappa)?;
    let t = nrrep::is_repeated(&region_a.0, &region_b.0, &h.0, &cfg).map_err(to_py)?;
    Ok((t.repeated, t.overlap_error))
}

#[pyfunction]
#[pyo3(signature = (radius, variant = "original", epsilon = 0.4, kappa = 30.0))]
fn max_distance_curve(radius: f64, variant: &str, epsilon: f64, kappa: f64) -> PyResult<f64> {
    let cfg = criterion(variant, epsilon, kappa)?;
    nrrep::max_distance_curve(radius, &cfg).map_err(to_py)
}

/// Returns `(K, K_nr)` for the detections on a `width × height` image.
#[pyfunction]
#[pyo3(signature = (detections, width, height, detector = "SIFT"))]
fn count_keypoints(
    detections: Vec<PyRegion>,
    width: usize,
    height: usize,
    detector: &str,
) -> PyResult<(f64, f64)> {
    let mask = DescriptorMaskConfig::for_label(detector).map_err(to_py)?;
    let domain = DomainRect::new(width, height).map_err(to_py)?;
    let map = nrrep::accumulate(&regions(&detections), &mask, &domain);
    Ok(nrrep::count_keypoints(&map))
}

#[pyfunction]
#[pyo3(signature = (detections, width, height, detector = "SIFT"))]
fn nr_ratio(
    detections: Vec<PyRegion>,
    width: usize,
    height: usize,
    detector: &str,
) -> PyResult<f64> {
    let mask = DescriptorMaskConfig::for_label(detector).map_err(to_py)?;
    let domain = DomainRect::new(width, height).map_err(to_py)?;
    nrrep::nr_ratio(&regions(&detections), &mask, &domain).map_err(to_py)
}

/// Full pair evaluation; returns a dict of metrics.
#[pyfunction]
#[pyo3(signature = (
    detections_a, size_a, detections_b, size_b, h,
    detector = "SIFT", variant = "original", epsilon = 0.4, kappa = 30.0,
    descriptors_a = None, descriptors_b = None, ratio_threshold = 0.6,
))]
#[allow(clippy::too_many_arguments)]
fn evaluate_pair<'py>(
    py: Python<'py>,
    detections_a: Vec<PyRegion>,
    size_a: (usize, usize),
    detections_b: Vec<PyRegion>,
    size_b: (usize, usize),
    h: PyHomography,
    detector: &str,
    variant: &str,
    epsilon: f64,
    kappa: f64,
    descriptors_a: Option<Vec<Vec<f64>>>,
    descriptors_b: Option<Vec<Vec<f64>>>,
    ratio_threshold: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let build = |dets: &[PyRegion],
                 size: (usize, usize),
                 desc: Option<Vec<Vec<f64>>>|
     -> PyResult<DetectionSet> {
        let domain = DomainRect::new(size.0, size.1).map_err(to_py)?;
        let set = DetectionSet::new(detector, domain, regions(dets));
        match desc {
            Some(d) => set.with_descriptors(d).map_err(to_py),
            None => Ok(set),
        }
    };
    let set_a = build(&detections_a, size_a, descriptors_a)?;
    let set_b = build(&detections_b, size_b, descriptors_b)?;
    let mut cfg = EvalConfig::new(DescriptorMaskConfig::for_label(detector).map_err(to_py)?);
    cfg.criterion = criterion(variant, epsilon, kappa)?;
    cfg.ratio_threshold = ratio_threshold;
    let e = nrrep::evaluate_pair(&set_a, &set_b, &h.0, &cfg).map_err(to_py)?;

    let out = PyDict::new(py);
    out.set_item("count_a", e.count_a)?;
    out.set_item("count_b", e.count_b)?;
    out.set_item("rep", e.rep)?;
    out.set_item("nr_rep", e.nr_rep)?;
    out.set_item("nr_ratio_a", e.nr_ratio_a)?;
    out.set_item("nr_ratio_b", e.nr_ratio_b)?;
    let pairs: Vec<(usize, usize, f64)> = e
        .repeated_pairs
        .iter()
        .map(|c| (c.index_a, c.index_b, c.overlap_error))
        .collect();
    out.set_item("repeated_pairs", pairs)?;
    if let Some(m) = &e.matches {
        out.set_item("matches_total", m.total)?;
        out.set_item("matches_correct", m.correct)?;
        out.set_item("matches_nr_correct", m.nr_correct)?;
    }
    Ok(out)
}

/// Ratio-test matches as `(index_a, index_b, distance, nn_ratio)` tuples.
#[pyfunction]
#[pyo3(signature = (descriptors_a, descriptors_b, ratio_threshold = 0.6))]
fn nn_ratio_match(
    descriptors_a: Vec<Vec<f64>>,
    descriptors_b: Vec<Vec<f64>>,
    ratio_threshold: f64,
) -> PyResult<Vec<(usize, usize, f64, f64)>> {
    let m = nrrep::matching::nn_ratio_match_descriptors(
        &descriptors_a,
        &descriptors_b,
        ratio_threshold,
    )
    .map_err(to_py)?;
    Ok(m.iter()
        .map(|m| (m.index_a, m.index_b, m.distance, m.nn_ratio))
        .collect())
}

type ParsedRegions = (f64, Vec<PyRegion>, Option<Vec<Vec<f64>>>);

/// Returns `(header_value, regions, descriptors or None)`.
#[pyfunction]
fn parse_region_file(path: PathBuf) -> PyResult<ParsedRegions> {
    let f = io::parse_region_file(&path).map_err(to_py)?;
    Ok((
        f.header_value,
        f.regions.into_iter().map(PyRegion).collect(),
        f.descriptors,
    ))
}

#[pyfunction]
#[pyo3(signature = (path, invert = false))]
fn parse_homography(path: PathBuf, invert: bool) -> PyResult<PyHomography> {
    io::parse_homography(&path, invert)
        .map(PyHomography)
        .map_err(to_py)
}

/// `table[sequence][detector] -> value` to `detector -> mean rescaled value`.
#[pyfunction]
fn summarize_normalized(
    table: BTreeMap<String, BTreeMap<String, f64>>,
) -> PyResult<BTreeMap<String, f64>> {
    io::summarize_normalized(&table).map_err(to_py)
}

#[pymodule]
fn nrrep_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRegion>()?;
    m.add_class::<PyHomography>()?;
    m.add_function(wrap_pyfunction!(overlap_error, m)?)?;
    m.add_function(wrap_pyfunction!(reproject_region, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_region, m)?)?;
    m.add_function(wrap_pyfunction!(is_repeated, m)?)?;
    m.add_function(wrap_pyfunction!(max_distance_curve, m)?)?;
    m.add_function(wrap_pyfunction!(count_keypoints, m)?)?;
    m.add_function(wrap_pyfunction!(nr_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_pair, m)?)?;
    m.add_function(wrap_pyfunction!(nn_ratio_match, m)?)?;
    m.add_function(wrap_pyfunction!(parse_region_file, m)?)?;
    m.add_function(wrap_pyfunction!(parse_homography, m)?)?;
    m.add_function(wrap_pyfunction!(summarize_normalized, m)?)?;
    Ok(())
}
