//! Oracles and synthetic data shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use nrrep::io::format_region_file;
use nrrep::{reproject_region, DetectionSet, DomainRect, EllipticalRegion, Homography};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Closed-form overlap error of two disks of radius `r` whose centers are `d` apart.
pub fn disk_overlap_error(r: f64, d: f64) -> f64 {
    if d >= 2.0 * r {
        return 1.0;
    }
    let lens = 2.0 * r * r * (d / (2.0 * r)).acos() - 0.5 * d * (4.0 * r * r - d * d).sqrt();
    let union = 2.0 * PI * r * r - lens;
    1.0 - lens / union
}

/// A random ellipse with radii in `[r_min, r_max]` and center inside `[margin, w - margin] × [margin, h - margin]`.
pub fn random_region(
    rng: &mut impl Rng,
    w: f64,
    h: f64,
    margin: f64,
    r_min: f64,
    r_max: f64,
) -> EllipticalRegion {
    let x = rng.random_range(margin..w - margin);
    let y = rng.random_range(margin..h - margin);
    let l1 = rng.random_range(r_min..r_max).powi(2);
    let l2 = rng.random_range(r_min..r_max).powi(2);
    let t: f64 = rng.random_range(0.0..PI);
    let (c, s) = (t.cos(), t.sin());
    EllipticalRegion::new(
        [x, y],
        c * c * l1 + s * s * l2,
        c * s * (l1 - l2),
        s * s * l1 + c * c * l2,
    )
    .unwrap()
}

pub fn random_regions(
    rng: &mut impl Rng,
    n: usize,
    w: f64,
    h: f64,
    margin: f64,
    r_min: f64,
    r_max: f64,
) -> Vec<EllipticalRegion> {
    (0..n)
        .map(|_| random_region(rng, w, h, margin, r_min, r_max))
        .collect()
}

/// A mild projective map close to a similarity.
pub fn random_homography(rng: &mut impl Rng) -> Homography {
    let t: f64 = rng.random_range(-0.3..0.3);
    let (c, s) = (t.cos(), t.sin());
    let sx = rng.random_range(0.8..1.25);
    let sy = rng.random_range(0.8..1.25);
    let k = rng.random_range(-0.1..0.1);
    let tx = rng.random_range(-15.0..15.0);
    let ty = rng.random_range(-15.0..15.0);
    let p = rng.random_range(-2e-4..2e-4);
    let q = rng.random_range(-2e-4..2e-4);
    Homography::new(Matrix3::new(
        sx * c,
        -sy * s + k,
        tx,
        sx * s,
        sy * c,
        ty,
        p,
        q,
        1.0,
    ))
    .unwrap()
}

/// A synthetic pair: frame-b detections are frame-a detections mapped through
/// `h⁻¹`, jittered, with a few frame-b-only extras.
pub fn synthetic_pair(
    seed: u64,
    n: usize,
    size: usize,
) -> (DetectionSet, DetectionSet, Homography) {
    let mut rng = rng(seed);
    let side = size as f64;
    let h = random_homography(&mut rng);
    let h_inv = h.inverse().unwrap();
    let a = random_regions(&mut rng, n, side, side, 20.0, 1.5, 6.0);
    let mut b = Vec::new();
    for r in &a {
        if rng.random_bool(0.2) {
            continue;
        }
        let mapped = reproject_region(r, &h_inv).unwrap();
        let c = mapped.center();
        let jitter = [
            c.x + rng.random_range(-1.0..1.0),
            c.y + rng.random_range(-1.0..1.0),
        ];
        let scale = rng.random_range(0.9..1.1);
        b.push(mapped.with_center(jitter).scaled(scale).unwrap());
    }
    b.extend(random_regions(&mut rng, n / 4, side, side, 20.0, 1.5, 6.0));
    let domain = DomainRect::new(size, size).unwrap();
    (
        DetectionSet::new("sift", domain.clone(), a),
        DetectionSet::new("sift", domain, b),
        h,
    )
}

pub fn random_descriptors(rng: &mut impl Rng, n: usize, dim: usize, levels: u32) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..dim)
                .map(|_| rng.random_range(0..levels) as f64)
                .collect()
        })
        .collect()
}

pub fn homography_text(h: &Homography) -> String {
    let m = h.matrix();
    let mut s = String::new();
    for i in 0..3 {
        writeln!(s, "{:?} {:?} {:?}", m[(i, 0)], m[(i, 1)], m[(i, 2)]).unwrap();
    }
    s
}

/// Lay out a two-image sequence with one or more detectors and return the manifest path.
pub fn write_sequence(
    dir: &Path,
    name: &str,
    size: usize,
    h: &Homography,
    detectors: &[(&str, &DetectionSet, &DetectionSet)],
) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    let mut manifest = format!(
        "sequence = {name}\nreference = img1\nimage = img1 {size} {size}\nimage = img2 {size} {size}\nhomography = img2 {name}.H\n"
    );
    fs::write(dir.join(format!("{name}.H")), homography_text(h)).unwrap();
    for (det, a, b) in detectors {
        writeln!(manifest, "detector = {det} sift").unwrap();
        for (img, set) in [("img1", a), ("img2", b)] {
            let file = format!("{name}.{img}.{det}");
            let text = format_region_file(&set.detections, set.descriptors.as_deref());
            fs::write(dir.join(&file), text).unwrap();
            writeln!(manifest, "regions = {det} {img} {file}").unwrap();
        }
    }
    let path = dir.join(format!("{name}.manifest"));
    fs::write(&path, manifest).unwrap();
    path
}
