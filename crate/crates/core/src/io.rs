//! Region files, homographies, sequence manifests and CSV reports.
//!
//! Region files follow the affine-benchmark text layout:
//!
//! ```text
//! 1.0            # or the descriptor length d
//! 2              # number of detections
//! u v a b c [d descriptor values]
//! ...
//! ```
//!
//! where `a(x−u)² + 2b(x−u)(y−v) + c(y−v)² = 1` is the region boundary, so
//! `[[a, b], [b, c]]` is the inverse of the shape matrix.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::evaluation::{DetectionSet, PairEvaluation};
use crate::geometry::{EllipticalRegion, Homography};
use crate::masks::DomainRect;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))
}

fn parse_real(token: &str, line: usize) -> Result<f64> {
    token
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::NonNumericToken {
            line,
            token: token.to_string(),
        })
}

/// Contents of a region file.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionFile {
    pub header_value: f64,
    pub regions: Vec<EllipticalRegion>,
    pub descriptors: Option<Vec<Vec<f64>>>,
}

impl RegionFile {
    pub fn descriptor_len(&self) -> usize {
        descriptor_len(self.header_value)
    }

    pub fn into_detection_set(self, label: &str, domain: DomainRect) -> Result<DetectionSet> {
        let set = DetectionSet::new(label, domain, self.regions);
        match self.descriptors {
            Some(d) => set.with_descriptors(d),
            None => Ok(set),
        }
    }
}

fn descriptor_len(header: f64) -> usize {
    if header > 1.0 {
        header as usize
    } else {
        0
    }
}

pub fn parse_region_str(text: &str) -> Result<RegionFile> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (hline, htext) = lines.next().ok_or(Error::MalformedHeader {
        line: 1,
        message: "empty file".into(),
    })?;
    let header_value: f64 = htext.parse().map_err(|_| Error::MalformedHeader {
        line: hline,
        message: format!("expected a real header value, found {htext:?}"),
    })?;
    if !(header_value.is_finite() && header_value >= 0.0)
        || (header_value > 1.0 && header_value.fract() != 0.0)
    {
        return Err(Error::MalformedHeader {
            line: hline,
            message: format!("header {header_value} is neither 1.0 nor a descriptor length"),
        });
    }
    let dim = descriptor_len(header_value);

    let (cline, ctext) = lines.next().ok_or(Error::MalformedHeader {
        line: hline + 1,
        message: "missing detection count".into(),
    })?;
    let declared: usize = ctext.parse().map_err(|_| Error::MalformedHeader {
        line: cline,
        message: format!("expected a detection count, found {ctext:?}"),
    })?;

    let mut regions = Vec::with_capacity(declared);
    let mut descriptors = Vec::new();
    for (row, (line, text)) in lines.enumerate() {
        let values = text
            .split_whitespace()
            .map(|t| parse_real(t, line))
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != 5 + dim {
            return Err(Error::InvalidRow {
                row,
                line,
                message: format!("expected {} values, found {}", 5 + dim, values.len()),
            });
        }
        let region =
            EllipticalRegion::from_conic(values[0], values[1], values[2], values[3], values[4])
                .and_then(|r| r.check_nondegenerate().map(|_| r))
                .map_err(|e| Error::InvalidRow {
                    row,
                    line,
                    message: format!("ellipse is not positive-definite or is degenerate ({e})"),
                })?;
        regions.push(region);
        if dim > 0 {
            descriptors.push(values[5..].to_vec());
        }
    }
    if regions.len() != declared {
        return Err(Error::CountMismatch {
            declared,
            found: regions.len(),
        });
    }
    Ok(RegionFile {
        header_value,
        regions,
        descriptors: (dim > 0).then_some(descriptors),
    })
}

pub fn parse_region_file(path: &Path) -> Result<RegionFile> {
    parse_region_str(&read_text(path)?).map_err(|e| e.in_file(path))
}

/// Serialize regions (and descriptors) in region-file layout.
///
/// Values use the shortest representation that parses back to the same `f64`.
pub fn format_region_file(
    regions: &[EllipticalRegion],
    descriptors: Option<&[Vec<f64>]>,
) -> String {
    let dim = descriptors.and_then(|d| d.first()).map_or(0, Vec::len);
    let mut out = String::new();
    if dim > 1 {
        out.push_str(&format!("{dim}\n"));
    } else {
        out.push_str("1.0\n");
    }
    out.push_str(&format!("{}\n", regions.len()));
    for (i, r) in regions.iter().enumerate() {
        let c = r.center();
        let (a, b, cc) = r.to_conic();
        let mut fields = vec![c.x, c.y, a, b, cc];
        if let Some(d) = descriptors {
            fields.extend_from_slice(&d[i]);
        }
        let line: Vec<String> = fields.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_region_file(
    path: &Path,
    regions: &[EllipticalRegion],
    descriptors: Option<&[Vec<f64>]>,
) -> Result<()> {
    fs::write(path, format_region_file(regions, descriptors))
        .map_err(|e| Error::from(e).in_file(path))
}

pub fn parse_homography_str(text: &str) -> Result<Homography> {
    let values = text
        .lines()
        .enumerate()
        .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t)))
        .map(|(line, t)| {
            parse_real(t, line).map_err(|_| {
                Error::MalformedMatrix(format!("non-numeric token {t:?} on line {line}"))
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    Homography::from_row_slice(&values)
}

/// Read a 3×3 homography; `invert` flips a file storing the frame-a → frame-b map.
pub fn parse_homography(path: &Path, invert: bool) -> Result<Homography> {
    let h = parse_homography_str(&read_text(path)?).map_err(|e| e.in_file(path))?;
    if invert {
        h.inverse().map_err(|e| e.in_file(path))
    } else {
        Ok(h)
    }
}

pub fn format_homography(h: &Homography) -> String {
    let m = h.matrix();
    (0..3)
        .map(|r| {
            let row: Vec<String> = (0..3).map(|c| format!("{:?}", m[(r, c)])).collect();
            row.join(" ") + "\n"
        })
        .collect()
}

/// Width and height from a PNM (P1–P6) header.
pub fn read_pnm_dimensions(path: &Path) -> Result<(usize, usize)> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|f| f.take(4096).read_to_end(&mut buf))
        .map_err(|e| Error::from(e).in_file(path))?;
    let bad = |msg: &str| {
        Error::MalformedHeader {
            line: 1,
            message: msg.to_string(),
        }
        .in_file(path)
    };

    // Whitespace-separated ASCII header tokens; '#' starts a comment.
    let mut tokens = Vec::new();
    let mut i = 0;
    while tokens.len() < 3 && i < buf.len() {
        match buf[i] {
            b'#' => {
                while i < buf.len() && buf[i] != b'\n' {
                    i += 1;
                }
            }
            c if c.is_ascii_whitespace() => i += 1,
            _ => {
                let start = i;
                while i < buf.len() && !buf[i].is_ascii_whitespace() && buf[i] != b'#' {
                    i += 1;
                }
                tokens.push(String::from_utf8_lossy(&buf[start..i]).into_owned());
            }
        }
    }
    if tokens.len() < 3 || !matches!(tokens[0].as_str(), "P1" | "P2" | "P3" | "P4" | "P5" | "P6") {
        return Err(bad("not a PNM header"));
    }
    let w = tokens[1].parse().map_err(|_| bad("bad width"))?;
    let h = tokens[2].parse().map_err(|_| bad("bad height"))?;
    Ok((w, h))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageEntry {
    pub id: String,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorEntry {
    pub name: String,
    /// Mask table label; defaults to the detector name.
    pub mask_label: String,
    /// Region radii are raw BRISK sizes `s`; converted to `σ = s / 4` on load.
    pub size_is_brisk_s: bool,
    pub regions: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairEntry {
    pub test_id: String,
    pub homography: PathBuf,
}

/// A sequence: one reference image, several test images related to it by homographies.
///
/// Line-oriented `key = value` text; `#` starts a comment, relative paths are
/// resolved against the manifest directory:
///
/// ```text
/// sequence = graf
/// reference = img1
/// image = img1 800 640
/// image = img2 800 640
/// image_pnm = img3 img3.ppm
/// homography = img2 H1to2p
/// invert_homography = true
/// detector = hesaff Hessian-Affine
/// regions = hesaff img1 img1.hesaff
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceManifest {
    pub path: PathBuf,
    pub sequence: String,
    pub reference: String,
    pub images: Vec<ImageEntry>,
    pub pairs: Vec<PairEntry>,
    pub detectors: Vec<DetectorEntry>,
    pub invert_homography: bool,
}

impl SequenceManifest {
    pub fn image(&self, id: &str) -> Option<&ImageEntry> {
        self.images.iter().find(|i| i.id == id)
    }

    pub fn domain(&self, id: &str) -> Result<DomainRect> {
        let img = self.image(id).ok_or_else(|| Error::Manifest {
            line: 0,
            message: format!("unknown image {id:?}"),
        })?;
        DomainRect::new(img.width, img.height)
    }

    /// Load one detector's detections on one image.
    pub fn load_detections(&self, detector: &DetectorEntry, image: &str) -> Result<DetectionSet> {
        let path = detector.regions.get(image).ok_or_else(|| Error::Manifest {
            line: 0,
            message: format!(
                "detector {:?} has no regions for image {image:?}",
                detector.name
            ),
        })?;
        let set =
            parse_region_file(path)?.into_detection_set(&detector.name, self.domain(image)?)?;
        if detector.size_is_brisk_s {
            set.scale_regions(0.25)
        } else {
            Ok(set)
        }
    }
}

pub fn parse_manifest(path: &Path) -> Result<SequenceManifest> {
    let text = read_text(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest_str(&text, &base, path).map_err(|e| e.in_file(path))
}

pub fn parse_manifest_str(text: &str, base: &Path, origin: &Path) -> Result<SequenceManifest> {
    let resolve = |p: &str| {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };
    let mut m = SequenceManifest {
        path: origin.to_path_buf(),
        sequence: String::new(),
        reference: String::new(),
        images: Vec::new(),
        pairs: Vec::new(),
        detectors: Vec::new(),
        invert_homography: false,
    };
    let mut pending_regions: Vec<(usize, String, String, PathBuf)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| Error::Manifest { line, message };
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, found {content:?}")))?;
        let key = key.trim();
        let args: Vec<&str> = value.split_whitespace().collect();
        let want = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(err(format!(
                    "`{key}` takes {n} values, found {}",
                    args.len()
                )))
            }
        };
        let dim = |t: &str| -> Result<usize> {
            t.parse::<usize>()
                .ok()
                .filter(|&v| v >= 1)
                .ok_or_else(|| err(format!("invalid image dimension {t:?}")))
        };
        match key {
            "sequence" => {
                want(1)?;
                m.sequence = args[0].to_string();
            }
            "reference" => {
                want(1)?;
                m.reference = args[0].to_string();
            }
            "image" => {
                want(3)?;
                m.images.push(ImageEntry {
                    id: args[0].to_string(),
                    width: dim(args[1])?,
                    height: dim(args[2])?,
                });
            }
            "image_pnm" => {
                want(2)?;
                let (width, height) = read_pnm_dimensions(&resolve(args[1]))?;
                if width == 0 || height == 0 {
                    return Err(err(format!("PNM {} has zero size", args[1])));
                }
                m.images.push(ImageEntry {
                    id: args[0].to_string(),
                    width,
                    height,
                });
            }
            "homography" => {
                want(2)?;
                m.pairs.push(PairEntry {
                    test_id: args[0].to_string(),
                    homography: resolve(args[1]),
                });
            }
            "invert_homography" => {
                want(1)?;
                m.invert_homography = match args[0] {
                    "true" | "yes" | "1" => true,
                    "false" | "no" | "0" => false,
                    other => return Err(err(format!("expected a boolean, found {other:?}"))),
                };
            }
            "detector" => {
                if args.is_empty() || args.len() > 3 {
                    return Err(err("`detector` takes a name, an optional mask label and an optional `size_is_brisk_s` flag".into()));
                }
                let mut size_is_brisk_s = false;
                let mut mask_label = args[0].to_string();
                for extra in &args[1..] {
                    if *extra == "size_is_brisk_s" {
                        size_is_brisk_s = true;
                    } else {
                        mask_label = extra.to_string();
                    }
                }
                m.detectors.push(DetectorEntry {
                    name: args[0].to_string(),
                    mask_label,
                    size_is_brisk_s,
                    regions: BTreeMap::new(),
                });
            }
            "regions" => {
                want(3)?;
                pending_regions.push((
                    line,
                    args[0].to_string(),
                    args[1].to_string(),
                    resolve(args[2]),
                ));
            }
            other => return Err(err(format!("unknown key {other:?}"))),
        }
    }

    for (line, det, image, path) in pending_regions {
        let entry = m
            .detectors
            .iter_mut()
            .find(|d| d.name == det)
            .ok_or_else(|| Error::Manifest {
                line,
                message: format!("regions for undeclared detector {det:?}"),
            })?;
        entry.regions.insert(image, path);
    }

    let fail = |message: String| Error::Manifest { line: 0, message };
    if m.sequence.is_empty() {
        m.sequence = origin
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "sequence".into());
    }
    if m.reference.is_empty() {
        return Err(fail("missing `reference`".into()));
    }
    for id in std::iter::once(&m.reference).chain(m.pairs.iter().map(|p| &p.test_id)) {
        if m.image(id).is_none() {
            return Err(fail(format!("image {id:?} has no dimensions")));
        }
    }
    let mut files: Vec<&PathBuf> = m.pairs.iter().map(|p| &p.homography).collect();
    files.extend(m.detectors.iter().flat_map(|d| d.regions.values()));
    for f in files {
        if !f.is_file() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "referenced file does not exist",
            ))
            .in_file(f));
        }
    }
    Ok(m)
}

/// Per-sequence min–max rescaling over detectors, then the mean over sequences.
///
/// `table[sequence][detector]`. A sequence whose values are all equal maps
/// every detector to 0.5.
pub fn summarize_normalized(
    table: &BTreeMap<String, BTreeMap<String, f64>>,
) -> Result<BTreeMap<String, f64>> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (sequence, column) in table {
        if column.len() < 2 {
            return Err(Error::InsufficientDetectors(sequence.clone()));
        }
        let lo = column.values().copied().fold(f64::INFINITY, f64::min);
        let hi = column.values().copied().fold(f64::NEG_INFINITY, f64::max);
        for (detector, &v) in column {
            let scaled = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
            let e = sums.entry(detector.clone()).or_insert((0.0, 0));
            e.0 += scaled;
            e.1 += 1;
        }
    }
    Ok(sums
        .into_iter()
        .map(|(d, (s, n))| (d, s / n as f64))
        .collect())
}

/// Format with 6 significant digits, `%g` style.
pub fn format_sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    // Rounding may carry into the next decade; let the scientific form decide.
    let sci = format!("{v:.5e}");
    let (mantissa, e) = sci.split_once('e').unwrap_or((&sci, "0"));
    let e: i32 = e.parse().unwrap_or(exp);
    if (-5..6).contains(&e) {
        let decimals = (5 - e).max(0) as usize;
        let fixed = format!("{v:.decimals$}");
        trim_zeros(&fixed)
    } else {
        format!("{}e{e}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// One evaluated pair with its identifying labels.
#[derive(Debug, Clone)]
pub struct PairRecord {
    pub detector: String,
    pub sequence: String,
    pub pair: String,
    pub evaluation: PairEvaluation,
}

/// A metric row as written to and read back from report CSVs.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub detector: String,
    pub sequence: String,
    pub pair: String,
    pub value: f64,
}

pub const METRIC_HEADER: [&str; 4] = ["detector", "sequence", "pair", "value"];

type MetricFn = fn(&PairEvaluation) -> Option<f64>;

/// Report files and the metric each one holds.
pub const REPORT_METRICS: [(&str, MetricFn); 10] = [
    ("count_a", |e| Some(e.count_a as f64)),
    ("count_b", |e| Some(e.count_b as f64)),
    ("repeated", |e| Some(e.repeated_pairs.len() as f64)),
    ("repeatability", |e| Some(e.rep)),
    ("nr_repeatability", |e| Some(e.nr_rep)),
    ("nr_ratio_a", |e| Some(e.nr_ratio_a)),
    ("nr_ratio_b", |e| Some(e.nr_ratio_b)),
    ("matches_total", |e| {
        e.matches.as_ref().map(|m| m.total as f64)
    }),
    ("matches_correct", |e| {
        e.matches.as_ref().map(|m| m.correct as f64)
    }),
    ("matches_nr_correct", |e| {
        e.matches.as_ref().map(|m| m.nr_correct)
    }),
];

pub fn write_metric_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| Error::from(e).in_file(path))?;
    let io_err = |e: csv::Error| Error::from(e).in_file(path);
    w.write_record(METRIC_HEADER).map_err(io_err)?;
    for r in rows {
        w.write_record([
            r.detector.as_str(),
            r.sequence.as_str(),
            r.pair.as_str(),
            &format_sig6(r.value),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::from(e).in_file(path))
}

pub fn read_metric_csv(path: &Path) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::from(e).in_file(path))?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::from(e).in_file(path))?;
        let line = i + 2;
        if rec.len() != 4 {
            return Err(Error::InvalidRow {
                row: i,
                line,
                message: format!("expected 4 fields, found {}", rec.len()),
            }
            .in_file(path));
        }
        rows.push(MetricRow {
            detector: rec[0].to_string(),
            sequence: rec[1].to_string(),
            pair: rec[2].to_string(),
            value: parse_real(&rec[3], line).map_err(|e| e.in_file(path))?,
        });
    }
    Ok(rows)
}

/// Write one CSV per metric into `dir`; returns the files written.
pub fn write_report(records: &[PairRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
    let mut written = Vec::new();
    for (name, metric) in REPORT_METRICS {
        let rows: Vec<MetricRow> = records
            .iter()
            .filter_map(|r| {
                metric(&r.evaluation).map(|value| MetricRow {
                    detector: r.detector.clone(),
                    sequence: r.sequence.clone(),
                    pair: r.pair.clone(),
                    value,
                })
            })
            .collect();
        let path = dir.join(format!("{name}.csv"));
        write_metric_csv(&path, &rows)?;
        written.push(path);
    }
    Ok(written)
}

/// One point of a maximal-distance curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub radius: f64,
    pub d_max: f64,
    pub variant: String,
    pub epsilon: f64,
}

pub fn write_curves_csv(path: &Path, points: &[CurvePoint]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| Error::from(e).in_file(path))?;
    let io_err = |e: csv::Error| Error::from(e).in_file(path);
    w.write_record(["r", "d_max", "variant", "epsilon"])
        .map_err(io_err)?;
    for p in points {
        w.write_record([
            format_sig6(p.radius),
            format_sig6(p.d_max),
            p.variant.clone(),
            format_sig6(p.epsilon),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::from(e).in_file(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_disk_row() {
        let f = parse_region_str("1.0\n1\n10 20 1 0 1\n").unwrap();
        assert_eq!(f.regions.len(), 1);
        let r = f.regions[0];
        assert_eq!((r.center().x, r.center().y), (10.0, 20.0));
        assert_eq!(r.entries(), (1.0, 0.0, 1.0));
        assert!(f.descriptors.is_none());
    }

    #[test]
    fn quarter_conic_is_radius_two() {
        let f = parse_region_str("1.0\n1\n0 0 0.25 0 0.25\n").unwrap();
        let (lo, hi) = crate::geometry::ellipse_radii(&f.regions[0]).unwrap();
        assert!((lo - 2.0).abs() < 1e-12 && (hi - 2.0).abs() < 1e-12);
    }

    #[test]
    fn descriptors_follow_header() {
        let f = parse_region_str("3\n2\n1 1 1 0 1 0.1 0.2 0.3\n2 2 1 0 1 1 2 3\n").unwrap();
        assert_eq!(f.descriptor_len(), 3);
        assert_eq!(f.descriptors.unwrap()[1], vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn region_file_errors() {
        let rows = "1.0\n5\n".to_string() + &"0 0 1 0 1\n".repeat(4);
        assert!(matches!(
            parse_region_str(&rows),
            Err(Error::CountMismatch {
                declared: 5,
                found: 4
            })
        ));
        assert!(matches!(
            parse_region_str("abc\n1\n"),
            Err(Error::MalformedHeader { .. })
        ));
        assert!(matches!(
            parse_region_str("1.0\n1\n0 0 1 x 1\n"),
            Err(Error::NonNumericToken { line: 3, .. })
        ));
        assert!(matches!(
            parse_region_str("1.0\n1\n0 0 1 2 1\n"),
            Err(Error::InvalidRow {
                row: 0,
                line: 3,
                ..
            })
        ));
        // Condition number 1e10.
        assert!(matches!(
            parse_region_str("1.0\n1\n0 0 1 0 1e10\n"),
            Err(Error::InvalidRow { .. })
        ));
    }

    #[test]
    fn homography_parsing() {
        let h = parse_homography_str("1 0 0\n0 1 0\n0 0 1\n").unwrap();
        assert_eq!(h, Homography::identity());
        let a = parse_homography_str("1.2 0.1 5\n-0.1 0.9 3\n1e-4 2e-4 1\n").unwrap();
        let b = parse_homography_str("6 0.5 25\n-0.5 4.5 15\n5e-4 1e-3 5\n").unwrap();
        assert!((a.matrix() - b.matrix()).abs().max() < 1e-15);
        assert!(matches!(
            parse_homography_str("1 0 0 0 1 0 0 0"),
            Err(Error::MalformedMatrix(_))
        ));
        assert!(matches!(
            parse_homography_str("1 2 0 2 4 0 0 0 1"),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn summary_examples() {
        let mut t = BTreeMap::new();
        t.insert(
            "s1".to_string(),
            BTreeMap::from([
                ("a".to_string(), 2.0),
                ("b".to_string(), 4.0),
                ("c".to_string(), 6.0),
            ]),
        );
        let s = summarize_normalized(&t).unwrap();
        assert_eq!(s["a"], 0.0);
        assert_eq!(s["b"], 0.5);
        assert_eq!(s["c"], 1.0);

        t.insert(
            "s2".to_string(),
            BTreeMap::from([
                ("a".to_string(), 10.0),
                ("b".to_string(), 1.0),
                ("c".to_string(), 0.0),
            ]),
        );
        // s2 rescaled: a = 1, b = 0.1, c = 0
        let s = summarize_normalized(&t).unwrap();
        assert!((s["a"] - 0.5).abs() < 1e-12);
        assert!((s["b"] - 0.3).abs() < 1e-12);
        assert!((s["c"] - 0.5).abs() < 1e-12);

        let flat = BTreeMap::from([(
            "s".to_string(),
            BTreeMap::from([("a".to_string(), 3.0), ("b".to_string(), 3.0)]),
        )]);
        assert_eq!(summarize_normalized(&flat).unwrap()["a"], 0.5);

        let single = BTreeMap::from([("s".to_string(), BTreeMap::from([("a".to_string(), 3.0)]))]);
        assert!(matches!(
            summarize_normalized(&single),
            Err(Error::InsufficientDetectors(_))
        ));
    }

    #[test]
    fn sig6_formatting() {
        assert_eq!(format_sig6(0.0), "0");
        assert_eq!(format_sig6(1.0), "1");
        assert_eq!(format_sig6(0.3), "0.3");
        assert_eq!(format_sig6(0.40370123), "0.403701");
        assert_eq!(format_sig6(123456.7), "123457");
        assert_eq!(format_sig6(1234567.0), "1.23457e6");
        assert_eq!(format_sig6(9.999996), "10");
        assert_eq!(format_sig6(1.5e-7), "1.5e-7");
        assert_eq!(format_sig6(-2.5), "-2.5");
    }

    #[test]
    fn pnm_header_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.pgm");
        fs::write(&p, b"P5\n# comment\n640 480\n255\n\x00\x01").unwrap();
        assert_eq!(read_pnm_dimensions(&p).unwrap(), (640, 480));
        fs::write(&p, b"JUNK").unwrap();
        assert!(read_pnm_dimensions(&p).is_err());
    }
}
