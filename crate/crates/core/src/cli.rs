//! Command-line front end.
//!
//! Pair jobs run on a worker pool sized by `--jobs`; results are collected and
//! written in manifest order, so reports do not depend on the pool size.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evaluation::{duplicate_set, evaluate_pair, EvalConfig, PairEvaluation};
use crate::geometry::{max_distance_curve, CriterionConfig, CriterionVariant};
use crate::io::{
    parse_homography, parse_manifest, read_metric_csv, summarize_normalized, write_curves_csv,
    write_metric_csv, write_report, CurvePoint, DetectorEntry, MetricRow, PairRecord,
    SequenceManifest, REPORT_METRICS,
};
use crate::masks::{accumulate, count_keypoints, DescriptorMaskConfig, Field};
use crate::matching::DEFAULT_RATIO_THRESHOLD;

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "NRREP_OUT";

#[derive(Debug, Parser)]
#[command(
    name = "nrrep",
    version,
    about = "Repeatability and non-redundant repeatability of keypoint detectors"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Original,
    Normalized,
    Code,
}

impl From<VariantArg> for CriterionVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Original => CriterionVariant::Original,
            VariantArg::Normalized => CriterionVariant::Normalized,
            VariantArg::Code => CriterionVariant::CodeVariant,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// Every detection computed twice.
    Det2,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Repeated-detection rule.
    #[arg(long, value_enum, default_value = "original")]
    pub variant: VariantArg,
    /// Maximum tolerated overlap error (inclusive).
    #[arg(long, default_value_t = 0.40)]
    pub epsilon: f64,
    /// Geometric-mean radius used by the normalized rules.
    #[arg(long, default_value_t = 30.0)]
    pub kappa: f64,
    /// Nearest / second-nearest distance ratio for descriptor matches.
    #[arg(long = "ratio-threshold", default_value_t = DEFAULT_RATIO_THRESHOLD)]
    pub ratio_threshold: f64,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV, default_value = "nrrep-out")]
    pub out: PathBuf,
}

impl CommonArgs {
    pub fn criterion(&self) -> Result<CriterionConfig> {
        CriterionConfig::new(self.variant.into(), self.epsilon, self.kappa)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))
    }
}

#[derive(Debug, Clone, Args)]
pub struct ManifestArgs {
    /// Sequence manifest (repeatable).
    #[arg(long = "manifest", required = true)]
    pub manifests: Vec<PathBuf>,
    /// Homography files map the reference image into the test image.
    #[arg(long = "invert-homography")]
    pub invert_homography: bool,
    /// Override a descriptor mask: `LABEL=rho,zeta` (`zeta` may be `inf`).
    #[arg(long = "mask", value_name = "LABEL=RHO,ZETA")]
    pub mask_overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Repeatability, non-redundant repeatability and (with descriptors) match scores per pair.
    Repeat {
        #[command(flatten)]
        manifest: ManifestArgs,
        #[command(flatten)]
        common: CommonArgs,
        /// Evaluate a synthetic variant of every detector instead.
        #[arg(long, value_enum)]
        synth: Option<SynthKind>,
    },
    /// Non-redundant ratio of every detector on every image.
    NrRatio {
        #[command(flatten)]
        manifest: ManifestArgs,
        #[command(flatten)]
        common: CommonArgs,
        /// Also export sum and max coverage maps as PGM.
        #[arg(long)]
        pgm: bool,
    },
    /// Descriptor matching: total, correct and non-redundant correct matches.
    MatchEval {
        #[command(flatten)]
        manifest: ManifestArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Min–max rescaled means across sequences of metric CSVs.
    Summary {
        /// Metric CSV files written by the other subcommands.
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Maximal tolerated center distance of two equal disks versus their radius.
    Curves {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.05, 0.20, 0.40, 0.60])]
        epsilons: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 2.0, 5.0, 10.0, 20.0, 30.0, 50.0, 100.0])]
        radii: Vec<f64>,
        /// Emit every variant instead of `--variant` only.
        #[arg(long)]
        all_variants: bool,
    },
    /// Duplicated-detections experiment: each detector as detected and with every detection copied.
    Synth {
        #[command(flatten)]
        manifest: ManifestArgs,
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 2)]
        copies: usize,
    },
}

/// Everything a sequence evaluation needs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub manifests: Vec<PathBuf>,
    pub criterion: CriterionConfig,
    pub mask_overrides: BTreeMap<String, DescriptorMaskConfig>,
    pub ratio_threshold: f64,
    pub out: PathBuf,
    pub jobs: usize,
    pub invert_homography: bool,
    /// Duplicate every detection this many times before evaluating.
    pub copies: Option<usize>,
}

impl RunConfig {
    fn from_args(manifest: &ManifestArgs, common: &CommonArgs) -> Result<Self> {
        if !(common.ratio_threshold > 0.0 && common.ratio_threshold <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "--ratio-threshold must lie in (0, 1], got {}",
                common.ratio_threshold
            )));
        }
        let mut mask_overrides = BTreeMap::new();
        for spec in &manifest.mask_overrides {
            let cfg = parse_mask_override(spec)?;
            mask_overrides.insert(cfg.label.to_ascii_lowercase(), cfg);
        }
        Ok(Self {
            manifests: manifest.manifests.clone(),
            criterion: common.criterion()?,
            mask_overrides,
            ratio_threshold: common.ratio_threshold,
            out: common.out.clone(),
            jobs: common.jobs,
            invert_homography: manifest.invert_homography,
            copies: None,
        })
    }

    /// Mask parameters for a detector, honoring overrides and the BRISK size calibration.
    pub fn mask_for(&self, detector: &DetectorEntry) -> Result<DescriptorMaskConfig> {
        let key = detector.mask_label.to_ascii_lowercase();
        let base = match self.mask_overrides.get(&key) {
            Some(cfg) => cfg.clone(),
            None => DescriptorMaskConfig::for_label(&detector.mask_label)?,
        };
        Ok(if detector.size_is_brisk_s {
            base.with_region_scale(4.0)
        } else {
            base
        })
    }

    fn eval_config(&self, detector: &DetectorEntry) -> Result<EvalConfig> {
        let mut cfg = EvalConfig::new(self.mask_for(detector)?);
        cfg.criterion = self.criterion;
        cfg.ratio_threshold = self.ratio_threshold;
        Ok(cfg)
    }
}

fn parse_mask_override(spec: &str) -> Result<DescriptorMaskConfig> {
    let bad = || Error::InvalidParameter(format!("mask override {spec:?} is not LABEL=RHO,ZETA"));
    let (label, params) = spec.split_once('=').ok_or_else(bad)?;
    let (rho, zeta) = params.split_once(',').ok_or_else(bad)?;
    let rho: f64 = rho.trim().parse().map_err(|_| bad())?;
    let zeta: f64 = match zeta.trim() {
        "inf" | "flat" => f64::INFINITY,
        z => z.parse().map_err(|_| bad())?,
    };
    DescriptorMaskConfig::new(label.trim(), rho, zeta)
}

struct PairJob<'a> {
    manifest: &'a SequenceManifest,
    detector: &'a DetectorEntry,
    test_id: &'a str,
    homography: &'a Path,
}

fn pair_jobs<'a>(manifests: &'a [SequenceManifest]) -> Vec<PairJob<'a>> {
    let mut jobs = Vec::new();
    for m in manifests {
        for d in &m.detectors {
            for p in &m.pairs {
                jobs.push(PairJob {
                    manifest: m,
                    detector: d,
                    test_id: &p.test_id,
                    homography: &p.homography,
                });
            }
        }
    }
    jobs
}

fn run_pair_job(job: &PairJob<'_>, run: &RunConfig) -> Result<Vec<PairRecord>> {
    let m = job.manifest;
    let h = parse_homography(job.homography, run.invert_homography ^ m.invert_homography)?;
    let set_a = m.load_detections(job.detector, &m.reference)?;
    let set_b = m.load_detections(job.detector, job.test_id)?;
    let cfg = run.eval_config(job.detector)?;
    let pair = format!("{}-{}", m.reference, job.test_id);
    let context = |e: Error| {
        e.context(format!(
            "detector {} pair {pair} of {}",
            job.detector.name,
            m.path.display()
        ))
    };
    let record = |detector: String, evaluation: PairEvaluation| PairRecord {
        detector,
        sequence: m.sequence.clone(),
        pair: pair.clone(),
        evaluation,
    };
    match run.copies {
        None => Ok(vec![record(
            job.detector.name.clone(),
            evaluate_pair(&set_a, &set_b, &h, &cfg).map_err(context)?,
        )]),
        Some(n) => {
            let base = evaluate_pair(&set_a, &set_b, &h, &cfg).map_err(context)?;
            let dup = evaluate_pair(
                &duplicate_set(&set_a, n)?,
                &duplicate_set(&set_b, n)?,
                &h,
                &cfg,
            )
            .map_err(context)?;
            Ok(vec![
                record(job.detector.name.clone(), base),
                record(format!("{}x{n}", job.detector.name), dup),
            ])
        }
    }
}

/// Evaluate every (detector, pair) job of the manifests.
pub fn evaluate_sequence(run: &RunConfig) -> Result<Vec<PairRecord>> {
    let manifests = run
        .manifests
        .iter()
        .map(|p| parse_manifest(p))
        .collect::<Result<Vec<_>>>()?;
    let jobs = pair_jobs(&manifests);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(run.jobs)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<Vec<PairRecord>>> =
        pool.install(|| jobs.par_iter().map(|j| run_pair_job(j, run)).collect());
    let mut records = Vec::new();
    for r in results {
        records.extend(r?);
    }
    Ok(records)
}

/// Grid of maximal distances over radii and tolerances.
pub fn emit_curves(
    variant: CriterionVariant,
    kappa: f64,
    epsilons: &[f64],
    radii: &[f64],
) -> Result<Vec<CurvePoint>> {
    if let Some(r) = radii.iter().find(|&&r| !(r > 0.0 && r.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "radius must be positive, got {r}"
        )));
    }
    if let Some(e) = epsilons.iter().find(|&&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must lie in (0, 1), got {e}"
        )));
    }
    let grid: Vec<(f64, f64)> = epsilons
        .iter()
        .flat_map(|&e| radii.iter().map(move |&r| (e, r)))
        .collect();
    grid.par_iter()
        .map(|&(epsilon, radius)| {
            let cfg = CriterionConfig::new(variant, epsilon, kappa)?;
            Ok(CurvePoint {
                radius,
                d_max: max_distance_curve(radius, &cfg)?,
                variant: variant.name().to_string(),
                epsilon,
            })
        })
        .collect()
}

fn write_match_report(records: &[PairRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
    let mut written = Vec::new();
    for (name, metric) in REPORT_METRICS
        .iter()
        .filter(|(n, _)| n.starts_with("matches_"))
    {
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

fn run_nr_ratio(run: &RunConfig, common: &CommonArgs, pgm: bool) -> Result<Vec<PathBuf>> {
    let manifests = run
        .manifests
        .iter()
        .map(|p| parse_manifest(p))
        .collect::<Result<Vec<_>>>()?;
    let mut jobs = Vec::new();
    for m in &manifests {
        for d in &m.detectors {
            for image in d.regions.keys() {
                jobs.push((m, d, image.as_str()));
            }
        }
    }
    let coverage_dir = run.out.join("coverage");
    if pgm {
        fs::create_dir_all(&coverage_dir).map_err(|e| Error::from(e).in_file(&coverage_dir))?;
    }
    let pool = common.pool()?;
    let results: Vec<Result<[MetricRow; 3]>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(m, d, image)| {
                let set = m.load_detections(d, image)?;
                if set.is_empty() {
                    return Err(Error::EmptySet.in_file(&d.regions[image]));
                }
                let map = accumulate(&set.detections, &run.mask_for(d)?, &set.image_domain);
                let (k, k_nr) = count_keypoints(&map);
                if pgm {
                    let stem = format!("{}_{}_{}", m.sequence, d.name, image);
                    map.write_pgm(Field::Sum, &coverage_dir.join(format!("{stem}_sum.pgm")))?;
                    map.write_pgm(Field::Max, &coverage_dir.join(format!("{stem}_max.pgm")))?;
                }
                let row = |value| MetricRow {
                    detector: d.name.clone(),
                    sequence: m.sequence.clone(),
                    pair: image.to_string(),
                    value,
                };
                let ratio = if k > 0.0 { k_nr / k } else { 0.0 };
                Ok([row(ratio), row(k), row(k_nr)])
            })
            .collect()
    });
    let mut cols: [Vec<MetricRow>; 3] = Default::default();
    for r in results {
        for (col, row) in cols.iter_mut().zip(r?) {
            col.push(row);
        }
    }
    fs::create_dir_all(&run.out).map_err(|e| Error::from(e).in_file(&run.out))?;
    let mut written = Vec::new();
    for (name, rows) in ["nr_ratio", "k", "k_nr"].iter().zip(&cols) {
        let path = run.out.join(format!("{name}.csv"));
        write_metric_csv(&path, rows)?;
        written.push(path);
    }
    Ok(written)
}

fn run_summary(inputs: &[PathBuf], out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(|e| Error::from(e).in_file(out))?;
    let mut written = Vec::new();
    for input in inputs {
        // Mean over pairs per (sequence, detector), then cross-sequence rescaling.
        let mut acc: BTreeMap<String, BTreeMap<String, (f64, usize)>> = BTreeMap::new();
        for row in read_metric_csv(input)? {
            let e = acc
                .entry(row.sequence)
                .or_default()
                .entry(row.detector)
                .or_insert((0.0, 0));
            e.0 += row.value;
            e.1 += 1;
        }
        let table: BTreeMap<String, BTreeMap<String, f64>> = acc
            .into_iter()
            .map(|(s, col)| {
                (
                    s,
                    col.into_iter()
                        .map(|(d, (v, n))| (d, v / n as f64))
                        .collect(),
                )
            })
            .collect();
        let summary = summarize_normalized(&table).map_err(|e| e.in_file(input))?;
        let rows: Vec<MetricRow> = summary
            .into_iter()
            .map(|(detector, value)| MetricRow {
                detector,
                sequence: "all".into(),
                pair: "mean".into(),
                value,
            })
            .collect();
        let stem = input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "metric".into());
        let path = out.join(format!("summary_{stem}.csv"));
        write_metric_csv(&path, &rows)?;
        written.push(path);
    }
    Ok(written)
}

/// Run a parsed command line; returns the files written.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    match cli.command {
        Command::Repeat {
            manifest,
            common,
            synth,
        } => {
            let mut run = RunConfig::from_args(&manifest, &common)?;
            if let Some(SynthKind::Det2) = synth {
                run.copies = Some(2);
            }
            let records = evaluate_sequence(&run)?;
            write_report(&records, &run.out)
        }
        Command::NrRatio {
            manifest,
            common,
            pgm,
        } => {
            let run = RunConfig::from_args(&manifest, &common)?;
            run_nr_ratio(&run, &common, pgm)
        }
        Command::MatchEval { manifest, common } => {
            let run = RunConfig::from_args(&manifest, &common)?;
            let records = evaluate_sequence(&run)?;
            if let Some(r) = records.iter().find(|r| r.evaluation.matches.is_none()) {
                return Err(Error::InvalidParameter(format!(
                    "detector {} pair {} has no descriptors to match",
                    r.detector, r.pair
                )));
            }
            write_match_report(&records, &run.out)
        }
        Command::Summary { inputs, common } => run_summary(&inputs, &common.out),
        Command::Curves {
            common,
            epsilons,
            radii,
            all_variants,
        } => {
            let variants = if all_variants {
                vec![
                    CriterionVariant::Original,
                    CriterionVariant::Normalized,
                    CriterionVariant::CodeVariant,
                ]
            } else {
                vec![common.variant.into()]
            };
            let pool = common.pool()?;
            let mut points = Vec::new();
            for v in variants {
                points.extend(pool.install(|| emit_curves(v, common.kappa, &epsilons, &radii))?);
            }
            fs::create_dir_all(&common.out).map_err(|e| Error::from(e).in_file(&common.out))?;
            let path = common.out.join("curves.csv");
            write_curves_csv(&path, &points)?;
            Ok(vec![path])
        }
        Command::Synth {
            manifest,
            common,
            copies,
        } => {
            let mut run = RunConfig::from_args(&manifest, &common)?;
            if copies < 2 {
                return Err(Error::InvalidParameter(format!(
                    "--copies must be ≥ 2, got {copies}"
                )));
            }
            run.copies = Some(copies);
            let records = evaluate_sequence(&run)?;
            write_report(&records, &run.out)
        }
    }
}
