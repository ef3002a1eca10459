//! Evaluation of keypoint detectors on image pairs related by a homography.
//!
//! - [`geometry`]: elliptical regions, reprojection, overlap error and the
//!   three repeated-detection rules.
//! - [`masks`]: descriptor masks and the sum/max coverage maps behind the
//!   non-redundant detection count.
//! - [`evaluation`]: common-region filtering, correspondences, repeatability
//!   and non-redundant repeatability.
//! - [`matching`]: ratio-test descriptor matching and match correctness.
//! - [`io`]: region files, homographies, manifests and CSV reports.
//! - [`cli`]: the `nrrep` command line.

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod io;
pub mod masks;
pub mod matching;

pub use error::{Error, ErrorClass, Result};
pub use evaluation::{
    duplicate_set, evaluate_pair, filter_common_region, find_correspondences, nr_repeatability,
    repeatability, CommonRegion, Correspondence, DetectionSet, EvalConfig, PairEvaluation,
};
pub use geometry::{
    ellipse_radii, is_repeated, local_affine_approx, max_distance_curve, normalize_region,
    overlap_error, reproject_region, CriterionConfig, CriterionVariant, EllipticalRegion,
    Homography, RepeatTest,
};
pub use masks::{
    accumulate, count_keypoints, mask_values, nr_ratio, CoverageMap, DescriptorMaskConfig,
    DomainRect,
};
pub use matching::{
    classify_matches, nn_ratio_match, nr_correct_count, DescribedDetection, Match, MatchResult,
};
