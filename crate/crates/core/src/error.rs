use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Parse,
    Geometry,
    Io,
    Usage,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Usage => 2,
            ErrorClass::Parse => 3,
            ErrorClass::Geometry => 4,
            ErrorClass::Io => 5,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate projection: denominator {denominator:e} at ({x}, {y})")]
    DegenerateProjection { x: f64, y: f64, denominator: f64 },

    #[error("shape matrix is not positive-definite (eigenvalues {0:e}, {1:e})")]
    NonPositiveDefinite(f64, f64),

    #[error("region area vanishes at raster resolution")]
    ZeroArea,

    #[error("descriptor mask support misses the image domain")]
    EmptySupport,

    #[error("empty detection set")]
    EmptySet,

    #[error("no detections inside the common region")]
    EmptyCommonRegion,

    #[error("descriptor length mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("ratio test needs at least two candidates, found {0}")]
    TooFewCandidates(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed header on line {line}: {message}")]
    MalformedHeader { line: usize, message: String },

    #[error("declared {declared} detections, found {found}")]
    CountMismatch { declared: usize, found: usize },

    #[error("row {row} (line {line}): {message}")]
    InvalidRow {
        row: usize,
        line: usize,
        message: String,
    },

    #[error("non-numeric token {token:?} on line {line}")]
    NonNumericToken { line: usize, token: String },

    #[error("singular homography (det = {0:e})")]
    Singular(f64),

    #[error("malformed matrix: {0}")]
    MalformedMatrix(String),

    #[error("sequence {0:?} has fewer than two detectors")]
    InsufficientDetectors(String),

    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV failure: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Attach a file path to an error, preserving its class.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Error {
        Error::InFile {
            path: path.into(),
            source: Box::new(self),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Error {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::DegenerateProjection { .. }
            | Error::NonPositiveDefinite(..)
            | Error::ZeroArea
            | Error::EmptySupport
            | Error::EmptySet
            | Error::EmptyCommonRegion
            | Error::DimensionMismatch { .. }
            | Error::TooFewCandidates(_)
            | Error::Singular(_)
            | Error::InsufficientDetectors(_) => ErrorClass::Geometry,
            Error::MalformedHeader { .. }
            | Error::CountMismatch { .. }
            | Error::InvalidRow { .. }
            | Error::NonNumericToken { .. }
            | Error::MalformedMatrix(_)
            | Error::Manifest { .. } => ErrorClass::Parse,
            Error::InvalidParameter(_) => ErrorClass::Usage,
            Error::Io(_) | Error::Csv(_) => ErrorClass::Io,
            Error::InFile { source, .. } | Error::Context { source, .. } => source.class(),
        }
    }
}
