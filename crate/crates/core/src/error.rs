use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: PathBuf, reason: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error(
        "OOD rule `{rule}` flags {flagged} of {total} rows; both ID and OOD rows are required"
    )]
    EmptyPartition {
        rule: String,
        flagged: usize,
        total: usize,
    },

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("too few rows: need at least {need}, got {got}")]
    TooFewRows { need: usize, got: usize },

    #[error("need at least two ID classes, got {0}")]
    TooFewClasses(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("latent index {index} out of range for {len} dims")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid latent dimensionality: {0}")]
    InvalidLatentDim(String),

    #[error("covariance is singular after regularization: {0}")]
    SingularCovariance(String),

    #[error("probability {0} outside [0, 1]")]
    OutOfRange(f64),

    #[error(
        "partition search over {k} latent dims exceeds the cap of {cap}; lower k or raise the cap"
    )]
    CapExceeded { k: usize, cap: usize },

    #[error("unknown class {class} (model has {n_classes})")]
    UnknownClass { class: usize, n_classes: usize },

    #[error("non-finite loss at iteration {iteration} of the {phase} step")]
    NonFiniteLoss {
        phase: String,
        iteration: usize,
        /// Standardized-space iterates up to and including the diverged one.
        trajectory: Vec<Vec<f64>>,
    },

    #[error("empty input")]
    EmptyInput,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("seed {seed} failed: {source}")]
    SeedFailed {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse failure category, used for CLI exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) | Error::CapExceeded { .. } => {
                ErrorClass::Config
            }
            Error::MalformedFile { .. }
            | Error::MissingColumn(_)
            | Error::EmptyPartition { .. }
            | Error::DegenerateSplit(_)
            | Error::TooFewRows { .. }
            | Error::TooFewClasses(_)
            | Error::DimensionMismatch { .. }
            | Error::IndexOutOfRange { .. }
            | Error::InvalidLatentDim(_)
            | Error::UnknownClass { .. }
            | Error::OutOfRange(_)
            | Error::EmptyInput => ErrorClass::Data,
            Error::SingularCovariance(_) | Error::NonFiniteLoss { .. } => ErrorClass::Numerical,
            Error::SeedFailed { source, .. } => source.class(),
            Error::Io(_) | Error::Json(_) => ErrorClass::Io,
        }
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MalformedFile { .. } => "MalformedFile",
            Error::MissingColumn(_) => "MissingColumn",
            Error::EmptyPartition { .. } => "EmptyPartition",
            Error::DegenerateSplit(_) => "DegenerateSplit",
            Error::TooFewRows { .. } => "TooFewRows",
            Error::TooFewClasses(_) => "TooFewClasses",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::InvalidLatentDim(_) => "InvalidLatentDim",
            Error::SingularCovariance(_) => "SingularCovariance",
            Error::OutOfRange(_) => "OutOfRange",
            Error::CapExceeded { .. } => "CapExceeded",
            Error::UnknownClass { .. } => "UnknownClass",
            Error::NonFiniteLoss { .. } => "NonFiniteLoss",
            Error::EmptyInput => "EmptyInput",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Config(_) => "Config",
            Error::SeedFailed { source, .. } => source.kind(),
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
