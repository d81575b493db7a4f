use thiserror::Error;

use crate::model::TrainConfig;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,

    #[error("record {index} (id {id}): expected {expected} features, found {found}")]
    DimensionMismatch {
        index: usize,
        id: u64,
        expected: usize,
        found: usize,
    },

    #[error("record {index}: duplicate id {id}")]
    DuplicateId { index: usize, id: u64 },

    #[error("record {index} (id {id}): feature {feature} is not finite ({value})")]
    NonFiniteFeature {
        index: usize,
        id: u64,
        feature: usize,
        value: f64,
    },

    #[error("id {0} not found")]
    UnknownId(u64),

    #[error("feature vector has dimension {found}, model expects {expected}")]
    FeatureDimension { expected: usize, found: usize },

    #[error("training diverged (non-finite loss at epoch {epoch}) with {config:?}")]
    Divergence { epoch: usize, config: TrainConfig },

    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),

    #[error("{metric} is undefined: denominator is zero")]
    ZeroDenominator { metric: &'static str },

    #[error("test set must contain both classes ({positives} positive, {negatives} negative)")]
    SingleClassTestSet { positives: usize, negatives: usize },

    #[error("exact enumeration limited to {cap} points, got {n}")]
    TooManyPlayers { n: usize, cap: usize },

    #[error("invalid sampler config: {0}")]
    InvalidSamplerConfig(String),

    #[error("permutation {permutation}: marginals sum to {sum} but V(D) - V(empty) = {expected}")]
    Telescoping {
        permutation: u64,
        sum: f64,
        expected: f64,
    },

    #[error("invalid noise spec: {0}")]
    InvalidNoise(String),

    #[error("bottom fraction must lie in (0, 1], got {0}")]
    InvalidBottomFraction(f64),

    #[error("datasets disagree on ids: {0}")]
    IdMismatch(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid argument: {0}")]
    Usage(String),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Numeric,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Divergence { .. }
            | Error::ZeroDenominator { .. }
            | Error::Telescoping { .. } => ErrorClass::Numeric,
            Error::Io { .. } => ErrorClass::Io,
            _ => ErrorClass::Input,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Input => 2,
            ErrorClass::Numeric => 3,
            ErrorClass::Io => 4,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
