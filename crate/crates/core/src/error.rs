use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum SulpError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv parse error: {0}")]
    Csv(String),
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("non-numeric cell `{value}` in column `{column}` at row {row}")]
    NonNumeric {
        column: String,
        row: usize,
        value: String,
    },
    #[error("time index is not strictly increasing at row {row} (`{prev}` then `{next}`)")]
    NonMonotoneTime {
        row: usize,
        prev: String,
        next: String,
    },
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("column `{0}` is constant; its standard deviation is undefined")]
    ConstantColumn(String),
    #[error("no scaling entry for column `{0}`")]
    MissingScaling(String),
    #[error("insufficient sample: need at least {needed} rows, have {available}")]
    InsufficientSample { needed: usize, available: usize },
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("kernel matrix not positive definite (xi = {xi}, varsigma = {varsigma})")]
    KernelNotPd { xi: f64, varsigma: f64 },
    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("rank-deficient design: {0}")]
    RankDeficient(String),
    #[error("sampler step `{step}` failed at sweep {sweep}: {source}")]
    SamplerStep {
        sweep: usize,
        step: &'static str,
        #[source]
        source: Box<SulpError>,
    },
    #[error("generalized inverse Gaussian sampler failed: {0}")]
    Gig(String),
    #[error("all log-likelihood values are -inf")]
    DegenerateWeights,
    #[error("unstable system: spectral radius {0:.6} >= 1")]
    Instability(f64),
    #[error("simulation diverged at step {0}")]
    Divergence(usize),
    #[error("calibration schema mismatch: {0}")]
    Schema(String),
    #[error("true impulse response is identically zero; normalizer undefined")]
    NormalizerZero,
    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, SulpError>;

impl SulpError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        SulpError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for failures that come from numerics rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            SulpError::KernelNotPd { .. }
            | SulpError::NotPositiveDefinite(_)
            | SulpError::RankDeficient(_)
            | SulpError::Gig(_)
            | SulpError::DegenerateWeights
            | SulpError::Instability(_)
            | SulpError::Divergence(_)
            | SulpError::NormalizerZero => true,
            SulpError::SamplerStep { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

impl From<serde_json::Error> for SulpError {
    fn from(e: serde_json::Error) -> Self {
        SulpError::Serde(e.to_string())
    }
}
