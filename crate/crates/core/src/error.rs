use thiserror::Error;

/// Errors raised anywhere in the testing pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdaptError {
    #[error("length mismatch: {pvalues} p-values but {covariates} covariate rows")]
    LengthMismatch { pvalues: usize, covariates: usize },

    #[error("p-value {value} at index {index} is outside [0, 1]")]
    PValueOutOfRange { index: usize, value: f64 },

    #[error("non-finite covariate at row {row}, column {col}")]
    NonFiniteCovariate { row: usize, col: usize },

    #[error("covariate row {row} has {found} columns, expected {expected}")]
    RaggedCovariates {
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error("mu = {mu} is outside the parameter space of the {family} family")]
    MuOutOfDomain { family: &'static str, mu: f64 },

    #[error("mixture density is not strictly decreasing (family {family}, mu = {mu})")]
    NonMonotone { family: &'static str, mu: f64 },

    #[error("too few distinct covariate values: found {found}, need at least {required}")]
    TooFewDistinct { found: usize, required: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("threshold update increases the surface at index {index}: {proposed} > {current}")]
    NonMonotoneUpdate {
        index: usize,
        proposed: f64,
        current: f64,
    },

    #[error("threshold update revealed no masked hypothesis")]
    NoProgress,

    #[error("no masked hypotheses remain; the protocol is terminal")]
    Terminal,

    #[error("EM produced a non-finite log-likelihood at iteration {0}")]
    NonFiniteLikelihood(usize),

    #[error("GLM fit failed: {0}")]
    GlmFailure(String),

    #[error("trace is incomplete: {0} hypotheses were never revealed")]
    IncompleteTrace(usize),

    #[error("window [{start}, {end}] exceeds the trace length {len}")]
    WindowOutOfRange { start: usize, end: usize, len: usize },

    #[error("update rule `{0}` is not measurable with respect to the visible information")]
    NonMeasurable(String),

    #[error("unknown featurization `{0}`")]
    UnknownFeaturization(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
}

pub type Result<T> = std::result::Result<T, AdaptError>;
