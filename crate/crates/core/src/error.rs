use thiserror::Error;

/// Errors raised by the geometry, measure and inequality layers.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("operation `{op}` is not defined for {kind} spaces")]
    KindMismatch { op: &'static str, kind: &'static str },

    #[error("point has {got} coordinates, space expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("evaluation of `{label}` produced a non-finite value at {point:?}")]
    NonFinite { label: String, point: Vec<f64> },

    #[error("field `{0}` has no analytic subgradient")]
    MissingGradient(String),

    #[error("empty cloud after excluding a {0} buffer around singular loci")]
    EmptyCloud(f64),

    #[error("path construction failed: {0}")]
    PathConstruction(String),

    #[error("degenerate importance proposal: {0}")]
    DegenerateProposal(String),

    #[error("sampler adaptation failed: {0}")]
    Adaptation(String),

    #[error("quadrature unavailable: {0}")]
    Quadrature(String),

    #[error("sample set does not belong to this measure: {0}")]
    SpecMismatch(String),

    #[error("integral diverges: {0}")]
    Divergent(String),

    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),

    #[error("fit needs at least {needed} grid points, got {got}")]
    ShortGrid { needed: usize, got: usize },

    #[error("sample file: {0}")]
    SampleFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> LabError {
    LabError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
