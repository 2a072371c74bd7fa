use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension {0} (supported: 2..=5)")]
    UnsupportedDimension(usize),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("enumeration of {requested} points exceeds the configured cap of {cap}")]
    MemoryCap { requested: u64, cap: u64 },

    #[error("potential is singular at the evaluation point")]
    Singularity,

    #[error("quadrature error estimate {estimate:e} exceeds tolerance {tolerance:e}")]
    QuadratureAccuracy { estimate: f64, tolerance: f64 },

    #[error("index {index} out of range for size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("matrix of size {size} exceeds the configured limit {limit}")]
    SizeLimit { size: usize, limit: usize },

    #[error("symmetric eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("decomposition check failed: {0}")]
    DecompositionCheck(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("work estimate {estimate} exceeds the cost cap {cap}")]
    CostCap { estimate: u64, cap: u64 },

    #[error("derivative of order {0} is not available")]
    DerivativeUnavailable(usize),

    #[error("need at least {needed} usable points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("cache file rejected: {0}")]
    CacheFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag, used by the CLI's JSON error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnsupportedDimension(_) => "unsupported_dimension",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::MemoryCap { .. } => "memory_cap",
            Error::Singularity => "singularity",
            Error::QuadratureAccuracy { .. } => "quadrature_accuracy",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::SizeLimit { .. } => "size_limit",
            Error::Eigensolver(_) => "eigensolver",
            Error::DecompositionCheck(_) => "decomposition_check",
            Error::Precondition(_) => "precondition",
            Error::CostCap { .. } => "cost_cap",
            Error::DerivativeUnavailable(_) => "derivative_unavailable",
            Error::TooFewPoints { .. } => "too_few_points",
            Error::CacheFormat(_) => "cache_format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
