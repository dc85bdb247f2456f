use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("record {index} violates bounds: {reason}")]
    BoundsViolation { index: usize, reason: String },

    #[error("invalid bounds: {0}")]
    InvalidBounds(String),

    #[error("invalid sums: {0}")]
    InvalidSums(String),

    #[error("mechanism mismatch: {0}")]
    MechanismMismatch(String),

    #[error("invalid privacy budget: {0}")]
    InvalidBudget(String),

    #[error("budget must be split into at least one part")]
    InvalidSplit,

    #[error("degenerate denominator: {0}")]
    DegenerateDenominator(String),

    #[error("degenerate numerator: {0}")]
    DegenerateNumerator(String),

    #[error("combined variance is zero")]
    DegenerateVariance,

    #[error("estimates are on different scales")]
    ScaleMismatch,

    #[error("at least two records are required for variance estimation, got {0}")]
    InsufficientData(usize),

    #[error("monte carlo correction rejected {rejected} draws (cap {cap})")]
    MonteCarloExhausted { rejected: usize, cap: usize },

    #[error("invalid interval: lower {lower} > upper {upper}")]
    InvalidInterval { lower: f64, upper: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyDataset => "empty_dataset",
            Error::BoundsViolation { .. } => "bounds_violation",
            Error::InvalidBounds(_) => "invalid_bounds",
            Error::InvalidSums(_) => "invalid_sums",
            Error::MechanismMismatch(_) => "mechanism_mismatch",
            Error::InvalidBudget(_) => "invalid_budget",
            Error::InvalidSplit => "invalid_split",
            Error::DegenerateDenominator(_) => "degenerate_denominator",
            Error::DegenerateNumerator(_) => "degenerate_numerator",
            Error::DegenerateVariance => "degenerate_variance",
            Error::ScaleMismatch => "scale_mismatch",
            Error::InsufficientData(_) => "insufficient_data",
            Error::MonteCarloExhausted { .. } => "monte_carlo_exhausted",
            Error::InvalidInterval { .. } => "invalid_interval",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }

    /// True for failures of a single estimate on otherwise valid input.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            Error::DegenerateDenominator(_)
                | Error::DegenerateNumerator(_)
                | Error::DegenerateVariance
                | Error::MonteCarloExhausted { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
