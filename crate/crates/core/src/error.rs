use thiserror::Error;

/// Errors raised by the analysis engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("malformed input at line {line}: {reason}")]
    MalformedInput { line: usize, reason: String },
    #[error("non-positive value {value} for unit {unit} in period {period}")]
    NonPositiveValue { unit: String, period: i32, value: f64 },
    #[error("missing value for unit {unit} in period {period}")]
    MissingValue { unit: String, period: i32 },
    #[error("cross-sectional mean is zero in period {0}")]
    ZeroCrossSection(i32),
    #[error("panel too small: {units} units x {periods} periods (need at least 2 x 5)")]
    EmptyPanel { units: usize, periods: usize },
    #[error("no target supplied for unit {0}")]
    MissingTarget(String),
    #[error("invalid target {value} for unit {unit}")]
    InvalidTarget { unit: String, value: f64 },
    #[error("smoothed series of unit {unit} is not positive in period {period}")]
    SmoothingBrokePositivity { unit: String, period: i32 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cross-sectional variance is zero at period index {0}")]
    DegenerateVariance(usize),
    #[error("regression sample has {0} observations, need at least 3")]
    SampleTooSmall(usize),
    #[error("bandwidth {bandwidth} must be smaller than the series length {len}")]
    BandwidthTooLarge { bandwidth: usize, len: usize },
    #[error("invalid subset: {0}")]
    InvalidSubset(String),
    #[error("unknown unit {0}")]
    UnknownUnit(String),
    #[error("design matrix: {0}")]
    InvalidDesign(String),
    #[error("design matrix is rank deficient")]
    Singular,
    #[error("complete or quasi-complete separation along direction {direction:?}")]
    Separation { direction: Vec<f64> },
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

impl Error {
    /// Stable variant name, used on the diagnostic stream.
    pub fn name(&self) -> &'static str {
        match self {
            Error::MalformedInput { .. } => "MalformedInput",
            Error::NonPositiveValue { .. } => "NonPositiveValue",
            Error::MissingValue { .. } => "MissingValue",
            Error::EmptyPanel { .. } => "EmptyPanel",
            Error::ZeroCrossSection(_) => "ZeroCrossSection",
            Error::MissingTarget(_) => "MissingTarget",
            Error::InvalidTarget { .. } => "InvalidTarget",
            Error::SmoothingBrokePositivity { .. } => "SmoothingBrokePositivity",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::DegenerateVariance(_) => "DegenerateVariance",
            Error::SampleTooSmall(_) => "SampleTooSmall",
            Error::BandwidthTooLarge { .. } => "BandwidthTooLarge",
            Error::InvalidSubset(_) => "InvalidSubset",
            Error::UnknownUnit(_) => "UnknownUnit",
            Error::InvalidDesign(_) => "InvalidDesign",
            Error::Singular => "Singular",
            Error::Separation { .. } => "Separation",
            Error::NoConvergence(_) => "NoConvergence",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
