use thiserror::Error;

/// Errors raised by the survival toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NphError {
    #[error("dataset has no records")]
    EmptyDataset,
    #[error("record {index}: time must be finite and non-negative (got {value})")]
    NegativeTime { index: usize, value: f64 },
    #[error("record {index}: entry must be finite and non-negative (got {value})")]
    NegativeEntry { index: usize, value: f64 },
    #[error("two-sample operation needs records in both arms")]
    SingleArm,
    #[error("no events observed")]
    NoEvents,
    #[error("arm filter left no records")]
    EmptyAfterFilter,
    #[error("weighted variance is zero; test statistic undefined")]
    ZeroVariance,
    #[error("truncation time {tau} is outside (0, {max_time}]")]
    TauBeyondFollowUp { tau: f64, max_time: f64 },
    #[error("both RMST variances are zero with a non-zero difference")]
    DegenerateVariance,
    #[error("invalid weight ({rho}, {gamma}): exponents must be finite and non-negative")]
    InvalidWeight { rho: f64, gamma: f64 },
    #[error("invalid combination spec: {0}")]
    InvalidCombo(String),
    #[error("MVN tail probability did not reach {target:e} (estimated error {achieved:e})")]
    MvnFailure { target: f64, achieved: f64 },
    #[error("invalid hazard: {0}")]
    InvalidHazard(String),
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("Cox fit did not converge")]
    NonConvergence,
    #[error("line {line}: {message}")]
    Ingest { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, NphError>;
