use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("truncation error: tail mass {tail:.3e} above n_max={n_max} exceeds tolerance {tolerance:.1e}")]
    Truncation {
        n_max: usize,
        tail: f64,
        tolerance: f64,
    },

    #[error("impossible outcome x={outcome}: probability {probability:.3e}")]
    ImpossibleOutcome { outcome: u8, probability: f64 },

    #[error("history probability underflow after {steps} measurements ({probability:.3e}); use fewer repetitions")]
    HistoryUnderflow { steps: usize, probability: f64 },

    #[error("impossible detection: rate {rate:.3e} at t={time}")]
    ImpossibleDetection { time: f64, rate: f64 },

    #[error("analytic rate has a pole at gamma == kappa2; use the numeric no-count path")]
    DegenerateRates,

    #[error("rate profile has no interior minimum")]
    NoDip,

    #[error("no rate mass to sample from ({mass:.3e})")]
    ZeroMass { mass: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("positivity violated: eigenvalue proxy {value:.3e} at t={time}")]
    Positivity { time: f64, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("i/o error at {path}: {reason}")]
    Io { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
