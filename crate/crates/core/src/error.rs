use alloc::string::String;

/// Errors raised by the solvers, protocol builders, and validators.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("step size underflow at t = {time} (ramp too steep for the requested tolerances)")]
    StepSizeUnderflow { time: f64 },

    #[error("step budget exhausted at t = {time}")]
    TooManySteps { time: f64 },

    #[error("frequency is not positive at t = {time} (omega = {value})")]
    NonPositiveFrequency { time: f64, value: f64 },

    #[error("time {time} lies outside the solved window [{start}, {end}]")]
    OutsideWindow { time: f64, start: f64, end: f64 },

    #[error("no bracketing root found while scanning [{start}, {end}]")]
    NoBracket { start: f64, end: f64 },

    #[error("event function is identically zero on [{start}, {end}]")]
    DegenerateEvent { start: f64, end: f64 },

    #[error("covariance is not positive definite")]
    NotPositiveDefinite,

    #[error("Fock truncation breached at t = {time}: level {level} holds population {population:e}")]
    TruncationBreach {
        time: f64,
        level: usize,
        population: f64,
    },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("singular matrix")]
    Singular,
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(field: &'static str, reason: &str) -> Error {
    Error::InvalidParameter {
        field,
        reason: String::from(reason),
    }
}
