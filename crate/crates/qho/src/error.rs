use std::path::PathBuf;

use qho_core::Error as CoreError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const SOLVER: i32 = 3;
    pub const OUT_OF_WINDOW: i32 = 4;
    pub const THRESHOLD: i32 = 5;
    pub const TRUNCATION: i32 = 6;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("config error: {0}")]
    Core(#[source] CoreError),
    #[error("solver failure: {0}")]
    Solver(#[source] CoreError),
    #[error("time {time} (omega0 t) outside the protocol window [{start}, {end}]")]
    OutOfWindow { time: f64, start: f64, end: f64 },
    #[error("verification thresholds breached: {}", .0.join("; "))]
    Threshold(Vec<String>),
    #[error("Fock truncation breach at omega0 t = {time}: population {population:e} in the top levels (level {level})")]
    Truncation { time: f64, level: usize, population: f64 },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Core(_) | CliError::Io { .. } => exit::CONFIG,
            CliError::Solver(_) => exit::SOLVER,
            CliError::OutOfWindow { .. } => exit::OUT_OF_WINDOW,
            CliError::Threshold(_) => exit::THRESHOLD,
            CliError::Truncation { .. } => exit::TRUNCATION,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors raised while building a protocol or config are the user's;
    /// the rest come from the solvers.
    pub fn from_build(e: CoreError) -> Self {
        match e {
            CoreError::InvalidParameter { .. } | CoreError::NonPositiveFrequency { .. } => CliError::Core(e),
            CoreError::OutsideWindow { time, start, end } => CliError::OutOfWindow { time, start, end },
            other => CliError::Solver(other),
        }
    }

    /// Errors raised by the integrators at run time, with times reported in
    /// `omega0 t`.
    pub fn from_solver(e: CoreError, omega0: f64) -> Self {
        match e {
            CoreError::TruncationBreach { time, level, population } => CliError::Truncation {
                time: time * omega0,
                level,
                population,
            },
            CoreError::OutsideWindow { time, start, end } => CliError::OutOfWindow {
                time: time * omega0,
                start: start * omega0,
                end: end * omega0,
            },
            CoreError::InvalidParameter { .. } => CliError::Core(e),
            other => CliError::Solver(other),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
