use thiserror::Error;

/// Errors produced by potential evaluation, integration and analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("feedback potential requires the concurrent Pruefer angle")]
    MissingAngle,

    #[error("angle argument supplied for a non-feedback potential")]
    UnexpectedAngle,

    #[error("x = {x} outside tabulated grid [{lo}, {hi}] (no extrapolation)")]
    OutsideTable { x: f64, lo: f64, hi: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("step size underflow at x = {x}")]
    StepUnderflow { x: f64 },

    #[error("non-finite state at x = {x}")]
    NonFiniteState { x: f64 },

    #[error("non-monotone Pruefer angle in scanned region near x = {x}")]
    NonMonotoneAngle { x: f64 },

    #[error("trajectory is truncated at x = {x}: {reason}")]
    TruncatedTrajectory { x: f64, reason: String },

    #[error("amplitude overflow: log R = {log_r} exceeds the exp range")]
    AmplitudeOverflow { log_r: f64 },

    #[error("zero wavefunction vector: (u, u') = (0, 0) has no Pruefer representation")]
    ZeroWavefunction,

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
