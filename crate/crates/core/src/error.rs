use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("frequency {omega} outside tabulated range [{min}, {max}]")]
    OutOfRange { omega: f64, min: f64, max: f64 },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("coincident points: Green tensor is singular at r = 0")]
    CoincidentPoints,

    #[error("memory estimate {estimate_bytes} bytes exceeds cap {cap_bytes} bytes")]
    MemoryCap { estimate_bytes: u64, cap_bytes: u64 },

    #[error("mode count {count} exceeds cap {cap}")]
    ModeCap { count: usize, cap: usize },

    #[error("linear solve failed: {reason} (condition estimate {condition:.3e})")]
    Solve { reason: String, condition: f64 },

    #[error("root finding did not converge after {iterations} steps: {trace}")]
    NoConvergence { iterations: usize, trace: String },

    #[error("quadrature: {0}")]
    Quadrature(String),

    #[error("resolution guard: {0}")]
    Resolution(String),

    #[error("empty frequency shell: {0}")]
    EmptyShell(String),

    #[error("contraction check failed: factor {0:.3e} >= 0.5")]
    Contraction(f64),

    #[error("gradient step too small: {0}")]
    StepUnderflow(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
