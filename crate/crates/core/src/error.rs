use thiserror::Error;

/// Errors surfaced by return computations, updates, environments and runners.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("trajectory is empty")]
    EmptyTrajectory,

    #[error("segment too short: need {needed} transitions, have {available}")]
    SegmentTooShort { needed: usize, available: usize },

    #[error("non-finite {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid action {action}: policy has {num_actions} actions")]
    InvalidAction { action: usize, num_actions: usize },

    #[error("behavior probability out of (0, 1] at step {index}: {value}")]
    BadBehaviorProb { index: usize, value: f64 },

    #[error("non-finite meta-gradient at component {component}")]
    NonFiniteMetaGradient { component: usize },

    #[error("finite-difference check failed for {what}: rel err {rel_err}")]
    FdCheckFailed { what: &'static str, rel_err: f64 },

    #[error("fan width must be at least 2, got {0}")]
    FanWidthTooSmall(usize),

    #[error("parameter dimension {dim} exceeds oracle cap {cap}")]
    OracleDimExceeded { dim: usize, cap: usize },

    #[error("dynamic-programming value table did not converge (residual {residual})")]
    DpNotConverged { residual: f64 },

    #[error("unknown config key `{0}`")]
    UnknownConfigKey(String),

    #[error("bad value for config key `{key}`: {msg}")]
    BadConfigValue { key: String, msg: String },

    #[error("config error: {0}")]
    InvalidConfig(String),

    #[error("checkpoint format error: {0}")]
    BadCheckpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
