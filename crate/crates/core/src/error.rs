use alloc::string::String;

/// Errors raised by the simulator, the controllers and the learner.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration at `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("infeasible duration: {total} s cannot hold {required} s of mandatory intervals")]
    InfeasibleDuration { total: u32, required: u32 },

    #[error("oversaturated approach set: critical flow ratio sum Y = {0} >= 1")]
    Oversaturated(f64),

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient sample: need at least {needed}, got {got}")]
    InsufficientSample { needed: usize, got: usize },

    #[error("signal controller at intersection {intersection} is not at a half-cycle boundary")]
    NotAtBoundary { intersection: usize },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
