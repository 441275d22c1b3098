use thiserror::Error;

/// Errors raised by the numeric core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    /// A world point projects onto or behind the camera plane.
    #[error("degenerate projection: depth {depth} is not above {epsilon}")]
    DegenerateProjection { depth: f64, epsilon: f64 },

    /// Operand shapes are inconsistent.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A value violates a type invariant.
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },
}

impl CoreError {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        CoreError::Shape(msg.into())
    }

    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        CoreError::Invalid {
            what,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
