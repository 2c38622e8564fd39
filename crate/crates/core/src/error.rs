use std::fmt;

/// Diagnostics attached to a failed stationary-point search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchDiagnostics {
    pub starts: usize,
    pub max_iterations: usize,
    pub best_gradient_norm: f64,
}

impl fmt::Display for SearchDiagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} starts x {} iterations, best |grad U| = {:.3e}",
            self.starts, self.max_iterations, self.best_gradient_norm
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum JpoError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("pump ratio {0} is below the parametric threshold (P_p/P_th must be >= 1)")]
    BelowThreshold(f64),

    #[error("stationary-point search did not converge ({0})")]
    Convergence(SearchDiagnostics),

    #[error("potential is monostable: {0}")]
    Monostable(String),

    #[error(
        "trajectory left the validity region |q| <= {limit:.4} at t = {time:.6e} (|q| = {radius:.4}); \
         reduce dt or the noise intensity"
    )]
    Instability { time: f64, radius: f64, limit: f64 },

    #[error("telegraph rate {rate} /s is too close to the sample rate {sample_rate} Hz (need rate < fs/10)")]
    Aliasing { rate: f64, sample_rate: f64 },

    #[error("phase reference is ambiguous: {0}")]
    AmbiguousPhaseReference(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("trace format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, JpoError>;

pub(crate) fn invalid(msg: impl Into<String>) -> JpoError {
    JpoError::InvalidArgument(msg.into())
}

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(invalid(format!("{name} must be finite, got {value}")))
    }
}
