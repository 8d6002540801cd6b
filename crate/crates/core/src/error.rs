use thiserror::Error;

/// Failures raised by the inference and theory engines.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of a function (non-finite input,
    /// non-positive variance, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Incompatible dimensions between inputs.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// The requested combination is not supported by this engine.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The iteration produced a non-finite value. Carries the last finite
    /// estimate so the caller can inspect where it went wrong.
    #[error("divergence at batch {batch}, iteration {iteration}")]
    Divergence {
        batch: usize,
        iteration: usize,
        last_estimate: Vec<f64>,
        partial: Option<Box<crate::glm_amp::AmpRunReport>>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("{name} must be finite, got {v}")))
    }
}
