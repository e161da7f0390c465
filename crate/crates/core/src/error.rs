use thiserror::Error;

/// Errors raised by the discrete operators, solvers and the experiment driver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("operands live on different domains")]
    DomainMismatch,

    #[error("not on the constraint manifold: {0}")]
    NotOnManifold(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_s(s: f64) -> Result<()> {
    if s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("s = {s} must lie in (0, 1)")))
    }
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("p = {p} must be >= 1")))
    }
}
