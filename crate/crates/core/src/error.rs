use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("configuration error: {0}")]
    Config(String),
    /// No strictly feasible point exists for the requested set.
    #[error("infeasible set: best constraint slack found {best_slack:e}")]
    Infeasible { best_slack: f64 },
    #[error("no convergence after {iterations} iterations (gap {gap:e}, residual {residual:e})")]
    Convergence {
        iterations: usize,
        gap: f64,
        residual: f64,
    },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn check_dim(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::InvalidInput(alloc::format!(
            "{what}: expected dimension {want}, got {got}"
        )))
    }
}
