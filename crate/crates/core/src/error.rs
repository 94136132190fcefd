use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An input lies outside the physical or mathematical domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),
    /// The truncated Fock space discards more probability than allowed.
    #[error("truncation residual {residual:e} exceeds bound {bound:e}")]
    Truncation { residual: f64, bound: f64 },
    /// A heralding probability is too small to normalize the conditional state.
    #[error("heralding probability underflow ({0:e})")]
    Underflow(f64),
    /// Numerical output violates an invariant it must satisfy by construction.
    #[error("consistency error: {0}")]
    Consistency(String),
    /// A bisection bracket does not contain a sign change.
    #[error("bracket error: {0}")]
    Bracket(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
