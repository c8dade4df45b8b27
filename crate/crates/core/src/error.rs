use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The hopping `J(n, n+M)` used as a transfer-matrix pivot is too small.
    #[error("singular transfer matrix at site {site}: |J(n,n+M)| = {magnitude:e}")]
    SingularTransfer { site: i64, magnitude: f64 },

    #[error("eigensolver failed for {context}: {reason}")]
    EigenSolver { context: String, reason: String },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("spectrum matching failed: {matched} of {total} states paired (tolerance {tol:e})")]
    Matching { matched: usize, total: usize, tol: f64 },
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
