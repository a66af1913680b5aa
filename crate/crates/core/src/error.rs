//! Crate-wide error type.
//!
//! Every fallible operation returns [`Result`]. Variants name the violated
//! precondition so callers (and the CLI) can surface actionable messages.

use thiserror::Error;

/// Errors produced by simulation, estimation, calibration and study code.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric-domain precondition was violated (parameter out of range).
    #[error("domain error: {0}")]
    Domain(String),

    /// The long-memory condition m*D < 1 failed, so the normalization
    /// d_{n,m} (and the limits that need it) are undefined.
    #[error("long-memory condition violated: m*D = {product:.6} >= 1 (m = {m}, D = {d:.6})")]
    LongMemory { m: u32, d: f64, product: f64 },

    /// Circulant embedding produced a materially negative eigenvalue and no
    /// fallback was possible.
    #[error(
        "circulant embedding failed for n = {n}: eigenvalue {eigenvalue:.6e} below -{tolerance:.1e} \
         and series too long for the dense fallback (limit {fallback_limit})"
    )]
    Embedding {
        n: usize,
        eigenvalue: f64,
        tolerance: f64,
        fallback_limit: usize,
    },

    /// Degenerate input data (too short, constant where variation is needed,
    /// or non-finite values).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// No Hermite coefficient exceeded the detection threshold up to `qmax`.
    #[error("Hermite rank not found: all coefficients up to qmax = {qmax} are below {threshold:e}")]
    RankNotFound { qmax: u32, threshold: f64 },

    /// Limit functionals are implemented for Hermite ranks 1 and 2 only.
    #[error("unsupported Hermite order m = {0} (limit functionals cover m = 1, 2)")]
    UnsupportedOrder(u32),

    /// A critical-value table lookup failed.
    #[error("critical-value table lookup failed: {0}")]
    Table(String),

    /// Reading or writing an artifact failed.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// An artifact could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Convenience constructor for [`Error::Domain`].
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Convenience constructor for [`Error::Degenerate`].
    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
