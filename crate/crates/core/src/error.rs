use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Scattering denominator collapsed, or another formula left its domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("photon index {index} out of range for {count} photon(s)")]
    InvalidPhoton { index: usize, count: usize },

    #[error("spin id {0} is invalid (expected 1 or 2)")]
    InvalidSpin(u8),

    /// A routing bug: an element received amplitude it cannot accept.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("all amplitude lost")]
    AllAmplitudeLost,

    #[error("dimension mismatch: {left} vs {right} photon(s)")]
    DimensionMismatch { left: usize, right: usize },

    #[error("negative probability mass {0} deposited")]
    NegativeMass(f64),

    #[error("mirror transmission |T| = {0} exceeds 1")]
    MirrorTransmission(f64),

    #[error("report has no rows")]
    EmptyReport,

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {detail}")]
    Parse { what: String, detail: String },
}

impl Error {
    pub(crate) fn parse(what: impl Into<String>, detail: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            detail: detail.to_string(),
        }
    }
}
