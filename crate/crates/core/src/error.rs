use std::path::PathBuf;

/// Errors produced by the detection library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is rank deficient: numerical rank {rank} < {expected}")]
    RankDeficient { rank: usize, expected: usize },

    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("vector is identically zero")]
    ZeroVector,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("gamma = {gamma} >= 1: the lower bound is vacuous")]
    GammaTooLarge { gamma: f64 },

    #[error("subspace is the whole space (r = n); no orthogonal complement")]
    DegenerateSubspace,

    #[error("parse error in {location}: {message}")]
    Parse { location: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn mismatch(what: impl Into<String>) -> Self {
        Error::DimensionMismatch(what.into())
    }

    pub(crate) fn param(what: impl Into<String>) -> Self {
        Error::InvalidParameter(what.into())
    }

    /// True for errors that stem from the numerics rather than from the
    /// caller's input or the filesystem.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. } | Error::GammaTooLarge { .. } | Error::DegenerateSubspace
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
