use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent or invalid configuration (dimension mismatch, bad spec string, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// API misuse: violated preconditions that are the caller's fault.
    #[error("usage error: {0}")]
    Usage(String),

    /// A computation produced a non-finite value.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A 1D projection is constant, so its normalized TV is undefined.
    #[error("flat projection: sampled values are constant")]
    FlatProjection,

    /// Every probe direction produced a constant projection.
    #[error("degenerate landscape: all {0} directions are flat")]
    AllDirectionsFlat(usize),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
