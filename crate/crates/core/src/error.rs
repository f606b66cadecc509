use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: label id {id} is outside the taxonomy (0..{size})")]
    Taxonomy {
        path: PathBuf,
        line: usize,
        id: u32,
        size: usize,
    },

    #[error("invalid emotion mapping: {0}")]
    Mapping(String),

    #[error("invalid corpus: {0}")]
    Corpus(String),

    #[error("invalid resource {name}: {message}")]
    Resource { name: String, message: String },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("feature dimension mismatch: model expects {expected}, input has {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("metrics: {0}")]
    Metrics(String),

    #[error("bundle checksum mismatch ({section}): expected {expected:08x}, computed {actual:08x}")]
    Checksum {
        section: &'static str,
        expected: u32,
        actual: u32,
    },

    #[error("unsupported bundle format version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },

    #[error("bundle is truncated: {0}")]
    Truncated(String),

    #[error("malformed bundle: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the input data rather than by a model.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::Taxonomy { .. }
                | Error::Mapping(_)
                | Error::Corpus(_)
                | Error::Resource { .. }
        )
    }
}
