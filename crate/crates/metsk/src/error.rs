use std::path::PathBuf;

/// Errors of the file formats and the command line.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: not found")]
    Missing { path: PathBuf },
    #[error("{path}:{line}: {detail}")]
    Parse { path: PathBuf, line: usize, detail: String },
    #[error("{path}: {detail}")]
    Invalid { path: PathBuf, detail: String },
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] metsk_core::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, detail: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), line, detail: detail.into() }
    }

    pub(crate) fn invalid(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Invalid { path: path.into(), detail: detail.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                Error::Missing { path }
            } else {
                Error::Io { path, source }
            }
        }
    }

    /// Process exit code: 1 for bad input or arguments, 2 for failures while
    /// running.
    pub fn exit_code(&self) -> i32 {
        use metsk_core::Error as C;
        match self {
            Error::Missing { .. } | Error::Parse { .. } | Error::Invalid { .. } | Error::Usage(_) => 1,
            Error::Core(C::Shape { .. } | C::InvalidArgument { .. } | C::MissingDataset { .. }) => 1,
            Error::Core(_) | Error::Io { .. } | Error::Json(_) => 2,
        }
    }
}
