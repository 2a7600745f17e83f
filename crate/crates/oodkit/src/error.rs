use std::path::PathBuf;

/// Errors surfaced by file formats, the CLI and the benchmark service.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: crate::format::FormatError,
    },
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: oodkit_core::Error,
    },
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Bench(#[from] crate::bench::BenchError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, source: crate::format::FormatError) -> Self {
        Self::Format { path: path.into(), source }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Self::Input(msg.into())
    }

    /// Process exit status: 3 for numerical failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Core {
                source:
                    oodkit_core::Error::NotPositiveDefinite { .. }
                    | oodkit_core::Error::NonFiniteLoss { .. },
                ..
            } => 3,
            _ => 2,
        }
    }
}

/// Attaches a context string to core errors.
pub trait CoreContext<T> {
    fn context(self, context: impl Into<String>) -> Result<T>;
}

impl<T> CoreContext<T> for oodkit_core::Result<T> {
    fn context(self, context: impl Into<String>) -> Result<T> {
        self.map_err(|source| Error::Core { context: context.into(), source })
    }
}
