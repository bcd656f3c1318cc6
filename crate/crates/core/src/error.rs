use thiserror::Error;

/// Errors raised by the library. Every variant names the module that produced it
/// so the CLI can report it without extra context.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{module}: configuration error: {message}")]
    Config { module: &'static str, message: String },

    #[error("{module}: precondition violated at index {index}: {message}")]
    Precondition {
        module: &'static str,
        index: usize,
        message: String,
    },

    #[error("{module}: validation error at index {index}: {message}")]
    Validation {
        module: &'static str,
        index: usize,
        message: String,
    },

    #[error("pooling: engine {engine} disagrees with the sequential oracle: {message}")]
    EngineMismatch { engine: String, message: String },

    #[error("{module}: usage error: {message}")]
    Usage { module: &'static str, message: String },

    #[error("{module}: i/o error on {path}: {source}")]
    Io {
        module: &'static str,
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{module}: parse error in {path}: {message}")]
    Parse {
        module: &'static str,
        path: String,
        message: String,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(module: &'static str, message: impl Into<String>) -> Self {
        Error::Config {
            module,
            message: message.into(),
        }
    }

    pub(crate) fn io(module: &'static str, path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            module,
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(
        module: &'static str,
        path: impl AsRef<std::path::Path>,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            module,
            path: path.as_ref().display().to_string(),
            message: message.into(),
        }
    }

    /// Module that raised the error.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Config { module, .. }
            | Error::Precondition { module, .. }
            | Error::Validation { module, .. }
            | Error::Usage { module, .. }
            | Error::Io { module, .. }
            | Error::Parse { module, .. } => module,
            Error::EngineMismatch { .. } => "pooling",
        }
    }
}
