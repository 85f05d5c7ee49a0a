use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at {field}: {message}")]
    Config { field: String, message: String },

    #[error("missing artifact {}: run the stage that produces it first", path.display())]
    MissingArtifact { path: PathBuf },

    #[error("output directory {} is locked by another run (remove {} if stale)", dir.display(), dir.join(".lock").display())]
    Locked { dir: PathBuf },

    #[error("{module}: {source}")]
    Compute {
        module: &'static str,
        #[source]
        source: hyperwave::Error,
    },

    #[error("malformed artifact {}: {message}", path.display())]
    BadArtifact { path: PathBuf, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn bad_artifact(path: &Path, message: impl ToString) -> Self {
        CliError::BadArtifact { path: path.to_path_buf(), message: message.to_string() }
    }
}

/// Tag library errors with the module that raised them.
pub trait InModule<T> {
    fn in_module(self, module: &'static str) -> Result<T, CliError>;
}

impl<T> InModule<T> for hyperwave::Result<T> {
    fn in_module(self, module: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Compute { module, source })
    }
}
