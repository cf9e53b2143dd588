use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] clubconv_core::Error),
    #[error("{}: {source}", path.display())]
    Data {
        path: PathBuf,
        source: clubconv_core::Error,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {reason}", path.display())]
    Input { path: PathBuf, reason: String },
    #[error("report serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Stable name printed on the diagnostic stream.
    pub fn name(&self) -> &'static str {
        match self {
            CliError::Core(e) | CliError::Data { source: e, .. } => e.name(),
            CliError::Io { .. } => "Io",
            CliError::Config(_) => "InvalidConfig",
            CliError::Input { .. } => "MalformedInput",
            CliError::Json(_) => "Serialization",
        }
    }

    pub fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn data(path: &Path) -> impl FnOnce(clubconv_core::Error) -> CliError + '_ {
        move |source| CliError::Data {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
