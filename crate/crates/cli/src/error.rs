use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: usize, msg: String },
    #[error("no embedding for {0:?}")]
    MissingEmbedding(String),
    #[error("{file}:{line}: edge endpoint {label:?} is not a node")]
    DanglingEndpoint { file: String, line: usize, label: String },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] qafd::Error),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    /// 1 for invalid input or configuration, 2 for failures after validation.
    pub fn exit_code(&self) -> i32 {
        use qafd::Error as E;
        match self {
            CliError::Write { .. } | CliError::Failed(_) => 2,
            CliError::Core(e) => match e {
                E::TooLarge { .. } | E::NoProgress { .. } | E::Unbounded | E::EmptyRetrieval => 2,
                _ => 1,
            },
            _ => 1,
        }
    }
}
