use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("mesh error: {0}")]
    Mesh(String),
    #[error("tree error: {0}")]
    Tree(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("divergence detected: {0}")]
    Divergence(String),
    #[error("integrator error: {0}")]
    Integrator(String),
    #[error("stats error: {0}")]
    Stats(String),
    #[error("budget error: {0}")]
    Budget(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for problems the user can fix by changing inputs.
    pub fn is_user_error(&self) -> bool {
        match self {
            Error::Config(_) | Error::Format(_) | Error::Io { .. } => true,
            Error::Stage { source, .. } => source.is_user_error(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
