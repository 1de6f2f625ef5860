use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Raised before any stage runs.
    #[error("config error: {0}")]
    Config(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: survey_impute::Error,
    },

    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    pub(crate) fn stage(stage: &'static str) -> impl FnOnce(survey_impute::Error) -> Self {
        move |source| HarnessError::Stage { stage, source }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }

    pub fn is_config(&self) -> bool {
        matches!(self, HarnessError::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
