use std::path::PathBuf;

use thiserror::Error;

use crate::domain::{ClusterId, ModelKind};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("arity mismatch: model has {model} weights, feature vector has {features}")]
    ArityMismatch { model: usize, features: usize },

    #[error("expected a {expected} model, got {actual}")]
    WrongModelKind { expected: ModelKind, actual: ModelKind },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown or archived cluster {0}")]
    UnknownCluster(ClusterId),

    #[error("cannot merge cluster {0} into itself")]
    SelfMerge(ClusterId),

    #[error("document {0:?} has no gold label")]
    MissingGoldLabel(String),

    #[error("training set has no {0} examples")]
    MissingClass(&'static str),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("model file {path}: {message}")]
    ModelFormat { path: PathBuf, message: String },

    #[error("duplicate document id {0:?}")]
    DuplicateId(String),

    #[error("embedding cache misses for {} unit(s): {}", .0.len(), preview(.0))]
    CacheMiss(Vec<String>),

    #[error("embedding cache: {0}")]
    Cache(String),

    #[error("embedding service: {0}")]
    Service(String),

    #[error("evaluation: {0}")]
    Evaluation(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn preview(items: &[String]) -> String {
    const SHOWN: usize = 10;
    let mut s = items.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", ");
    if items.len() > SHOWN {
        s.push_str(&format!(", ... and {} more", items.len() - SHOWN));
    }
    s
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than runtime failures.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::Service(_) | Error::Json(_)
        )
    }
}
