use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the engine.
#[derive(Debug, Error)]
pub enum MlgcnError {
    #[error("graph has no nodes")]
    EmptyGraph,

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch in {stage}: {detail}")]
    Shape { stage: &'static str, detail: String },

    #[error("numerical failure in {stage}: {detail}")]
    Numerical { stage: &'static str, detail: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("ingestion error: {0}")]
    Ingest(String),

    #[error("{path}:{line}: {detail}")]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<MlgcnError>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl MlgcnError {
    pub fn shape(stage: &'static str, detail: impl Into<String>) -> Self {
        MlgcnError::Shape {
            stage,
            detail: detail.into(),
        }
    }

    pub fn numerical(stage: &'static str, detail: impl Into<String>) -> Self {
        MlgcnError::Numerical {
            stage,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MlgcnError::Io {
            path: path.into(),
            source,
        }
    }

    /// Tags an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        MlgcnError::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Coarse category used by front-ends to pick an exit status.
    pub fn kind(&self) -> ErrorKind {
        match self {
            MlgcnError::Usage(_) | MlgcnError::Parameter(_) => ErrorKind::Usage,
            MlgcnError::Numerical { .. } => ErrorKind::Numerical,
            MlgcnError::Stage { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

pub type Result<T, E = MlgcnError> = std::result::Result<T, E>;
