use std::fmt;
use std::path::PathBuf;

/// Pipeline stage names used to tag per-frame failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Convert,
    Ternary,
    Neighbor,
    Motion,
    Windows,
    Homogeneity,
    Edges,
    Diffusion,
    Merge,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Convert,
        Stage::Ternary,
        Stage::Neighbor,
        Stage::Motion,
        Stage::Windows,
        Stage::Homogeneity,
        Stage::Edges,
        Stage::Diffusion,
        Stage::Merge,
    ];
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Convert => "convert",
            Stage::Ternary => "ternary",
            Stage::Neighbor => "neighbor",
            Stage::Motion => "motion",
            Stage::Windows => "windows",
            Stage::Homogeneity => "homogeneity",
            Stage::Edges => "edges",
            Stage::Diffusion => "diffusion",
            Stage::Merge => "merge",
        };
        f.write_str(name)
    }
}

/// Errors raised while loading, validating or persisting a model file.
#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("unsupported model version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("model file is truncated: {0}")]
    Truncated(String),
    #[error("malformed model file at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("model invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image format error: {0}")]
    Format(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("degenerate histogram: {occupied} occupied bins for {classes} classes")]
    Degenerate { occupied: usize, classes: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at(self, stage: Stage) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True if this error (or the error it wraps) came from a model file.
    pub fn is_model_error(&self) -> bool {
        match self {
            Error::Model(_) => true,
            Error::Stage { source, .. } => source.is_model_error(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
