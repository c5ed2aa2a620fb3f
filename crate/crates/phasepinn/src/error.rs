use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape mismatch: expected {expected}, got {got}")]
    InputShape { expected: usize, got: usize },

    #[error("unknown catalog entry `{0}`")]
    Catalog(String),

    /// A non-finite value appeared during evaluation; carries the offending
    /// space-time point when one is identifiable.
    #[error("non-finite value encountered{}", fmt_point(.point))]
    Numeric { point: Option<Vec<f64>> },

    #[error("time integration unstable (max |u| exceeded {bound}); reduce dt")]
    Instability { bound: f64 },

    #[error("point outside the stored domain/time range: {0:?}")]
    Range(Vec<f64>),

    #[error("grid too coarse: {0}")]
    Resolution(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("output `{}` already exists; pass --force to overwrite", .0.display())]
    Exists(PathBuf),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed checkpoint/archive/CSV contents.
    #[error("{0}")]
    Format(String),
}

fn fmt_point(p: &Option<Vec<f64>>) -> String {
    match p {
        Some(p) => format!(" at point {p:?}"),
        None => String::new(),
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code class: 1 = usage/config, 2 = numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric { .. } | Error::Instability { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
