use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = OrlError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum OrlError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("non-finite value in {context}{}{}", fmt_layer(*.layer), fmt_step(*.step))]
    Numeric {
        context: String,
        layer: Option<usize>,
        step: Option<u64>,
    },

    #[error("unknown environment `{0}` (known: lqr1d, pointmass, pendulum)")]
    UnknownEnv(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("malformed file, section `{section}`: {detail}")]
    Format {
        section: &'static str,
        detail: String,
    },

    #[error("unsupported file: {0}")]
    Version(String),

    #[error("degenerate mean (|mean| < 1e-12) in {0}")]
    DegenerateMean(&'static str),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn fmt_layer(layer: Option<usize>) -> String {
    layer.map(|l| format!(" (layer {l})")).unwrap_or_default()
}

fn fmt_step(step: Option<u64>) -> String {
    step.map(|s| format!(" at step {s}")).unwrap_or_default()
}

impl OrlError {
    pub(crate) fn shape(context: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        OrlError::Shape {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        OrlError::Io {
            path: path.into(),
            source,
        }
    }

    /// Attaches a training step to a numeric error; other variants pass through.
    pub fn at_step(self, step_count: u64) -> Self {
        match self {
            OrlError::Numeric { context, layer, .. } => OrlError::Numeric {
                context,
                layer,
                step: Some(step_count),
            },
            other => other,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, OrlError::Numeric { .. })
    }

    pub fn is_io(&self) -> bool {
        matches!(self, OrlError::Io { .. })
    }
}
