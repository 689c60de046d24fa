use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// Variants split into two families: input/contract problems (bad shapes,
/// bad files, bad configuration) and numerical failures (divergence,
/// non-finite values, rank deficiency). The CLI maps the first family to
/// exit code 1 and the second to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch at layer {layer}: expected {expected}, found {found}")]
    LayerDimension {
        layer: usize,
        expected: usize,
        found: usize,
    },

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("optimization failure: non-finite gradient in parameter {param}")]
    NonFiniteGradient { param: usize },

    #[error("integration produced a non-finite state at step {step}")]
    Integration { step: usize },

    #[error("model diverged: {0}")]
    Divergence(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    TrainingDiverged {
        epoch: usize,
        batch: usize,
        loss: f64,
        last_good_epoch: Option<usize>,
    },

    #[error("rank-deficient design matrix: numerical rank {rank} of {cols} columns")]
    RankDeficient { rank: usize, cols: usize },

    #[error("graph is disconnected: component sizes {sizes:?}")]
    Disconnected { sizes: Vec<usize> },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteGradient { .. }
                | Error::Integration { .. }
                | Error::Divergence(_)
                | Error::TrainingDiverged { .. }
                | Error::RankDeficient { .. }
                | Error::UndefinedMetric(_)
        )
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
