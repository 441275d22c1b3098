//! Dataset loading, training, checkpoints, evaluation runs and ablations.

pub mod ablation;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod optim;
pub mod overlay;
pub mod run;
pub mod train;

use std::path::{Path, PathBuf};

pub use ablation::{run_ablation_suite, AblationRow, AblationTable};
pub use checkpoint::Checkpoint;
pub use config::RunConfig;
pub use dataset::{load_dataset, Dataset, ValidationError};
pub use optim::Adam;
pub use run::{evaluate_run, infer_image, EvalRunOutput};
pub use train::{train, TrainOutput};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] aerialbev_core::CoreError),
    #[error(transparent)]
    Eval(#[from] aerialbev_eval::EvalError),
    #[error(transparent)]
    Synth(#[from] aerialbev_synth::SynthError),
    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },
    #[error("non-finite loss at step {step}; diagnostics written to {dump}")]
    NonFiniteLoss { step: usize, dump: PathBuf },
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_owned(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
