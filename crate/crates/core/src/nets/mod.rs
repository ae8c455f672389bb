//! The small MLPs used as generator, reconstructor and discriminator, their
//! Adam optimizer, and the checkpoint file format.

mod adam;
mod checkpoint;
mod mlp;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use mlp::{init_mlp, BoundMlp, HiddenActivation, MlpGradients, MlpModel, OutputActivation};

use thiserror::Error;

use crate::adcore::AdError;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("an MLP needs at least an input and an output layer, got {0} sizes")]
    TooFewLayers(usize),
    #[error("layer sizes must be positive")]
    ZeroWidth,
    #[error("gradient shape {got:?} does not match parameter shape {expected:?} (tensor {index})")]
    GradientShape {
        index: usize,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("input has {got} features, model expects {expected}")]
    InputWidth { expected: usize, got: usize },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
