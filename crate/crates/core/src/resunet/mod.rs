//! Toy-scale Res-UNet+ segmentation network with hand-written forward and
//! backward passes, SGD-with-momentum training and tiled inference.
//!
//! All arithmetic is `f64`, so the same code path is used for finite
//! difference gradient checks and for training.

mod blocks;
mod checkpoint;
mod infer;
mod layers;
mod net;
mod tensor;
mod train;

#[cfg(test)]
mod tests;

pub use blocks::{ConvBn, DecoderGrads, DecoderLevel, EncoderBlock, F1};
pub use checkpoint::{
    checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, read_history_csv, save_checkpoint,
    write_history_csv, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use infer::{argmax_mask, batch_from_samples, map_logits, raster_to_planes, segment, segment_map};
pub use layers::{weighted_cross_entropy, zeros_like, BatchNorm2d, Conv2d, ConvTranspose2d, Mode, Params};
pub use net::{ForwardCache, NetConfig, NetParams, ResUNetPlus};
pub use tensor::{concat_channels, split_channels, Tensor};
pub use train::{evaluate_split, inverse_frequency_weights, train, train_step, EpochRecord, Sgd, TrainOutcome};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("training diverged at epoch {epoch}, step {step}: loss {loss}")]
    DivergenceDetected {
        epoch: usize,
        step: usize,
        loss: f64,
        history: Vec<EpochRecord>,
    },
    #[error("dataset has no training samples")]
    EmptyDataset,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
