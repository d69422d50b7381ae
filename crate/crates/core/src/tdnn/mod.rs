//! Dilated time-delay network over fused window examples, with its
//! optimizer, training loop and checkpoint format.

mod checkpoint;
mod config;
mod model;
mod optim;
mod train;

use std::path::PathBuf;

use thiserror::Error;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{conv_out_len, ConvSpec, TdnnConfig, DEFAULT_CHANNELS, DEFAULT_DILATIONS, DEFAULT_KERNELS};
pub use model::{
    cross_entropy, logits_grad, parameter_breakdown, softmax, ForwardCache, LayerCount, Mode, Params, RunningStats,
    TdnnModel, PROB_FLOOR,
};
pub use optim::{sgd_step, OptimizerState};
pub use train::{accuracy, predict_classes, train, train_with_callback, EpochLog, TrainOptions, TrainingLog, DIVERGENCE_LOSS};

#[derive(Debug, Error)]
pub enum TdnnError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("convolution over {len_in} frames with kernel {kernel} and dilation {dilation} has no output")]
    NonPositiveOutput { len_in: usize, kernel: usize, dilation: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite activation in {stage}")]
    NonFiniteActivation { stage: String },
    #[error("training diverged at epoch {epoch}, step {step}: batch loss {loss:.3}")]
    Diverged { epoch: usize, step: usize, loss: f64 },
    #[error("forward cache was produced before the parameters last changed")]
    StaleCache,
    #[error("backward needs a cache from a Train-mode forward pass")]
    EvalCache,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
}
