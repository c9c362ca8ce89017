//! Desk-scale neural side of two-pass boundary calibration: a small
//! transformer encoder shared by a BIO base tagger and by the calibration
//! model (pointer, type, span-matching and MLM heads), with hand-written
//! backward passes, a finite-difference gradient oracle and a deterministic
//! AdamW trainer.

mod nn;

pub mod checkpoint;
pub mod decode;
pub mod encode;
pub mod encoder;
pub mod gradcheck;
pub mod heads;
pub mod params;
pub mod synthetic;
pub mod tagger;
pub mod train;

use thiserror::Error;

pub use checkpoint::{Calibrator, Prediction};
pub use encode::{Encoded, Vocab};
pub use heads::{joint_loss, LossBreakdown, LossWeights};
pub use params::{ModelConfig, ModelParams};
pub use tagger::Tagger;
pub use train::{EpochLog, TrainConfig};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("sequence of {len} tokens exceeds the maximum length {max}")]
    Overlong { len: usize, max: usize },
    #[error("token id {id} outside vocabulary of {vocab}")]
    BadToken { id: usize, vocab: usize },
    #[error("bad training record: {0}")]
    Data(String),
    #[error("loss weight {name}={value} not in [0,1]")]
    Weight { name: &'static str, value: f64 },
    #[error("finite-difference step {0} not in [1e-6, 1e-4]")]
    Epsilon(f64),
    #[error("non-finite loss")]
    NonFinite,
    #[error("training diverged at epoch {epoch}, step {step}")]
    Diverged {
        epoch: usize,
        step: usize,
        /// Parameters before the failing update.
        last_good: Box<ModelParams>,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
