//! From-scratch recognizer: forward and backward passes, output-layer
//! gradients, categorical sampling, Adam and gradient checking.

mod adam;
mod checkpoint;
mod classifier;
mod gradcheck;
mod layers;
mod model;
mod params;
mod policy;
mod scalar;

use thiserror::Error;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use classifier::{DigitClassifier, LabelledDigit, CLASSIFIER_BLOCKS};
pub use gradcheck::{finite_diff_check, CompositeLoss, GradCheckOptions, GradCheckReport};
pub use model::{
    backward, forward, forward_one, init_params, zero_params, ForwardPass, ModelParams, CONV1_B,
    CONV1_W, CONV2_B, CONV2_W, FC_B, FC_W, FEATURES, HEADS_B, HEADS_W, HIDDEN, RECOGNIZER_BLOCKS,
};
pub use params::{BlockSpec, Params};
pub use policy::{
    log_softmax_rows, logits_grad_ce, logits_grad_reinforce, logits_grad_reinforce_with,
    reinforce_sampled, sample_sequences, softmax_rows, ReinforceNorm,
};
pub use scalar::{gemm, Layout, Scalar};

pub use crate::table::{LogitTable, ProbTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("{samples} samples but {rewards} rewards (need at least one of each, equal counts)")]
    LengthMismatch { samples: usize, rewards: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
