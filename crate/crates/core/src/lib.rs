//! Rule-constrained digit-sequence recognition.
//!
//! Five-digit strings are governed by one of three check-digit rules. A small
//! convolutional recognizer is trained on a mix of the per-position
//! log-likelihood and the expected rule reward, the latter estimated with the
//! score-function (REINFORCE) gradient.
//!
//! Modules, bottom-up:
//! - [`rules`]: check-digit rules, residue automata and exact expectations.
//! - [`ingest`]: IDX (MNIST) parsing into per-class pools.
//! - [`synth`]: sequence image synthesis, dataset IO and test-set perturbations.
//! - [`nn`]: the recognizer, its gradients, sampling and Adam.
//! - [`train`]: the composite-objective loop, alpha schedules and evaluation.

pub mod ingest;
pub mod nn;
pub mod rules;
pub mod synth;
pub mod table;
pub mod train;

pub use rules::{Digit, DigitString, RuleId};
pub use table::{LogitTable, ProbTable};

/// Digits per sequence.
pub const SEQ_LEN: usize = 5;
/// Size of the digit alphabet.
pub const NUM_CLASSES: usize = 10;

/// Identifier recorded in manifests for the generator behind every seeded stream.
pub const PRNG_ID: &str = "chacha8-rand_chacha-0.9";

/// The seeded generator used for every reproducible stream in this crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the generator for `seed`, on a numbered sub-stream so that unrelated
/// consumers (shuffling, sampling, initialization) never share draws.
pub fn seeded_rng(seed: u64, stream: u64) -> Rng {
    use rand::SeedableRng;
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
