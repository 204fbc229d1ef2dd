//! The sequence recognizer: two conv/pool stages, a shared hidden layer and
//! five independent ten-way heads.
//!
//! ```text
//! 1x28x112 -conv3x3(16)+relu-> 16x28x112 -pool-> 16x14x56
//!          -conv3x3(32)+relu-> 32x14x56  -pool-> 32x7x28 (6272)
//!          -fc(256)+relu-> 256 -heads(5x10)-> logits
//! ```

use super::layers::{
    col2im, conv_backward_cols, conv_backward_params, conv_forward, im2col, maxpool_forward,
    maxpool_relu_backward, Dims, TAPS,
};
use super::params::{BlockSpec, Params};
use super::scalar::{gemm, Layout, Scalar};
use super::NnError;
use crate::synth::{GrayImage, HEIGHT, WIDTH};
use crate::table::LogitTable;
use crate::{NUM_CLASSES, SEQ_LEN};

pub const CONV1_CHANNELS: usize = 16;
pub const CONV2_CHANNELS: usize = 32;
pub const HIDDEN: usize = 256;

const INPUT: Dims = Dims::new(1, HEIGHT, WIDTH);
const CONV1_OUT: Dims = Dims::new(CONV1_CHANNELS, HEIGHT, WIDTH);
const POOL1: Dims = CONV1_OUT.pooled();
const CONV2_OUT: Dims = Dims::new(CONV2_CHANNELS, POOL1.height, POOL1.width);
const POOL2: Dims = CONV2_OUT.pooled();
/// Flattened size of the conv feature map, 32x7x28.
pub const FEATURES: usize = POOL2.len();
const OUTPUTS: usize = SEQ_LEN * NUM_CLASSES;

pub const CONV1_W: usize = 0;
pub const CONV1_B: usize = 1;
pub const CONV2_W: usize = 2;
pub const CONV2_B: usize = 3;
pub const FC_W: usize = 4;
pub const FC_B: usize = 5;
pub const HEADS_W: usize = 6;
pub const HEADS_B: usize = 7;

pub static RECOGNIZER_BLOCKS: [BlockSpec; 8] = [
    BlockSpec {
        name: "conv1.weight",
        len: CONV1_CHANNELS * TAPS,
        fan_in: Some(TAPS),
    },
    BlockSpec {
        name: "conv1.bias",
        len: CONV1_CHANNELS,
        fan_in: None,
    },
    BlockSpec {
        name: "conv2.weight",
        len: CONV2_CHANNELS * CONV1_CHANNELS * TAPS,
        fan_in: Some(CONV1_CHANNELS * TAPS),
    },
    BlockSpec {
        name: "conv2.bias",
        len: CONV2_CHANNELS,
        fan_in: None,
    },
    BlockSpec {
        name: "fc.weight",
        len: HIDDEN * FEATURES,
        fan_in: Some(FEATURES),
    },
    BlockSpec {
        name: "fc.bias",
        len: HIDDEN,
        fan_in: None,
    },
    BlockSpec {
        name: "heads.weight",
        len: OUTPUTS * HIDDEN,
        fan_in: Some(HIDDEN),
    },
    BlockSpec {
        name: "heads.bias",
        len: OUTPUTS,
        fan_in: None,
    },
];

/// Recognizer weights. Also the type of their gradients.
pub type ModelParams<S = f32> = Params<S>;

/// He-normal recognizer weights, zero biases; deterministic in `seed`.
pub fn init_params<S: Scalar>(seed: u64) -> ModelParams<S> {
    Params::he_normal(&RECOGNIZER_BLOCKS, seed)
}

pub fn zero_params<S: Scalar>() -> ModelParams<S> {
    Params::zeros(&RECOGNIZER_BLOCKS)
}

/// Logits for a batch plus everything `backward` needs.
#[derive(Clone, Debug)]
pub struct ForwardPass<S> {
    pub logits: Vec<LogitTable>,
    inputs: Vec<S>,
    pool1: Vec<S>,
    argmax1: Vec<u32>,
    features: Vec<S>,
    argmax2: Vec<u32>,
    hidden: Vec<S>,
}

impl<S> ForwardPass<S> {
    pub fn batch_size(&self) -> usize {
        self.logits.len()
    }
}

fn check_params<S: Scalar>(params: &ModelParams<S>) -> Result<(), NnError> {
    if params.blocks() != RECOGNIZER_BLOCKS.as_slice() {
        return Err(NnError::ShapeMismatch {
            expected: RECOGNIZER_BLOCKS.iter().map(|b| b.len).sum(),
            actual: params.len(),
        });
    }
    Ok(())
}

/// Runs the recognizer on a batch. Examples are processed in order; the
/// result does not depend on how images are grouped into batches.
pub fn forward<S: Scalar>(params: &ModelParams<S>, images: &[&GrayImage]) -> ForwardPass<S> {
    check_params(params).expect("recognizer parameters");
    let batch = images.len();
    let mut pass = ForwardPass {
        logits: Vec::with_capacity(batch),
        inputs: Vec::with_capacity(batch * INPUT.len()),
        pool1: Vec::with_capacity(batch * POOL1.len()),
        argmax1: Vec::with_capacity(batch * POOL1.len()),
        features: Vec::with_capacity(batch * FEATURES),
        argmax2: Vec::with_capacity(batch * FEATURES),
        hidden: vec![S::ZERO; batch * HIDDEN],
    };

    let (mut cols, mut act, mut pooled, mut argmax) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for image in images {
        let input: Vec<S> = image.pixels().iter().map(|&v| S::from_f64(v as f64)).collect();

        im2col(&input, INPUT, &mut cols);
        conv_forward(params.block(CONV1_W), params.block(CONV1_B), &cols, INPUT, &mut act);
        maxpool_forward(&act, CONV1_OUT, &mut pooled, &mut argmax);
        pass.pool1.extend_from_slice(&pooled);
        pass.argmax1.extend_from_slice(&argmax);

        im2col(&pooled, POOL1, &mut cols);
        conv_forward(params.block(CONV2_W), params.block(CONV2_B), &cols, POOL1, &mut act);
        maxpool_forward(&act, CONV2_OUT, &mut pooled, &mut argmax);
        pass.features.extend_from_slice(&pooled);
        pass.argmax2.extend_from_slice(&argmax);

        pass.inputs.extend(input);
    }

    gemm(
        batch,
        FEATURES,
        HIDDEN,
        &pass.features,
        Layout::Plain,
        params.block(FC_W),
        Layout::Transposed,
        &mut pass.hidden,
        false,
    );
    for row in pass.hidden.chunks_exact_mut(HIDDEN) {
        for (v, &b) in row.iter_mut().zip(params.block(FC_B)) {
            let z = *v + b;
            *v = if z > S::ZERO { z } else { S::ZERO };
        }
    }

    let mut out = vec![S::ZERO; batch * OUTPUTS];
    gemm(
        batch,
        HIDDEN,
        OUTPUTS,
        &pass.hidden,
        Layout::Plain,
        params.block(HEADS_W),
        Layout::Transposed,
        &mut out,
        false,
    );
    for row in out.chunks_exact(OUTPUTS) {
        let mut table = LogitTable::zeros();
        for (i, (&v, &b)) in row.iter().zip(params.block(HEADS_B)).enumerate() {
            table.rows[i / NUM_CLASSES][i % NUM_CLASSES] = (v + b).to_f64();
        }
        pass.logits.push(table);
    }
    pass
}

/// Single-image convenience wrapper around [`forward`].
pub fn forward_one<S: Scalar>(params: &ModelParams<S>, image: &GrayImage) -> (LogitTable, ForwardPass<S>) {
    let pass = forward(params, &[image]);
    (pass.logits[0], pass)
}

/// Parameter gradients given the loss gradient with respect to each
/// example's logits. Contributions are summed over the batch in example order.
pub fn backward<S: Scalar>(
    params: &ModelParams<S>,
    pass: &ForwardPass<S>,
    logit_grads: &[LogitTable],
) -> Result<ModelParams<S>, NnError> {
    check_params(params)?;
    let batch = pass.batch_size();
    if logit_grads.len() != batch {
        return Err(NnError::ShapeMismatch {
            expected: batch,
            actual: logit_grads.len(),
        });
    }
    let mut grads = zero_params::<S>();

    let dlogits: Vec<S> = logit_grads
        .iter()
        .flat_map(|t| t.rows.iter().flatten().map(|&v| S::from_f64(v)))
        .collect();

    // heads
    gemm(
        OUTPUTS,
        batch,
        HIDDEN,
        &dlogits,
        Layout::Transposed,
        &pass.hidden,
        Layout::Plain,
        grads.block_mut(HEADS_W),
        false,
    );
    {
        let gb = grads.block_mut(HEADS_B);
        for row in dlogits.chunks_exact(OUTPUTS) {
            gb.iter_mut().zip(row).for_each(|(g, &d)| *g += d);
        }
    }
    let mut dhidden = vec![S::ZERO; batch * HIDDEN];
    gemm(
        batch,
        OUTPUTS,
        HIDDEN,
        &dlogits,
        Layout::Plain,
        params.block(HEADS_W),
        Layout::Plain,
        &mut dhidden,
        false,
    );
    for (d, &h) in dhidden.iter_mut().zip(&pass.hidden) {
        if h <= S::ZERO {
            *d = S::ZERO;
        }
    }

    // shared hidden layer
    gemm(
        HIDDEN,
        batch,
        FEATURES,
        &dhidden,
        Layout::Transposed,
        &pass.features,
        Layout::Plain,
        grads.block_mut(FC_W),
        false,
    );
    {
        let gb = grads.block_mut(FC_B);
        for row in dhidden.chunks_exact(HIDDEN) {
            gb.iter_mut().zip(row).for_each(|(g, &d)| *g += d);
        }
    }
    let mut dfeatures = vec![S::ZERO; batch * FEATURES];
    gemm(
        batch,
        HIDDEN,
        FEATURES,
        &dhidden,
        Layout::Plain,
        params.block(FC_W),
        Layout::Plain,
        &mut dfeatures,
        false,
    );

    // conv stages, one example at a time
    let mut gw1 = vec![S::ZERO; RECOGNIZER_BLOCKS[CONV1_W].len];
    let mut gb1 = vec![S::ZERO; CONV1_CHANNELS];
    let mut gw2 = vec![S::ZERO; RECOGNIZER_BLOCKS[CONV2_W].len];
    let mut gb2 = vec![S::ZERO; CONV2_CHANNELS];
    let (mut cols, mut dact, mut dcols) = (Vec::new(), Vec::new(), Vec::new());
    let mut dpool1 = vec![S::ZERO; POOL1.len()];
    for b in 0..batch {
        let pool1 = &pass.pool1[b * POOL1.len()..(b + 1) * POOL1.len()];
        let argmax1 = &pass.argmax1[b * POOL1.len()..(b + 1) * POOL1.len()];
        let features = &pass.features[b * FEATURES..(b + 1) * FEATURES];
        let argmax2 = &pass.argmax2[b * FEATURES..(b + 1) * FEATURES];
        let dfeat = &dfeatures[b * FEATURES..(b + 1) * FEATURES];

        maxpool_relu_backward(dfeat, features, argmax2, CONV2_OUT.len(), &mut dact);
        im2col(pool1, POOL1, &mut cols);
        conv_backward_params(&dact, &cols, POOL1, &mut gw2, &mut gb2);
        conv_backward_cols(params.block(CONV2_W), &dact, POOL1, CONV2_CHANNELS, &mut dcols);
        col2im(&dcols, POOL1, &mut dpool1);

        maxpool_relu_backward(&dpool1, pool1, argmax1, CONV1_OUT.len(), &mut dact);
        let input = &pass.inputs[b * INPUT.len()..(b + 1) * INPUT.len()];
        im2col(input, INPUT, &mut cols);
        conv_backward_params(&dact, &cols, INPUT, &mut gw1, &mut gb1);
    }
    grads.block_mut(CONV1_W).copy_from_slice(&gw1);
    grads.block_mut(CONV1_B).copy_from_slice(&gb1);
    grads.block_mut(CONV2_W).copy_from_slice(&gw2);
    grads.block_mut(CONV2_B).copy_from_slice(&gb2);
    Ok(grads)
}
