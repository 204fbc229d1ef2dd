//! Small single-digit CNN used to find hard source digits:
//! conv3x3(8)+relu -> 2x2 pool -> fc(10) on 28x28 inputs.

use rand::seq::SliceRandom;
use rand::RngCore;

use super::adam::{adam_step, AdamState};
use super::layers::{
    conv_backward_params, conv_forward, im2col, maxpool_forward, maxpool_relu_backward, Dims, TAPS,
};
use super::params::{BlockSpec, Params};
use super::scalar::{gemm, Layout};
use crate::ingest::{RawDigitImage, SIDE};
use crate::NUM_CLASSES;

const CHANNELS: usize = 8;
const INPUT: Dims = Dims::new(1, SIDE, SIDE);
const CONV_OUT: Dims = Dims::new(CHANNELS, SIDE, SIDE);
const FEATURES: usize = CONV_OUT.pooled().len();

const CONV_W: usize = 0;
const CONV_B: usize = 1;
const FC_W: usize = 2;
const FC_B: usize = 3;

pub static CLASSIFIER_BLOCKS: [BlockSpec; 4] = [
    BlockSpec {
        name: "conv.weight",
        len: CHANNELS * TAPS,
        fan_in: Some(TAPS),
    },
    BlockSpec {
        name: "conv.bias",
        len: CHANNELS,
        fan_in: None,
    },
    BlockSpec {
        name: "fc.weight",
        len: NUM_CLASSES * FEATURES,
        fan_in: Some(FEATURES),
    },
    BlockSpec {
        name: "fc.bias",
        len: NUM_CLASSES,
        fan_in: None,
    },
];

/// A labelled source digit.
pub type LabelledDigit<'a> = (&'a RawDigitImage, u8);

pub struct DigitClassifier {
    params: Params<f32>,
    state: AdamState<f32>,
}

struct Pass {
    inputs: Vec<f32>,
    features: Vec<f32>,
    argmax: Vec<u32>,
    logits: Vec<f32>,
}

impl DigitClassifier {
    pub fn new(seed: u64) -> Self {
        let params = Params::he_normal(&CLASSIFIER_BLOCKS, seed);
        let state = AdamState::new(&params);
        Self { params, state }
    }

    fn forward(&self, images: &[&RawDigitImage]) -> Pass {
        let batch = images.len();
        let mut pass = Pass {
            inputs: Vec::with_capacity(batch * INPUT.len()),
            features: Vec::with_capacity(batch * FEATURES),
            argmax: Vec::with_capacity(batch * FEATURES),
            logits: vec![0.0; batch * NUM_CLASSES],
        };
        let (mut cols, mut act, mut pooled, mut argmax) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for image in images {
            let input: Vec<f32> = image.pixels().iter().map(|&b| b as f32 / 255.0).collect();
            im2col(&input, INPUT, &mut cols);
            conv_forward(self.params.block(CONV_W), self.params.block(CONV_B), &cols, INPUT, &mut act);
            maxpool_forward(&act, CONV_OUT, &mut pooled, &mut argmax);
            pass.features.extend_from_slice(&pooled);
            pass.argmax.extend_from_slice(&argmax);
            pass.inputs.extend(input);
        }
        gemm(
            batch,
            FEATURES,
            NUM_CLASSES,
            &pass.features,
            Layout::Plain,
            self.params.block(FC_W),
            Layout::Transposed,
            &mut pass.logits,
            false,
        );
        for row in pass.logits.chunks_exact_mut(NUM_CLASSES) {
            row.iter_mut()
                .zip(self.params.block(FC_B))
                .for_each(|(v, &b)| *v += b);
        }
        pass
    }

    pub fn predict(&self, images: &[&RawDigitImage]) -> Vec<u8> {
        self.forward(images)
            .logits
            .chunks_exact(NUM_CLASSES)
            .map(|row| {
                let mut best = 0;
                for (i, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = i;
                    }
                }
                best as u8
            })
            .collect()
    }

    /// One Adam step on the mean cross-entropy of the batch.
    fn step(&mut self, batch: &[LabelledDigit<'_>], lr: f64) {
        let images: Vec<&RawDigitImage> = batch.iter().map(|(im, _)| *im).collect();
        let pass = self.forward(&images);
        let n = batch.len();
        let scale = 1.0 / n as f32;
        let mut dlogits = pass.logits.clone();
        for (row, (_, label)) in dlogits.chunks_exact_mut(NUM_CLASSES).zip(batch) {
            let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v = *v / total * scale;
            }
            row[*label as usize] -= scale;
        }

        let mut grads = Params::<f32>::zeros(&CLASSIFIER_BLOCKS);
        gemm(
            NUM_CLASSES,
            n,
            FEATURES,
            &dlogits,
            Layout::Transposed,
            &pass.features,
            Layout::Plain,
            grads.block_mut(FC_W),
            false,
        );
        {
            let gb = grads.block_mut(FC_B);
            for row in dlogits.chunks_exact(NUM_CLASSES) {
                gb.iter_mut().zip(row).for_each(|(g, &d)| *g += d);
            }
        }
        let mut dfeatures = vec![0.0f32; n * FEATURES];
        gemm(
            n,
            NUM_CLASSES,
            FEATURES,
            &dlogits,
            Layout::Plain,
            self.params.block(FC_W),
            Layout::Plain,
            &mut dfeatures,
            false,
        );
        let mut gw = vec![0.0f32; CHANNELS * TAPS];
        let mut gb = vec![0.0f32; CHANNELS];
        let (mut dact, mut cols) = (Vec::new(), Vec::new());
        for b in 0..n {
            let span = b * FEATURES..(b + 1) * FEATURES;
            maxpool_relu_backward(
                &dfeatures[span.clone()],
                &pass.features[span.clone()],
                &pass.argmax[span],
                CONV_OUT.len(),
                &mut dact,
            );
            im2col(&pass.inputs[b * INPUT.len()..(b + 1) * INPUT.len()], INPUT, &mut cols);
            conv_backward_params(&dact, &cols, INPUT, &mut gw, &mut gb);
        }
        grads.block_mut(CONV_W).copy_from_slice(&gw);
        grads.block_mut(CONV_B).copy_from_slice(&gb);
        adam_step(&mut self.params, &grads, &mut self.state, lr).expect("classifier shapes");
    }

    /// One shuffled pass over `data` in mini-batches.
    pub fn train_epoch<R: RngCore + ?Sized>(
        &mut self,
        data: &[LabelledDigit<'_>],
        batch_size: usize,
        lr: f64,
        rng: &mut R,
    ) {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(rng);
        for chunk in order.chunks(batch_size) {
            let batch: Vec<LabelledDigit<'_>> = chunk.iter().map(|&i| data[i]).collect();
            self.step(&batch, lr);
        }
    }

    /// Indices of `data` whose prediction differs from the label.
    pub fn misclassified(&self, data: &[LabelledDigit<'_>]) -> Vec<usize> {
        let mut wrong = Vec::new();
        for (chunk_index, chunk) in data.chunks(500).enumerate() {
            let images: Vec<&RawDigitImage> = chunk.iter().map(|(im, _)| *im).collect();
            for (i, (pred, (_, label))) in self.predict(&images).into_iter().zip(chunk).enumerate() {
                if pred != *label {
                    wrong.push(chunk_index * 500 + i);
                }
            }
        }
        wrong
    }
}
