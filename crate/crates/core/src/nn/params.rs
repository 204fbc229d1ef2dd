use std::ops::Range;

use rand_distr::{Distribution, Normal};

use super::scalar::Scalar;
use super::NnError;
use crate::seeded_rng;

/// A named parameter block and the fan-in used to initialize it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockSpec {
    pub name: &'static str,
    pub len: usize,
    /// `Some(fan_in)` for weights (He-normal), `None` for zero-initialized biases.
    pub fan_in: Option<usize>,
}

/// All trainable values of a network in one flat buffer, block after block in
/// declaration order. Gradients and optimizer moments reuse the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<S> {
    blocks: &'static [BlockSpec],
    data: Vec<S>,
}

impl<S: Scalar> Params<S> {
    pub fn zeros(blocks: &'static [BlockSpec]) -> Self {
        let len = blocks.iter().map(|b| b.len).sum();
        Self {
            blocks,
            data: vec![S::ZERO; len],
        }
    }

    pub fn from_vec(blocks: &'static [BlockSpec], data: Vec<S>) -> Result<Self, NnError> {
        let expected: usize = blocks.iter().map(|b| b.len).sum();
        if data.len() != expected {
            return Err(NnError::ShapeMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { blocks, data })
    }

    /// He-normal weights (std `sqrt(2 / fan_in)`), zero biases.
    pub fn he_normal(blocks: &'static [BlockSpec], seed: u64) -> Self {
        let mut params = Self::zeros(blocks);
        let mut rng = seeded_rng(seed, 3);
        for (i, spec) in blocks.iter().enumerate() {
            if let Some(fan_in) = spec.fan_in {
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                let range = params.range(i);
                for v in &mut params.data[range] {
                    *v = S::from_f64(normal.sample(&mut rng));
                }
            }
        }
        params
    }

    pub fn blocks(&self) -> &'static [BlockSpec] {
        self.blocks
    }

    pub fn range(&self, index: usize) -> Range<usize> {
        let start: usize = self.blocks[..index].iter().map(|b| b.len).sum();
        start..start + self.blocks[index].len
    }

    pub fn block(&self, index: usize) -> &[S] {
        &self.data[self.range(index)]
    }

    pub fn block_mut(&mut self, index: usize) -> &mut [S] {
        let range = self.range(index);
        &mut self.data[range]
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape<T>(&self, other: &Params<T>) -> bool {
        std::ptr::eq(self.blocks, other.blocks) || self.blocks == other.blocks
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn convert<T: Scalar>(&self) -> Params<T> {
        Params {
            blocks: self.blocks,
            data: self.data.iter().map(|v| T::from_f64(v.to_f64())).collect(),
        }
    }

    /// Element-wise `self += other`.
    pub fn add_assign(&mut self, other: &Params<S>) -> Result<(), NnError> {
        if !self.same_shape(other) {
            return Err(NnError::ShapeMismatch {
                expected: self.len(),
                actual: other.len(),
            });
        }
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += *b);
        Ok(())
    }

    pub fn scale(&mut self, factor: S) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }
}
