//! Central finite-difference verification of [`backward`] on the composite
//! loss
//!
//! `L = (1 - a) * (-log p(y)) + a * (-(1/M) sum_j r_j log p(s_j))`
//!
//! with the samples `s_j` and rewards `r_j` held fixed, whose logits gradient
//! is exactly `(1 - a) * ce + a * reinforce`.

use rand::{Rng, RngCore};

use super::model::{backward, forward, ModelParams};
use super::policy::{log_softmax_rows, logits_grad_ce, logits_grad_reinforce, softmax_rows};
use super::NnError;
use crate::rules::DigitString;
use crate::synth::GrayImage;
use crate::table::LogitTable;

/// The fixed pieces of the composite loss for one example.
#[derive(Clone, Debug)]
pub struct CompositeLoss<'a> {
    pub image: &'a GrayImage,
    pub label: DigitString,
    pub alpha: f64,
    pub samples: Vec<DigitString>,
    pub rewards: Vec<f64>,
}

impl CompositeLoss<'_> {
    pub fn value(&self, logits: &LogitTable) -> f64 {
        let logp = log_softmax_rows(logits);
        let seq_logp = |s: &DigitString| -> f64 {
            logp.rows
                .iter()
                .zip(s.values())
                .map(|(row, d)| row[d as usize])
                .sum()
        };
        let ce = -seq_logp(&self.label);
        let surrogate = if self.samples.is_empty() {
            0.0
        } else {
            -self
                .samples
                .iter()
                .zip(&self.rewards)
                .map(|(s, r)| r * seq_logp(s))
                .sum::<f64>()
                / self.samples.len() as f64
        };
        (1.0 - self.alpha) * ce + self.alpha * surrogate
    }

    pub fn logits_grad(&self, logits: &LogitTable) -> Result<LogitTable, NnError> {
        let p = softmax_rows(logits);
        let ce = logits_grad_ce(&p, &self.label);
        let mut g = LogitTable::zeros();
        let reinforce = if self.samples.is_empty() {
            LogitTable::zeros()
        } else {
            logits_grad_reinforce(&p, &self.samples, &self.rewards)?
        };
        for ((o, c), r) in g
            .rows
            .iter_mut()
            .flatten()
            .zip(ce.rows.iter().flatten())
            .zip(reinforce.rows.iter().flatten())
        {
            *o = (1.0 - self.alpha) * c + self.alpha * r;
        }
        Ok(g)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// (parameter index, analytic, numeric) of the worst entry.
    pub worst: (usize, f64, f64),
}

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Parameters sampled from every block (at most the block size).
    pub per_block: usize,
    /// Relative errors use `max(|analytic|, |numeric|, floor)` as scale.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            per_block: 16,
            floor: 1e-6,
        }
    }
}

/// Compares [`backward`] with central differences of the composite loss at
/// randomly chosen parameters, an equal number from each block. `tamper` is
/// applied to the analytic gradient first (identity for a real check).
pub fn finite_diff_check<R: RngCore + ?Sized>(
    params: &ModelParams<f64>,
    loss: &CompositeLoss<'_>,
    options: &GradCheckOptions,
    rng: &mut R,
    tamper: impl FnOnce(&mut ModelParams<f64>),
) -> Result<GradCheckReport, NnError> {
    let pass = forward(params, &[loss.image]);
    let mut analytic = backward(params, &pass, &[loss.logits_grad(&pass.logits[0])?])?;
    tamper(&mut analytic);

    let mut probe = params.clone();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: (0, 0.0, 0.0),
    };
    for block in 0..params.blocks().len() {
        let range = params.range(block);
        let picks = options.per_block.min(range.len());
        for _ in 0..picks {
            let index = rng.random_range(range.clone());
            let original = probe.as_slice()[index];
            probe.as_mut_slice()[index] = original + options.epsilon;
            let plus = loss.value(&forward(&probe, &[loss.image]).logits[0]);
            probe.as_mut_slice()[index] = original - options.epsilon;
            let minus = loss.value(&forward(&probe, &[loss.image]).logits[0]);
            probe.as_mut_slice()[index] = original;

            let numeric = (plus - minus) / (2.0 * options.epsilon);
            let exact = analytic.as_slice()[index];
            let scale = exact.abs().max(numeric.abs()).max(options.floor);
            let rel = (exact - numeric).abs() / scale;
            report.checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (index, exact, numeric);
            }
        }
    }
    Ok(report)
}
