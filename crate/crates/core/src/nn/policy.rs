//! Output-layer math: softmax, categorical sampling and the logits-level
//! gradients of the likelihood and score-function terms.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::NnError;
use crate::rules::{DigitString, ResidueAutomaton};
use crate::table::{LogitTable, ProbTable};
use crate::{NUM_CLASSES, SEQ_LEN};

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &LogitTable) -> ProbTable {
    let mut p = ProbTable::uniform();
    for (out, row) in p.rows.iter_mut().zip(&logits.rows) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (o, &l) in out.iter_mut().zip(row) {
            *o = (l - max).exp();
            total += *o;
        }
        out.iter_mut().for_each(|o| *o /= total);
    }
    p
}

/// Row-wise `log softmax`.
pub fn log_softmax_rows(logits: &LogitTable) -> LogitTable {
    let mut out = *logits;
    for row in out.rows.iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|l| *l -= lse);
    }
    out
}

/// Walker/Vose alias table for one ten-way categorical row. One `u64` draw
/// per sample: the high half picks a column, the low half the coin.
#[derive(Clone, Copy, Debug)]
struct AliasRow {
    threshold: [u32; NUM_CLASSES],
    alias: [u8; NUM_CLASSES],
}

impl AliasRow {
    fn new(probs: &[f64; NUM_CLASSES]) -> Self {
        let total: f64 = probs.iter().sum();
        let mut scaled: [f64; NUM_CLASSES] =
            std::array::from_fn(|i| probs[i] / total * NUM_CLASSES as f64);
        let mut alias: [u8; NUM_CLASSES] = std::array::from_fn(|i| i as u8);
        let mut keep = [1.0f64; NUM_CLASSES];
        let (mut small, mut large): (Vec<usize>, Vec<usize>) =
            (0..NUM_CLASSES).partition(|&i| scaled[i] < 1.0);
        while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
            keep[s] = scaled[s];
            alias[s] = l as u8;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // leftovers are 1 up to rounding
        let threshold = std::array::from_fn(|i| {
            if keep[i] >= 1.0 {
                u32::MAX
            } else {
                (keep[i] * 4294967296.0) as u32
            }
        });
        Self { threshold, alias }
    }

    #[inline]
    fn sample(&self, bits: u64) -> u8 {
        let column = (((bits >> 32) * NUM_CLASSES as u64) >> 32) as usize;
        let coin = bits as u32;
        if coin < self.threshold[column] || self.threshold[column] == u32::MAX {
            column as u8
        } else {
            self.alias[column]
        }
    }
}

struct Sampler {
    rows: [AliasRow; SEQ_LEN],
}

impl Sampler {
    fn new(p: &ProbTable) -> Self {
        Self {
            rows: std::array::from_fn(|k| AliasRow::new(&p.rows[k])),
        }
    }

    #[inline]
    fn draw<R: RngCore + ?Sized>(&self, rng: &mut R) -> [u8; SEQ_LEN] {
        std::array::from_fn(|k| self.rows[k].sample(rng.next_u64()))
    }
}

/// `m` independent draws from the factorized distribution, with
/// replacement. Positions are sampled independently.
pub fn sample_sequences<R: RngCore + ?Sized>(p: &ProbTable, m: usize, rng: &mut R) -> Vec<DigitString> {
    let sampler = Sampler::new(p);
    (0..m)
        .map(|_| DigitString::new(sampler.draw(rng)).expect("alias rows yield digits"))
        .collect()
}

/// Gradient of `-log p(label)` with respect to the logits: `p - onehot`.
pub fn logits_grad_ce(p: &ProbTable, label: &DigitString) -> LogitTable {
    let mut g = LogitTable { rows: p.rows };
    for (row, d) in g.rows.iter_mut().zip(label.values()) {
        row[d as usize] -= 1.0;
    }
    g
}

/// How the score-function term combines its `M` samples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReinforceNorm {
    /// Mean over samples.
    #[default]
    #[serde(alias = "avg")]
    Average,
    /// Plain sum over samples.
    #[serde(alias = "sum")]
    RawSum,
}

impl ReinforceNorm {
    fn factor(self, m: usize) -> f64 {
        match self {
            ReinforceNorm::Average => 1.0 / m as f64,
            ReinforceNorm::RawSum => 1.0,
        }
    }
}

/// Turns reward-weighted sample counts into `-c * sum_j r_j (onehot_j - p)`.
fn reinforce_from_counts(
    p: &ProbTable,
    counts: &[[f64; NUM_CLASSES]; SEQ_LEN],
    total_reward: f64,
    factor: f64,
) -> LogitTable {
    let mut g = LogitTable::zeros();
    for k in 0..SEQ_LEN {
        for d in 0..NUM_CLASSES {
            g.rows[k][d] = -factor * (counts[k][d] - total_reward * p.rows[k][d]);
        }
    }
    g
}

/// Score-function gradient of the expected reward, as a descent direction on
/// the logits: `-(1/M) sum_j r_j (onehot(y_j) - p)`.
pub fn logits_grad_reinforce(
    p: &ProbTable,
    samples: &[DigitString],
    rewards: &[f64],
) -> Result<LogitTable, NnError> {
    logits_grad_reinforce_with(p, samples, rewards, ReinforceNorm::Average)
}

pub fn logits_grad_reinforce_with(
    p: &ProbTable,
    samples: &[DigitString],
    rewards: &[f64],
    norm: ReinforceNorm,
) -> Result<LogitTable, NnError> {
    if samples.len() != rewards.len() || samples.is_empty() {
        return Err(NnError::LengthMismatch {
            samples: samples.len(),
            rewards: rewards.len(),
        });
    }
    let mut counts = [[0.0f64; NUM_CLASSES]; SEQ_LEN];
    let mut total = 0.0;
    for (s, &r) in samples.iter().zip(rewards) {
        for (row, d) in counts.iter_mut().zip(s.values()) {
            row[d as usize] += r;
        }
        total += r;
    }
    Ok(reinforce_from_counts(p, &counts, total, norm.factor(samples.len())))
}

/// Sampling, binary rule rewards and [`logits_grad_reinforce_with`] in one
/// pass without materializing the samples. Consumes the generator exactly
/// like [`sample_sequences`] and returns the same gradient bit for bit,
/// together with the mean reward of the draws.
pub fn reinforce_sampled<R: RngCore + ?Sized>(
    p: &ProbTable,
    automaton: &ResidueAutomaton,
    m: usize,
    norm: ReinforceNorm,
    rng: &mut R,
) -> (LogitTable, f64) {
    assert!(m >= 1, "at least one sample");
    let sampler = Sampler::new(p);
    let modulus = automaton.modulus();
    // flattened transitions and the accepted check digit per final state
    let mut step = vec![[[0u8; NUM_CLASSES]; 4]; modulus];
    for (state, table) in step.iter_mut().enumerate() {
        for (pos, row) in table.iter_mut().enumerate() {
            for (d, next) in row.iter_mut().enumerate() {
                *next = automaton.transition(state, pos, crate::Digit::new(d as u8).unwrap()) as u8;
            }
        }
    }
    let check: Vec<u8> = (0..modulus)
        .map(|state| {
            crate::Digit::all()
                .find(|&c| automaton.accept(state, c))
                .map_or(u8::MAX, |c| c.value())
        })
        .collect();

    let mut counts = [[0u64; NUM_CLASSES]; SEQ_LEN];
    let mut valid = 0u64;
    for _ in 0..m {
        let s = sampler.draw(rng);
        let mut state = 0usize;
        for (pos, &d) in s[..SEQ_LEN - 1].iter().enumerate() {
            state = step[state][pos][d as usize] as usize;
        }
        if check[state] == s[SEQ_LEN - 1] {
            valid += 1;
            for (row, &d) in counts.iter_mut().zip(&s) {
                row[d as usize] += 1;
            }
        }
    }
    let counts = counts.map(|row| row.map(|c| c as f64));
    let grad = reinforce_from_counts(p, &counts, valid as f64, norm.factor(m));
    (grad, valid as f64 / m as f64)
}
