//! Composite-objective training, prediction and evaluation.

mod config;

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{alpha_at, AlphaSchedule, Precision, TrainConfig};

use crate::nn::{
    adam_step, backward, forward, init_params, logits_grad_ce, reinforce_sampled, softmax_rows,
    AdamState, ModelParams, NnError, ReinforceNorm, Scalar,
};
use crate::rules::{residue_automaton, reward, DigitString, ResidueAutomaton, RuleId};
use crate::synth::{GrayImage, SequenceExample};
use crate::table::{LogitTable, ProbTable};
use crate::{seeded_rng, NUM_CLASSES, SEQ_LEN};

const SHUFFLE_STREAM: u64 = 5;
const SAMPLE_STREAM: u64 = 6;
const EVAL_CHUNK: usize = 100;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch} (alpha {alpha}, lr {lr})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        alpha: f64,
        lr: f64,
    },
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("examples follow {found}, expected {expected}")]
    RuleMismatch { expected: RuleId, found: RuleId },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Gradient of the composite loss with respect to one example's logits:
/// `(1 - alpha) * (p - onehot(label)) + alpha * reinforce` over `m` fresh
/// samples. `alpha == 0` returns the cross-entropy term without sampling.
pub fn composite_logits_gradient<R: RngCore + ?Sized>(
    p: &ProbTable,
    label: &DigitString,
    rule: RuleId,
    alpha: f64,
    m: usize,
    rng: &mut R,
) -> LogitTable {
    composite_with(p, label, &residue_automaton(rule), alpha, m, ReinforceNorm::Average, rng).0
}

/// Returns the gradient and the mean sampled reward (`None` without sampling).
fn composite_with<R: RngCore + ?Sized>(
    p: &ProbTable,
    label: &DigitString,
    automaton: &ResidueAutomaton,
    alpha: f64,
    m: usize,
    norm: ReinforceNorm,
    rng: &mut R,
) -> (LogitTable, Option<f64>) {
    let ce = logits_grad_ce(p, label);
    if alpha == 0.0 {
        return (ce, None);
    }
    let (rf, mean_reward) = reinforce_sampled(p, automaton, m, norm, rng);
    let mut g = LogitTable::zeros();
    for ((o, c), r) in g
        .rows
        .iter_mut()
        .flatten()
        .zip(ce.rows.iter().flatten())
        .zip(rf.rows.iter().flatten())
    {
        *o = (1.0 - alpha) * c + alpha * r;
    }
    (g, Some(mean_reward))
}

/// Per-position argmax; ties go to the lowest digit.
pub fn predict_logits(logits: &LogitTable) -> DigitString {
    let digits = logits.rows.map(|row| {
        let mut best = 0;
        for d in 1..NUM_CLASSES {
            if row[d] > row[best] {
                best = d;
            }
        }
        best as u8
    });
    DigitString::new(digits).expect("argmax is a digit")
}

pub fn predict<S: Scalar>(params: &ModelParams<S>, image: &GrayImage) -> DigitString {
    predict_logits(&forward(params, &[image]).logits[0])
}

pub fn predict_all<S: Scalar>(params: &ModelParams<S>, examples: &[SequenceExample]) -> Vec<DigitString> {
    examples
        .chunks(EVAL_CHUNK)
        .flat_map(|chunk| {
            let images: Vec<&GrayImage> = chunk.iter().map(|e| &e.image).collect();
            forward(params, &images).logits.iter().map(predict_logits).collect::<Vec<_>>()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Fraction of examples with all five digits right.
    pub seq_accuracy: f64,
    pub per_digit_accuracy: f64,
    /// Fraction of predictions that satisfy the rule.
    pub mean_rule_reward: f64,
    /// Epochs trained when measured.
    pub epoch: usize,
}

/// Scores predictions against the labels; rewards use each example's rule.
pub fn score(predictions: &[DigitString], examples: &[SequenceExample], epoch: usize) -> Result<Metrics, TrainError> {
    if examples.is_empty() {
        return Err(TrainError::EmptyEvalSet);
    }
    assert_eq!(predictions.len(), examples.len(), "one prediction per example");
    let (mut exact, mut digits, mut rewarded) = (0usize, 0usize, 0.0);
    for (pred, e) in predictions.iter().zip(examples) {
        let correct = (0..SEQ_LEN).filter(|&k| pred.digit(k) == e.label.digit(k)).count();
        digits += correct;
        exact += usize::from(correct == SEQ_LEN);
        rewarded += reward(e.rule, pred);
    }
    let n = examples.len() as f64;
    Ok(Metrics {
        seq_accuracy: exact as f64 / n,
        per_digit_accuracy: digits as f64 / (n * SEQ_LEN as f64),
        mean_rule_reward: rewarded / n,
        epoch,
    })
}

pub fn evaluate<S: Scalar>(params: &ModelParams<S>, examples: &[SequenceExample]) -> Result<Metrics, TrainError> {
    score(&predict_all(params, examples), examples, 0)
}

/// One line of the training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub alpha: f64,
    pub lr: f64,
    /// Mean `-log p(label)` over the training examples.
    pub train_nll: f64,
    /// Mean reward of the drawn samples, when the reward term was active.
    pub sample_reward: Option<f64>,
    pub val: Metrics,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams<f32>,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub selected_epoch: usize,
}

fn nll(p: &ProbTable, label: &DigitString) -> f64 {
    p.rows
        .iter()
        .zip(label.values())
        .map(|(row, d)| -row[d as usize].max(f64::MIN_POSITIVE).ln())
        .sum()
}

/// Trains a fresh recognizer on `train`, recording validation metrics after
/// every epoch.
pub fn train_model(
    config: &TrainConfig,
    train: &[SequenceExample],
    val: &[SequenceExample],
) -> Result<TrainOutcome, TrainError> {
    match config.precision {
        Precision::F32 => train_typed::<f32>(config, train, val, &mut |_| {}),
        Precision::F64 => train_typed::<f64>(config, train, val, &mut |_| {}),
    }
}

/// As [`train_model`], calling `on_epoch` with each record as it is produced.
pub fn train_model_with(
    config: &TrainConfig,
    train: &[SequenceExample],
    val: &[SequenceExample],
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome, TrainError> {
    match config.precision {
        Precision::F32 => train_typed::<f32>(config, train, val, on_epoch),
        Precision::F64 => train_typed::<f64>(config, train, val, on_epoch),
    }
}

fn train_typed<S: Scalar>(
    config: &TrainConfig,
    train: &[SequenceExample],
    val: &[SequenceExample],
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let rule = train.first().ok_or(TrainError::EmptyTrainSet)?.rule;
    if val.is_empty() {
        return Err(TrainError::EmptyEvalSet);
    }
    if let Some(e) = train.iter().chain(val).find(|e| e.rule != rule) {
        return Err(TrainError::RuleMismatch {
            expected: rule,
            found: e.rule,
        });
    }
    let automaton = residue_automaton(rule);
    let mut params: ModelParams<S> = init_params(config.seed);
    let mut state = AdamState::new(&params);
    let mut shuffle_rng = seeded_rng(config.seed, SHUFFLE_STREAM);
    let mut sample_rng = seeded_rng(config.seed, SAMPLE_STREAM);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ModelParams<S>)> = None;

    for i in 0..config.epochs {
        let alpha = alpha_at(config.schedule, i, config.epochs);
        let lr = config.lr_at(i);
        order.shuffle(&mut shuffle_rng);
        let mut nll_total = 0.0;
        let mut reward_total = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let images: Vec<&GrayImage> = chunk.iter().map(|&j| &train[j].image).collect();
            let pass = forward(&params, &images);
            let scale = 1.0 / chunk.len() as f64;
            let mut grads = Vec::with_capacity(chunk.len());
            for (logits, &j) in pass.logits.iter().zip(chunk) {
                let p = softmax_rows(logits);
                let loss = nll(&p, &train[j].label);
                if !loss.is_finite() || !logits.is_finite() {
                    return Err(TrainError::NonFiniteLoss { epoch: i, batch: b, alpha, lr });
                }
                nll_total += loss;
                let (mut g, r) = composite_with(
                    &p,
                    &train[j].label,
                    &automaton,
                    alpha,
                    config.samples,
                    config.reinforce_normalization,
                    &mut sample_rng,
                );
                reward_total += r.unwrap_or(0.0);
                g.rows.iter_mut().flatten().for_each(|v| *v *= scale);
                grads.push(g);
            }
            let step = backward(&params, &pass, &grads)?;
            adam_step(&mut params, &step, &mut state, lr)?;
            if !params.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch: i, batch: b, alpha, lr });
            }
        }
        let n = train.len() as f64;
        let mut val_metrics = score(&predict_all(&params, val), val, i + 1)?;
        val_metrics.epoch = i + 1;
        let record = EpochRecord {
            epoch: i + 1,
            alpha,
            lr,
            train_nll: nll_total / n,
            sample_reward: (alpha != 0.0).then_some(reward_total / n),
            val: val_metrics,
        };
        on_epoch(&record);
        if config.keep_best_val && best.as_ref().is_none_or(|(acc, _, _)| val_metrics.seq_accuracy > *acc) {
            best = Some((val_metrics.seq_accuracy, i + 1, params.clone()));
        }
        history.push(record);
    }
    let (params, selected_epoch) = match best {
        Some((_, epoch, p)) => (p, epoch),
        None => (params, config.epochs),
    };
    Ok(TrainOutcome {
        params: params.convert(),
        history,
        selected_epoch,
    })
}

/// Writes one JSON object per epoch.
pub fn write_history_jsonl(path: &Path, history: &[EpochRecord]) -> Result<(), TrainError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for record in history {
        serde_json::to_writer(&mut out, record).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_history_jsonl(path: &Path) -> Result<Vec<EpochRecord>, TrainError> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| TrainError::Io(e.into())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::{check_digit, expected_reward_exact, Digit};
    use crate::synth::{HEIGHT, WIDTH};

    fn s(text: &str) -> DigitString {
        text.parse().unwrap()
    }

    #[test]
    fn predict_examples() {
        assert_eq!(predict_logits(&LogitTable::zeros()), s("00000"));
        let mut l = LogitTable::zeros();
        l.rows[2][7] = 1.0;
        l.rows[4][3] = 0.5;
        l.rows[4][9] = 0.5;
        assert_eq!(predict_logits(&l), s("00703"));
        let mut shifted = l;
        shifted.rows[2].iter_mut().for_each(|v| *v += 50.0);
        assert_eq!(predict_logits(&shifted), predict_logits(&l));
    }

    fn example(label: &str) -> SequenceExample {
        SequenceExample {
            image: GrayImage::zeros(),
            label: s(label),
            rule: RuleId::Rule1,
        }
    }

    #[test]
    fn score_examples() {
        let examples: Vec<_> = ["12345", "00000", "98761"].iter().map(|l| example(l)).collect();
        let labels: Vec<_> = examples.iter().map(|e| e.label).collect();
        let m = score(&labels, &examples, 3).unwrap();
        assert_eq!((m.seq_accuracy, m.per_digit_accuracy, m.epoch), (1.0, 1.0, 3));

        let off_by_one: Vec<_> = ["12344", "10000", "98760"].iter().map(|l| s(l)).collect();
        let m = score(&off_by_one, &examples, 0).unwrap();
        assert_eq!(m.seq_accuracy, 0.0);
        assert!((m.per_digit_accuracy - 0.8).abs() < 1e-12);
        assert!(matches!(score(&[], &[], 0), Err(TrainError::EmptyEvalSet)));
    }

    #[test]
    fn composite_examples() {
        let mut rng = seeded_rng(1, 0);
        let p = ProbTable::uniform();
        let label = s("12340");
        let g = composite_logits_gradient(&p, &label, RuleId::Rule1, 0.0, 10, &mut rng);
        assert_eq!(g, logits_grad_ce(&p, &label));

        let valid = s("12340");
        assert_eq!(check_digit(RuleId::Rule1, valid.prefix()), Digit::new(0).unwrap());
        let point = ProbTable::point_mass(&valid);
        let g = composite_logits_gradient(&point, &valid, RuleId::Rule1, 1.0, 50, &mut rng);
        assert!(g.rows.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn composite_converges_to_exact_gradient() {
        // 0.5 * ce - 0.5 * d/dlogits E[r], the latter by central differences
        let mut logits = LogitTable::zeros();
        for (i, v) in logits.rows.iter_mut().flatten().enumerate() {
            *v = ((i * 7 % 13) as f64 - 6.0) * 0.2;
        }
        let p = softmax_rows(&logits);
        let label = s("31415");
        let rule = RuleId::Rule2;
        let h = 1e-6;
        let ce = logits_grad_ce(&p, &label);
        let m = 400_000;
        let g = composite_logits_gradient(&p, &label, rule, 0.5, m, &mut seeded_rng(2, 0));
        for k in 0..SEQ_LEN {
            for d in 0..NUM_CLASSES {
                let bump = |delta: f64| {
                    let mut l = logits;
                    l.rows[k][d] += delta;
                    expected_reward_exact(rule, &softmax_rows(&l)).unwrap()
                };
                let de = (bump(h) - bump(-h)) / (2.0 * h);
                let expected = 0.5 * ce.rows[k][d] - 0.5 * de;
                // per-entry sampling std is below sqrt(0.25 * 0.25 / m)
                assert!((g.rows[k][d] - expected).abs() < 5.0 * (0.0625 / m as f64).sqrt(), "{k},{d}");
            }
        }
    }

    fn tiny_set(n: usize, seed: u64) -> Vec<SequenceExample> {
        let mut rng = seeded_rng(seed, 0);
        (0..n)
            .map(|_| {
                let mut digits = [0u8; 4].map(|_| (rng.next_u32() % 10) as u8);
                digits[0] %= 10;
                let prefix = digits.map(|d| Digit::new(d).unwrap());
                let label = DigitString::from_prefix(prefix, check_digit(RuleId::Rule1, prefix));
                let mut image = GrayImage::zeros();
                for (k, d) in label.values().iter().enumerate() {
                    for r in 0..HEIGHT {
                        image.set(r, k * (WIDTH / SEQ_LEN) + *d as usize * 2, 1.0);
                    }
                }
                SequenceExample { image, label, rule: RuleId::Rule1 }
            })
            .collect()
    }

    fn small_config(schedule: AlphaSchedule) -> TrainConfig {
        TrainConfig {
            schedule,
            samples: 50,
            epochs: 2,
            batch_size: 8,
            seed: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn training_is_deterministic_and_alpha_zero_skips_sampling() {
        let train = tiny_set(24, 1);
        let val = tiny_set(8, 2);
        let a = train_model(&small_config(AlphaSchedule::Fixed(0.3)), &train, &val).unwrap();
        let b = train_model(&small_config(AlphaSchedule::Fixed(0.3)), &train, &val).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.params, b.params);
        assert_eq!(a.history.len(), 2);
        assert!(a.history[0].sample_reward.is_some());

        let zero = train_model(&small_config(AlphaSchedule::Fixed(0.0)), &train, &val).unwrap();
        assert!(zero.history.iter().all(|r| r.sample_reward.is_none()));
        // an independent pure cross-entropy loop
        let config = small_config(AlphaSchedule::Fixed(0.0));
        let mut params: ModelParams<f32> = init_params(config.seed);
        let mut state = AdamState::new(&params);
        let mut shuffle = seeded_rng(config.seed, SHUFFLE_STREAM);
        let mut order: Vec<usize> = (0..train.len()).collect();
        for i in 0..config.epochs {
            order.shuffle(&mut shuffle);
            for chunk in order.chunks(config.batch_size) {
                let images: Vec<&GrayImage> = chunk.iter().map(|&j| &train[j].image).collect();
                let pass = forward(&params, &images);
                let grads: Vec<LogitTable> = pass
                    .logits
                    .iter()
                    .zip(chunk)
                    .map(|(l, &j)| {
                        let mut g = logits_grad_ce(&softmax_rows(l), &train[j].label);
                        g.rows.iter_mut().flatten().for_each(|v| *v *= 1.0 / chunk.len() as f64);
                        g
                    })
                    .collect();
                let step = backward(&params, &pass, &grads).unwrap();
                adam_step(&mut params, &step, &mut state, config.lr_at(i)).unwrap();
            }
        }
        assert_eq!(zero.params, params);
    }

    #[test]
    fn rejects_bad_inputs() {
        let train = tiny_set(4, 1);
        let config = small_config(AlphaSchedule::AA);
        assert!(matches!(train_model(&config, &[], &train), Err(TrainError::EmptyTrainSet)));
        assert!(matches!(train_model(&config, &train, &[]), Err(TrainError::EmptyEvalSet)));
        let mut mixed = tiny_set(4, 3);
        mixed[2].rule = RuleId::Rule2;
        assert!(matches!(
            train_model(&config, &train, &mixed),
            Err(TrainError::RuleMismatch { .. })
        ));
    }

    #[test]
    fn history_round_trip() {
        let train = tiny_set(8, 1);
        let out = train_model(&TrainConfig { epochs: 1, ..small_config(AlphaSchedule::AD) }, &train, &train).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.jsonl");
        write_history_jsonl(&path, &out.history).unwrap();
        assert_eq!(read_history_jsonl(&path).unwrap(), out.history);
    }
}
