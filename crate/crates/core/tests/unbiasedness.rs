//! The sample mean of the score-function gradient against central
//! differences of the exact expected reward, at three standard errors.

use ruleforce::nn::{logits_grad_reinforce, sample_sequences, softmax_rows};
use ruleforce::rules::{expected_reward_exact, reward};
use ruleforce::{seeded_rng, LogitTable, RuleId, NUM_CLASSES, SEQ_LEN};
use rand::Rng;

#[test]
fn reinforce_mean_within_three_standard_errors() {
    let mut rng = seeded_rng(21, 0);
    let draws = 200_000;
    for rule in RuleId::ALL {
        let mut logits = LogitTable::zeros();
        for v in logits.rows.iter_mut().flatten() {
            *v = rng.random_range(-1.5..1.5);
        }
        let p = softmax_rows(&logits);
        let samples = sample_sequences(&p, draws, &mut rng);
        let rewards: Vec<f64> = samples.iter().map(|s| reward(rule, s)).collect();
        let mean = logits_grad_reinforce(&p, &samples, &rewards).unwrap();

        // per-sample terms -r (onehot - p) for the standard error
        let mut sq = [[0.0f64; NUM_CLASSES]; SEQ_LEN];
        for (s, &r) in samples.iter().zip(&rewards) {
            for k in 0..SEQ_LEN {
                for d in 0..NUM_CLASSES {
                    let onehot = if s.values()[k] as usize == d { 1.0 } else { 0.0 };
                    let term = -r * (onehot - p.rows[k][d]);
                    sq[k][d] += term * term;
                }
            }
        }
        let h = 1e-5;
        let mut outside = 0;
        for k in 0..SEQ_LEN {
            for d in 0..NUM_CLASSES {
                let bump = |delta: f64| {
                    let mut l = logits;
                    l.rows[k][d] += delta;
                    expected_reward_exact(rule, &softmax_rows(&l)).unwrap()
                };
                let target = -(bump(h) - bump(-h)) / (2.0 * h);
                let m = mean.rows[k][d];
                let var = (sq[k][d] / draws as f64 - m * m).max(0.0);
                let se = (var / draws as f64).sqrt();
                if (m - target).abs() > 3.0 * se + 1e-9 {
                    outside += 1;
                }
            }
        }
        // 50 coordinates at 3 sigma: a couple may fall outside by chance
        assert!(outside <= 2, "{rule}: {outside} of 50 outside 3 standard errors");
    }
}
