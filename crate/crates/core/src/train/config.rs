use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::nn::ReinforceNorm;

/// Weight of the reward term per epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaSchedule {
    Fixed(f64),
    /// Adaptive ascending: `exp(1 - T / (i + 1))`.
    AA,
    /// Adaptive descending: `1 - AA`.
    AD,
}

impl AlphaSchedule {
    pub fn label(&self) -> String {
        match self {
            AlphaSchedule::Fixed(a) => format!("{a}"),
            AlphaSchedule::AA => "AA".into(),
            AlphaSchedule::AD => "AD".into(),
        }
    }
}

/// Alpha for epoch `i` (0-based) of a `total`-epoch run.
pub fn alpha_at(schedule: AlphaSchedule, i: usize, total: usize) -> f64 {
    let ascending = || (1.0 - total as f64 / (i + 1) as f64).exp().clamp(0.0, 1.0);
    match schedule {
        AlphaSchedule::Fixed(a) => a,
        AlphaSchedule::AA => ascending(),
        AlphaSchedule::AD => 1.0 - ascending(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub schedule: AlphaSchedule,
    /// Samples per example for the reward term.
    #[serde(rename = "M")]
    pub samples: usize,
    pub lr: f64,
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub precision: Precision,
    pub reinforce_normalization: ReinforceNorm,
    /// Return the parameters of the best validation epoch instead of the last.
    pub keep_best_val: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            schedule: AlphaSchedule::Fixed(0.05),
            samples: 10_000,
            lr: 1e-3,
            lr_decay_every: 60,
            lr_decay_factor: 10.0,
            epochs: 200,
            batch_size: 100,
            seed: 0,
            precision: Precision::F32,
            reinforce_normalization: ReinforceNorm::Average,
            keep_best_val: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |why: &str| Err(TrainError::InvalidConfig(why.to_string()));
        if let AlphaSchedule::Fixed(a) = self.schedule {
            if !(0.0..=1.0).contains(&a) {
                return bad("alpha must lie in [0, 1]");
            }
        }
        if self.samples == 0 {
            return bad("M must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.lr_decay_every == 0 || !(self.lr_decay_factor > 0.0) {
            return bad("lr decay period and factor must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch size must be positive");
        }
        Ok(())
    }

    /// Learning rate during epoch `i` (0-based).
    pub fn lr_at(&self, i: usize) -> f64 {
        self.lr / self.lr_decay_factor.powi((i / self.lr_decay_every) as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        assert_eq!(alpha_at(AlphaSchedule::AA, 199, 200), 1.0);
        assert!(alpha_at(AlphaSchedule::AA, 0, 200) < 1e-80);
        assert!((alpha_at(AlphaSchedule::AA, 99, 200) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(alpha_at(AlphaSchedule::AD, 199, 200), 0.0);
        assert_eq!(alpha_at(AlphaSchedule::Fixed(0.3), 5, 10), 0.3);
        let mut prev = 0.0;
        for i in 0..200 {
            let a = alpha_at(AlphaSchedule::AA, i, 200);
            assert!(a >= prev && a > 0.0 && a <= 1.0);
            assert_eq!(alpha_at(AlphaSchedule::AD, i, 200), 1.0 - a);
            prev = a;
        }
    }

    #[test]
    fn lr_steps() {
        let c = TrainConfig::default();
        for (i, lr) in [(0, 1e-3), (59, 1e-3), (60, 1e-4), (119, 1e-4), (120, 1e-5), (180, 1e-6), (199, 1e-6)] {
            assert!((c.lr_at(i) - lr).abs() < lr * 1e-12, "epoch {i}");
        }
    }

    #[test]
    fn config_json() {
        let c = TrainConfig::default();
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains("\"M\":10000"));
        assert_eq!(serde_json::from_str::<TrainConfig>(&json).unwrap(), c);
        let partial: TrainConfig = serde_json::from_str(r#"{"schedule":"aa","epochs":3}"#).unwrap();
        assert_eq!(partial.schedule, AlphaSchedule::AA);
        assert_eq!(partial.samples, 10_000);
        let fixed: TrainConfig = serde_json::from_str(r#"{"schedule":{"fixed":0.1}}"#).unwrap();
        assert_eq!(fixed.schedule, AlphaSchedule::Fixed(0.1));
        assert!(serde_json::from_str::<TrainConfig>(r#"{"bogus":1}"#).is_err());
        assert!(TrainConfig { schedule: AlphaSchedule::Fixed(1.5), ..c.clone() }.validate().is_err());
        assert!(TrainConfig { samples: 0, ..c }.validate().is_err());
    }
}
