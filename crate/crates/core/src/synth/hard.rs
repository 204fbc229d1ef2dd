//! Hard source digits: test images an auxiliary single-digit classifier gets
//! wrong once its test accuracy lands in a target band.

use super::SynthError;
use crate::ingest::DigitPools;
use crate::nn::{DigitClassifier, LabelledDigit};
use crate::{seeded_rng, Digit};

#[derive(Clone, Debug, PartialEq)]
pub struct HardPoolConfig {
    /// Accepted test accuracy band in percent, inclusive.
    pub target_low: f64,
    pub target_high: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for HardPoolConfig {
    fn default() -> Self {
        Self {
            target_low: 98.0,
            target_high: 99.0,
            max_epochs: 20,
            batch_size: 64,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct HardPoolReport {
    pub pool: DigitPools,
    /// Epochs trained before stopping.
    pub epochs: usize,
    pub test_accuracy: f64,
}

fn labelled(pools: &DigitPools) -> Vec<LabelledDigit<'_>> {
    Digit::all()
        .flat_map(|d| pools.pool(d).iter().map(move |im| (im, d.value())))
        .collect()
}

/// Trains the auxiliary classifier on `train` and stops at the first epoch
/// whose accuracy on `test` falls inside the configured band. The
/// misclassified test images, grouped by their true label, form the pool.
pub fn make_hard_pool(
    train: &DigitPools,
    test: &DigitPools,
    seed: u64,
    config: &HardPoolConfig,
) -> Result<HardPoolReport, SynthError> {
    if let Some(d) = train.first_empty() {
        return Err(SynthError::EmptyPool(d));
    }
    if let Some(d) = test.first_empty() {
        return Err(SynthError::EmptyPool(d));
    }
    let train_set = labelled(train);
    let test_set = labelled(test);
    let mut model = DigitClassifier::new(seed);
    let mut rng = seeded_rng(seed, 4);
    let mut last = 0.0;
    for epoch in 1..=config.max_epochs {
        model.train_epoch(&train_set, config.batch_size, config.learning_rate, &mut rng);
        let wrong = model.misclassified(&test_set);
        last = 100.0 * (1.0 - wrong.len() as f64 / test_set.len() as f64);
        if last > config.target_high {
            break;
        }
        if last >= config.target_low {
            let mut pool = DigitPools::new(format!("hard-{}", test.source_tag));
            for i in wrong {
                let (image, label) = test_set[i];
                pool.pools[label as usize].push(image.clone());
            }
            return Ok(HardPoolReport {
                pool,
                epochs: epoch,
                test_accuracy: last,
            });
        }
    }
    Err(SynthError::TargetAccuracyUnreachable {
        low: config.target_low,
        high: config.target_high,
        epochs: config.max_epochs,
        last,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::RawDigitImage;

    // digit d is a bright vertical bar at column 2 + 2d: trivially separable
    fn bars(copies: usize, tag: &str) -> DigitPools {
        let mut pools = DigitPools::new(tag);
        for d in 0..10 {
            for c in 0..copies {
                let mut px = [0u8; 784];
                for r in 0..28 {
                    px[r * 28 + 2 + 2 * d] = 200 + c as u8;
                }
                pools.pools[d].push(RawDigitImage::new(px));
            }
        }
        pools
    }

    #[test]
    fn separable_data_overshoots_band() {
        let train = bars(20, "train");
        let test = bars(5, "test");
        let err = make_hard_pool(&train, &test, 1, &HardPoolConfig {
            max_epochs: 30,
            ..HardPoolConfig::default()
        })
        .unwrap_err();
        assert!(matches!(err, SynthError::TargetAccuracyUnreachable { .. }));
    }

    #[test]
    fn band_covering_everything_keeps_errors() {
        let train = bars(4, "train");
        let test = bars(2, "test");
        let report = make_hard_pool(&train, &test, 1, &HardPoolConfig {
            target_low: 0.0,
            target_high: 100.0,
            max_epochs: 1,
            ..HardPoolConfig::default()
        })
        .unwrap();
        assert_eq!(report.epochs, 1);
        let wrong = report.pool.total();
        let expected = 100.0 * (1.0 - wrong as f64 / 20.0);
        assert!((report.test_accuracy - expected).abs() < 1e-9);
        assert_eq!(report.pool.source_tag, "hard-test");
    }

    #[test]
    fn empty_pool_rejected() {
        let train = bars(1, "train");
        let mut test = bars(1, "test");
        test.pools[4].clear();
        assert!(matches!(
            make_hard_pool(&train, &test, 0, &HardPoolConfig::default()),
            Err(SynthError::EmptyPool(d)) if d.value() == 4
        ));
    }
}
