//! Synthesis of rule-conforming five-digit sequence images, plus the
//! blockout and hard-digit test-set perturbations.

mod hard;
mod image;
mod io;

use rand::Rng as _;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use hard::{make_hard_pool, HardPoolConfig, HardPoolReport};
pub use image::{concat_and_resize, GrayImage, HEIGHT, STRIP_WIDTH, WIDTH};
pub use io::{
    load_dataset, load_split, read_manifest, save_dataset, save_split, verify_dataset, write_manifest,
    VerifyReport,
};

use crate::ingest::{DigitPools, RawDigitImage};
use crate::rules::{check_digit, verify, Digit, DigitString, RuleId, PREFIX_LEN};
use crate::{seeded_rng, PRNG_ID, SEQ_LEN};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("no source images for digit {0}")]
    EmptyPool(Digit),
    #[error("no digit of {0} has a hard image available")]
    NoHardDigitAvailable(DigitString),
    #[error("auxiliary classifier never reached {low:.1}-{high:.1}% test accuracy in {epochs} epochs (last {last:.2}%)")]
    TargetAccuracyUnreachable {
        low: f64,
        high: f64,
        epochs: usize,
        last: f64,
    },
    #[error("split counts must be positive")]
    EmptySplit,
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("content hash mismatch: manifest {expected}, data {actual}")]
    HashMismatch { expected: String, actual: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One synthesized sample: image, its five-digit label and the rule it obeys.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceExample {
    pub image: GrayImage,
    pub label: DigitString,
    pub rule: RuleId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        Self {
            train: 2000,
            val: 500,
            test: 500,
        }
    }
}

/// A perturbed copy of the test split, written next to the base splits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationRecord {
    pub kind: PerturbationKind,
    pub seed: u64,
    pub split: String,
    pub content_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationKind {
    Blockout,
    Hard,
}

impl PerturbationKind {
    pub fn split_name(self) -> &'static str {
        match self {
            PerturbationKind::Blockout => "test_blockout",
            PerturbationKind::Hard => "test_hard",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub rule: RuleId,
    pub seed: u64,
    pub prng_id: String,
    pub counts: SplitCounts,
    pub source_tag: String,
    /// SHA-256 over the serialized train, val and test splits, in that order.
    pub content_hash: String,
    #[serde(default)]
    pub perturbations: Vec<PerturbationRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub train: Vec<SequenceExample>,
    pub val: Vec<SequenceExample>,
    pub test: Vec<SequenceExample>,
    pub test_blockout: Option<Vec<SequenceExample>>,
    pub test_hard: Option<Vec<SequenceExample>>,
}

impl Dataset {
    pub fn split(&self, name: &str) -> Option<&[SequenceExample]> {
        match name {
            "train" => Some(&self.train),
            "val" => Some(&self.val),
            "test" => Some(&self.test),
            "test_blockout" => self.test_blockout.as_deref(),
            "test_hard" => self.test_hard.as_deref(),
            _ => None,
        }
    }

    /// Stores a perturbed test split and records it in the manifest,
    /// replacing an earlier one of the same kind.
    pub fn attach_perturbation(
        &mut self,
        kind: PerturbationKind,
        seed: u64,
        examples: Vec<SequenceExample>,
        note: Option<String>,
    ) {
        let record = PerturbationRecord {
            kind,
            seed,
            split: kind.split_name().to_string(),
            content_hash: hash_splits([examples.as_slice()]),
            note,
        };
        self.manifest.perturbations.retain(|r| r.kind != kind);
        self.manifest.perturbations.push(record);
        match kind {
            PerturbationKind::Blockout => self.test_blockout = Some(examples),
            PerturbationKind::Hard => self.test_hard = Some(examples),
        }
    }

    /// Keeps only the first `n` training examples.
    pub fn truncate_train(&mut self, n: usize) {
        self.train.truncate(n);
    }
}

/// Serialized bytes of a split: (`images.bin`, `labels.txt`).
pub fn serialize_split(examples: &[SequenceExample]) -> (Vec<u8>, Vec<u8>) {
    let mut images = Vec::with_capacity(examples.len() * HEIGHT * WIDTH);
    let mut labels = Vec::with_capacity(examples.len() * (SEQ_LEN + 1));
    for e in examples {
        images.extend(e.image.to_bytes());
        labels.extend(e.label.to_string().bytes());
        labels.push(b'\n');
    }
    (images, labels)
}

pub fn hash_splits<'a>(splits: impl IntoIterator<Item = &'a [SequenceExample]>) -> String {
    let mut hasher = Sha256::new();
    for split in splits {
        let (images, labels) = serialize_split(split);
        hasher.update(&images);
        hasher.update(&labels);
    }
    hex::encode(hasher.finalize())
}

fn draw<'a, R: RngCore + ?Sized>(
    pools: &'a DigitPools,
    d: Digit,
    rng: &mut R,
) -> Result<&'a RawDigitImage, SynthError> {
    let pool = pools.pool(d);
    if pool.is_empty() {
        return Err(SynthError::EmptyPool(d));
    }
    Ok(&pool[rng.random_range(0..pool.len())])
}

fn sample_prefix<R: RngCore + ?Sized>(rule: RuleId, rng: &mut R) -> [Digit; PREFIX_LEN] {
    let digits: [u8; PREFIX_LEN] = match rule {
        RuleId::Rule1 | RuleId::Rule2 => std::array::from_fn(|_| rng.random_range(0..10u8)),
        RuleId::Rule3 => {
            let n: u16 = rng.random_range(1000..=9999);
            [n / 1000, n / 100 % 10, n / 10 % 10, n % 10].map(|d| d as u8)
        }
    };
    digits.map(|d| Digit::new(d).expect("sampled below 10"))
}

/// Draws one image per digit of `label` (with replacement) and renders them.
pub fn render_label<R: RngCore + ?Sized>(
    label: &DigitString,
    pools: &DigitPools,
    rng: &mut R,
) -> Result<GrayImage, SynthError> {
    let mut parts = Vec::with_capacity(SEQ_LEN);
    for pos in 0..SEQ_LEN {
        parts.push(draw(pools, label.digit(pos), rng)?);
    }
    let parts: [&RawDigitImage; SEQ_LEN] = parts.try_into().expect("five parts");
    Ok(concat_and_resize(parts).quantized())
}

/// One conforming example: a uniform prefix (Rule3: an integer in
/// 1000..=9999), the rule's check digit, and one pooled image per digit.
pub fn synthesize_example<R: RngCore + ?Sized>(
    rule: RuleId,
    pools: &DigitPools,
    rng: &mut R,
) -> Result<SequenceExample, SynthError> {
    let prefix = sample_prefix(rule, rng);
    let label = DigitString::from_prefix(prefix, check_digit(rule, prefix));
    debug_assert!(verify(rule, &label));
    let image = render_label(&label, pools, rng)?;
    Ok(SequenceExample { image, label, rule })
}

/// Generates train, val and test, in that order, from one seeded stream.
pub fn synthesize_dataset(
    rule: RuleId,
    pools: &DigitPools,
    seed: u64,
    counts: SplitCounts,
) -> Result<Dataset, SynthError> {
    if counts.train == 0 || counts.val == 0 || counts.test == 0 {
        return Err(SynthError::EmptySplit);
    }
    if let Some(d) = pools.first_empty() {
        return Err(SynthError::EmptyPool(d));
    }
    let mut rng = seeded_rng(seed, 0);
    let mut split = |n: usize| -> Result<Vec<SequenceExample>, SynthError> {
        (0..n).map(|_| synthesize_example(rule, pools, &mut rng)).collect()
    };
    let train = split(counts.train)?;
    let val = split(counts.val)?;
    let test = split(counts.test)?;
    let content_hash = hash_splits([train.as_slice(), &val, &test]);
    Ok(Dataset {
        manifest: DatasetManifest {
            rule,
            seed,
            prng_id: PRNG_ID.to_string(),
            counts,
            source_tag: pools.source_tag.clone(),
            content_hash,
            perturbations: Vec::new(),
        },
        train,
        val,
        test,
        test_blockout: None,
        test_hard: None,
    })
}

/// Column band `[start, end)` covering digit slot `k` of the resized image.
pub fn digit_band(k: usize) -> (usize, usize) {
    let edge = |i: usize| (i as f64 * WIDTH as f64 / SEQ_LEN as f64).round() as usize;
    (edge(k), edge(k + 1))
}

/// Erases the band of one uniformly chosen digit slot (fill 0.0). The label
/// is kept.
pub fn blockout<R: RngCore + ?Sized>(e: &SequenceExample, rng: &mut R) -> SequenceExample {
    let k = rng.random_range(0..SEQ_LEN);
    blockout_slot(e, k)
}

pub fn blockout_slot(e: &SequenceExample, k: usize) -> SequenceExample {
    let (start, end) = digit_band(k);
    let mut image = e.image.clone();
    for row in 0..HEIGHT {
        for col in start..end {
            image.set(row, col, 0.0);
        }
    }
    SequenceExample {
        image,
        label: e.label,
        rule: e.rule,
    }
}

/// Re-renders `label` with exactly one slot drawn from `hard_pool`. The slot
/// is uniform over positions; positions whose digit has no hard image are
/// redrawn.
pub fn apply_hard_digit<R: RngCore + ?Sized>(
    rule: RuleId,
    label: &DigitString,
    pools: &DigitPools,
    hard_pool: &DigitPools,
    rng: &mut R,
) -> Result<(SequenceExample, usize), SynthError> {
    let usable = |pos: usize| !hard_pool.pool(label.digit(pos)).is_empty();
    if !(0..SEQ_LEN).any(usable) {
        return Err(SynthError::NoHardDigitAvailable(*label));
    }
    let hard_pos = loop {
        let pos = rng.random_range(0..SEQ_LEN);
        if usable(pos) {
            break pos;
        }
    };
    let mut parts = Vec::with_capacity(SEQ_LEN);
    for pos in 0..SEQ_LEN {
        let source = if pos == hard_pos { hard_pool } else { pools };
        parts.push(draw(source, label.digit(pos), rng)?);
    }
    let parts: [&RawDigitImage; SEQ_LEN] = parts.try_into().expect("five parts");
    let image = concat_and_resize(parts).quantized();
    Ok((
        SequenceExample {
            image,
            label: *label,
            rule,
        },
        hard_pos,
    ))
}

/// Blockout applied to every example of `examples`, from one seeded stream.
pub fn blockout_split(examples: &[SequenceExample], seed: u64) -> Vec<SequenceExample> {
    let mut rng = seeded_rng(seed, 1);
    examples.iter().map(|e| blockout(e, &mut rng)).collect()
}

/// Hard-digit replacement applied to every example of `examples`.
pub fn hard_split(
    examples: &[SequenceExample],
    pools: &DigitPools,
    hard_pool: &DigitPools,
    seed: u64,
) -> Result<Vec<SequenceExample>, SynthError> {
    let mut rng = seeded_rng(seed, 2);
    examples
        .iter()
        .map(|e| apply_hard_digit(e.rule, &e.label, pools, hard_pool, &mut rng).map(|(x, _)| x))
        .collect()
}
