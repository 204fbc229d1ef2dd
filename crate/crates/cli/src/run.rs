//! One training run and its directory:
//!
//! ```text
//! config.json     resolved training config plus dataset identity
//! metrics.jsonl   one record per epoch
//! summary.json    final metrics on every test split present
//! checkpoint.bin  final parameters
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context};
use ruleforce::nn::save_checkpoint;
use ruleforce::synth::Dataset;
use ruleforce::train::{evaluate, train_model_with, write_history_jsonl, EpochRecord, Metrics, TrainConfig};
use ruleforce::RuleId;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: PathBuf,
    pub rule: RuleId,
    pub dataset_hash: String,
    pub train_size: usize,
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub rule: RuleId,
    pub dataset_hash: String,
    pub train_size: usize,
    /// Schedule label: the fixed alpha, `AA` or `AD`.
    pub alpha: String,
    pub seed: u64,
    pub epochs: usize,
    pub selected_epoch: usize,
    pub val: Metrics,
    pub test: Metrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_blockout: Option<Metrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_hard: Option<Metrics>,
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Trains on `dataset` (optionally its first `train_size` examples) and
/// writes the run directory `out`.
pub fn train_run(
    dataset: &Dataset,
    data_dir: &Path,
    config: &TrainConfig,
    train_size: Option<usize>,
    out: &Path,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> anyhow::Result<RunSummary> {
    let n = train_size.unwrap_or(dataset.train.len());
    ensure!(
        n >= 1 && n <= dataset.train.len(),
        "train size {n} outside 1..={}",
        dataset.train.len()
    );
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let run_config = RunConfig {
        data: data_dir.to_path_buf(),
        rule: dataset.manifest.rule,
        dataset_hash: dataset.manifest.content_hash.clone(),
        train_size: n,
        train: config.clone(),
    };
    write_json(&out.join("config.json"), &run_config)?;

    let outcome = train_model_with(config, &dataset.train[..n], &dataset.val, on_epoch)?;
    write_history_jsonl(&out.join("metrics.jsonl"), &outcome.history)?;
    save_checkpoint(&out.join("checkpoint.bin"), &outcome.params)?;

    let mut eval = |split: &[ruleforce::synth::SequenceExample]| -> anyhow::Result<Metrics> {
        let mut m = evaluate(&outcome.params, split)?;
        m.epoch = outcome.selected_epoch;
        Ok(m)
    };
    let summary = RunSummary {
        rule: dataset.manifest.rule,
        dataset_hash: dataset.manifest.content_hash.clone(),
        train_size: n,
        alpha: config.schedule.label(),
        seed: config.seed,
        epochs: config.epochs,
        selected_epoch: outcome.selected_epoch,
        val: eval(&dataset.val)?,
        test: eval(&dataset.test)?,
        test_blockout: dataset.test_blockout.as_deref().map(&mut eval).transpose()?,
        test_hard: dataset.test_hard.as_deref().map(&mut eval).transpose()?,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

pub fn read_summary(run_dir: &Path) -> anyhow::Result<RunSummary> {
    let path = run_dir.join("summary.json");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Run directories under `roots`: each root that holds a summary, or any
/// descendant that does.
pub fn find_runs(roots: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    fn walk(dir: &Path, found: &mut Vec<PathBuf>) -> anyhow::Result<()> {
        if dir.join("summary.json").is_file() {
            found.push(dir.to_path_buf());
            return Ok(());
        }
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)
            .with_context(|| format!("listing {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        entries.sort();
        for entry in entries {
            walk(&entry, found)?;
        }
        Ok(())
    }
    let mut found = Vec::new();
    for root in roots {
        walk(root, &mut found)?;
    }
    Ok(found)
}
