use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ruleforce::nn::ReinforceNorm;
use ruleforce::train::{AlphaSchedule, Precision, TrainConfig};
use ruleforce::RuleId;

#[derive(Debug, Parser)]
#[command(name = "ruleforce", version, about = "Rule-constrained digit-sequence recognition")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse the MNIST IDX files and print per-digit pool sizes.
    IngestCheck {
        #[arg(long, default_value = "data/mnist")]
        mnist: PathBuf,
    },
    /// Synthesize a rule-conforming dataset directory.
    Synth(SynthArgs),
    /// Add a perturbed copy of the test split to a dataset.
    Perturb {
        #[command(subcommand)]
        kind: PerturbKind,
    },
    /// Train a recognizer on a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Check every label of a dataset against its rule.
    Verify {
        #[arg(long)]
        data: PathBuf,
    },
    /// Train a grid of runs and tabulate them.
    Sweep {
        #[command(subcommand)]
        kind: SweepKind,
    },
    /// Tabulate finished runs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub rule: RuleId,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "data/mnist")]
    pub mnist: PathBuf,
    #[arg(long = "train", default_value_t = 2000)]
    pub train_count: usize,
    #[arg(long = "val", default_value_t = 500)]
    pub val_count: usize,
    #[arg(long = "test", default_value_t = 500)]
    pub test_count: usize,
}

#[derive(Debug, Subcommand)]
pub enum PerturbKind {
    /// Erase one digit band per test image.
    Blockout {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Replace one digit per test image with a hard MNIST test digit.
    Hard {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "data/mnist")]
        mnist: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    Avg,
    Sum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    Fixed,
    Aa,
    Ad,
}

/// Overrides on top of the defaults and an optional JSON config file.
#[derive(Clone, Debug, Default, Args)]
pub struct TrainFlags {
    /// JSON file with any subset of the training config fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub precision: Option<PrecisionArg>,
    #[arg(long = "reinforce-norm", value_enum)]
    pub reinforce_norm: Option<NormArg>,
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleArg>,
    /// Fixed reward weight in [0, 1].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Samples per example for the reward term.
    #[arg(long = "M")]
    pub samples: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "batch-size")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long = "lr-decay-every")]
    pub lr_decay_every: Option<usize>,
    #[arg(long = "lr-decay-factor")]
    pub lr_decay_factor: Option<f64>,
    /// Return the best validation epoch instead of the last.
    #[arg(long = "keep-best-val")]
    pub keep_best_val: bool,
}

impl TrainFlags {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> anyhow::Result<TrainConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => TrainConfig::default(),
        };
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.precision {
            config.precision = match v {
                PrecisionArg::F32 => Precision::F32,
                PrecisionArg::F64 => Precision::F64,
            };
        }
        if let Some(v) = self.reinforce_norm {
            config.reinforce_normalization = match v {
                NormArg::Avg => ReinforceNorm::Average,
                NormArg::Sum => ReinforceNorm::RawSum,
            };
        }
        match (self.schedule, self.alpha) {
            (Some(ScheduleArg::Aa | ScheduleArg::Ad), Some(_)) => {
                bail!("--alpha only applies to the fixed schedule")
            }
            (Some(ScheduleArg::Aa), None) => config.schedule = AlphaSchedule::AA,
            (Some(ScheduleArg::Ad), None) => config.schedule = AlphaSchedule::AD,
            (_, Some(a)) => config.schedule = AlphaSchedule::Fixed(a),
            (Some(ScheduleArg::Fixed), None) => {
                if !matches!(config.schedule, AlphaSchedule::Fixed(_)) {
                    config.schedule = TrainConfig::default().schedule;
                }
            }
            (None, None) => {}
        }
        if let Some(v) = self.samples {
            config.samples = v;
        }
        if let Some(v) = self.epochs {
            config.epochs = v;
        }
        if let Some(v) = self.batch_size {
            config.batch_size = v;
        }
        if let Some(v) = self.lr {
            config.lr = v;
        }
        if let Some(v) = self.lr_decay_every {
            config.lr_decay_every = v;
        }
        if let Some(v) = self.lr_decay_factor {
            config.lr_decay_factor = v;
        }
        if self.keep_best_val {
            config.keep_best_val = true;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory for config, metrics, summary and checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    /// Use only the first N training examples.
    #[arg(long = "train-size")]
    pub train_size: Option<usize>,
    /// Suppress per-epoch progress on stderr.
    #[arg(long)]
    pub quiet: bool,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Debug, Subcommand)]
pub enum SweepKind {
    /// One cell per alpha value or schedule, repeated over seeds.
    Alpha {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated values; `aa` and `ad` select the schedules.
        #[arg(long, value_delimiter = ',', default_value = "0,0.01,0.05,0.1,0.5,aa,ad")]
        alphas: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[arg(long = "train-size")]
        train_size: Option<usize>,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Baseline (alpha 0) against the configured schedule at several sizes.
    Size {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "500,1000,2000")]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[command(flatten)]
        flags: TrainFlags,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReportKind {
    /// Median seq accuracy per alpha or schedule.
    AlphaSweep,
    /// Baseline and proposed accuracy per training size.
    SizeSweep,
    /// Original and blockout accuracy with relative change.
    Blockout,
    /// Original and hard-digit accuracy with relative change.
    Hard,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(value_enum)]
    pub kind: ReportKind,
    /// Run directories, or directories containing them.
    #[arg(long, num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    /// Where to write table.csv and table.txt (printed only if absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// `0.1` is a fixed weight; `aa` and `ad` name the adaptive schedules.
pub fn parse_schedule(text: &str) -> anyhow::Result<AlphaSchedule> {
    match text.trim().to_ascii_lowercase().as_str() {
        "aa" => Ok(AlphaSchedule::AA),
        "ad" => Ok(AlphaSchedule::AD),
        other => {
            let a: f64 = other.parse().with_context(|| format!("bad alpha {text:?}"))?;
            if !(0.0..=1.0).contains(&a) {
                bail!("alpha {a} outside [0, 1]");
            }
            Ok(AlphaSchedule::Fixed(a))
        }
    }
}
