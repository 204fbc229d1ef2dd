//! Command-line front end: dataset synthesis and perturbation, training,
//! evaluation, sweeps and result tables.

pub mod args;
pub mod report;
pub mod run;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use ruleforce::ingest::{load_mnist_pools, MnistSplit};
use ruleforce::nn::load_checkpoint;
use ruleforce::synth::{
    blockout_split, hard_split, load_dataset, make_hard_pool, save_dataset, save_split,
    synthesize_dataset, verify_dataset, write_manifest, Dataset, HardPoolConfig, PerturbationKind,
    SplitCounts,
};
use ruleforce::train::{evaluate, AlphaSchedule, EpochRecord, TrainConfig};

use crate::args::{Cli, Command, PerturbKind, SweepKind, TrainFlags};
use crate::run::{find_runs, read_summary, train_run};

fn progress(label: String) -> impl FnMut(&EpochRecord) {
    move |r: &EpochRecord| {
        eprintln!(
            "[{label}] epoch {:>3}  alpha {:.4}  lr {:.0e}  nll {:.4}  val seq {:.3}  digit {:.3}",
            r.epoch, r.alpha, r.lr, r.train_nll, r.val.seq_accuracy, r.val.per_digit_accuracy
        );
    }
}

fn load(data: &Path) -> anyhow::Result<Dataset> {
    load_dataset(data).with_context(|| format!("loading dataset {}", data.display()))
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::IngestCheck { mnist } => {
            for split in [MnistSplit::Train, MnistSplit::Test] {
                let pools = load_mnist_pools(&mnist, split)?;
                println!("{}: {} images, per digit {:?}", pools.source_tag, pools.total(), pools.sizes());
            }
        }
        Command::Synth(a) => {
            let pools = load_mnist_pools(&a.mnist, MnistSplit::Train)?;
            let counts = SplitCounts {
                train: a.train_count,
                val: a.val_count,
                test: a.test_count,
            };
            let dataset = synthesize_dataset(a.rule, &pools, a.seed, counts)?;
            save_dataset(&a.out, &dataset)?;
            println!("{} {}", a.out.display(), dataset.manifest.content_hash);
        }
        Command::Perturb { kind } => perturb(kind)?,
        Command::Train(a) => {
            let config = a.flags.resolve()?;
            let dataset = load(&a.data)?;
            let mut on_epoch: Box<dyn FnMut(&EpochRecord)> = if a.quiet {
                Box::new(|_| {})
            } else {
                Box::new(progress(a.out.display().to_string()))
            };
            let summary = train_run(&dataset, &a.data, &config, a.train_size, &a.out, &mut on_epoch)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Eval { data, checkpoint, split } => {
            let dataset = load(&data)?;
            let examples = dataset
                .split(&split)
                .with_context(|| format!("dataset has no split {split:?}"))?;
            let params = load_checkpoint::<f32>(&checkpoint)?;
            println!("{}", serde_json::to_string_pretty(&evaluate(&params, examples)?)?);
        }
        Command::Verify { data } => {
            let report = verify_dataset(&load(&data)?);
            for (name, n, ok) in &report.splits {
                println!("{name:<14} {ok}/{n} conform");
            }
            if !report.all_conform() {
                bail!("some labels violate the rule");
            }
        }
        Command::Sweep { kind } => sweep(kind)?,
        Command::Report(a) => {
            let runs = find_runs(&a.runs)?
                .iter()
                .map(|d| read_summary(d))
                .collect::<anyhow::Result<Vec<_>>>()?;
            if runs.is_empty() {
                bail!("no runs found");
            }
            let table = report::build_table(a.kind, &runs);
            print!("{}", table.to_text());
            if let Some(out) = a.out {
                table.write(&out)?;
            }
        }
    }
    Ok(())
}

fn perturb(kind: PerturbKind) -> anyhow::Result<()> {
    let (data, seed) = match &kind {
        PerturbKind::Blockout { data, seed } | PerturbKind::Hard { data, seed, .. } => (data.clone(), *seed),
    };
    let mut dataset = load(&data)?;
    let (kind, examples, note) = match kind {
        PerturbKind::Blockout { .. } => (PerturbationKind::Blockout, blockout_split(&dataset.test, seed), None),
        PerturbKind::Hard { mnist, .. } => {
            let train = load_mnist_pools(&mnist, MnistSplit::Train)?;
            let test = load_mnist_pools(&mnist, MnistSplit::Test)?;
            let report = make_hard_pool(&train, &test, seed, &HardPoolConfig::default())?;
            let note = format!(
                "auxiliary classifier stopped after {} epochs at {:.2}% test accuracy; {} hard digits, per digit {:?}",
                report.epochs,
                report.test_accuracy,
                report.pool.total(),
                report.pool.sizes()
            );
            eprintln!("{note}");
            let examples = hard_split(&dataset.test, &train, &report.pool, seed)?;
            (PerturbationKind::Hard, examples, Some(note))
        }
    };
    dataset.attach_perturbation(kind, seed, examples, note);
    let split = dataset.split(kind.split_name()).expect("just attached");
    save_split(&data, kind.split_name(), split)?;
    write_manifest(&data, &dataset.manifest)?;
    println!("{}", data.join(kind.split_name()).display());
    Ok(())
}

/// Directory name of one sweep cell.
pub fn cell_dir(out: &Path, size: Option<usize>, schedule: AlphaSchedule, seed: u64) -> PathBuf {
    let mut name = String::new();
    if let Some(n) = size {
        name.push_str(&format!("n{n}-"));
    }
    name.push_str(&format!("alpha-{}", schedule.label()));
    out.join(name).join(format!("seed-{seed}"))
}

fn sweep(kind: SweepKind) -> anyhow::Result<()> {
    let (data, out, cells, flags, report_kind) = match kind {
        SweepKind::Alpha {
            data,
            out,
            alphas,
            seeds,
            train_size,
            flags,
        } => {
            let mut cells = Vec::new();
            for a in &alphas {
                let schedule = args::parse_schedule(a)?;
                for &seed in &seeds {
                    cells.push((train_size, schedule, seed));
                }
            }
            (data, out, cells, flags, args::ReportKind::AlphaSweep)
        }
        SweepKind::Size {
            data,
            out,
            sizes,
            seeds,
            flags,
        } => {
            let proposed = flags.resolve()?.schedule;
            let mut cells = Vec::new();
            for &n in &sizes {
                for schedule in [AlphaSchedule::Fixed(0.0), proposed] {
                    for &seed in &seeds {
                        cells.push((Some(n), schedule, seed));
                    }
                }
            }
            cells.dedup();
            (data, out, cells, flags, args::ReportKind::SizeSweep)
        }
    };
    let dataset = load(&data)?;
    let base: TrainConfig = TrainFlags { seed: None, ..flags }.resolve()?;
    let mut summaries = Vec::new();
    for (size, schedule, seed) in cells {
        let config = TrainConfig {
            schedule,
            seed,
            ..base.clone()
        };
        let dir = cell_dir(&out, size, schedule, seed);
        let summary = train_run(&dataset, &data, &config, size, &dir, &mut progress(dir.display().to_string()))?;
        summaries.push(summary);
    }
    let table = report::build_table(report_kind, &summaries);
    print!("{}", table.to_text());
    table.write(&out)?;
    Ok(())
}
