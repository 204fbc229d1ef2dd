//! Result tables over finished runs, as CSV and aligned text.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;
use ruleforce::RuleId;

use crate::args::ReportKind;
use crate::run::RunSummary;

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(headers: &[&str]) -> Self {
        Self {
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> anyhow::Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(&self.headers)?;
        for row in &self.rows {
            writer.write_record(row)?;
        }
        Ok(String::from_utf8(writer.into_inner().context("flushing csv")?)?)
    }

    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.len()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let line = |cells: &[String]| {
            let mut out = String::new();
            for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
                if i > 0 {
                    out.push_str("  ");
                }
                let _ = write!(out, "{cell:>w$}");
            }
            out.trim_end().to_string() + "\n"
        };
        let mut out = line(&self.headers);
        out.push_str(&line(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>()));
        for row in &self.rows {
            out.push_str(&line(row));
        }
        out
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("table.csv"), self.to_csv()?)?;
        std::fs::write(dir.join("table.txt"), self.to_text())?;
        Ok(())
    }
}

/// Median; the mean of the middle pair for even counts. NaN when empty.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

/// Relative change `(new - old) / old` in percent.
pub fn relative_change_pct(old: f64, new: f64) -> f64 {
    if old == 0.0 {
        f64::NAN
    } else {
        (new - old) / old * 100.0
    }
}

fn pct(x: f64) -> String {
    if x.is_nan() {
        "n/a".into()
    } else {
        format!("{:.1}", x * 100.0)
    }
}

fn signed(x: f64) -> String {
    if x.is_nan() {
        "n/a".into()
    } else {
        format!("{x:+.1}")
    }
}

/// Fixed alphas ascending, then AA, then AD.
fn alpha_order(label: &str) -> (u8, f64) {
    match label {
        "AA" => (1, 0.0),
        "AD" => (2, 0.0),
        other => (0, other.parse().unwrap_or(f64::MAX)),
    }
}

fn group_by<K: Ord>(runs: &[RunSummary], key: impl Fn(&RunSummary) -> K) -> BTreeMap<K, Vec<&RunSummary>> {
    let mut groups: BTreeMap<K, Vec<&RunSummary>> = BTreeMap::new();
    for run in runs {
        groups.entry(key(run)).or_default().push(run);
    }
    groups
}

fn sorted_alpha_key(label: &str) -> (u8, u64, String) {
    let (class, value) = alpha_order(label);
    (class, value.to_bits(), label.to_string())
}

pub fn alpha_table(runs: &[RunSummary]) -> Table {
    let mut table = Table::new(&["rule", "alpha", "runs", "seq_acc", "digit_acc", "rule_reward"]);
    let groups = group_by(runs, |r| (r.rule, r.train_size, sorted_alpha_key(&r.alpha)));
    for ((rule, _, (_, _, alpha)), cell) in groups {
        let m = |f: fn(&RunSummary) -> f64| median(&cell.iter().map(|r| f(r)).collect::<Vec<_>>());
        table.rows.push(vec![
            rule.to_string(),
            alpha,
            cell.len().to_string(),
            pct(m(|r| r.test.seq_accuracy)),
            pct(m(|r| r.test.per_digit_accuracy)),
            pct(m(|r| r.test.mean_rule_reward)),
        ]);
    }
    table
}

pub fn size_table(runs: &[RunSummary]) -> Table {
    let mut table = Table::new(&["rule", "N", "alpha", "runs", "seq_acc", "gain_pct"]);
    let groups = group_by(runs, |r| (r.rule, r.train_size, sorted_alpha_key(&r.alpha)));
    let baseline: BTreeMap<(RuleId, usize), f64> = groups
        .iter()
        .filter(|((_, _, (_, _, alpha)), _)| alpha == "0")
        .map(|((rule, n, _), cell)| {
            ((*rule, *n), median(&cell.iter().map(|r| r.test.seq_accuracy).collect::<Vec<_>>()))
        })
        .collect();
    for ((rule, n, (_, _, alpha)), cell) in groups {
        let acc = median(&cell.iter().map(|r| r.test.seq_accuracy).collect::<Vec<_>>());
        let gain = match baseline.get(&(rule, n)) {
            Some(&base) if alpha != "0" => signed(relative_change_pct(base, acc)),
            _ => String::new(),
        };
        table.rows.push(vec![
            rule.to_string(),
            n.to_string(),
            alpha,
            cell.len().to_string(),
            pct(acc),
            gain,
        ]);
    }
    table
}

/// Perturbed against original test accuracy. The change column is the
/// median over runs of each run's relative change.
pub fn robustness_table(runs: &[RunSummary], kind: ReportKind) -> Table {
    let pick = |r: &RunSummary| match kind {
        ReportKind::Hard => r.test_hard,
        _ => r.test_blockout,
    };
    let name = if kind == ReportKind::Hard { "hard" } else { "blockout" };
    let mut table = Table::new(&["rule", "alpha", "runs", "original", name, "change_pct"]);
    let usable: Vec<RunSummary> = runs.iter().filter(|r| pick(r).is_some()).cloned().collect();
    let groups = group_by(&usable, |r| (r.rule, sorted_alpha_key(&r.alpha)));
    for ((rule, (_, _, alpha)), cell) in groups {
        let original: Vec<f64> = cell.iter().map(|r| r.test.seq_accuracy).collect();
        let perturbed: Vec<f64> = cell.iter().map(|r| pick(r).unwrap().seq_accuracy).collect();
        let change: Vec<f64> = original
            .iter()
            .zip(&perturbed)
            .map(|(&o, &p)| relative_change_pct(o, p))
            .collect();
        table.rows.push(vec![
            rule.to_string(),
            alpha,
            cell.len().to_string(),
            pct(median(&original)),
            pct(median(&perturbed)),
            signed(median(&change)),
        ]);
    }
    table
}

pub fn build_table(kind: ReportKind, runs: &[RunSummary]) -> Table {
    match kind {
        ReportKind::AlphaSweep => alpha_table(runs),
        ReportKind::SizeSweep => size_table(runs),
        ReportKind::Blockout | ReportKind::Hard => robustness_table(runs, kind),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ruleforce::train::Metrics;

    fn metrics(acc: f64) -> Metrics {
        Metrics {
            seq_accuracy: acc,
            per_digit_accuracy: acc,
            mean_rule_reward: acc,
            epoch: 1,
        }
    }

    fn run(alpha: &str, n: usize, seed: u64, acc: f64, blocked: f64) -> RunSummary {
        RunSummary {
            rule: RuleId::Rule2,
            dataset_hash: "h".into(),
            train_size: n,
            alpha: alpha.into(),
            seed,
            epochs: 1,
            selected_epoch: 1,
            val: metrics(acc),
            test: metrics(acc),
            test_blockout: Some(metrics(blocked)),
            test_hard: None,
        }
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
        assert_eq!(relative_change_pct(0.5, 0.25), -50.0);
        assert!(relative_change_pct(0.0, 0.1).is_nan());
    }

    #[test]
    fn tables() {
        let runs = vec![
            run("AD", 500, 0, 0.0, 0.0),
            run("0.1", 500, 0, 0.6, 0.3),
            run("0", 500, 0, 0.5, 0.1),
            run("0", 500, 1, 0.4, 0.1),
            run("0", 500, 2, 0.3, 0.1),
            run("AA", 500, 0, 0.45, 0.2),
        ];
        let t = alpha_table(&runs);
        let alphas: Vec<&str> = t.rows.iter().map(|r| r[1].as_str()).collect();
        assert_eq!(alphas, ["0", "0.1", "AA", "AD"]);
        assert_eq!(t.rows[0][3], "40.0");
        assert_eq!(t.rows[0][2], "3");

        let s = size_table(&runs);
        assert_eq!(s.rows[1][5], "+50.0");
        assert_eq!(s.rows[0][5], "");

        let b = robustness_table(&runs, ReportKind::Blockout);
        assert_eq!(b.rows[0][5], "-75.0");
        assert_eq!(b.rows[3][5], "n/a");
        assert!(robustness_table(&runs, ReportKind::Hard).rows.is_empty());

        let csv = t.to_csv().unwrap();
        assert!(csv.starts_with("rule,alpha,runs,seq_acc,digit_acc,rule_reward\n"));
        let text = t.to_text();
        let widths: Vec<usize> = text.lines().map(|l| l.len()).collect();
        assert!(widths.iter().all(|&w| w == widths[0]));
    }
}
