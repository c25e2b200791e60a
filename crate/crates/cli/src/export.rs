//! Output files. Column orders are fixed; floats use Rust's shortest
//! round-trip formatting so identical runs give identical bytes.
//!
//! Rounds are reported 1-based everywhere: round `r` is the r-th completed
//! aggregation.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use ecgr_core::analysis::{late_half_fraction, DeviationRecord};
use ecgr_core::data::{entropy, label_histogram, ClientPartition, Dataset};
use ecgr_core::ecgr::SelectionMask;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::experiment::SeedResult;

pub const METRICS_HEADER: &str = "round,seed,algorithm,ecgr,beta,test_accuracy,test_loss";
pub const SUMMARY_HEADER: &str = "round,algorithm,ecgr,beta,mean_accuracy,min_accuracy,max_accuracy,delta_vs_baseline";
pub const DEVIATIONS_HEADER: &str = "round,client,dev_raw,dev_ecgr,assumption_held";
pub const SELECTION_HEADER: &str = "round,client,tau,late_half_fraction";

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Writes a file through one buffered writer, attaching the path to IO errors.
fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let wrap = |e| CliError::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(wrap)?);
    body(&mut w).map_err(wrap)?;
    w.flush().map_err(wrap)
}

pub fn write_metrics(path: &Path, cfg: &RunConfig, results: &[SeedResult]) -> Result<()> {
    let name = cfg.algo.algorithm.name();
    let beta = cfg.algo.beta;
    write_file(path, |w| {
        writeln!(w, "{METRICS_HEADER}")?;
        for arm in 0..results.first().map_or(0, |r| r.arms.len()) {
            for r in results {
                let a = &r.arms[arm];
                for m in &a.metrics {
                    writeln!(w, "{},{},{name},{},{beta},{},{}", m.round, r.seed, a.ecgr, m.test_accuracy, m.test_loss)?;
                }
            }
        }
        Ok(())
    })
}

/// One row of the across-seed summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub round: usize,
    pub ecgr: bool,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Mean accuracy minus the baseline arm's; present only for paired runs.
    pub delta: Option<f64>,
}

pub fn summarize(results: &[SeedResult]) -> Vec<SummaryRow> {
    let Some(first) = results.first() else {
        return Vec::new();
    };
    let paired = first.arms.len() == 2;
    let mut rows = Vec::new();
    let mut baseline_means = Vec::new();
    for (arm, lead) in first.arms.iter().enumerate() {
        for (t, m) in lead.metrics.iter().enumerate() {
            let accs: Vec<f64> = results.iter().map(|r| r.arms[arm].metrics[t].test_accuracy).collect();
            let mean = accs.iter().sum::<f64>() / accs.len() as f64;
            let min = accs.iter().copied().fold(f64::INFINITY, f64::min);
            let max = accs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if arm == 0 {
                baseline_means.push(mean);
            }
            let delta = paired.then(|| mean - baseline_means[t]);
            rows.push(SummaryRow { round: m.round, ecgr: lead.ecgr, mean, min, max, delta });
        }
    }
    rows
}

pub fn write_summary(path: &Path, cfg: &RunConfig, rows: &[SummaryRow]) -> Result<()> {
    let name = cfg.algo.algorithm.name();
    let beta = cfg.algo.beta;
    write_file(path, |w| {
        writeln!(w, "{SUMMARY_HEADER}")?;
        for r in rows {
            let delta = r.delta.map(|d| d.to_string()).unwrap_or_default();
            writeln!(w, "{},{name},{},{beta},{},{},{},{delta}", r.round, r.ecgr, r.mean, r.min, r.max)?;
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct MaskLine<'a> {
    round: usize,
    client: usize,
    tau: usize,
    selected_indices: &'a [usize],
    beta: f64,
}

pub fn write_masks(path: &Path, masks: &[SelectionMask]) -> Result<()> {
    write_file(path, |w| {
        for m in masks {
            let line = MaskLine {
                round: m.round + 1,
                client: m.client,
                tau: m.tau,
                selected_indices: &m.selected_indices,
                beta: m.beta,
            };
            serde_json::to_writer(&mut *w, &line).map_err(std::io::Error::from)?;
            writeln!(w)?;
        }
        Ok(())
    })
}

pub fn write_selection_stats(path: &Path, masks: &[SelectionMask]) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "{SELECTION_HEADER}")?;
        for m in masks {
            writeln!(w, "{},{},{},{}", m.round + 1, m.client, m.tau, late_half_fraction(m))?;
        }
        Ok(())
    })
}

pub fn write_deviations(path: &Path, records: &[DeviationRecord]) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "{DEVIATIONS_HEADER}")?;
        for r in records {
            writeln!(w, "{},{},{},{},{}", r.round, r.client, r.dev_raw, r.dev_ecgr, r.assumption_held)?;
        }
        Ok(())
    })
}

pub fn write_partition_stats(path: &Path, train: &Dataset, partition: &ClientPartition) -> Result<()> {
    write_file(path, |w| {
        write!(w, "client,size,p_i,entropy")?;
        for k in 0..train.num_classes() {
            write!(w, ",class_{k}")?;
        }
        writeln!(w)?;
        for (i, p) in partition.weights().iter().enumerate() {
            let indices = partition.indices(i);
            let hist = label_histogram(train, indices);
            write!(w, "{i},{},{p},{}", indices.len(), entropy(&hist))?;
            for c in hist {
                write!(w, ",{c}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    })
}

/// Writes every per-run file: top-level metrics and summary, plus a
/// `seed_<S>/` directory per seed with masks, deviations and partition stats.
pub fn write_run(out: &Path, cfg: &RunConfig, train: &Dataset, results: &[SeedResult]) -> Result<()> {
    ensure_dir(out)?;
    write_metrics(&out.join("metrics.csv"), cfg, results)?;
    write_summary(&out.join("summary.csv"), cfg, &summarize(results))?;
    for r in results {
        let dir = seed_dir(out, r.seed);
        ensure_dir(&dir)?;
        write_partition_stats(&dir.join("partition_stats.csv"), train, &r.partition)?;
        let masks: Vec<SelectionMask> = r.arms.iter().flat_map(|a| a.masks.iter().cloned()).collect();
        if r.arms.iter().any(|a| a.ecgr) {
            write_masks(&dir.join("masks.jsonl"), &masks)?;
        }
        if cfg.audit_enabled {
            let records: Vec<DeviationRecord> = r.arms.iter().flat_map(|a| a.deviations.iter().cloned()).collect();
            write_deviations(&dir.join("deviations.csv"), &records)?;
        }
    }
    Ok(())
}
