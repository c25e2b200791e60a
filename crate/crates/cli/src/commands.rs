//! Subcommand implementations. Each returns data for the caller to report;
//! files are written under the configured output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ecgr_core::analysis::{error_reduction_suite, magnitude_suite, monotonicity_suite, selection_stats, SuiteReport};
use ecgr_core::data::ClientPartition;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::experiment::{load_datasets, partition_for, run_all, SeedResult};
use crate::export;

pub const THEORY_REPORT: &str = "theory_report.txt";

/// Trains every configured seed (and both arms when paired), then writes
/// `metrics.csv`, `summary.csv` and the per-seed files.
pub fn cmd_run(cfg: &RunConfig) -> Result<Vec<SeedResult>> {
    let data = load_datasets(cfg)?;
    let results = run_all(cfg, &data)?;
    export::write_run(&cfg.output_dir, cfg, &data.train, &results)?;
    Ok(results)
}

/// Writes `seed_<S>/partition_stats.csv` for every seed.
pub fn cmd_partition_stats(cfg: &RunConfig) -> Result<Vec<(u64, ClientPartition)>> {
    cfg.validate()?;
    let data = load_datasets(cfg)?;
    let mut out = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let partition = partition_for(cfg, &data.train, seed)?;
        let dir = export::seed_dir(&cfg.output_dir, seed);
        export::ensure_dir(&dir)?;
        export::write_partition_stats(&dir.join("partition_stats.csv"), &data.train, &partition)?;
        out.push((seed, partition));
    }
    Ok(out)
}

/// Runs the ECGR variant only and writes `seed_<S>/masks.jsonl` and
/// `seed_<S>/selection_stats.csv`. Returns the mean late-half fraction per seed.
pub fn cmd_export_selection(cfg: &RunConfig) -> Result<Vec<(u64, f64)>> {
    let mut cfg = cfg.with_ecgr(true);
    cfg.paired = false;
    cfg.audit_enabled = false;
    let data = load_datasets(&cfg)?;
    let results = run_all(&cfg, &data)?;
    let mut out = Vec::with_capacity(results.len());
    for r in &results {
        let masks = &r.arms[0].masks;
        let dir = export::seed_dir(&cfg.output_dir, r.seed);
        export::ensure_dir(&dir)?;
        export::write_masks(&dir.join("masks.jsonl"), masks)?;
        export::write_selection_stats(&dir.join("selection_stats.csv"), masks)?;
        out.push((r.seed, selection_stats(masks)?.mean));
    }
    Ok(out)
}

/// Runs the three randomized theory suites and writes the full report,
/// counterexample vectors included, to `out/theory_report.txt`.
pub fn cmd_check_theory(samples: usize, dim: usize, seed: u64, out: &Path) -> Result<Vec<SuiteReport>> {
    if samples == 0 {
        return Err(CliError::config("samples", "must be at least 1"));
    }
    if dim == 0 {
        return Err(CliError::config("dim", "must be at least 1"));
    }
    let reports = vec![
        magnitude_suite(samples, dim, seed)?,
        monotonicity_suite(samples, dim, seed)?,
        error_reduction_suite(samples, dim, seed)?,
    ];
    export::ensure_dir(out)?;
    let path = out.join(THEORY_REPORT);
    fs::write(&path, render_theory_report(&reports, samples, dim, seed, None)).map_err(|e| CliError::io(&path, e))?;
    Ok(reports)
}

pub fn suite_line(r: &SuiteReport) -> String {
    let verdict = if r.all_passed() { "PASS" } else { "FAIL" };
    format!("{verdict} {}: {}/{} (rejected draws: {})", r.name, r.passed, r.total, r.rejected)
}

/// Human-readable report; `max_counterexamples` caps how many are listed per suite.
pub fn render_theory_report(
    reports: &[SuiteReport],
    samples: usize,
    dim: usize,
    seed: u64,
    max_counterexamples: Option<usize>,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "samples={samples} dim={dim} seed={seed}");
    for r in reports {
        let _ = writeln!(s, "{}", suite_line(r));
        let limit = max_counterexamples.unwrap_or(usize::MAX);
        for c in r.counterexamples.iter().take(limit) {
            let _ = writeln!(s, "  sample {}: {}", c.sample, c.detail);
            for (name, v) in &c.vectors {
                let _ = writeln!(s, "    {name} = {:?}", v.as_slice());
            }
        }
        if r.counterexamples.len() > limit {
            let _ = writeln!(s, "  ... {} more", r.counterexamples.len() - limit);
        }
    }
    s
}
