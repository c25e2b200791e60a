use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ecgr_cli::commands::{self, render_theory_report, THEORY_REPORT};
use ecgr_cli::{Result, RunConfig};

#[derive(Parser)]
#[command(name = "ecgr", version, about = "Federated training with ECGR re-aggregation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured seed and export metrics, masks and deviations.
    Run(RunArgs),
    /// Check the re-aggregation properties on random instances.
    CheckTheory(TheoryArgs),
    /// Write per-client label histograms and entropies.
    PartitionStats(RunArgs),
    /// Train with ECGR and export selection masks and their statistics.
    ExportSelection(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replace the configured seed list with this single seed.
    #[arg(long)]
    seed_override: Option<u64>,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TheoryArgs {
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_path(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed_override {
            cfg.seeds = vec![seed];
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Run(args) => {
            let cfg = args.load()?;
            let results = commands::cmd_run(&cfg)?;
            let arms = results.first().map_or(0, |r| r.arms.len());
            for arm in 0..arms {
                let finals: Vec<f64> =
                    results.iter().filter_map(|r| r.arms[arm].metrics.last().map(|m| m.test_accuracy)).collect();
                let mean = finals.iter().sum::<f64>() / finals.len() as f64;
                let ecgr = results[0].arms[arm].ecgr;
                println!(
                    "{} ecgr={ecgr}: mean final accuracy {mean:.4} over {} seeds",
                    cfg.algo.algorithm.name(),
                    finals.len()
                );
            }
            println!("wrote {}", cfg.output_dir.display());
            Ok(true)
        }
        Command::CheckTheory(a) => {
            let reports = commands::cmd_check_theory(a.samples, a.dim, a.seed, &a.out)?;
            print!("{}", render_theory_report(&reports, a.samples, a.dim, a.seed, Some(3)));
            println!("full report: {}", a.out.join(THEORY_REPORT).display());
            Ok(reports.iter().all(|r| r.all_passed()))
        }
        Command::PartitionStats(args) => {
            let cfg = args.load()?;
            for (seed, p) in commands::cmd_partition_stats(&cfg)? {
                let sizes: Vec<usize> = (0..p.num_clients()).map(|i| p.indices(i).len()).collect();
                println!("seed {seed}: client sizes {sizes:?}");
            }
            Ok(true)
        }
        Command::ExportSelection(args) => {
            let cfg = args.load()?;
            for (seed, late) in commands::cmd_export_selection(&cfg)? {
                println!("seed {seed}: mean late-half fraction {late:.4}");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
