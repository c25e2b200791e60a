//! Dataset loading and per-seed experiment execution.

use std::thread;

use ecgr_core::analysis::{DeviationAudit, DeviationRecord};
use ecgr_core::data::{dirichlet_partition, make_synthetic, ClientPartition, Dataset, PartitionSpec};
use ecgr_core::ecgr::SelectionMask;
use ecgr_core::fedopt::{run_training, RoundMetrics, SelectionRecorder};
use ecgr_core::model::ModelSpec;

use crate::config::{DatasetSource, RunConfig};
use crate::error::Result;
use crate::idx::load_idx;

#[derive(Debug, Clone)]
pub struct Datasets {
    pub train: Dataset,
    pub test: Dataset,
}

pub fn load_datasets(cfg: &RunConfig) -> Result<Datasets> {
    match &cfg.dataset {
        DatasetSource::Synthetic { num_classes, dim, samples_per_class, test_samples_per_class, separation, seed } => {
            let all =
                make_synthetic(*num_classes, *dim, samples_per_class + test_samples_per_class, *separation, *seed)?;
            let (train, test) = all.split_per_class(*samples_per_class);
            Ok(Datasets { train, test })
        }
        DatasetSource::Mnist { train_images, train_labels, test_images, test_labels, train_limit, test_limit } => {
            let truncate = |ds: Dataset, limit: &Option<usize>| match limit {
                Some(n) if *n < ds.len() => ds.subset(&(0..*n).collect::<Vec<_>>()),
                _ => ds,
            };
            let train = truncate(load_idx(train_images, train_labels)?, train_limit);
            let test = truncate(load_idx(test_images, test_labels)?, test_limit);
            Ok(Datasets { train, test })
        }
    }
}

pub fn model_spec(cfg: &RunConfig, data: &Datasets) -> ModelSpec {
    let classes = data.train.num_classes().max(data.test.num_classes());
    cfg.model.spec(data.train.dim(), classes)
}

pub fn partition_for(cfg: &RunConfig, train: &Dataset, seed: u64) -> Result<ClientPartition> {
    let spec = PartitionSpec {
        num_clients: cfg.partition.clients,
        alpha: cfg.partition.alpha,
        seed,
        min_batches: cfg.partition.min_batches,
        batch_size: cfg.algo.batch_size,
    };
    Ok(dirichlet_partition(train, &spec)?)
}

/// One training run: a fixed seed with ECGR either on or off.
#[derive(Debug, Clone)]
pub struct ArmResult {
    pub ecgr: bool,
    pub metrics: Vec<RoundMetrics>,
    pub masks: Vec<SelectionMask>,
    pub deviations: Vec<DeviationRecord>,
}

#[derive(Debug, Clone)]
pub struct SeedResult {
    pub seed: u64,
    pub partition: ClientPartition,
    /// Baseline first when paired.
    pub arms: Vec<ArmResult>,
}

/// ECGR flags of the arms a config runs, in output order.
pub fn arm_flags(cfg: &RunConfig) -> Vec<bool> {
    if cfg.paired {
        vec![false, true]
    } else {
        vec![cfg.algo.ecgr_enabled]
    }
}

/// Trains every arm for one seed. Arms share the partition and every random
/// stream, so paired differences isolate the effect of re-aggregation. The
/// deviation audit, when enabled, observes the last arm.
pub fn run_seed(cfg: &RunConfig, data: &Datasets, seed: u64) -> Result<SeedResult> {
    let spec = model_spec(cfg, data);
    let partition = partition_for(cfg, &data.train, seed)?;
    let flags = arm_flags(cfg);
    let mut arms = Vec::with_capacity(flags.len());
    for (k, &ecgr) in flags.iter().enumerate() {
        let algo = cfg.with_ecgr(ecgr).algo;
        let mut recorder = SelectionRecorder::default();
        let audit_here = cfg.audit_enabled && k + 1 == flags.len();
        let (outcome, deviations) = if audit_here {
            let audit = DeviationAudit::new(spec, &data.train, cfg.algo.beta, cfg.audit_every);
            let mut obs = (recorder, audit);
            let out = run_training(&data.train, &data.test, &partition, &algo, &spec, seed, &mut obs)?;
            recorder = obs.0;
            (out, obs.1.records)
        } else {
            (run_training(&data.train, &data.test, &partition, &algo, &spec, seed, &mut recorder)?, Vec::new())
        };
        arms.push(ArmResult { ecgr, metrics: outcome.metrics, masks: recorder.masks, deviations });
    }
    Ok(SeedResult { seed, partition, arms })
}

/// Runs all seeds, one thread each, and returns results in seed-list order.
pub fn run_all(cfg: &RunConfig, data: &Datasets) -> Result<Vec<SeedResult>> {
    cfg.validate()?;
    thread::scope(|s| {
        let handles: Vec<_> = cfg.seeds.iter().map(|&seed| s.spawn(move || run_seed(cfg, data, seed))).collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p))).collect()
    })
}
