//! Flat `key=value` run configuration.
//!
//! One assignment per line; `#` starts a comment; blank lines are ignored.
//! Keys use dotted sections (`ecgr.beta=0.2`). Unknown or repeated keys and
//! unparsable values are errors naming the key. Absent keys take defaults.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ecgr_core::fedopt::{AlgoConfig, Algorithm};
use ecgr_core::model::{Activation, ModelKind, ModelSpec};

use crate::error::{CliError, Result};

pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 42, 999, 2025];

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synthetic {
        num_classes: usize,
        dim: usize,
        samples_per_class: usize,
        test_samples_per_class: usize,
        separation: f64,
        seed: u64,
    },
    Mnist {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        train_limit: Option<usize>,
        test_limit: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelChoice {
    pub kind: ModelKind,
    pub hidden: usize,
    pub activation: Activation,
}

impl ModelChoice {
    pub fn spec(&self, input_dim: usize, num_classes: usize) -> ModelSpec {
        match self.kind {
            ModelKind::Logistic => ModelSpec::logistic(input_dim, num_classes),
            ModelKind::Mlp => ModelSpec::mlp(input_dim, self.hidden, num_classes, self.activation),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionConfig {
    pub clients: usize,
    pub alpha: f64,
    pub min_batches: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub model: ModelChoice,
    pub partition: PartitionConfig,
    /// Each seed drives the partition, model initialisation and batch order.
    pub seeds: Vec<u64>,
    pub algo: AlgoConfig,
    /// Run the baseline and the ECGR variant side by side on identical streams.
    pub paired: bool,
    pub audit_enabled: bool,
    pub audit_every: usize,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: DatasetSource::Synthetic {
                num_classes: 10,
                dim: 32,
                samples_per_class: 600,
                test_samples_per_class: 100,
                separation: 2.0,
                seed: 1234,
            },
            model: ModelChoice { kind: ModelKind::Logistic, hidden: 64, activation: Activation::Tanh },
            partition: PartitionConfig { clients: 10, alpha: 0.01, min_batches: 2 },
            seeds: DEFAULT_SEEDS.to_vec(),
            algo: AlgoConfig::default(),
            paired: false,
            audit_enabled: false,
            audit_every: 1,
            output_dir: PathBuf::from("out"),
        }
    }
}

const KEYS: &[&str] = &[
    "dataset",
    "dataset.num_classes",
    "dataset.dim",
    "dataset.samples_per_class",
    "dataset.test_samples_per_class",
    "dataset.separation",
    "dataset.seed",
    "dataset.train_images",
    "dataset.train_labels",
    "dataset.test_images",
    "dataset.test_labels",
    "dataset.train_limit",
    "dataset.test_limit",
    "model.kind",
    "model.hidden",
    "model.activation",
    "partition.clients",
    "partition.alpha",
    "partition.min_batches",
    "seeds",
    "algorithm",
    "fedprox.mu",
    "ecgr.enabled",
    "ecgr.beta",
    "ecgr.paired",
    "train.rounds",
    "train.lr",
    "train.lr_decay_every",
    "train.lr_decay_factor",
    "train.batch_size",
    "train.momentum",
    "audit.enabled",
    "audit.every",
    "output.dir",
];

struct Entries {
    map: BTreeMap<String, String>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn parse<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| CliError::config(key, format!("cannot parse `{v}`"))),
        }
    }

    fn set<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.parse(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn bool(&mut self, key: &str, slot: &mut bool) -> Result<()> {
        match self.take(key).as_deref() {
            None => Ok(()),
            Some("true") => {
                *slot = true;
                Ok(())
            }
            Some("false") => {
                *slot = false;
                Ok(())
            }
            Some(v) => Err(CliError::config(key, format!("expected true or false, got `{v}`"))),
        }
    }

    fn path(&mut self, key: &str) -> Result<PathBuf> {
        self.take(key).map(PathBuf::from).ok_or_else(|| CliError::config(key, "required when dataset=mnist"))
    }
}

fn lex(text: &str) -> Result<Entries> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) =
            line.split_once('=').ok_or_else(|| CliError::config(format!("line {}", n + 1), "expected key=value"))?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(CliError::config(key, "unknown key"));
        }
        if map.insert(key.to_string(), value.to_string()).is_some() {
            return Err(CliError::config(key, "key given more than once"));
        }
    }
    Ok(Entries { map })
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut e = lex(text)?;
        let mut cfg = RunConfig::default();

        let source = e.take("dataset").unwrap_or_else(|| "synthetic".into());
        cfg.dataset = match source.as_str() {
            "synthetic" => {
                let DatasetSource::Synthetic {
                    mut num_classes,
                    mut dim,
                    mut samples_per_class,
                    mut test_samples_per_class,
                    mut separation,
                    mut seed,
                } = cfg.dataset
                else {
                    unreachable!("default dataset is synthetic")
                };
                e.set("dataset.num_classes", &mut num_classes)?;
                e.set("dataset.dim", &mut dim)?;
                e.set("dataset.samples_per_class", &mut samples_per_class)?;
                e.set("dataset.test_samples_per_class", &mut test_samples_per_class)?;
                e.set("dataset.separation", &mut separation)?;
                e.set("dataset.seed", &mut seed)?;
                DatasetSource::Synthetic {
                    num_classes,
                    dim,
                    samples_per_class,
                    test_samples_per_class,
                    separation,
                    seed,
                }
            }
            "mnist" => DatasetSource::Mnist {
                train_images: e.path("dataset.train_images")?,
                train_labels: e.path("dataset.train_labels")?,
                test_images: e.path("dataset.test_images")?,
                test_labels: e.path("dataset.test_labels")?,
                train_limit: e.parse("dataset.train_limit")?,
                test_limit: e.parse("dataset.test_limit")?,
            },
            other => return Err(CliError::config("dataset", format!("expected synthetic or mnist, got `{other}`"))),
        };

        if let Some(kind) = e.take("model.kind") {
            cfg.model.kind = match kind.as_str() {
                "logistic" => ModelKind::Logistic,
                "mlp" => ModelKind::Mlp,
                other => {
                    return Err(CliError::config("model.kind", format!("expected logistic or mlp, got `{other}`")))
                }
            };
        }
        e.set("model.hidden", &mut cfg.model.hidden)?;
        if let Some(act) = e.take("model.activation") {
            cfg.model.activation = match act.as_str() {
                "tanh" => Activation::Tanh,
                "relu" => Activation::Relu,
                other => {
                    return Err(CliError::config("model.activation", format!("expected tanh or relu, got `{other}`")))
                }
            };
        }

        e.set("partition.clients", &mut cfg.partition.clients)?;
        e.set("partition.alpha", &mut cfg.partition.alpha)?;
        e.set("partition.min_batches", &mut cfg.partition.min_batches)?;

        if let Some(list) = e.take("seeds") {
            cfg.seeds =
                list.split(',').map(|s| s.trim().parse::<u64>()).collect::<std::result::Result<_, _>>().map_err(
                    |_| CliError::config("seeds", format!("expected comma-separated integers, got `{list}`")),
                )?;
        }

        if let Some(name) = e.take("algorithm") {
            cfg.algo.algorithm = Algorithm::from_name(&name).ok_or_else(|| {
                CliError::config("algorithm", format!("expected fedavg, fedprox, fednova or scaffold, got `{name}`"))
            })?;
        }
        let mu: Option<f64> = e.parse("fedprox.mu")?;
        cfg.algo.mu = mu.unwrap_or(0.0);
        e.bool("ecgr.enabled", &mut cfg.algo.ecgr_enabled)?;
        e.set("ecgr.beta", &mut cfg.algo.beta)?;
        e.bool("ecgr.paired", &mut cfg.paired)?;
        e.set("train.rounds", &mut cfg.algo.rounds)?;
        e.set("train.lr", &mut cfg.algo.lr)?;
        e.set("train.lr_decay_every", &mut cfg.algo.lr_decay_every)?;
        e.set("train.lr_decay_factor", &mut cfg.algo.lr_decay_factor)?;
        e.set("train.batch_size", &mut cfg.algo.batch_size)?;
        e.set("train.momentum", &mut cfg.algo.momentum)?;
        e.bool("audit.enabled", &mut cfg.audit_enabled)?;
        e.set("audit.every", &mut cfg.audit_every)?;
        if let Some(dir) = e.take("output.dir") {
            cfg.output_dir = PathBuf::from(dir);
        }
        if let Some(key) = e.map.keys().next() {
            return Err(CliError::config(key.clone(), format!("not valid with dataset={source}")));
        }

        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(CliError::config("seeds", "at least one seed is required"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::config("seeds", "seeds must be distinct"));
        }
        if let DatasetSource::Synthetic {
            num_classes,
            dim,
            samples_per_class,
            test_samples_per_class,
            separation,
            ..
        } = &self.dataset
        {
            for (key, v) in [
                ("dataset.num_classes", *num_classes),
                ("dataset.dim", *dim),
                ("dataset.samples_per_class", *samples_per_class),
                ("dataset.test_samples_per_class", *test_samples_per_class),
            ] {
                if v == 0 {
                    return Err(CliError::config(key, "must be positive"));
                }
            }
            if !(separation.is_finite() && *separation >= 0.0) {
                return Err(CliError::config("dataset.separation", "must be finite and non-negative"));
            }
        }
        if self.model.kind == ModelKind::Mlp && self.model.hidden == 0 {
            return Err(CliError::config("model.hidden", "must be positive"));
        }
        if self.partition.clients == 0 {
            return Err(CliError::config("partition.clients", "must be positive"));
        }
        if !(self.partition.alpha.is_finite() && self.partition.alpha > 0.0) {
            return Err(CliError::config("partition.alpha", "must be positive"));
        }
        if self.partition.min_batches == 0 {
            return Err(CliError::config("partition.min_batches", "must be positive"));
        }

        let a = &self.algo;
        if !(0.0..=1.0).contains(&a.beta) {
            return Err(CliError::config("ecgr.beta", format!("must lie in [0, 1], got {}", a.beta)));
        }
        if a.algorithm == Algorithm::FedProx && !(a.mu > 0.0 && a.mu.is_finite()) {
            return Err(CliError::config("fedprox.mu", "fedprox requires a positive mu"));
        }
        if a.algorithm != Algorithm::FedProx && a.mu != 0.0 {
            return Err(CliError::config("fedprox.mu", "only valid with algorithm=fedprox"));
        }
        if a.rounds == 0 {
            return Err(CliError::config("train.rounds", "must be positive"));
        }
        if !(a.lr.is_finite() && a.lr > 0.0) {
            return Err(CliError::config("train.lr", "must be positive"));
        }
        if !(a.lr_decay_factor.is_finite() && a.lr_decay_factor > 0.0) {
            return Err(CliError::config("train.lr_decay_factor", "must be positive"));
        }
        if a.batch_size == 0 {
            return Err(CliError::config("train.batch_size", "must be positive"));
        }
        if !(0.0..1.0).contains(&a.momentum) {
            return Err(CliError::config("train.momentum", "must lie in [0, 1)"));
        }
        if self.audit_enabled && a.momentum != 0.0 {
            return Err(CliError::config("audit.enabled", "the deviation audit requires train.momentum=0"));
        }
        a.validate().map_err(|err| CliError::config("algorithm", err.to_string()))
    }

    /// Copy with `algo.ecgr_enabled` forced; used to build the two arms of a paired run.
    pub fn with_ecgr(&self, enabled: bool) -> RunConfig {
        let mut c = self.clone();
        c.algo.ecgr_enabled = enabled;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(err: CliError) -> String {
        match err {
            CliError::Config { key, .. } => key,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let a = &cfg.algo;
        assert_eq!(a.beta, 0.2);
        assert_eq!(cfg.partition.alpha, 0.01);
        assert_eq!(cfg.partition.clients, 10);
        assert_eq!(a.rounds, 100);
        assert_eq!(a.lr, 0.001);
        assert_eq!((a.lr_decay_every, a.lr_decay_factor), (10, 0.5));
        assert_eq!(a.batch_size, 128);
        assert_eq!(a.momentum, 0.9);
        assert_eq!(cfg.seeds, vec![0, 1, 42, 999, 2025]);
        assert!(a.ecgr_enabled);
        assert_eq!(a.algorithm, Algorithm::FedAvg);
    }

    #[test]
    fn comments_and_whitespace() {
        let cfg = RunConfig::parse("# header\n  ecgr.beta = 0.5  # inline\n\nseeds=3, 4\n").unwrap();
        assert_eq!(cfg.algo.beta, 0.5);
        assert_eq!(cfg.seeds, vec![3, 4]);
    }

    #[test]
    fn beta_out_of_range() {
        assert_eq!(key_of(RunConfig::parse("ecgr.beta=1.5").unwrap_err()), "ecgr.beta");
        assert_eq!(key_of(RunConfig::parse("ecgr.beta=-0.1").unwrap_err()), "ecgr.beta");
        assert!(RunConfig::parse("ecgr.beta=1").is_ok());
        assert!(RunConfig::parse("ecgr.beta=0").is_ok());
    }

    #[test]
    fn fedprox_needs_mu() {
        assert_eq!(key_of(RunConfig::parse("algorithm=fedprox").unwrap_err()), "fedprox.mu");
        assert_eq!(key_of(RunConfig::parse("algorithm=fedprox\nfedprox.mu=0").unwrap_err()), "fedprox.mu");
        let cfg = RunConfig::parse("algorithm=fedprox\nfedprox.mu=0.01").unwrap();
        assert_eq!(cfg.algo.mu, 0.01);
        assert_eq!(key_of(RunConfig::parse("fedprox.mu=0.01").unwrap_err()), "fedprox.mu");
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(key_of(RunConfig::parse("ecgr.gamma=1").unwrap_err()), "ecgr.gamma");
        assert_eq!(key_of(RunConfig::parse("train.rounds=ten").unwrap_err()), "train.rounds");
        assert_eq!(key_of(RunConfig::parse("train.rounds=5\ntrain.rounds=6").unwrap_err()), "train.rounds");
        assert_eq!(key_of(RunConfig::parse("ecgr.enabled=yes").unwrap_err()), "ecgr.enabled");
        assert_eq!(key_of(RunConfig::parse("seeds=").unwrap_err()), "seeds");
        assert_eq!(key_of(RunConfig::parse("algorithm=sgd").unwrap_err()), "algorithm");
        assert_eq!(key_of(RunConfig::parse("partition.alpha=0").unwrap_err()), "partition.alpha");
        assert_eq!(key_of(RunConfig::parse("train.momentum=1").unwrap_err()), "train.momentum");
        assert_eq!(key_of(RunConfig::parse("audit.enabled=true").unwrap_err()), "audit.enabled");
        assert_eq!(key_of(RunConfig::parse("dataset=mnist").unwrap_err()), "dataset.train_images");
        assert_eq!(key_of(RunConfig::parse("no equals sign").unwrap_err()), "line 1");
        assert_eq!(key_of(RunConfig::parse("dataset.train_limit=5").unwrap_err()), "dataset.train_limit");
    }

    #[test]
    fn mnist_paths() {
        let cfg = RunConfig::parse(
            "dataset=mnist\ndataset.train_images=a\ndataset.train_labels=b\ndataset.test_images=c\ndataset.test_labels=d\ndataset.train_limit=100",
        )
        .unwrap();
        match cfg.dataset {
            DatasetSource::Mnist { train_images, train_limit, test_limit, .. } => {
                assert_eq!(train_images, PathBuf::from("a"));
                assert_eq!(train_limit, Some(100));
                assert_eq!(test_limit, None);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
