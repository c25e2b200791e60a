//! Datasets, synthetic Gaussian blobs, and Dirichlet label partitioning.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::{purpose, RngStream};

/// Labelled samples with a shared feature dimension, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    num_classes: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(dim: usize, num_classes: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidArgument("num_classes must be positive".into()));
        }
        if features.len() != dim * labels.len() {
            return Err(Error::Dimension { expected: dim * labels.len(), found: features.len() });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidArgument(format!("label {bad} out of range for {num_classes} classes")));
        }
        Ok(Dataset { dim, num_classes, features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// New dataset holding the given samples, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.features(i));
            labels.push(self.labels[i]);
        }
        Dataset { dim: self.dim, num_classes: self.num_classes, features, labels }
    }

    /// Splits off the first `per_class` samples of every class (in storage
    /// order) as the first dataset; the rest form the second.
    pub fn split_per_class(&self, per_class: usize) -> (Dataset, Dataset) {
        let mut seen = vec![0usize; self.num_classes];
        let (mut first, mut second) = (Vec::new(), Vec::new());
        for (i, &l) in self.labels.iter().enumerate() {
            if seen[l] < per_class {
                first.push(i);
            } else {
                second.push(i);
            }
            seen[l] += 1;
        }
        (self.subset(&first), self.subset(&second))
    }

    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        by_class
    }
}

/// Isotropic Gaussian blobs. Class `k` is centred at a random unit direction
/// scaled by `separation`; every sample adds unit-variance noise.
///
/// Samples are stored class-major. Centres and noise come from separate
/// streams so a larger `samples_per_class` extends, rather than reshuffles,
/// a smaller draw.
pub fn make_synthetic(
    num_classes: usize,
    dim: usize,
    samples_per_class: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if num_classes == 0 || dim == 0 || samples_per_class == 0 {
        return Err(Error::InvalidArgument("synthetic dataset sizes must be positive".into()));
    }
    if !(separation.is_finite() && separation >= 0.0) {
        return Err(Error::InvalidArgument("separation must be finite and non-negative".into()));
    }
    let mut features = Vec::with_capacity(num_classes * samples_per_class * dim);
    let mut labels = Vec::with_capacity(num_classes * samples_per_class);
    for k in 0..num_classes {
        let mut center_rng = RngStream::derive(seed, purpose::SYNTHETIC_CENTERS, k as u64, 0);
        let mut center: Vec<f64> = (0..dim).map(|_| center_rng.normal()).collect();
        let n = libm::sqrt(center.iter().map(|c| c * c).sum::<f64>());
        for c in &mut center {
            *c *= if n > 0.0 { separation / n } else { 0.0 };
        }
        let mut noise = RngStream::derive(seed, purpose::SYNTHETIC_NOISE, k as u64, 0);
        for _ in 0..samples_per_class {
            features.extend(center.iter().map(|c| c + noise.normal()));
            labels.push(k);
        }
    }
    Dataset::new(dim, num_classes, features, labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSpec {
    pub num_clients: usize,
    /// Dirichlet concentration; small values give skewed label mixes.
    pub alpha: f64,
    pub seed: u64,
    pub min_batches: usize,
    pub batch_size: usize,
}

impl PartitionSpec {
    pub fn min_samples(&self) -> usize {
        self.min_batches * self.batch_size
    }
}

/// Disjoint per-client index lists with size-proportional weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientPartition {
    clients: Vec<Vec<usize>>,
    weights: Vec<f64>,
}

impl ClientPartition {
    /// Builds a partition from explicit index lists; weights are `|D_i| / |D|`.
    pub fn from_indices(mut clients: Vec<Vec<usize>>) -> Result<Self> {
        let total: usize = clients.iter().map(Vec::len).sum();
        if clients.is_empty() || total == 0 {
            return Err(Error::Partition("partition holds no samples".into()));
        }
        for c in &mut clients {
            c.sort_unstable();
        }
        let mut all: Vec<usize> = clients.iter().flatten().copied().collect();
        all.sort_unstable();
        if all.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Partition("index assigned to more than one client".into()));
        }
        let weights = clients.iter().map(|c| c.len() as f64 / total as f64).collect();
        Ok(ClientPartition { clients, weights })
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn indices(&self, client: usize) -> &[usize] {
        &self.clients[client]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total(&self) -> usize {
        self.clients.iter().map(Vec::len).sum()
    }
}

/// Dirichlet label partition.
///
/// For each class in ascending order a proportion vector over clients is
/// drawn from `Dirichlet(alpha, ..., alpha)`; the class's samples are
/// shuffled and cut at the cumulative proportions. Clients below
/// `min_batches * batch_size` samples are then topped up one sample at a time
/// from the currently largest client (lowest index on ties), taking that
/// client's most recently assigned sample.
pub fn dirichlet_partition(ds: &Dataset, spec: &PartitionSpec) -> Result<ClientPartition> {
    if spec.num_clients == 0 {
        return Err(Error::Partition("num_clients must be positive".into()));
    }
    if !(spec.alpha.is_finite() && spec.alpha > 0.0) {
        return Err(Error::Partition(format!("alpha must be positive, got {}", spec.alpha)));
    }
    let need = spec.min_samples();
    if need * spec.num_clients > ds.len() {
        return Err(Error::Partition(format!(
            "{} clients x {} samples exceeds dataset size {}",
            spec.num_clients,
            need,
            ds.len()
        )));
    }

    let mut clients = vec![Vec::new(); spec.num_clients];
    for (class, mut members) in ds.class_indices().into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let mut rng = RngStream::derive(spec.seed, purpose::PARTITION, class as u64, 0);
        let props = rng.dirichlet(spec.alpha, spec.num_clients);
        rng.shuffle(&mut members);
        let n = members.len();
        let mut start = 0;
        let mut cum = 0.0;
        for (c, p) in props.iter().enumerate() {
            cum += p;
            let end = if c + 1 == spec.num_clients { n } else { ((cum * n as f64) as usize).clamp(start, n) };
            clients[c].extend_from_slice(&members[start..end]);
            start = end;
        }
    }

    while let Some(deficit) = (0..clients.len()).find(|&c| clients[c].len() < need) {
        let donor = (0..clients.len())
            .max_by(|&a, &b| clients[a].len().cmp(&clients[b].len()).then(b.cmp(&a)))
            .expect("at least one client");
        // Feasibility was checked up front, so the donor always has spare samples.
        debug_assert!(clients[donor].len() > need);
        let moved = clients[donor].pop().expect("donor is non-empty");
        clients[deficit].push(moved);
    }

    ClientPartition::from_indices(clients)
}

/// Shuffles one client's samples and chunks them into mini-batches. The
/// final batch may be short; the number of batches is the client's local
/// step count for the round.
pub fn epoch_batches(part: &ClientPartition, client: usize, batch_size: usize, rng: &mut RngStream) -> Vec<Vec<usize>> {
    assert!(batch_size > 0, "batch_size must be positive");
    let mut order = part.indices(client).to_vec();
    rng.shuffle(&mut order);
    order.chunks(batch_size).map(|c| c.to_vec()).collect()
}

/// Per-class sample counts over `indices`.
pub fn label_histogram(ds: &Dataset, indices: &[usize]) -> Vec<usize> {
    let mut counts = vec![0usize; ds.num_classes()];
    for &i in indices {
        counts[ds.label(i)] += 1;
    }
    counts
}

/// Shannon entropy (nats) of a count histogram; zero for an empty one.
pub fn entropy(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * libm::log(p)
        })
        .fold(0.0, |acc, h| acc + h)
}
