//! Federated training: local momentum SGD, the four server algorithms, and
//! the optional ECGR stage applied to each client's update before upload.

use alloc::format;
use alloc::vec::Vec;

use crate::data::{epoch_batches, ClientPartition, Dataset};
use crate::ecgr::{herding_select, re_aggregate, EcgrSplit, GradientSet, ReaggregatedGradient, SelectionMask};
use crate::error::{check_len, Error, Result};
use crate::linalg::ParamVector;
use crate::model::{evaluate, init_params, Classifier, ModelSpec, Objective};
use crate::rng::{purpose, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    FedAvg,
    FedProx,
    FedNova,
    Scaffold,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::FedAvg, Algorithm::FedProx, Algorithm::FedNova, Algorithm::Scaffold];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::FedAvg => "fedavg",
            Algorithm::FedProx => "fedprox",
            Algorithm::FedNova => "fednova",
            Algorithm::Scaffold => "scaffold",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Algorithm::ALL.into_iter().find(|a| a.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgoConfig {
    pub algorithm: Algorithm,
    pub ecgr_enabled: bool,
    pub beta: f64,
    /// Proximal coefficient; only meaningful for FedProx.
    pub mu: f64,
    pub lr: f64,
    /// Halving period in rounds; zero disables decay.
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub rounds: usize,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        AlgoConfig {
            algorithm: Algorithm::FedAvg,
            ecgr_enabled: true,
            beta: 0.2,
            mu: 0.0,
            lr: 0.001,
            lr_decay_every: 10,
            lr_decay_factor: 0.5,
            momentum: 0.9,
            batch_size: 128,
            rounds: 100,
        }
    }
}

impl AlgoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.into()));
        if !(0.0..=1.0).contains(&self.beta) {
            return bad("beta must lie in [0, 1]");
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return bad("mu must be finite and non-negative");
        }
        if self.mu > 0.0 && self.algorithm != Algorithm::FedProx {
            return bad("mu is only used by fedprox");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("learning rate must be positive");
        }
        if !(self.lr_decay_factor.is_finite() && self.lr_decay_factor > 0.0) {
            return bad("lr decay factor must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        Ok(())
    }

    /// Local learning rate in effect during round `round` (0-based).
    pub fn lr_at(&self, round: usize) -> f64 {
        if self.lr_decay_every == 0 {
            return self.lr;
        }
        self.lr * libm::pow(self.lr_decay_factor, (round / self.lr_decay_every) as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub client_id: usize,
    /// Scaffold's local control variate `c_i`.
    pub control_variate: Option<ParamVector>,
}

impl ClientState {
    pub fn new(client_id: usize, algorithm: Algorithm, num_params: usize) -> Self {
        ClientState {
            client_id,
            control_variate: (algorithm == Algorithm::Scaffold).then(|| ParamVector::zeros(num_params)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub w: ParamVector,
    pub round: usize,
    /// Scaffold's global control variate `c`.
    pub control_variate: Option<ParamVector>,
}

impl ServerState {
    /// The global learning rate is fixed at one.
    pub const GLOBAL_LR: f64 = 1.0;

    pub fn new(w: ParamVector, algorithm: Algorithm) -> Self {
        let control_variate = (algorithm == Algorithm::Scaffold).then(|| ParamVector::zeros(w.len()));
        ServerState { w, round: 0, control_variate }
    }
}

/// What one client's local pass produced.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTrajectory {
    pub steps: GradientSet,
    pub final_params: ParamVector,
}

/// Scaffold's `(c_i, c)` pair, applied as `grad - c_i + c`.
#[derive(Debug, Clone, Copy)]
pub struct Correction<'a> {
    pub local: &'a ParamVector,
    pub global: &'a ParamVector,
}

/// Runs one local epoch from `w_t` over `batches` with heavy-ball momentum.
///
/// The raw direction for step `λ` is the batch gradient, plus
/// `mu * (w^λ - w_t)` for FedProx, or minus `c_i` plus `c` for Scaffold. The
/// momentum buffer starts at zero; every applied displacement `w^λ - w^{λ+1}`
/// is recorded.
pub fn local_train<O: Objective + ?Sized>(
    objective: &O,
    batches: &[Vec<usize>],
    w_t: &ParamVector,
    cfg: &AlgoConfig,
    lr: f64,
    correction: Option<Correction<'_>>,
) -> Result<LocalTrajectory> {
    if batches.len() < 2 {
        return Err(Error::GradientSetTooSmall { tau: batches.len() });
    }
    check_len(objective.num_params(), w_t.len())?;
    let n = w_t.len();
    let mut w = w_t.clone();
    let mut momentum = ParamVector::zeros(n);
    let mut steps = Vec::with_capacity(batches.len());

    for batch in batches {
        let mut direction = objective.loss_and_grad(&w, batch)?.grad;
        match cfg.algorithm {
            Algorithm::FedProx if cfg.mu != 0.0 => {
                let drift = w.sub(w_t)?;
                direction.add_scaled(cfg.mu, &drift)?;
            }
            Algorithm::Scaffold => {
                if let Some(c) = correction {
                    direction.add_scaled(-1.0, c.local)?;
                    direction.add_scaled(1.0, c.global)?;
                }
            }
            _ => {}
        }
        let m = momentum.as_mut_slice();
        for (mi, di) in m.iter_mut().zip(direction.iter()) {
            *mi = cfg.momentum * *mi + di;
        }
        let mut next = w.clone();
        next.add_scaled(-lr, &momentum)?;
        steps.push(w.sub(&next)?);
        w = next;
    }
    if !w.is_finite() {
        return Err(Error::InvalidArgument("local training diverged to a non-finite value".into()));
    }
    Ok(LocalTrajectory { steps: GradientSet::new(steps)?, final_params: w })
}

/// One client's contribution to a round.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    /// Vector sent to the server (already divided by `tau` for FedNova).
    pub upload: ParamVector,
    pub tau: usize,
    /// Scaffold's refreshed `c_i'`.
    pub new_control_variate: Option<ParamVector>,
    pub split: Option<EcgrSplit>,
    pub reaggregated: Option<ReaggregatedGradient>,
    pub trajectory: LocalTrajectory,
}

/// Local training followed by optional ECGR, FedNova normalisation, and the
/// Scaffold control-variate refresh.
///
/// ECGR runs before the FedNova division. Scaffold's `c_i'` is computed from
/// the raw local endpoint, so ECGR only changes what is uploaded.
pub fn client_round<O: Objective + ?Sized>(
    objective: &O,
    batches: &[Vec<usize>],
    client: &ClientState,
    w_t: &ParamVector,
    cfg: &AlgoConfig,
    lr: f64,
    server_c: Option<&ParamVector>,
) -> Result<ClientUpdate> {
    let correction = match (cfg.algorithm, client.control_variate.as_ref(), server_c) {
        (Algorithm::Scaffold, Some(local), Some(global)) => Some(Correction { local, global }),
        (Algorithm::Scaffold, _, _) => {
            return Err(Error::InvalidArgument("scaffold needs both control variates".into()))
        }
        _ => None,
    };
    let trajectory = local_train(objective, batches, w_t, cfg, lr, correction)?;
    let tau = trajectory.steps.tau();

    let (mut upload, split, reaggregated) = if cfg.ecgr_enabled {
        let split = herding_select(&trajectory.steps, cfg.beta)?;
        let re = re_aggregate(&trajectory.steps, &split)?;
        (re.g_prime.clone(), Some(split), Some(re))
    } else {
        (trajectory.steps.total(), None, None)
    };

    if cfg.algorithm == Algorithm::FedNova {
        upload = upload.scale(1.0 / tau as f64);
    }

    let new_control_variate = match correction {
        Some(c) => {
            let drift = w_t.sub(&trajectory.final_params)?;
            let mut next = c.local.sub(c.global)?;
            next.add_scaled(1.0 / (tau as f64 * lr), &drift)?;
            Some(next)
        }
        None => None,
    };

    Ok(ClientUpdate { upload, tau, new_control_variate, split, reaggregated, trajectory })
}

/// `Σ p_i v_i` in ascending client order.
pub fn weighted_sum(vectors: &[ParamVector], weights: &[f64]) -> Result<ParamVector> {
    if vectors.len() != weights.len() || vectors.is_empty() {
        return Err(Error::Aggregation(format!("{} vectors but {} weights", vectors.len(), weights.len())));
    }
    let mut acc = ParamVector::zeros(vectors[0].len());
    for (v, p) in vectors.iter().zip(weights) {
        acc.add_scaled(*p, v)?;
    }
    Ok(acc)
}

/// Effective FedNova step count `Σ p_i τ_i`.
pub fn effective_tau(weights: &[f64], taus: &[usize]) -> f64 {
    weights.iter().zip(taus).map(|(p, t)| p * *t as f64).sum()
}

/// Server-side aggregate `G_t` of the client uploads.
pub fn server_aggregate(
    uploads: &[ParamVector],
    weights: &[f64],
    taus: &[usize],
    algorithm: Algorithm,
) -> Result<ParamVector> {
    if taus.len() != uploads.len() {
        return Err(Error::Aggregation(format!("{} uploads but {} step counts", uploads.len(), taus.len())));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Aggregation(format!("client weights sum to {total}, expected 1")));
    }
    let mean = weighted_sum(uploads, weights)?;
    Ok(match algorithm {
        Algorithm::FedNova => mean.scale(effective_tau(weights, taus)),
        _ => mean,
    })
}

/// `w_{t+1} = w_t - G`; Scaffold also installs the new global control variate.
pub fn global_update(
    server: ServerState,
    g: &ParamVector,
    new_control_variate: Option<ParamVector>,
) -> Result<ServerState> {
    let mut w = server.w;
    w.add_scaled(-ServerState::GLOBAL_LR, g)?;
    let control_variate = match (server.control_variate, new_control_variate) {
        (Some(old), Some(new)) => {
            check_len(old.len(), new.len())?;
            Some(new)
        }
        (old, _) => old,
    };
    Ok(ServerState { w, round: server.round + 1, control_variate })
}

/// Per-round test metrics; `round` counts completed rounds, starting at 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub test_accuracy: f64,
    pub test_loss: f64,
}

/// Read-only hooks into [`run_training`]. Rounds are 0-based here.
pub trait RoundObserver {
    fn round_start(&mut self, _round: usize, _server: &ServerState, _lr: f64) -> Result<()> {
        Ok(())
    }

    fn client_done(&mut self, _round: usize, _client: usize, _w_t: &ParamVector, _update: &ClientUpdate) -> Result<()> {
        Ok(())
    }

    fn round_end(&mut self, _round: usize, _server: &ServerState) -> Result<()> {
        Ok(())
    }
}

impl RoundObserver for () {}

impl<A: RoundObserver, B: RoundObserver> RoundObserver for (A, B) {
    fn round_start(&mut self, round: usize, server: &ServerState, lr: f64) -> Result<()> {
        self.0.round_start(round, server, lr)?;
        self.1.round_start(round, server, lr)
    }

    fn client_done(&mut self, round: usize, client: usize, w_t: &ParamVector, update: &ClientUpdate) -> Result<()> {
        self.0.client_done(round, client, w_t, update)?;
        self.1.client_done(round, client, w_t, update)
    }

    fn round_end(&mut self, round: usize, server: &ServerState) -> Result<()> {
        self.0.round_end(round, server)?;
        self.1.round_end(round, server)
    }
}

/// Collects the ECGR selection of every (round, client).
#[derive(Debug, Default, Clone)]
pub struct SelectionRecorder {
    pub masks: Vec<SelectionMask>,
}

impl RoundObserver for SelectionRecorder {
    fn client_done(&mut self, round: usize, client: usize, _w_t: &ParamVector, update: &ClientUpdate) -> Result<()> {
        if let Some(split) = &update.split {
            self.masks.push(SelectionMask {
                round,
                client,
                tau: update.tau,
                selected_indices: split.pi.clone(),
                beta: split.beta,
            });
        }
        Ok(())
    }
}

/// Global parameters after every round.
#[derive(Debug, Default, Clone)]
pub struct TrajectoryRecorder {
    pub params: Vec<ParamVector>,
}

impl RoundObserver for TrajectoryRecorder {
    fn round_end(&mut self, _round: usize, server: &ServerState) -> Result<()> {
        self.params.push(server.w.clone());
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    pub metrics: Vec<RoundMetrics>,
    pub final_state: ServerState,
}

/// Full-participation federated training for `cfg.rounds` rounds.
///
/// Every random draw comes from a stream keyed on `seed`: the initial model
/// from one stream and each client's batch order from a stream keyed on
/// (client, round). Clients are processed and aggregated in ascending order.
pub fn run_training<Obs: RoundObserver + ?Sized>(
    train: &Dataset,
    test: &Dataset,
    partition: &ClientPartition,
    cfg: &AlgoConfig,
    model: &ModelSpec,
    seed: u64,
    observer: &mut Obs,
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    let objective = Classifier::new(*model, train)?;
    check_len(model.input_dim, test.dim())?;
    let num_params = model.param_count();
    let w0 = init_params(model, &mut RngStream::derive(seed, purpose::MODEL_INIT, 0, 0));
    let mut server = ServerState::new(w0, cfg.algorithm);
    let mut clients: Vec<ClientState> =
        (0..partition.num_clients()).map(|i| ClientState::new(i, cfg.algorithm, num_params)).collect();
    let weights = partition.weights();
    let mut metrics = Vec::with_capacity(cfg.rounds);

    for t in 0..cfg.rounds {
        let lr = cfg.lr_at(t);
        observer.round_start(t, &server, lr)?;
        let mut uploads = Vec::with_capacity(clients.len());
        let mut taus = Vec::with_capacity(clients.len());
        let mut new_cs = Vec::new();
        for client in &mut clients {
            let i = client.client_id;
            let mut rng = RngStream::derive(seed, purpose::BATCH_ORDER, i as u64, t as u64);
            let batches = epoch_batches(partition, i, cfg.batch_size, &mut rng);
            let update =
                client_round(&objective, &batches, client, &server.w, cfg, lr, server.control_variate.as_ref())?;
            observer.client_done(t, i, &server.w, &update)?;
            if let Some(c) = &update.new_control_variate {
                client.control_variate = Some(c.clone());
                new_cs.push(c.clone());
            }
            uploads.push(update.upload);
            taus.push(update.tau);
        }
        let g = server_aggregate(&uploads, weights, &taus, cfg.algorithm)?;
        let new_c = if new_cs.is_empty() { None } else { Some(weighted_sum(&new_cs, weights)?) };
        server = global_update(server, &g, new_c)?;
        if !server.w.is_finite() {
            return Err(Error::InvalidArgument(format!("global model diverged in round {}", t + 1)));
        }
        observer.round_end(t, &server)?;
        let eval = evaluate(model, &server.w, test)?;
        metrics.push(RoundMetrics { round: t + 1, test_accuracy: eval.accuracy, test_loss: eval.loss });
    }
    Ok(TrainingOutcome { metrics, final_state: server })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{dirichlet_partition, make_synthetic, PartitionSpec};
    use crate::model::LossGrad;
    use alloc::vec;

    /// Mean of `0.5 * (y - w x)^2` over scalar samples.
    struct Squared {
        xs: Vec<f64>,
        ys: Vec<f64>,
    }

    impl Objective for Squared {
        fn num_params(&self) -> usize {
            1
        }

        fn loss_and_grad(&self, params: &ParamVector, batch: &[usize]) -> Result<LossGrad> {
            let w = params[0];
            let n = batch.len() as f64;
            let (mut loss, mut grad) = (0.0, 0.0);
            for &i in batch {
                let r = self.ys[i] - w * self.xs[i];
                loss += 0.5 * r * r;
                grad += -r * self.xs[i];
            }
            Ok(LossGrad { loss: loss / n, grad: ParamVector::from_vec(vec![grad / n]) })
        }
    }

    fn cfg(algorithm: Algorithm) -> AlgoConfig {
        AlgoConfig {
            algorithm,
            ecgr_enabled: false,
            lr: 0.1,
            momentum: 0.0,
            batch_size: 8,
            rounds: 5,
            ..AlgoConfig::default()
        }
    }

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::from_vec(v.to_vec())
    }

    #[test]
    fn hand_derived_first_step() {
        let obj = Squared { xs: vec![1.0], ys: vec![1.0] };
        let traj = local_train(&obj, &[vec![0], vec![0]], &pv(&[0.0]), &cfg(Algorithm::FedAvg), 0.1, None).unwrap();
        // d/dw of 0.5(1 - w)^2 at w=0 is -1: w moves to 0.1 and the recorded
        // step w^0 - w^1 = lr * grad = -0.1.
        assert!((traj.steps.steps()[0][0] + 0.1).abs() < 1e-15);
        // Second step from w=0.1: gradient -0.9, step -0.09.
        assert!((traj.steps.steps()[1][0] + 0.09).abs() < 1e-15);
        assert!((traj.final_params[0] - 0.19).abs() < 1e-15);
    }

    #[test]
    fn single_batch_is_rejected() {
        let obj = Squared { xs: vec![1.0], ys: vec![1.0] };
        let err = local_train(&obj, &[vec![0]], &pv(&[0.0]), &cfg(Algorithm::FedAvg), 0.1, None).unwrap_err();
        assert_eq!(err, Error::GradientSetTooSmall { tau: 1 });
    }

    #[test]
    fn momentum_steps_sum_to_displacement() {
        let obj = Squared { xs: vec![1.0, 2.0, -1.0], ys: vec![0.5, 1.0, 2.0] };
        let mut c = cfg(Algorithm::FedAvg);
        c.momentum = 0.9;
        let w_t = pv(&[0.3]);
        let traj = local_train(&obj, &[vec![0], vec![1, 2], vec![2], vec![0, 1]], &w_t, &c, 0.05, None).unwrap();
        let disp = w_t.sub(&traj.final_params).unwrap();
        assert!((traj.steps.total()[0] - disp[0]).abs() <= 1e-12 * disp[0].abs().max(1e-300));
    }

    #[test]
    fn prox_with_zero_mu_and_scaffold_with_zero_variates_match_fedavg() {
        let obj = Squared { xs: vec![1.0, 2.0, -1.0], ys: vec![0.5, 1.0, 2.0] };
        let batches = [vec![0, 1], vec![2], vec![1]];
        let w_t = pv(&[0.2]);
        let base = local_train(&obj, &batches, &w_t, &cfg(Algorithm::FedAvg), 0.1, None).unwrap();
        let prox = local_train(&obj, &batches, &w_t, &cfg(Algorithm::FedProx), 0.1, None).unwrap();
        assert_eq!(base, prox);
        let zero = pv(&[0.0]);
        let corr = Correction { local: &zero, global: &zero };
        let scaf = local_train(&obj, &batches, &w_t, &cfg(Algorithm::Scaffold), 0.1, Some(corr)).unwrap();
        assert_eq!(base, scaf);
    }

    #[test]
    fn prox_term_pulls_toward_anchor() {
        let obj = Squared { xs: vec![1.0], ys: vec![10.0] };
        let batches = [vec![0], vec![0], vec![0]];
        let w_t = pv(&[0.0]);
        let base = local_train(&obj, &batches, &w_t, &cfg(Algorithm::FedAvg), 0.1, None).unwrap();
        let mut c = cfg(Algorithm::FedProx);
        c.mu = 1.0;
        let prox = local_train(&obj, &batches, &w_t, &c, 0.1, None).unwrap();
        assert!(prox.final_params[0] < base.final_params[0]);
    }

    #[test]
    fn fednova_divides_by_tau() {
        let obj = Squared { xs: vec![1.0, 2.0, -1.0, 0.5], ys: vec![0.5, 1.0, 2.0, 0.0] };
        let batches = [vec![0], vec![1], vec![2], vec![3]];
        let client = ClientState::new(0, Algorithm::FedNova, 1);
        let w_t = pv(&[0.0]);
        let up = client_round(&obj, &batches, &client, &w_t, &cfg(Algorithm::FedNova), 0.1, None).unwrap();
        assert_eq!(up.tau, 4);
        let raw = up.trajectory.steps.total();
        assert!((up.upload[0] - raw[0] / 4.0).abs() < 1e-15);
    }

    #[test]
    fn scaffold_variate_at_zero_is_mean_step_over_lr() {
        let obj = Squared { xs: vec![1.0, 2.0, -1.0], ys: vec![0.5, 1.0, 2.0] };
        let batches = [vec![0], vec![1], vec![2]];
        let client = ClientState::new(0, Algorithm::Scaffold, 1);
        let w_t = pv(&[0.0]);
        let zero = pv(&[0.0]);
        let up = client_round(&obj, &batches, &client, &w_t, &cfg(Algorithm::Scaffold), 0.1, Some(&zero)).unwrap();
        let mean_step = up.trajectory.steps.total()[0] / 3.0;
        let c = up.new_control_variate.unwrap();
        assert!((c[0] - mean_step / 0.1).abs() < 1e-14);
    }

    #[test]
    fn beta_one_upload_matches_plain_upload() {
        let obj = Squared { xs: vec![1.0, 2.0, -1.0, 3.0, 0.2], ys: vec![0.5, 1.0, 2.0, -1.0, 0.0] };
        let batches = [vec![0], vec![1], vec![2], vec![3], vec![4]];
        for algorithm in Algorithm::ALL {
            let mut plain = cfg(algorithm);
            plain.momentum = 0.9;
            if algorithm == Algorithm::FedProx {
                plain.mu = 0.1;
            }
            let mut ecgr = plain.clone();
            ecgr.ecgr_enabled = true;
            ecgr.beta = 1.0;
            let client = ClientState::new(0, algorithm, 1);
            let c = pv(&[0.05]);
            let server_c = (algorithm == Algorithm::Scaffold).then_some(&c);
            let a = client_round(&obj, &batches, &client, &pv(&[0.1]), &plain, 0.05, server_c).unwrap();
            let b = client_round(&obj, &batches, &client, &pv(&[0.1]), &ecgr, 0.05, server_c).unwrap();
            assert!((a.upload[0] - b.upload[0]).abs() <= 1e-12 * a.upload[0].abs(), "{algorithm:?}");
            assert_eq!(a.new_control_variate, b.new_control_variate);
        }
    }

    #[test]
    fn aggregation_examples() {
        let ups = [pv(&[2.0, 0.0]), pv(&[0.0, 2.0])];
        let g = server_aggregate(&ups, &[0.5, 0.5], &[2, 2], Algorithm::FedAvg).unwrap();
        assert_eq!(g, pv(&[1.0, 1.0]));
        assert_eq!(effective_tau(&[0.5, 0.5], &[2, 4]), 3.0);
        let g = server_aggregate(&ups, &[0.5, 0.5], &[2, 4], Algorithm::FedNova).unwrap();
        assert_eq!(g, pv(&[3.0, 3.0]));
        let single = server_aggregate(&[pv(&[1.5, -2.0])], &[1.0], &[3], Algorithm::Scaffold).unwrap();
        assert_eq!(single, pv(&[1.5, -2.0]));
        assert!(matches!(server_aggregate(&ups, &[1.0], &[2, 2], Algorithm::FedAvg), Err(Error::Aggregation(_))));
        assert!(matches!(server_aggregate(&ups, &[0.7, 0.7], &[2, 2], Algorithm::FedAvg), Err(Error::Aggregation(_))));
    }

    #[test]
    fn global_update_examples() {
        let s = ServerState::new(pv(&[1.0, 1.0]), Algorithm::FedAvg);
        let s = global_update(s, &pv(&[0.0, 0.0]), None).unwrap();
        assert_eq!(s.w, pv(&[1.0, 1.0]));
        let s = global_update(s, &pv(&[0.5, -0.5]), None).unwrap();
        assert_eq!(s.w, pv(&[0.5, 1.5]));
        assert_eq!(s.round, 2);

        let s = ServerState::new(pv(&[0.0]), Algorithm::Scaffold);
        let common = pv(&[0.25]);
        let c = weighted_sum(&[common.clone(), common.clone(), common.clone()], &[0.2, 0.3, 0.5]).unwrap();
        let s = global_update(s, &pv(&[0.0]), Some(c)).unwrap();
        assert!((s.control_variate.unwrap()[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn lr_schedule_halves() {
        let c = AlgoConfig { lr: 0.1, lr_decay_every: 10, lr_decay_factor: 0.5, ..AlgoConfig::default() };
        assert_eq!(c.lr_at(0), 0.1);
        assert_eq!(c.lr_at(9), 0.1);
        assert_eq!(c.lr_at(10), 0.05);
        assert_eq!(c.lr_at(25), 0.025);
        let flat = AlgoConfig { lr_decay_every: 0, ..c };
        assert_eq!(flat.lr_at(1000), 0.1);
    }

    #[test]
    fn config_validation() {
        assert!(AlgoConfig::default().validate().is_ok());
        assert!(AlgoConfig { beta: 1.5, ..AlgoConfig::default() }.validate().is_err());
        assert!(AlgoConfig { mu: 0.1, ..AlgoConfig::default() }.validate().is_err());
        assert!(AlgoConfig { momentum: 1.0, ..AlgoConfig::default() }.validate().is_err());
        let prox = AlgoConfig { algorithm: Algorithm::FedProx, mu: 0.1, ..AlgoConfig::default() };
        assert!(prox.validate().is_ok());
    }

    fn small_problem(alpha: f64) -> (Dataset, Dataset, ClientPartition) {
        let all = make_synthetic(2, 2, 150, 10.0, 42).unwrap();
        let (train, test) = all.split_per_class(100);
        let part = dirichlet_partition(
            &train,
            &PartitionSpec { num_clients: 2, alpha, seed: 42, min_batches: 2, batch_size: 16 },
        )
        .unwrap();
        (train, test, part)
    }

    #[test]
    fn zero_rounds_is_a_no_op() {
        let (train, test, part) = small_problem(1.0);
        let spec = ModelSpec::logistic(2, 2);
        let c = AlgoConfig { rounds: 0, ..cfg(Algorithm::FedAvg) };
        let out = run_training(&train, &test, &part, &c, &spec, 7, &mut ()).unwrap();
        assert!(out.metrics.is_empty());
        let w0 = init_params(&spec, &mut RngStream::derive(7, purpose::MODEL_INIT, 0, 0));
        assert_eq!(out.final_state.w, w0);
    }

    #[test]
    fn separable_blobs_are_learned() {
        let (train, test, part) = small_problem(0.5);
        let spec = ModelSpec::logistic(2, 2);
        let c = AlgoConfig { rounds: 30, lr: 0.05, ..cfg(Algorithm::FedAvg) };
        let out = run_training(&train, &test, &part, &c, &spec, 42, &mut ()).unwrap();
        assert!(out.metrics.last().unwrap().test_accuracy > 0.95);
        assert_eq!(out.metrics.len(), 30);
        assert_eq!(out.metrics[0].round, 1);
    }

    #[test]
    fn runs_are_reproducible() {
        let (train, test, part) = small_problem(0.1);
        let spec = ModelSpec::logistic(2, 2);
        let c = AlgoConfig { ecgr_enabled: true, momentum: 0.9, lr: 0.01, ..cfg(Algorithm::Scaffold) };
        let a = run_training(&train, &test, &part, &c, &spec, 3, &mut ()).unwrap();
        let b = run_training(&train, &test, &part, &c, &spec, 3, &mut ()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn selection_recorder_sees_every_client() {
        let (train, test, part) = small_problem(0.1);
        let spec = ModelSpec::logistic(2, 2);
        let c = AlgoConfig { ecgr_enabled: true, rounds: 3, ..cfg(Algorithm::FedAvg) };
        let mut rec = SelectionRecorder::default();
        run_training(&train, &test, &part, &c, &spec, 3, &mut rec).unwrap();
        assert_eq!(rec.masks.len(), 6);
        assert!(rec.masks.iter().all(|m| m.selected_indices.len() == m.tau / 2));
    }
}
