//! Executable checks of the re-aggregation theory and training-time audits.
//!
//! The randomized suites here sample Gaussian cases, filter them by the
//! relevant precondition, and count how often the claimed conclusion holds.
//! They report counterexamples instead of asserting, so callers decide what a
//! failure means.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::ecgr::{herding_select, re_aggregate, GradientSet, SelectionMask};
use crate::error::{Error, Result};
use crate::fedopt::{ClientUpdate, RoundObserver, ServerState};
use crate::linalg::ParamVector;
use crate::model::{loss_and_grad, ModelSpec};
use crate::rng::{purpose, RngStream};

/// Slack used by the monotonicity and error-reduction suites.
pub const STRICT_SLACK: f64 = 1e-12;
/// Relative tolerance for norm preservation.
pub const MAGNITUDE_TOL: f64 = 1e-9;

/// Cosine of the angle between `x` and `z`.
pub fn align(x: &ParamVector, z: &ParamVector) -> Result<f64> {
    let (nx, nz) = (x.norm(), z.norm());
    if nx == 0.0 || nz == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((x.dot(z)? / (nx * nz)).clamp(-1.0, 1.0))
}

/// `<x, z>/||x|| > <y, z>/||y||`, the precondition of the monotonicity claim.
pub fn direction_condition(x: &ParamVector, y: &ParamVector, z: &ParamVector) -> Result<bool> {
    let (nx, ny) = (x.norm(), y.norm());
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(x.dot(z)? / nx > y.dot(z)? / ny)
}

/// `f(β) = <x + βy, z> / ||x + βy||` on each grid point, in grid order.
pub fn monotonicity_curve(x: &ParamVector, y: &ParamVector, z: &ParamVector, betas: &[f64]) -> Result<Vec<f64>> {
    betas
        .iter()
        .map(|&b| {
            let u = y.axpy(b, x)?;
            let n = u.norm();
            if n == 0.0 {
                return Err(Error::ZeroVector);
            }
            Ok(u.dot(z)? / n)
        })
        .collect()
}

/// `values[j + 1] < values[j] + slack` for every consecutive pair.
pub fn is_strictly_decreasing(values: &[f64], slack: f64) -> bool {
    values.windows(2).all(|w| w[1] < w[0] + slack)
}

/// The eleven-point grid 0, 0.1, ..., 1.
pub fn unit_grid() -> Vec<f64> {
    (0..=10).map(|j| j as f64 / 10.0).collect()
}

/// Convergent part `a`, exploratory part `b`, true gradient `mu`, damping `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryCase {
    pub a: ParamVector,
    pub b: ParamVector,
    pub mu: ParamVector,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReduction {
    /// `lhs < rhs`.
    pub holds: bool,
    /// `||γv - μ||²`
    pub lhs: f64,
    /// `||c - μ||²`
    pub rhs: f64,
    /// `align(a, μ) > align(b, μ)`
    pub assumption_held: bool,
}

/// Compares the rescaled damped combination against the plain sum as
/// estimates of `mu`. The assumption is reported, not enforced.
pub fn check_error_reduction(case: &TheoryCase) -> Result<ErrorReduction> {
    let c = case.a.add(&case.b)?;
    let v = case.b.axpy(case.beta, &case.a)?;
    let nv = v.norm();
    if nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    let gamma = c.norm() / nv;
    let lhs = v.scale(gamma).sub(&case.mu)?.norm_squared();
    let rhs = c.sub(&case.mu)?.norm_squared();
    let assumption_held = match (align(&case.a, &case.mu), align(&case.b, &case.mu)) {
        (Ok(x), Ok(y)) => x > y,
        _ => false,
    };
    Ok(ErrorReduction { holds: lhs < rhs, lhs, rhs, assumption_held })
}

/// Exact full-dataset mean cross-entropy gradient.
pub fn true_gradient(spec: &ModelSpec, params: &ParamVector, ds: &Dataset) -> Result<ParamVector> {
    if ds.is_empty() {
        return Err(Error::InvalidArgument("true gradient of an empty dataset".into()));
    }
    let all: Vec<usize> = (0..ds.len()).collect();
    Ok(loss_and_grad(spec, params, ds, &all)?.grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationRecord {
    /// Completed-round counter (1-based), matching the metrics export.
    pub round: usize,
    pub client: usize,
    /// `||g - μ||²` for the plain summed update.
    pub dev_raw: f64,
    /// `||g' - μ||²` for the re-aggregated update.
    pub dev_ecgr: f64,
    /// `align(g_π, μ) > align(g_π', μ)`.
    pub assumption_held: bool,
}

/// Observer that measures how far each client's summed update, and its
/// re-aggregated version, sit from the displacement an exact full-gradient
/// client would make: `μ = τ_i · η_l · ∇F(w_t)`.
///
/// The baseline assumes momentum-free local SGD; the audit never feeds back
/// into training.
#[derive(Debug)]
pub struct DeviationAudit<'a> {
    spec: ModelSpec,
    data: &'a Dataset,
    beta: f64,
    every: usize,
    current: Option<(ParamVector, f64)>,
    pub records: Vec<DeviationRecord>,
}

impl<'a> DeviationAudit<'a> {
    /// Audits rounds `0, every, 2*every, ...`; `every = 0` is treated as 1.
    pub fn new(spec: ModelSpec, data: &'a Dataset, beta: f64, every: usize) -> Self {
        DeviationAudit { spec, data, beta, every: every.max(1), current: None, records: Vec::new() }
    }

    /// Deviation record for one gradient set against a precomputed true gradient.
    pub fn measure(
        gs: &GradientSet,
        true_grad: &ParamVector,
        lr: f64,
        beta: f64,
        round: usize,
        client: usize,
    ) -> Result<DeviationRecord> {
        let mu = true_grad.scale(gs.tau() as f64 * lr);
        let split = herding_select(gs, beta)?;
        let raw = gs.total();
        let re = re_aggregate(gs, &split)?;
        let convergent = gs.sum_of(split.pi.iter().copied());
        let exploratory = gs.sum_of(split.pi_prime.iter().copied());
        let assumption_held = match (align(&convergent, &mu), align(&exploratory, &mu)) {
            (Ok(a), Ok(b)) => a > b,
            _ => false,
        };
        Ok(DeviationRecord {
            round,
            client,
            dev_raw: raw.sub(&mu)?.norm_squared(),
            dev_ecgr: re.g_prime.sub(&mu)?.norm_squared(),
            assumption_held,
        })
    }
}

impl RoundObserver for DeviationAudit<'_> {
    fn round_start(&mut self, round: usize, server: &ServerState, lr: f64) -> Result<()> {
        self.current = if round.is_multiple_of(self.every) {
            Some((true_gradient(&self.spec, &server.w, self.data)?, lr))
        } else {
            None
        };
        Ok(())
    }

    fn client_done(&mut self, round: usize, client: usize, _w_t: &ParamVector, update: &ClientUpdate) -> Result<()> {
        if let Some((grad, lr)) = &self.current {
            let rec = Self::measure(&update.trajectory.steps, grad, *lr, self.beta, round + 1, client)?;
            self.records.push(rec);
        }
        Ok(())
    }
}

/// Summary of an audit: how often the assumption held, and how often ECGR
/// reduced the deviation when it did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationSummary {
    pub total: usize,
    pub assumption_held: usize,
    pub reduced_when_held: usize,
    pub reduced_overall: usize,
}

impl DeviationSummary {
    pub fn from_records(records: &[DeviationRecord]) -> Self {
        let held: Vec<&DeviationRecord> = records.iter().filter(|r| r.assumption_held).collect();
        DeviationSummary {
            total: records.len(),
            assumption_held: held.len(),
            reduced_when_held: held.iter().filter(|r| r.dev_ecgr < r.dev_raw).count(),
            reduced_overall: records.iter().filter(|r| r.dev_ecgr < r.dev_raw).count(),
        }
    }

    pub fn held_fraction(&self) -> f64 {
        ratio(self.assumption_held, self.total)
    }

    pub fn reduced_fraction_when_held(&self) -> f64 {
        ratio(self.reduced_when_held, self.assumption_held)
    }
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

/// Fraction of selected convergent indices lying in the second half of the
/// local round (`2 * index >= tau`).
pub fn late_half_fraction(mask: &SelectionMask) -> f64 {
    let late = mask.selected_indices.iter().filter(|&&i| 2 * i >= mask.tau).count();
    ratio(late, mask.selected_indices.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionStats {
    /// One entry per mask, in input order.
    pub per_mask: Vec<f64>,
    pub mean: f64,
}

pub fn selection_stats(masks: &[SelectionMask]) -> Result<SelectionStats> {
    if masks.is_empty() {
        return Err(Error::InvalidArgument("no selection masks".into()));
    }
    let per_mask: Vec<f64> = masks.iter().map(late_half_fraction).collect();
    let mean = per_mask.iter().sum::<f64>() / per_mask.len() as f64;
    Ok(SelectionStats { per_mask, mean })
}

/// A failing sample from one of the theory suites.
#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub sample: usize,
    pub detail: String,
    pub vectors: Vec<(&'static str, ParamVector)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: usize,
    pub total: usize,
    /// Rejected draws while sampling cases that satisfy the precondition.
    pub rejected: usize,
    pub counterexamples: Vec<Counterexample>,
}

impl SuiteReport {
    fn new(name: &'static str) -> Self {
        SuiteReport { name, passed: 0, total: 0, rejected: 0, counterexamples: Vec::new() }
    }

    pub fn all_passed(&self) -> bool {
        self.passed == self.total
    }

    fn record(&mut self, ok: bool, fail: impl FnOnce() -> Counterexample) {
        self.total += 1;
        if ok {
            self.passed += 1;
        } else {
            self.counterexamples.push(fail());
        }
    }
}

fn gaussian(rng: &mut RngStream, dim: usize) -> ParamVector {
    ParamVector::from_vec((0..dim).map(|_| rng.normal()).collect())
}

fn check_suite_args(samples: usize, dim: usize) -> Result<()> {
    if samples == 0 || dim == 0 {
        return Err(Error::InvalidArgument("samples and dim must be positive".into()));
    }
    Ok(())
}

const MAX_REJECTIONS: usize = 1_000_000;

/// Norm preservation of re-aggregation over random gradient sets with
/// `tau` in 2..=10 and `beta` cycling through {0, 0.2, 0.5, 1}.
pub fn magnitude_suite(samples: usize, dim: usize, seed: u64) -> Result<SuiteReport> {
    check_suite_args(samples, dim)?;
    const BETAS: [f64; 4] = [0.0, 0.2, 0.5, 1.0];
    let mut report = SuiteReport::new("magnitude-preservation");
    for s in 0..samples {
        let mut rng = RngStream::derive(seed, purpose::THEORY, 1, s as u64);
        let tau = 2 + rng.below(9) as usize;
        let beta = BETAS[s % BETAS.len()];
        let gs = GradientSet::new((0..tau).map(|_| gaussian(&mut rng, dim)).collect())?;
        let re = re_aggregate(&gs, &herding_select(&gs, beta)?)?;
        let (got, want) = (re.g_prime.norm(), gs.total().norm());
        let ok = libm::fabs(got - want) <= MAGNITUDE_TOL * want;
        report.record(ok, || Counterexample {
            sample: s,
            detail: format!("tau={tau} beta={beta} |g'|={got:e} |g|={want:e}"),
            vectors: gs.steps().iter().map(|v| ("step", v.clone())).collect(),
        });
    }
    Ok(report)
}

/// Monotonic decrease of `f(β)` on the eleven-point grid for triples that
/// satisfy [`direction_condition`].
pub fn monotonicity_suite(samples: usize, dim: usize, seed: u64) -> Result<SuiteReport> {
    check_suite_args(samples, dim)?;
    let grid = unit_grid();
    let mut report = SuiteReport::new("monotonicity");
    for s in 0..samples {
        let mut rng = RngStream::derive(seed, purpose::THEORY, 2, s as u64);
        let (x, y, z) = loop {
            let (x, y, z) = (gaussian(&mut rng, dim), gaussian(&mut rng, dim), gaussian(&mut rng, dim));
            if direction_condition(&x, &y, &z).unwrap_or(false) {
                break (x, y, z);
            }
            report.rejected += 1;
            if report.rejected > MAX_REJECTIONS {
                return Err(Error::InvalidArgument("could not sample condition-satisfying triples".into()));
            }
        };
        let curve = monotonicity_curve(&x, &y, &z, &grid);
        let ok = matches!(&curve, Ok(f) if is_strictly_decreasing(f, STRICT_SLACK));
        report.record(ok, || Counterexample {
            sample: s,
            detail: match &curve {
                Ok(f) => format!("f on grid = {f:?}"),
                Err(e) => format!("{e}"),
            },
            vectors: alloc::vec![("x", x.clone()), ("y", y.clone()), ("z", z.clone())],
        });
    }
    Ok(report)
}

/// Error reduction for assumption-satisfying cases at β ∈ {0, 0.2, 0.5, 0.9},
/// plus the β = 1 boundary where both sides must coincide.
pub fn error_reduction_suite(samples: usize, dim: usize, seed: u64) -> Result<SuiteReport> {
    check_suite_args(samples, dim)?;
    const BETAS: [f64; 4] = [0.0, 0.2, 0.5, 0.9];
    let mut report = SuiteReport::new("error-reduction");
    for s in 0..samples {
        let mut rng = RngStream::derive(seed, purpose::THEORY, 3, s as u64);
        let (a, b, mu) = loop {
            let (a, b, mu) = (gaussian(&mut rng, dim), gaussian(&mut rng, dim), gaussian(&mut rng, dim));
            if matches!((align(&a, &mu), align(&b, &mu)), (Ok(x), Ok(y)) if x > y) {
                break (a, b, mu);
            }
            report.rejected += 1;
            if report.rejected > MAX_REJECTIONS {
                return Err(Error::InvalidArgument("could not sample assumption-satisfying cases".into()));
            }
        };
        let mut failures = Vec::new();
        for beta in BETAS {
            let case = TheoryCase { a: a.clone(), b: b.clone(), mu: mu.clone(), beta };
            match check_error_reduction(&case) {
                Ok(r) if r.lhs < r.rhs + STRICT_SLACK * r.rhs => {}
                Ok(r) => failures.push(format!("beta={beta}: lhs={:e} rhs={:e}", r.lhs, r.rhs)),
                Err(e) => failures.push(format!("beta={beta}: {e}")),
            }
        }
        let boundary = TheoryCase { a: a.clone(), b: b.clone(), mu: mu.clone(), beta: 1.0 };
        match check_error_reduction(&boundary) {
            Ok(r) if libm::fabs(r.lhs - r.rhs) <= STRICT_SLACK * r.rhs => {}
            Ok(r) => failures.push(format!("beta=1: lhs={:e} rhs={:e}", r.lhs, r.rhs)),
            Err(e) => failures.push(format!("beta=1: {e}")),
        }
        report.record(failures.is_empty(), || Counterexample {
            sample: s,
            detail: failures.join("; "),
            vectors: alloc::vec![("a", a.clone()), ("b", b.clone()), ("mu", mu.clone())],
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic, ClientPartition};
    use crate::model::{init_params, Activation};
    use alloc::vec;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::from_vec(v.to_vec())
    }

    #[test]
    fn align_examples() {
        let x = pv(&[1.0, 2.0, -0.5]);
        assert!((align(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(align(&pv(&[1.0, 0.0]), &pv(&[0.0, 3.0])).unwrap(), 0.0);
        assert!((align(&x, &x.scale(-1.0)).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(align(&pv(&[0.0, 0.0, 0.0]), &x).unwrap_err(), Error::ZeroVector);
    }

    #[test]
    fn align_is_scale_invariant() {
        let mut rng = RngStream::new(1, 1);
        for _ in 0..100 {
            let (x, z) = (gaussian(&mut rng, 8), gaussian(&mut rng, 8));
            let k = rng.normal() * 10.0;
            let lhs = align(&x.scale(k), &z).unwrap();
            let rhs = k.signum() * align(&x, &z).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12);
        }
    }

    #[test]
    fn curve_closed_form() {
        let f = monotonicity_curve(&pv(&[1.0, 0.0]), &pv(&[0.0, 1.0]), &pv(&[1.0, 0.0]), &unit_grid()).unwrap();
        assert_eq!(f[0], 1.0);
        assert!((f[10] - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        for (j, v) in f.iter().enumerate() {
            let b = j as f64 / 10.0;
            assert!((v - 1.0 / libm::sqrt(1.0 + b * b)).abs() < 1e-15);
        }
        assert!(is_strictly_decreasing(&f[1..], 0.0));
        let err = monotonicity_curve(&pv(&[1.0]), &pv(&[-1.0]), &pv(&[1.0]), &[1.0]).unwrap_err();
        assert_eq!(err, Error::ZeroVector);
    }

    /// The direction condition alone does not force a decreasing curve when
    /// `z` projects between `x` and `y`.
    #[test]
    fn monotonicity_precondition_is_not_sufficient() {
        let (x, y, z) = (pv(&[1.0, 0.0]), pv(&[0.0, 1.0]), pv(&[1.0, 0.1]));
        assert!(direction_condition(&x, &y, &z).unwrap());
        let f = monotonicity_curve(&x, &y, &z, &unit_grid()).unwrap();
        assert!(f[1] > f[0]);
        assert!(!is_strictly_decreasing(&f, STRICT_SLACK));
    }

    #[test]
    fn error_reduction_worked_example() {
        let case = TheoryCase { a: pv(&[1.0, 0.0]), b: pv(&[0.0, 1.0]), mu: pv(&[2.0, 0.0]), beta: 0.0 };
        let r = check_error_reduction(&case).unwrap();
        let expected = (2.0 - core::f64::consts::SQRT_2) * (2.0 - core::f64::consts::SQRT_2);
        assert!((r.lhs - expected).abs() < 1e-12);
        assert!((r.rhs - 2.0).abs() < 1e-12);
        assert!(r.holds && r.assumption_held);
    }

    #[test]
    fn error_reduction_gap_closes_at_one() {
        let base = TheoryCase { a: pv(&[1.0, 0.2]), b: pv(&[-0.3, 1.0]), mu: pv(&[2.0, 0.1]), beta: 0.0 };
        let gaps: Vec<f64> = [0.0, 0.5, 0.9, 0.99, 1.0]
            .iter()
            .map(|&beta| {
                let r = check_error_reduction(&TheoryCase { beta, ..base.clone() }).unwrap();
                r.rhs - r.lhs
            })
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]));
        assert!(gaps[4].abs() <= 1e-12);
    }

    /// Counterexample to error reduction under the angle assumption: `a` much
    /// longer than `b`, with `mu` between `a` and `a + b`.
    #[test]
    fn error_reduction_can_fail_under_the_assumption() {
        let theta = 3f64.to_radians();
        let case = TheoryCase {
            a: pv(&[10.0, 0.0]),
            b: pv(&[0.0, 1.0]),
            mu: pv(&[libm::cos(theta), libm::sin(theta)]),
            beta: 0.0,
        };
        let r = check_error_reduction(&case).unwrap();
        assert!(r.assumption_held);
        assert!(!r.holds);
    }

    #[test]
    fn true_gradient_examples() {
        let ds = make_synthetic(3, 4, 20, 1.0, 2).unwrap();
        let spec = ModelSpec::mlp(4, 5, 3, Activation::Tanh);
        let params = init_params(&spec, &mut RngStream::new(0, 0));
        let one = ds.subset(&[7]);
        assert_eq!(
            true_gradient(&spec, &params, &one).unwrap(),
            loss_and_grad(&spec, &params, &ds, &[7]).unwrap().grad
        );

        let idx: Vec<usize> = (0..ds.len()).chain(0..ds.len()).collect();
        let doubled = ds.subset(&idx);
        let a = true_gradient(&spec, &params, &ds).unwrap();
        let b = true_gradient(&spec, &params, &doubled).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-12);
        assert!(true_gradient(&spec, &params, &ds.subset(&[])).is_err());
    }

    #[test]
    fn true_gradient_decomposes_over_clients() {
        let ds = make_synthetic(3, 4, 30, 1.0, 5).unwrap();
        let spec = ModelSpec::logistic(4, 3);
        let params = init_params(&spec, &mut RngStream::new(5, 0));
        let part =
            ClientPartition::from_indices(vec![(0..17).collect(), (17..50).collect(), (50..90).collect()]).unwrap();
        let mut combined = ParamVector::zeros(spec.param_count());
        for c in 0..3 {
            let g = loss_and_grad(&spec, &params, &ds, part.indices(c)).unwrap().grad;
            combined.add_scaled(part.weights()[c], &g).unwrap();
        }
        let full = true_gradient(&spec, &params, &ds).unwrap();
        assert!(full.max_abs_diff(&combined).unwrap() < 1e-10);
    }

    #[test]
    fn beta_one_audit_has_equal_deviations() {
        let mut rng = RngStream::new(8, 8);
        let gs = GradientSet::new((0..6).map(|_| gaussian(&mut rng, 5)).collect()).unwrap();
        let tg = gaussian(&mut rng, 5);
        let rec = DeviationAudit::measure(&gs, &tg, 0.1, 1.0, 1, 0).unwrap();
        assert!((rec.dev_raw - rec.dev_ecgr).abs() <= 1e-12 * rec.dev_raw);
    }

    #[test]
    fn late_half_examples() {
        let mask = |sel: Vec<usize>, tau| SelectionMask { round: 0, client: 0, tau, selected_indices: sel, beta: 0.2 };
        assert_eq!(late_half_fraction(&mask(vec![3, 4], 5)), 1.0);
        assert_eq!(late_half_fraction(&mask(vec![0, 1], 5)), 0.0);
        assert_eq!(late_half_fraction(&mask(vec![2, 3], 4)), 1.0);
        let stats = selection_stats(&[mask(vec![0, 1], 4), mask(vec![2, 3], 4)]).unwrap();
        assert_eq!(stats.per_mask, vec![0.0, 1.0]);
        assert_eq!(stats.mean, 0.5);
        assert!(selection_stats(&[]).is_err());
    }

    #[test]
    fn magnitude_suite_passes() {
        let r = magnitude_suite(200, 16, 42).unwrap();
        assert!(r.all_passed(), "{:?}", r.counterexamples.first());
    }

    #[test]
    fn suites_reject_zero_samples() {
        assert!(magnitude_suite(0, 16, 1).is_err());
        assert!(monotonicity_suite(0, 16, 1).is_err());
        assert!(error_reduction_suite(10, 0, 1).is_err());
    }
}
