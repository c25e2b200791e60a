//! Exploratory–convergent gradient re-aggregation.
//!
//! A client's local round produces one displacement per mini-batch step. The
//! steps are split into a *convergent* half, chosen greedily so that their
//! running sum stays as short as possible, and the *exploratory* rest. The
//! exploratory half is damped by `beta`, the two halves are recombined, and
//! the result is rescaled to the norm of the plain sum so only the direction
//! of the client update changes.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::linalg::{self, ParamVector};

/// Per-step parameter displacements of one client round, in step order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    steps: Vec<ParamVector>,
}

impl GradientSet {
    pub fn new(steps: Vec<ParamVector>) -> Result<Self> {
        if let Some(first) = steps.first() {
            for s in &steps[1..] {
                check_len(first.len(), s.len())?;
            }
        }
        Ok(GradientSet { steps })
    }

    pub fn tau(&self) -> usize {
        self.steps.len()
    }

    pub fn dim(&self) -> usize {
        self.steps.first().map_or(0, ParamVector::len)
    }

    pub fn steps(&self) -> &[ParamVector] {
        &self.steps
    }

    /// Sum of all steps, in step order.
    pub fn total(&self) -> ParamVector {
        self.sum_of(0..self.tau())
    }

    /// Sum of the listed steps, in the order given.
    pub fn sum_of<I: IntoIterator<Item = usize>>(&self, indices: I) -> ParamVector {
        let mut acc = ParamVector::zeros(self.dim());
        for i in indices {
            acc.add_scaled(1.0, &self.steps[i]).expect("steps share one length");
        }
        acc
    }
}

/// Convergent indices `pi`, exploratory indices `pi_prime`, and the damping
/// applied to the exploratory half.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgrSplit {
    /// Convergent indices, ascending.
    pub pi: Vec<usize>,
    /// Complement of `pi`, ascending.
    pub pi_prime: Vec<usize>,
    pub beta: f64,
    /// `pi` in the order the greedy pass picked it.
    pub pick_order: Vec<usize>,
}

impl EcgrSplit {
    /// Builds a split from an explicit convergent set.
    pub fn from_convergent(tau: usize, mut pi: Vec<usize>, beta: f64) -> Result<Self> {
        let pick_order = pi.clone();
        pi.sort_unstable();
        let mut member = vec![false; tau];
        for &i in &pi {
            if i >= tau || member[i] {
                return Err(Error::Split(format!("index {i} repeated or out of range for tau {tau}")));
            }
            member[i] = true;
        }
        let pi_prime = (0..tau).filter(|&i| !member[i]).collect();
        Ok(EcgrSplit { pi, pi_prime, beta, pick_order })
    }

    pub fn tau(&self) -> usize {
        self.pi.len() + self.pi_prime.len()
    }

    fn validate(&self, tau: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Split(format!("beta {} outside [0, 1]", self.beta)));
        }
        if self.tau() != tau {
            return Err(Error::Split(format!("split covers {} steps, gradient set has {tau}", self.tau())));
        }
        let mut seen = vec![false; tau];
        for &i in self.pi.iter().chain(&self.pi_prime) {
            if i >= tau || seen[i] {
                return Err(Error::Split(format!("index {i} repeated or out of range")));
            }
            seen[i] = true;
        }
        Ok(())
    }
}

/// Herding selection of the convergent half.
///
/// Starting from an empty partial sum `S`, each of the `floor(tau / 2)`
/// greedy steps picks the remaining step `e` minimising `||S + step_e||`
/// (lowest index on ties) and adds it to `S`.
pub fn herding_select(gs: &GradientSet, beta: f64) -> Result<EcgrSplit> {
    let tau = gs.tau();
    if tau < 2 {
        return Err(Error::GradientSetTooSmall { tau });
    }
    let k = tau / 2;
    let mut remaining: Vec<usize> = (0..tau).collect();
    let mut partial = ParamVector::zeros(gs.dim());
    let mut picks = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for (slot, &e) in remaining.iter().enumerate() {
            let n = partial_norm_sq(&partial, &gs.steps[e]);
            // Remaining stays sorted, so strict < keeps the lowest index on ties.
            if best.is_none_or(|(_, b)| n < b) {
                best = Some((slot, n));
            }
        }
        let (slot, _) = best.expect("remaining is non-empty while picking");
        let e = remaining.remove(slot);
        partial.add_scaled(1.0, &gs.steps[e])?;
        picks.push(e);
    }
    EcgrSplit::from_convergent(tau, picks, beta)
}

fn partial_norm_sq(partial: &ParamVector, step: &ParamVector) -> f64 {
    let mut acc = 0.0;
    for (s, d) in partial.iter().zip(step.iter()) {
        let v = s + d;
        acc += v * v;
    }
    acc
}

/// Output of [`re_aggregate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReaggregatedGradient {
    pub g_prime: ParamVector,
    pub gamma: f64,
    /// The damped recombination had zero length while the original sum did
    /// not; `g_prime` fell back to the original sum.
    pub degenerate: bool,
}

/// Damps the exploratory half, recombines, and rescales to the original norm.
pub fn re_aggregate(gs: &GradientSet, split: &EcgrSplit) -> Result<ReaggregatedGradient> {
    split.validate(gs.tau())?;
    let original = gs.total();
    let convergent = gs.sum_of(split.pi.iter().copied());
    let exploratory = gs.sum_of(split.pi_prime.iter().copied());
    let combined = linalg::axpy(split.beta, &exploratory, &convergent)?;

    let original_norm = original.norm();
    let combined_norm = combined.norm();
    if original_norm == 0.0 {
        return Ok(ReaggregatedGradient { g_prime: ParamVector::zeros(gs.dim()), gamma: 0.0, degenerate: false });
    }
    if combined_norm == 0.0 {
        return Ok(ReaggregatedGradient { g_prime: original, gamma: 1.0, degenerate: true });
    }
    let gamma = original_norm / combined_norm;
    Ok(ReaggregatedGradient { g_prime: combined.scale(gamma), gamma, degenerate: false })
}

/// Selection record for one (round, client).
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionMask {
    pub round: usize,
    pub client: usize,
    pub tau: usize,
    pub selected_indices: Vec<usize>,
    pub beta: f64,
}
