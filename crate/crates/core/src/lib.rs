//! Deterministic federated-optimization core.
//!
//! Everything in this crate is pure computation over owned vectors: no IO,
//! no threads, no global state. It builds under `#![no_std]` with `alloc`,
//! and all floating-point transcendental functions come from `libm` so the
//! numbers are identical on every target.
//!
//! Module map:
//!
//! * [`linalg`] – [`ParamVector`] and its deterministic reductions.
//! * [`rng`] – counter-based, stream-splittable pseudo-randomness.
//! * [`data`] – datasets, synthetic blobs, Dirichlet client partitioning.
//! * [`model`] – logistic regression and a one-hidden-layer MLP with
//!   analytic cross-entropy gradients.
//! * [`ecgr`] – herding selection and norm-preserving re-aggregation of a
//!   client's per-step updates.
//! * [`fedopt`] – FedAvg, FedProx, FedNova and Scaffold, each with an
//!   optional ECGR stage.
//! * [`analysis`] – directional consistency, the monotonicity and
//!   error-reduction checks, and true-gradient deviation audits.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod data;
pub mod ecgr;
mod error;
pub mod fedopt;
pub mod linalg;
pub mod model;
pub mod rng;

pub use error::{Error, Result};
pub use linalg::ParamVector;
pub use rng::RngStream;
