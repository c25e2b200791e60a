//! Counter-based pseudo-random streams.
//!
//! A stream is keyed by `(seed, stream_id)`. Draw `n` of a stream is
//!
//! ```text
//! key  = mix64(seed ^ mix64(stream_id ^ STREAM_SALT))
//! x_n  = mix64(key + n * GOLDEN_GAMMA)        (wrapping arithmetic)
//! ```
//!
//! where `mix64` is the SplitMix64 finaliser
//!
//! ```text
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! z =  z ^ (z >> 31)
//! ```
//!
//! These constants are part of the replay contract: changing any of them
//! changes every exported run.

use alloc::vec::Vec;
use core::f64::consts::PI;

pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
pub const STREAM_SALT: u64 = 0xD1B5_4A32_D192_ED03;

/// Purpose tags that keep streams for different consumers apart.
pub mod purpose {
    pub const SYNTHETIC_CENTERS: u64 = 1;
    pub const SYNTHETIC_NOISE: u64 = 2;
    pub const PARTITION: u64 = 3;
    pub const MODEL_INIT: u64 = 4;
    pub const BATCH_ORDER: u64 = 5;
    pub const THEORY: u64 = 6;
}

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines a purpose tag and two coordinates (e.g. client and round) into a
/// single stream id.
pub fn stream_id(purpose: u64, a: u64, b: u64) -> u64 {
    mix64(mix64(mix64(purpose) ^ a.wrapping_mul(GOLDEN_GAMMA)) ^ b)
}

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    key: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id, key: mix64(seed ^ mix64(stream_id ^ STREAM_SALT)), counter: 0 }
    }

    /// Stream for `purpose` at coordinates `(a, b)`.
    pub fn derive(seed: u64, purpose: u64, a: u64, b: u64) -> Self {
        RngStream::new(seed, stream_id(purpose, a, b))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of 64-bit words drawn so far.
    pub fn position(&self) -> u64 {
        self.counter
    }

    pub fn next_u64(&mut self) -> u64 {
        let x = mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)));
        self.counter = self.counter.wrapping_add(1);
        x
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`; safe to take a logarithm of.
    pub fn uniform_open0(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n` (Lemire's multiply-shift with rejection).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = (self.next_u64() as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Standard normal via Box–Muller (one variate per two uniforms).
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform_open0();
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * PI * u2)
    }

    /// Natural log of a Gamma(shape, 1) variate.
    ///
    /// Marsaglia–Tsang for `shape >= 1`; for `shape < 1` the boost
    /// `G(a) = G(a + 1) · U^(1/a)` is applied in log space, since `U^(1/a)`
    /// underflows for the tiny concentrations used in extreme non-IID splits.
    pub fn ln_gamma_variate(&mut self, shape: f64) -> f64 {
        assert!(shape > 0.0 && shape.is_finite(), "gamma shape must be positive");
        if shape < 1.0 {
            let boost = libm::log(self.uniform_open0()) / shape;
            return self.ln_gamma_variate(shape + 1.0) + boost;
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / libm::sqrt(9.0 * d);
        loop {
            let x = self.normal();
            let t = 1.0 + c * x;
            if t <= 0.0 {
                continue;
            }
            let v = t * t * t;
            let u = self.uniform_open0();
            if libm::log(u) < 0.5 * x * x + d - d * v + d * libm::log(v) {
                return libm::log(d) + libm::log(v);
            }
        }
    }

    /// Symmetric Dirichlet(alpha, ..., alpha) draw of dimension `k`.
    pub fn dirichlet(&mut self, alpha: f64, k: usize) -> Vec<f64> {
        let logs: Vec<f64> = (0..k).map(|_| self.ln_gamma_variate(alpha)).collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logs.iter().map(|l| libm::exp(l - max)).collect();
        let total: f64 = weights.iter().sum();
        weights.into_iter().map(|w| w / total).collect()
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
