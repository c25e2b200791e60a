//! Flat parameter vectors.
//!
//! Every reduction walks indices in ascending order so results do not depend
//! on how callers schedule work.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Index;

use crate::error::{check_len, Result};

/// A fixed-length vector of model parameters or of a parameter displacement.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        ParamVector(vec![0.0; len])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> core::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Σ xᵢyᵢ, accumulated in ascending index order.
    pub fn dot(&self, other: &ParamVector) -> Result<f64> {
        check_len(self.len(), other.len())?;
        Ok(dot_slices(&self.0, &other.0))
    }

    pub fn norm_squared(&self) -> f64 {
        dot_slices(&self.0, &self.0)
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.norm_squared())
    }

    /// Returns `alpha * self + y`.
    pub fn axpy(&self, alpha: f64, y: &ParamVector) -> Result<ParamVector> {
        check_len(self.len(), y.len())?;
        Ok(ParamVector(self.0.iter().zip(&y.0).map(|(x, y)| alpha * x + y).collect()))
    }

    /// In place `self += alpha * x`.
    pub fn add_scaled(&mut self, alpha: f64, x: &ParamVector) -> Result<()> {
        check_len(self.len(), x.len())?;
        for (s, x) in self.0.iter_mut().zip(&x.0) {
            *s += alpha * x;
        }
        Ok(())
    }

    pub fn scale(&self, k: f64) -> ParamVector {
        ParamVector(self.0.iter().map(|x| k * x).collect())
    }

    pub fn add(&self, other: &ParamVector) -> Result<ParamVector> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        other.axpy(-1.0, self)
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &ParamVector) -> Result<f64> {
        check_len(self.len(), other.len())?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| libm::fabs(a - b)).fold(0.0, f64::max))
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(values: Vec<f64>) -> Self {
        ParamVector(values)
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub fn dot(x: &ParamVector, y: &ParamVector) -> Result<f64> {
    x.dot(y)
}

pub fn norm(x: &ParamVector) -> f64 {
    x.norm()
}

pub fn axpy(alpha: f64, x: &ParamVector, y: &ParamVector) -> Result<ParamVector> {
    x.axpy(alpha, y)
}

/// Sum of a sequence of equal-length vectors, in iteration order.
pub fn sum<'a, I>(len: usize, vectors: I) -> Result<ParamVector>
where
    I: IntoIterator<Item = &'a ParamVector>,
{
    let mut acc = ParamVector::zeros(len);
    for v in vectors {
        acc.add_scaled(1.0, v)?;
    }
    Ok(acc)
}

pub(crate) fn dot_slices(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(y) {
        acc += a * b;
    }
    acc
}
