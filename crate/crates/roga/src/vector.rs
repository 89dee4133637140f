//! Flat parameter vectors and the dense arithmetic the optimizers build on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A flat vector of 64-bit model parameters. The same type carries
/// gradients and parameter perturbations, which live in the same space.
///
/// The length is fixed for the life of a model; combining vectors of
/// different lengths is a dimension error. Entries are finite: the
/// constructor rejects NaN/Inf, and every arithmetic operation here
/// preserves finiteness for inputs of ordinary magnitude.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    /// Builds a vector, rejecting non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite entry {} at index {i}",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
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

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.clone()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    fn check_len(&self, other: &ParamVector, op: &str) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Dimension(format!(
                "{op}: lengths {} and {} differ",
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }

    /// Inner product `Σ aᵢ bᵢ`.
    pub fn dot(&self, other: &ParamVector) -> Result<f64> {
        self.check_len(other, "dot")?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a * b)
            .sum())
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.dot(self).expect("self-dot cannot mismatch").sqrt()
    }

    /// Componentwise `self + s·other`; inputs are unmodified.
    pub fn axpy(&self, s: f64, other: &ParamVector) -> Result<ParamVector> {
        self.check_len(other, "axpy")?;
        Ok(ParamVector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + s * b)
                .collect(),
        ))
    }

    /// Componentwise `s·self`.
    pub fn scaled(&self, s: f64) -> ParamVector {
        ParamVector(self.0.iter().map(|a| s * a).collect())
    }

    /// Accumulates `s·other` into `self`.
    pub(crate) fn add_assign_scaled(&mut self, s: f64, other: &ParamVector) -> Result<()> {
        self.check_len(other, "add_assign_scaled")?;
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += s * b;
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(v: ParamVector) -> Vec<f64> {
        v.0
    }
}
