//! The differentiable-objective contract the optimizers and probes operate
//! on, plus closed-form objectives used to exercise them.

use crate::data::DomainBatch;
use crate::error::Result;
use crate::model::{self, ModelSpec};
use crate::vector::ParamVector;

/// A scalar loss with an exact gradient, evaluated at a parameter vector.
///
/// Implementations must be pure: identical `theta` gives bitwise-identical
/// results, with no interior mutability.
pub trait Objective {
    fn loss(&self, theta: &ParamVector) -> Result<f64>;
    fn grad(&self, theta: &ParamVector) -> Result<ParamVector>;

    /// Domain tag carried into diagnostics and error messages.
    fn domain_id(&self) -> u32 {
        0
    }
}

/// Mean binary cross-entropy of a model on one domain's batch.
#[derive(Clone, Copy)]
pub struct BatchObjective<'a> {
    spec: &'a ModelSpec,
    batch: &'a DomainBatch,
}

impl<'a> BatchObjective<'a> {
    pub fn new(spec: &'a ModelSpec, batch: &'a DomainBatch) -> Self {
        Self { spec, batch }
    }
}

impl Objective for BatchObjective<'_> {
    fn loss(&self, theta: &ParamVector) -> Result<f64> {
        model::loss(self.spec, theta, self.batch)
    }

    fn grad(&self, theta: &ParamVector) -> Result<ParamVector> {
        model::grad(self.spec, theta, self.batch)
    }

    fn domain_id(&self) -> u32 {
        self.batch.domain_id()
    }
}

/// One objective per batch, for multi-domain steps.
pub fn batch_objectives<'a>(
    spec: &'a ModelSpec,
    batches: &'a [DomainBatch],
) -> Vec<BatchObjective<'a>> {
    batches.iter().map(|b| BatchObjective::new(spec, b)).collect()
}

/// Closed-form objectives with known optima, gradients and Hessians. They
/// stand in for a model wherever an optimizer property has an analytic
/// answer.
pub mod synthetic {
    use super::*;
    use crate::error::Error;

    /// Diagonal quadratic `½ Σ cᵢ (θᵢ − tᵢ)²` with gradient `cᵢ(θᵢ − tᵢ)`
    /// and Hessian `diag(c)`.
    #[derive(Clone, Debug)]
    pub struct Quadratic {
        curvature: Vec<f64>,
        center: Vec<f64>,
        domain_id: u32,
    }

    impl Quadratic {
        pub fn new(curvature: Vec<f64>) -> Self {
            let center = vec![0.0; curvature.len()];
            Self { curvature, center, domain_id: 0 }
        }

        pub fn with_center(mut self, center: Vec<f64>) -> Self {
            assert_eq!(center.len(), self.curvature.len());
            self.center = center;
            self
        }

        pub fn with_domain_id(mut self, id: u32) -> Self {
            self.domain_id = id;
            self
        }

        /// `½ c θ²` in `dim` dimensions with uniform curvature `c`.
        pub fn isotropic(dim: usize, c: f64) -> Self {
            Self::new(vec![c; dim])
        }

        fn check(&self, theta: &ParamVector) -> Result<()> {
            if theta.len() != self.curvature.len() {
                return Err(Error::Dimension(format!(
                    "quadratic of dimension {}, theta of length {}",
                    self.curvature.len(),
                    theta.len()
                )));
            }
            Ok(())
        }
    }

    impl Objective for Quadratic {
        fn loss(&self, theta: &ParamVector) -> Result<f64> {
            self.check(theta)?;
            Ok(theta
                .as_slice()
                .iter()
                .zip(&self.curvature)
                .zip(&self.center)
                .map(|((&t, &c), &m)| 0.5 * c * (t - m) * (t - m))
                .sum())
        }

        fn grad(&self, theta: &ParamVector) -> Result<ParamVector> {
            self.check(theta)?;
            ParamVector::new(
                theta
                    .as_slice()
                    .iter()
                    .zip(&self.curvature)
                    .zip(&self.center)
                    .map(|((&t, &c), &m)| c * (t - m))
                    .collect(),
            )
        }

        fn domain_id(&self) -> u32 {
            self.domain_id
        }
    }

    /// Linear loss `Σ sᵢ θᵢ` with constant gradient `s`.
    #[derive(Clone, Debug)]
    pub struct Linear {
        slope: Vec<f64>,
    }

    impl Linear {
        pub fn new(slope: Vec<f64>) -> Self {
            Self { slope }
        }
    }

    impl Objective for Linear {
        fn loss(&self, theta: &ParamVector) -> Result<f64> {
            if theta.len() != self.slope.len() {
                return Err(Error::Dimension("linear objective dimension".into()));
            }
            Ok(theta
                .as_slice()
                .iter()
                .zip(&self.slope)
                .map(|(&t, &s)| s * t)
                .sum())
        }

        fn grad(&self, theta: &ParamVector) -> Result<ParamVector> {
            if theta.len() != self.slope.len() {
                return Err(Error::Dimension("linear objective dimension".into()));
            }
            ParamVector::new(self.slope.clone())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::synthetic::{Linear, Quadratic};
    use super::*;

    #[test]
    fn quadratic_loss_and_grad() {
        let q = Quadratic::new(vec![1.0, 2.0]);
        let theta = ParamVector::new(vec![3.0, -1.0]).unwrap();
        assert_eq!(q.loss(&theta).unwrap(), 0.5 * 9.0 + 1.0);
        assert_eq!(q.grad(&theta).unwrap().as_slice(), &[3.0, -2.0]);
    }

    #[test]
    fn quadratic_center_shifts_minimum() {
        let q = Quadratic::new(vec![2.0]).with_center(vec![5.0]);
        let at_min = ParamVector::new(vec![5.0]).unwrap();
        assert_eq!(q.loss(&at_min).unwrap(), 0.0);
        assert_eq!(q.grad(&at_min).unwrap().as_slice(), &[0.0]);
    }

    #[test]
    fn linear_gradient_is_constant() {
        let l = Linear::new(vec![1.5, -2.0]);
        let a = ParamVector::zeros(2);
        let b = ParamVector::new(vec![10.0, 10.0]).unwrap();
        assert_eq!(l.grad(&a).unwrap(), l.grad(&b).unwrap());
    }
}
