//! Optimizer steps: momentum SGD, the sharpness-aware perturbed step (SAM),
//! and the multi-domain perturbed step with gradient alignment (RoGA).
//!
//! Per domain `i`, the RoGA update direction is the exact θ-gradient of
//!
//! ```text
//! L(θ + ε̂ᵢ; Dᵢ) − α⟨∇L(θ + ε̂ᵢ; Dᵢ), ∇L(θ; Dᵢ)⟩
//! ```
//!
//! with the ascent perturbation `ε̂ᵢ = ρ·∇L/‖∇L‖` estimated at the current
//! iterate and held constant (not differentiated through). Writing
//! `g = ∇L(θ)`, `g_p = ∇L(θ+ε̂)` and `H(x)` for the Hessian at `x`, that
//! gradient is
//!
//! ```text
//! g_p − α·[H(θ+ε̂)·g + H(θ)·g_p]
//! ```
//!
//! The two Hessian-vector products are central finite differences of the
//! exact gradient, so the alignment term is exact in the quadratic limit.
//! Domain updates are averaged with the unweighted `1/K` mean, summed in
//! ascending `domain_id` order so the result does not depend on the order
//! in which batches are supplied.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::vector::ParamVector;

/// Gradient-norm threshold below which the perturbation is skipped.
pub const DEFAULT_GRAD_FLOOR: f64 = 1e-12;

/// Hyperparameters shared by all optimizer steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Perturbation radius ρ.
    pub rho: f64,
    /// Balance coefficient α of the alignment term.
    pub alpha: f64,
    /// Learning rate η.
    pub lr: f64,
    /// Momentum coefficient in `[0, 1)`; 0 disables momentum.
    pub momentum: f64,
    /// Base step for finite-difference Hessian-vector products; the
    /// effective step is `hvp_step·(1+‖θ‖)`.
    pub hvp_step: f64,
    /// Gradient-norm floor below which ε̂ is the zero vector.
    pub grad_floor: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            rho: 0.1,
            alpha: 0.001,
            lr: 0.005,
            momentum: 0.0,
            hvp_step: 1e-4,
            grad_floor: DEFAULT_GRAD_FLOOR,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("rho", self.rho),
            ("alpha", self.alpha),
            ("lr", self.lr),
            ("momentum", self.momentum),
            ("hvp_step", self.hvp_step),
            ("grad_floor", self.grad_floor),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::Config(format!("optimizer.{name} must be finite, got {v}")));
            }
        }
        if self.rho < 0.0 {
            return Err(Error::Config(format!("optimizer.rho must be >= 0, got {}", self.rho)));
        }
        if self.alpha < 0.0 {
            return Err(Error::Config(format!("optimizer.alpha must be >= 0, got {}", self.alpha)));
        }
        if self.lr <= 0.0 {
            return Err(Error::Config(format!("optimizer.lr must be > 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "optimizer.momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.hvp_step <= 0.0 {
            return Err(Error::Config(format!(
                "optimizer.hvp_step must be > 0, got {}",
                self.hvp_step
            )));
        }
        if self.grad_floor <= 0.0 {
            return Err(Error::Config(format!(
                "optimizer.grad_floor must be > 0, got {}",
                self.grad_floor
            )));
        }
        Ok(())
    }
}

/// Which parts of the per-domain update are active. `FULL` is the complete
/// update; the other combinations isolate individual terms for ablations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GradientTerms {
    /// Use the perturbed gradient `∇L(θ+ε̂)` as the loss term (otherwise
    /// the plain gradient `∇L(θ)`).
    pub perturbed_loss: bool,
    /// Subtract the alignment-term gradient `α[H(θ+ε̂)g + H(θ)g_p]`.
    pub alignment: bool,
}

impl GradientTerms {
    pub const FULL: Self = Self { perturbed_loss: true, alignment: true };
    pub const PERTURBED_ONLY: Self = Self { perturbed_loss: true, alignment: false };
    pub const ALIGNMENT_ONLY: Self = Self { perturbed_loss: false, alignment: true };
    pub const NEITHER: Self = Self { perturbed_loss: false, alignment: false };
}

/// Per-domain observability captured while computing an update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainDiagnostics {
    pub domain_id: u32,
    /// `L(θ)` on this domain's batch.
    pub loss: f64,
    /// `L(θ+ε̂)`.
    pub perturbed_loss: f64,
    /// `⟨∇L(θ+ε̂), ∇L(θ)⟩`.
    pub alignment: f64,
    /// `‖∇L(θ)‖`.
    pub grad_norm: f64,
}

/// Diagnostics for one optimizer step, ordered by ascending domain id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub domain_ids: Vec<u32>,
    pub per_domain_loss: Vec<f64>,
    pub per_domain_perturbed_loss: Vec<f64>,
    pub per_domain_alignment: Vec<f64>,
    pub grad_norms: Vec<f64>,
    /// Norm of the mean update direction across domains.
    pub aggregate_grad_norm: f64,
}

impl StepDiagnostics {
    fn from_domains(domains: Vec<DomainDiagnostics>, aggregate_grad_norm: f64) -> Self {
        Self {
            domain_ids: domains.iter().map(|d| d.domain_id).collect(),
            per_domain_loss: domains.iter().map(|d| d.loss).collect(),
            per_domain_perturbed_loss: domains.iter().map(|d| d.perturbed_loss).collect(),
            per_domain_alignment: domains.iter().map(|d| d.alignment).collect(),
            grad_norms: domains.iter().map(|d| d.grad_norm).collect(),
            aggregate_grad_norm,
        }
    }

    fn mean(xs: &[f64]) -> f64 {
        xs.iter().sum::<f64>() / xs.len() as f64
    }

    /// Mean `L(θ)` over domains.
    pub fn mean_loss(&self) -> f64 {
        Self::mean(&self.per_domain_loss)
    }

    pub fn mean_perturbed_loss(&self) -> f64 {
        Self::mean(&self.per_domain_perturbed_loss)
    }

    pub fn mean_alignment(&self) -> f64 {
        Self::mean(&self.per_domain_alignment)
    }

    pub fn mean_grad_norm(&self) -> f64 {
        Self::mean(&self.grad_norms)
    }

    /// Value of the training objective at θ implied by this step's
    /// diagnostics: mean over domains of `L(θ+ε̂) − α⟨g_p, g⟩`.
    pub fn objective_value(&self, alpha: f64) -> f64 {
        let k = self.per_domain_loss.len() as f64;
        self.per_domain_perturbed_loss
            .iter()
            .zip(&self.per_domain_alignment)
            .map(|(&lp, &al)| lp - alpha * al)
            .sum::<f64>()
            / k
    }
}

/// Result of one optimizer step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub theta: ParamVector,
    pub velocity: ParamVector,
    pub diagnostics: StepDiagnostics,
}

/// First-order solution of the inner ascent: `ρ·g/‖g‖`, or the zero vector
/// when `‖g‖ < grad_floor` (the perturbation is skipped on vanishing
/// gradients rather than dividing by a near-zero norm).
pub fn epsilon_hat(g: &ParamVector, rho: f64, grad_floor: f64) -> ParamVector {
    let n = g.norm();
    if n < grad_floor {
        ParamVector::zeros(g.len())
    } else {
        g.scaled(rho / n)
    }
}

/// The perturbed multi-domain loss `(1/K) Σᵢ L(θ + ε̂ᵢ; Dᵢ)` with each
/// `ε̂ᵢ` recomputed from that domain's gradient at θ. Evaluation only; θ is
/// unmodified. Domains are visited in ascending `domain_id` order.
pub fn multi_domain_perturbed_loss<O: Objective>(
    objectives: &[O],
    theta: &ParamVector,
    rho: f64,
    grad_floor: f64,
) -> Result<f64> {
    if objectives.is_empty() {
        return Err(Error::InvalidInput("need at least one domain".into()));
    }
    let mut order: Vec<usize> = (0..objectives.len()).collect();
    order.sort_by_key(|&i| objectives[i].domain_id());
    let mut total = 0.0;
    for &i in &order {
        let obj = &objectives[i];
        let eps = epsilon_hat(&obj.grad(theta)?, rho, grad_floor);
        total += if eps.norm() == 0.0 {
            obj.loss(theta)?
        } else {
            obj.loss(&theta.axpy(1.0, &eps)?)?
        };
    }
    Ok(total / objectives.len() as f64)
}

/// Hessian-vector product by central differences of the exact gradient:
/// with `u = v/‖v‖` and `h = hvp_step·(1+‖θ‖)`,
/// `‖v‖·(∇L(θ+h·u) − ∇L(θ−h·u))/(2h)`.
///
/// A zero `v` yields the defined zero result.
pub fn hvp<O: Objective>(
    obj: &O,
    params: &ParamVector,
    v: &ParamVector,
    hvp_step: f64,
) -> Result<ParamVector> {
    if hvp_step <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "hvp_step must be positive, got {hvp_step}"
        )));
    }
    let vnorm = v.norm();
    if vnorm == 0.0 {
        return Ok(ParamVector::zeros(v.len()));
    }
    let u = v.scaled(1.0 / vnorm);
    let h = hvp_step * (1.0 + params.norm());
    let g_plus = obj.grad(&params.axpy(h, &u)?)?;
    let g_minus = obj.grad(&params.axpy(-h, &u)?)?;
    Ok(g_plus.axpy(-1.0, &g_minus)?.scaled(vnorm / (2.0 * h)))
}

/// Computes one domain's update direction and diagnostics with a choice of
/// active terms (see [`GradientTerms`]).
pub fn roga_domain_gradient_terms<O: Objective>(
    obj: &O,
    theta: &ParamVector,
    cfg: &OptimizerConfig,
    terms: GradientTerms,
) -> Result<(ParamVector, DomainDiagnostics)> {
    let id = obj.domain_id();
    let base_loss = obj.loss(theta)?;
    let g = obj.grad(theta)?;
    let grad_norm = g.norm();
    let eps = epsilon_hat(&g, cfg.rho, cfg.grad_floor);

    // With a zero perturbation the perturbed quantities coincide with the
    // unperturbed ones; loss/grad are pure, so reuse is bitwise-exact.
    let (perturbed_loss, g_p) = if eps.norm() == 0.0 {
        (base_loss, g.clone())
    } else {
        let theta_p = theta.axpy(1.0, &eps)?;
        (obj.loss(&theta_p)?, obj.grad(&theta_p)?)
    };
    let alignment = g_p.dot(&g)?;

    let mut update = if terms.perturbed_loss { g_p.clone() } else { g.clone() };
    if terms.alignment && cfg.alpha != 0.0 {
        let theta_p = theta.axpy(1.0, &eps)?;
        let h_at_perturbed = hvp(obj, &theta_p, &g, cfg.hvp_step)?;
        let h_at_theta = hvp(obj, theta, &g_p, cfg.hvp_step)?;
        let alignment_grad = h_at_perturbed.axpy(1.0, &h_at_theta)?;
        update = update.axpy(-cfg.alpha, &alignment_grad)?;
    }

    if !(base_loss.is_finite() && perturbed_loss.is_finite() && alignment.is_finite())
        || !update.is_finite()
    {
        return Err(Error::Numeric(format!(
            "non-finite update quantities in domain {id}"
        )));
    }

    Ok((
        update,
        DomainDiagnostics {
            domain_id: id,
            loss: base_loss,
            perturbed_loss,
            alignment,
            grad_norm,
        },
    ))
}

/// The full per-domain RoGA update direction
/// `g_p − α[H(θ+ε̂)g + H(θ)g_p]`, plus that domain's diagnostics.
pub fn roga_domain_gradient<O: Objective>(
    obj: &O,
    theta: &ParamVector,
    cfg: &OptimizerConfig,
) -> Result<(ParamVector, DomainDiagnostics)> {
    roga_domain_gradient_terms(obj, theta, cfg, GradientTerms::FULL)
}

/// One optimizer step with a choice of active terms: averages the
/// per-domain update directions (ascending `domain_id` order), applies
/// momentum, and descends.
pub fn roga_step_terms<O: Objective>(
    objectives: &[O],
    theta: &ParamVector,
    cfg: &OptimizerConfig,
    velocity: &ParamVector,
    terms: GradientTerms,
) -> Result<StepOutcome> {
    cfg.validate()?;
    if objectives.is_empty() {
        return Err(Error::InvalidInput("need at least one domain".into()));
    }
    if velocity.len() != theta.len() {
        return Err(Error::Dimension(format!(
            "velocity length {} does not match theta length {}",
            velocity.len(),
            theta.len()
        )));
    }

    let mut order: Vec<usize> = (0..objectives.len()).collect();
    order.sort_by_key(|&i| objectives[i].domain_id());

    let mut sum = ParamVector::zeros(theta.len());
    let mut domains = Vec::with_capacity(objectives.len());
    for &i in &order {
        let (update, diag) = roga_domain_gradient_terms(&objectives[i], theta, cfg, terms)?;
        sum.add_assign_scaled(1.0, &update)?;
        domains.push(diag);
    }
    let aggregate = sum.scaled(1.0 / objectives.len() as f64);
    let aggregate_grad_norm = aggregate.norm();

    let velocity = velocity.scaled(cfg.momentum).axpy(1.0, &aggregate)?;
    let theta = theta.axpy(-cfg.lr, &velocity)?;
    if !theta.is_finite() || !velocity.is_finite() {
        return Err(Error::Numeric("non-finite parameters after step".into()));
    }

    Ok(StepOutcome {
        theta,
        velocity,
        diagnostics: StepDiagnostics::from_domains(domains, aggregate_grad_norm),
    })
}

/// One full RoGA step over `K` domain objectives.
pub fn roga_step<O: Objective>(
    objectives: &[O],
    theta: &ParamVector,
    cfg: &OptimizerConfig,
    velocity: &ParamVector,
) -> Result<StepOutcome> {
    roga_step_terms(objectives, theta, cfg, velocity, GradientTerms::FULL)
}

/// One SAM step on a pooled batch: a RoGA step with `K = 1` and the
/// alignment term forced off.
pub fn sam_step<O: Objective>(
    obj: &O,
    theta: &ParamVector,
    cfg: &OptimizerConfig,
    velocity: &ParamVector,
) -> Result<StepOutcome> {
    let cfg = OptimizerConfig { alpha: 0.0, ..cfg.clone() };
    roga_step_terms(std::slice::from_ref(obj), theta, &cfg, velocity, GradientTerms::FULL)
}

/// One momentum-SGD step on a pooled batch: a SAM step with `ρ = 0`.
pub fn sgd_step<O: Objective>(
    obj: &O,
    theta: &ParamVector,
    cfg: &OptimizerConfig,
    velocity: &ParamVector,
) -> Result<StepOutcome> {
    let cfg = OptimizerConfig { rho: 0.0, alpha: 0.0, ..cfg.clone() };
    roga_step_terms(std::slice::from_ref(obj), theta, &cfg, velocity, GradientTerms::FULL)
}
