//! Loss-landscape diagnostics: sharpness estimation by projected gradient
//! ascent inside a ρ-ball, inter-domain gradient geometry, and 1-D loss
//! slices.

use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::optim::{epsilon_hat, DEFAULT_GRAD_FLOOR};
use crate::rng::Rng64;
use crate::vector::ParamVector;

/// Result of one sharpness search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharpnessResult {
    pub base_loss: f64,
    pub max_perturbed_loss: f64,
    /// `max_perturbed_loss − base_loss`; never negative because the zero
    /// perturbation is always a candidate.
    pub sharpness: f64,
    pub rho: f64,
    pub ascent_iters: usize,
    pub restarts: usize,
}

/// Approximates `max_{‖ε‖≤ρ} L(θ+ε) − L(θ)` by projected gradient ascent.
///
/// Ascent uses normalized gradient steps of length `ρ/ascent_iters`,
/// projecting back onto the ρ-ball after every step. The search runs from
/// the analytic first-order ascent point `ε̂ = ρ∇L/‖∇L‖` (so the estimate
/// is never worse than the single-point one) plus `restarts` random starts
/// on the ρ-sphere, with per-restart streams seeded as `seed ⊕ index` so a
/// longer restart schedule extends — never reshuffles — a shorter one. The
/// best loss seen at any evaluated point wins; ties keep the earlier
/// candidate.
pub fn sharpness<O: Objective>(
    obj: &O,
    theta: &ParamVector,
    rho: f64,
    ascent_iters: usize,
    restarts: usize,
    seed: u64,
) -> Result<SharpnessResult> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::InvalidInput(format!("rho must be > 0, got {rho}")));
    }
    if ascent_iters == 0 {
        return Err(Error::InvalidInput("ascent_iters must be at least 1".into()));
    }

    let base_loss = obj.loss(theta)?;
    let mut best = base_loss; // ε = 0 candidate
    let step = rho / ascent_iters as f64;

    let run_start = |eps0: ParamVector| -> Result<f64> {
        let mut local_best = obj.loss(&theta.axpy(1.0, &eps0)?)?;
        let mut eps = eps0;
        for _ in 0..ascent_iters {
            let g = obj.grad(&theta.axpy(1.0, &eps)?)?;
            let gnorm = g.norm();
            if gnorm < DEFAULT_GRAD_FLOOR {
                break;
            }
            eps = eps.axpy(step / gnorm, &g)?;
            let enorm = eps.norm();
            if enorm > rho {
                eps = eps.scaled(rho / enorm);
            }
            local_best = local_best.max(obj.loss(&theta.axpy(1.0, &eps)?)?);
        }
        Ok(local_best)
    };

    // Analytic first-order start.
    let g0 = obj.grad(theta)?;
    best = best.max(run_start(epsilon_hat(&g0, rho, DEFAULT_GRAD_FLOOR))?);

    // Random starts on the ρ-sphere.
    for r in 0..restarts {
        let mut rng = Rng64::new(seed ^ r as u64);
        let mut dir = ParamVector::new((0..theta.len()).map(|_| rng.next_normal()).collect())?;
        let n = dir.norm();
        if n < 1e-30 {
            dir = {
                let mut e = vec![0.0; theta.len()];
                e[0] = 1.0;
                ParamVector::new(e)?
            };
        }
        let start = dir.scaled(rho / dir.norm());
        best = best.max(run_start(start)?);
    }

    Ok(SharpnessResult {
        base_loss,
        max_perturbed_loss: best,
        sharpness: best - base_loss,
        rho,
        ascent_iters,
        restarts,
    })
}

/// Symmetric `K×K` matrix of cosines between per-domain gradients at θ.
/// Entries are clamped to `[−1, 1]`; where a gradient norm falls below the
/// floor the cosine is reported as 0 (and the diagonal as well), since the
/// direction is undefined. Diagonal entries with a valid gradient are
/// exactly 1.
pub fn domain_gradient_cosine<O: Objective>(
    objectives: &[O],
    theta: &ParamVector,
) -> Result<Matrix> {
    let k = objectives.len();
    if k < 2 {
        return Err(Error::InvalidInput("need at least 2 domains".into()));
    }
    let grads: Vec<ParamVector> = objectives
        .iter()
        .map(|o| o.grad(theta))
        .collect::<Result<_>>()?;
    let norms: Vec<f64> = grads.iter().map(ParamVector::norm).collect();

    let mut data = vec![0.0; k * k];
    for i in 0..k {
        for j in i..k {
            let value = if norms[i] < DEFAULT_GRAD_FLOOR || norms[j] < DEFAULT_GRAD_FLOOR {
                0.0
            } else if i == j {
                1.0
            } else {
                (grads[i].dot(&grads[j])? / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            data[i * k + j] = value;
            data[j * k + i] = value;
        }
    }
    Matrix::new(k, k, data)
}

/// Losses along the line `θ + t·direction/‖direction‖` for `steps` values
/// of `t` evenly spaced in `[−half_range, +half_range]`. With an odd
/// `steps` the middle sample sits exactly at `t = 0`, so it equals the loss
/// at θ.
pub fn loss_slice_1d<O: Objective>(
    obj: &O,
    theta: &ParamVector,
    direction: &ParamVector,
    half_range: f64,
    steps: usize,
) -> Result<Vec<(f64, f64)>> {
    if steps < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 steps, got {steps}")));
    }
    if !(half_range.is_finite() && half_range >= 0.0) {
        return Err(Error::InvalidInput(format!("half_range must be >= 0, got {half_range}")));
    }
    let dnorm = direction.norm();
    if dnorm == 0.0 {
        return Err(Error::InvalidInput("slice direction must be nonzero".into()));
    }
    let u = direction.scaled(1.0 / dnorm);
    let denom = (steps - 1) as f64;
    let mut out = Vec::with_capacity(steps);
    for j in 0..steps {
        // (2j − (steps−1)) is 0 exactly at the middle of an odd count.
        let t = (2 * j as i64 - (steps as i64 - 1)) as f64 * half_range / denom;
        let value = obj.loss(&theta.axpy(t, &u)?)?;
        out.push((t, value));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DomainBatch;
    use crate::model::{Activation, ModelSpec};
    use crate::objective::synthetic::{Linear, Quadratic};
    use crate::objective::{batch_objectives, BatchObjective};
    use crate::optim::hvp;

    fn pv(xs: &[f64]) -> ParamVector {
        ParamVector::new(xs.to_vec()).unwrap()
    }

    fn random_model(rng: &mut Rng64, widths: &[usize]) -> (ModelSpec, ParamVector, DomainBatch) {
        let spec = ModelSpec::mlp(widths.to_vec(), Activation::Tanh);
        let d = widths[0];
        let params = ParamVector::new(
            (0..spec.param_count()).map(|_| 0.7 * rng.next_normal()).collect(),
        )
        .unwrap();
        let n = 12;
        let data: Vec<f64> = (0..n * d).map(|_| rng.next_normal()).collect();
        let labels: Vec<u8> = (0..n).map(|_| (rng.next_u64() & 1) as u8).collect();
        let batch = DomainBatch::new(Matrix::new(n, d, data).unwrap(), labels, 0).unwrap();
        (spec, params, batch)
    }

    #[test]
    fn sharpness_exact_on_isotropic_quadratic_at_origin() {
        // max over ‖ε‖≤ρ of ½λ‖ε‖² = ½λρ², attained on the sphere.
        let lambda = 3.0;
        let q = Quadratic::isotropic(1, lambda);
        let rho = 0.2;
        let r = sharpness(&q, &ParamVector::zeros(1), rho, 10, 3, 1).unwrap();
        let expect = 0.5 * lambda * rho * rho;
        assert!((r.sharpness - expect).abs() < 1e-12, "{} vs {expect}", r.sharpness);
    }

    #[test]
    fn sharpness_exact_on_linear_loss() {
        let c = vec![1.0, -2.0, 2.0];
        let l = Linear::new(c.clone());
        let rho = 0.3;
        let r = sharpness(&l, &ParamVector::zeros(3), rho, 15, 4, 9).unwrap();
        let cnorm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((r.sharpness - rho * cnorm).abs() <= 1e-6, "{}", r.sharpness);
    }

    #[test]
    fn sharpness_bounded_by_first_order_expansion_for_tiny_rho() {
        let mut rng = Rng64::new(3);
        let (spec, params, batch) = random_model(&mut rng, &[3, 6, 1]);
        let obj = BatchObjective::new(&spec, &batch);
        let rho = 1e-4;
        let r = sharpness(&obj, &params, rho, 10, 3, 4).unwrap();
        let gnorm = obj.grad(&params).unwrap().norm();
        // Estimate the largest curvature along the gradient direction to
        // bound the second-order remainder.
        let g = obj.grad(&params).unwrap();
        let hg = hvp(&obj, &params, &g, 1e-4).unwrap();
        let curvature = (hg.norm() / gnorm).max(1.0);
        let bound = rho * gnorm + 5.0 * curvature * rho * rho;
        assert!(r.sharpness <= bound, "{} > {bound}", r.sharpness);
        assert!(r.sharpness >= 0.0);
    }

    #[test]
    fn sharpness_monotone_in_rho() {
        let mut rng = Rng64::new(5);
        let (spec, params, batch) = random_model(&mut rng, &[3, 6, 1]);
        let obj = BatchObjective::new(&spec, &batch);
        let mut last = -1.0;
        for rho in [0.01, 0.05, 0.1] {
            let r = sharpness(&obj, &params, rho, 20, 5, 7).unwrap();
            assert!(r.sharpness >= last, "sharpness dropped at rho {rho}");
            last = r.sharpness;
        }
    }

    #[test]
    fn sharpness_monotone_in_restarts() {
        let mut rng = Rng64::new(8);
        let (spec, params, batch) = random_model(&mut rng, &[3, 5, 1]);
        let obj = BatchObjective::new(&spec, &batch);
        let mut last = -1.0;
        for restarts in [0, 1, 2, 3, 4] {
            let r = sharpness(&obj, &params, 0.05, 10, restarts, 21).unwrap();
            assert!(r.sharpness >= last, "sharpness dropped at restarts {restarts}");
            last = r.sharpness;
        }
    }

    #[test]
    fn sharpness_rejects_bad_arguments() {
        let q = Quadratic::isotropic(1, 1.0);
        assert!(sharpness(&q, &ParamVector::zeros(1), 0.0, 5, 1, 0).is_err());
        assert!(sharpness(&q, &ParamVector::zeros(1), 0.1, 0, 1, 0).is_err());
    }

    #[test]
    fn cosine_matrix_identical_batches_give_one() {
        let mut rng = Rng64::new(11);
        let (spec, params, batch) = random_model(&mut rng, &[3, 5, 1]);
        let batches = [batch.clone(), batch];
        let objs = batch_objectives(&spec, &batches);
        let m = domain_gradient_cosine(&objs, &params).unwrap();
        assert!((m.get(0, 1) - 1.0).abs() < 1e-12);
        assert_eq!(m.get(0, 0), 1.0);
    }

    #[test]
    fn cosine_matrix_symmetric_and_bounded() {
        let mut rng = Rng64::new(12);
        let (spec, params, b0) = random_model(&mut rng, &[3, 5, 1]);
        let (_, _, b1) = random_model(&mut rng, &[3, 5, 1]);
        let (_, _, b2) = random_model(&mut rng, &[3, 5, 1]);
        let batches = [b0, b1, b2];
        let objs = batch_objectives(&spec, &batches);
        let m = domain_gradient_cosine(&objs, &params).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v = m.get(i, j);
                assert!((-1.0..=1.0).contains(&v));
                assert_eq!(v.to_bits(), m.get(j, i).to_bits(), "asymmetry at {i},{j}");
            }
        }
    }

    #[test]
    fn cosine_invariant_to_duplicating_a_batch() {
        // Duplicating every example doubles the batch but leaves the mean
        // gradient unchanged, so cosines must not move.
        let mut rng = Rng64::new(13);
        let (spec, params, b0) = random_model(&mut rng, &[3, 5, 1]);
        let (_, _, b1) = random_model(&mut rng, &[3, 5, 1]);
        let doubled = DomainBatch::concat(&[b1.clone(), b1.clone()], b1.domain_id()).unwrap();
        let plain = [b0.clone(), b1];
        let scaled = [b0, doubled];
        let po = batch_objectives(&spec, &plain);
        let so = batch_objectives(&spec, &scaled);
        let a = domain_gradient_cosine(&po, &params).unwrap();
        let b = domain_gradient_cosine(&so, &params).unwrap();
        assert!((a.get(0, 1) - b.get(0, 1)).abs() < 1e-9);
    }

    #[test]
    fn slice_of_quadratic_is_symmetric_parabola() {
        let q = Quadratic::isotropic(2, 1.0);
        let theta = ParamVector::zeros(2);
        let dir = pv(&[1.0, 0.0]);
        let slice = loss_slice_1d(&q, &theta, &dir, 1.0, 21).unwrap();
        assert_eq!(slice.len(), 21);
        let mid = slice[10];
        assert_eq!(mid.0, 0.0);
        assert_eq!(mid.1, 0.0);
        for k in 0..10 {
            let (tl, ll) = slice[k];
            let (tr, lr) = slice[20 - k];
            assert!((tl + tr).abs() < 1e-15);
            assert!((ll - lr).abs() < 1e-12);
            assert!(ll > mid.1);
        }
    }

    #[test]
    fn slice_middle_sample_equals_loss_at_theta() {
        let mut rng = Rng64::new(14);
        let (spec, params, batch) = random_model(&mut rng, &[3, 5, 1]);
        let obj = BatchObjective::new(&spec, &batch);
        let dir = ParamVector::new((0..params.len()).map(|_| rng.next_normal()).collect()).unwrap();
        let slice = loss_slice_1d(&obj, &params, &dir, 0.5, 7).unwrap();
        let base = obj.loss(&params).unwrap();
        assert_eq!(slice[3].0, 0.0);
        assert_eq!(slice[3].1.to_bits(), base.to_bits());
    }

    #[test]
    fn slice_degenerate_range_repeats_base_loss() {
        let q = Quadratic::isotropic(1, 1.0);
        let theta = pv(&[2.0]);
        let slice = loss_slice_1d(&q, &theta, &pv(&[1.0]), 0.0, 3).unwrap();
        assert_eq!(slice.len(), 3);
        for (_, l) in &slice {
            assert_eq!(*l, 2.0);
        }
    }

    #[test]
    fn slice_values_match_direct_evaluation() {
        let mut rng = Rng64::new(15);
        let (spec, params, batch) = random_model(&mut rng, &[3, 4, 1]);
        let obj = BatchObjective::new(&spec, &batch);
        let dir = ParamVector::new((0..params.len()).map(|_| rng.next_normal()).collect()).unwrap();
        let u = dir.scaled(1.0 / dir.norm());
        for (t, l) in loss_slice_1d(&obj, &params, &dir, 0.8, 9).unwrap() {
            let direct = obj.loss(&params.axpy(t, &u).unwrap()).unwrap();
            assert!((l - direct).abs() <= 1e-12);
        }
    }

    #[test]
    fn slice_rejects_zero_direction_and_few_steps() {
        let q = Quadratic::isotropic(2, 1.0);
        let theta = ParamVector::zeros(2);
        assert!(loss_slice_1d(&q, &theta, &ParamVector::zeros(2), 1.0, 5).is_err());
        assert!(loss_slice_1d(&q, &theta, &pv(&[1.0, 0.0]), 1.0, 2).is_err());
    }
}
