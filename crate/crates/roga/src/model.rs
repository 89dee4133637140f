//! Binary classifiers over flat parameter vectors: logistic regression and
//! small dense MLPs, with exact reverse-mode gradients.
//!
//! The forward pass ends in a single logit. Training loss is mean binary
//! cross-entropy computed from logits in the overflow-safe form
//! `max(z,0) − z·y + ln(1 + e^{−|z|})`, so it stays finite for saturated
//! logits. Gradients are explicit layer-by-layer backpropagation over the
//! fixed layer structure; the model family is closed and small, so no
//! general tape is needed.
//!
//! Parameter layout: for each layer in order, the weight matrix
//! (row-major, `out×in`) followed by the bias vector. Everything here is a
//! pure function of its inputs: identical inputs give bitwise-identical
//! results, and all functions are safe to call concurrently.

use serde::{Deserialize, Serialize};

use crate::data::{DomainBatch, Matrix};
use crate::error::{Error, Result};
use crate::rng::Rng64;
use crate::vector::ParamVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Single affine layer `d → 1`.
    Logistic,
    /// Dense multi-layer perceptron with a linear output layer.
    Mlp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the post-activation value. The ReLU
    /// subgradient at 0 is fixed to 0 so gradients are deterministic.
    fn deriv_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Architecture description: layer widths from input `d` down to the single
/// output logit, plus the hidden activation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
}

impl ModelSpec {
    pub fn logistic(input_dim: usize) -> Self {
        Self {
            kind: ModelKind::Logistic,
            layer_widths: vec![input_dim, 1],
            activation: Activation::Tanh,
        }
    }

    pub fn mlp(layer_widths: Vec<usize>, activation: Activation) -> Self {
        Self {
            kind: ModelKind::Mlp,
            layer_widths,
            activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::Config(
                "layer_widths needs at least input and output widths".into(),
            ));
        }
        if self.layer_widths.iter().any(|&w| w == 0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if *self.layer_widths.last().unwrap() != 1 {
            return Err(Error::Config("output width must be 1 (binary logit)".into()));
        }
        if self.kind == ModelKind::Logistic && self.layer_widths.len() != 2 {
            return Err(Error::Config(
                "logistic models have exactly one affine layer".into(),
            ));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    /// `(fan_in, fan_out)` for each affine layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        self.layer_widths
            .windows(2)
            .map(|w| (w[0], w[1]))
            .collect()
    }

    /// Total parameter count `Σ out·(in+1)`.
    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| o * (i + 1)).sum()
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        self.validate()?;
        if params.len() != self.param_count() {
            return Err(Error::Dimension(format!(
                "model expects {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        Ok(())
    }

    fn check_features(&self, features: &Matrix) -> Result<()> {
        if features.cols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "model expects {} input features, got {}",
                self.input_dim(),
                features.cols()
            )));
        }
        Ok(())
    }
}

/// Weight initialization scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Per layer, weights uniform in `±sqrt(6/(fan_in+fan_out))`; biases 0.
    GlorotUniform,
    Zeros,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitSpec {
    pub scheme: InitScheme,
    pub seed: u64,
}

/// Deterministic parameter initialization for a model spec.
pub fn init_params(spec: &ModelSpec, init: &InitSpec) -> Result<ParamVector> {
    spec.validate()?;
    let mut values = vec![0.0; spec.param_count()];
    if init.scheme == InitScheme::GlorotUniform {
        let mut rng = Rng64::new(init.seed);
        let mut offset = 0;
        for (fan_in, fan_out) in spec.layer_dims() {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut values[offset..offset + fan_in * fan_out] {
                *w = (2.0 * rng.next_f64() - 1.0) * bound;
            }
            offset += fan_out * (fan_in + 1); // biases stay zero
        }
    }
    ParamVector::new(values)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Stable binary cross-entropy of a logit against a 0/1 label.
fn bce_from_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Scratch space for one example's forward pass: post-activation values per
/// layer (the last layer holds the raw logit).
struct Scratch {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Scratch {
    fn for_spec(spec: &ModelSpec) -> Self {
        let acts = spec
            .layer_dims()
            .iter()
            .map(|&(_, o)| vec![0.0; o])
            .collect::<Vec<_>>();
        let deltas = acts.clone();
        Self { acts, deltas }
    }
}

/// Runs one example through the network; fills `scratch.acts` and returns
/// the logit.
fn forward_single(spec: &ModelSpec, params: &[f64], x: &[f64], scratch: &mut Scratch) -> f64 {
    let dims = spec.layer_dims();
    let last = dims.len() - 1;
    let mut offset = 0;
    for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
        let (weights, rest) = params[offset..].split_at(fan_in * fan_out);
        let biases = &rest[..fan_out];
        // split_at_mut dance so we can read the previous layer's output.
        let (done, todo) = scratch.acts.split_at_mut(l);
        let input: &[f64] = if l == 0 { x } else { &done[l - 1] };
        let out = &mut todo[0];
        for o in 0..fan_out {
            let row = &weights[o * fan_in..(o + 1) * fan_in];
            let mut z = biases[o];
            for (w, xi) in row.iter().zip(input) {
                z += w * xi;
            }
            out[o] = if l == last { z } else { spec.activation.apply(z) };
        }
        offset += fan_out * (fan_in + 1);
    }
    scratch.acts[last][0]
}

/// Backpropagates `d_logit` for one example, accumulating into `grad_out`.
fn backward_single(
    spec: &ModelSpec,
    params: &[f64],
    x: &[f64],
    scratch: &mut Scratch,
    d_logit: f64,
    grad_out: &mut [f64],
) {
    let dims = spec.layer_dims();
    let mut offsets = Vec::with_capacity(dims.len());
    let mut offset = 0;
    for &(fan_in, fan_out) in &dims {
        offsets.push(offset);
        offset += fan_out * (fan_in + 1);
    }

    scratch.deltas[dims.len() - 1][0] = d_logit;
    for l in (0..dims.len()).rev() {
        let (fan_in, fan_out) = dims[l];
        let off = offsets[l];
        let weights = &params[off..off + fan_in * fan_out];
        let (g_weights, g_rest) = grad_out[off..].split_at_mut(fan_in * fan_out);
        let g_biases = &mut g_rest[..fan_out];
        let input: &[f64] = if l == 0 { x } else { &scratch.acts[l - 1] };

        let (deltas_prev, deltas_cur) = scratch.deltas.split_at_mut(l);
        let dz = &deltas_cur[0];
        for o in 0..fan_out {
            let d = dz[o];
            g_biases[o] += d;
            let g_row = &mut g_weights[o * fan_in..(o + 1) * fan_in];
            for (g, xi) in g_row.iter_mut().zip(input) {
                *g += d * xi;
            }
        }
        if l > 0 {
            let d_prev = &mut deltas_prev[l - 1];
            let a_prev = &scratch.acts[l - 1];
            for i in 0..fan_in {
                let mut da = 0.0;
                for (o, &d) in dz.iter().enumerate() {
                    da += weights[o * fan_in + i] * d;
                }
                d_prev[i] = da * spec.activation.deriv_from_output(a_prev[i]);
            }
        }
    }
}

/// Per-example classification scores `σ(logit)` in `(0,1)`.
pub fn predict_scores(spec: &ModelSpec, params: &ParamVector, features: &Matrix) -> Result<Vec<f64>> {
    spec.check_params(params)?;
    spec.check_features(features)?;
    let mut scratch = Scratch::for_spec(spec);
    Ok((0..features.rows())
        .map(|i| sigmoid(forward_single(spec, params.as_slice(), features.row(i), &mut scratch)))
        .collect())
}

/// Mean binary cross-entropy of the model on a batch.
pub fn loss(spec: &ModelSpec, params: &ParamVector, batch: &DomainBatch) -> Result<f64> {
    spec.check_params(params)?;
    spec.check_features(batch.features())?;
    let mut scratch = Scratch::for_spec(spec);
    let n = batch.len();
    let mut total = 0.0;
    for i in 0..n {
        let z = forward_single(spec, params.as_slice(), batch.features().row(i), &mut scratch);
        total += bce_from_logit(z, f64::from(batch.labels()[i]));
    }
    Ok(total / n as f64)
}

/// Exact reverse-mode gradient of [`loss`] with respect to the parameters.
pub fn grad(spec: &ModelSpec, params: &ParamVector, batch: &DomainBatch) -> Result<ParamVector> {
    spec.check_params(params)?;
    spec.check_features(batch.features())?;
    let mut scratch = Scratch::for_spec(spec);
    let n = batch.len();
    let inv_n = 1.0 / n as f64;
    let mut grad_out = vec![0.0; spec.param_count()];
    for i in 0..n {
        let x = batch.features().row(i);
        let z = forward_single(spec, params.as_slice(), x, &mut scratch);
        let d_logit = (sigmoid(z) - f64::from(batch.labels()[i])) * inv_n;
        backward_single(spec, params.as_slice(), x, &mut scratch, d_logit, &mut grad_out);
    }
    ParamVector::new(grad_out)
}

/// Maximum over coordinates of the relative error between [`grad`] and a
/// central finite difference of [`loss`] with step `h`.
///
/// The per-coordinate error is `|g − fd| / max(1, |g|, |fd|)`, i.e. relative
/// for large entries and absolute near zero, which keeps the check
/// meaningful for coordinates whose gradient vanishes.
pub fn grad_check(spec: &ModelSpec, params: &ParamVector, batch: &DomainBatch, h: f64) -> Result<f64> {
    if h <= 0.0 {
        return Err(Error::InvalidInput(format!("step h must be positive, got {h}")));
    }
    let analytic = grad(spec, params, batch)?;
    let mut worst = 0.0f64;
    let mut perturbed = params.clone();
    for j in 0..params.len() {
        let orig = params[j];
        perturbed.as_mut_slice()[j] = orig + h;
        let plus = loss(spec, &perturbed, batch)?;
        perturbed.as_mut_slice()[j] = orig - h;
        let minus = loss(spec, &perturbed, batch)?;
        perturbed.as_mut_slice()[j] = orig;
        let fd = (plus - minus) / (2.0 * h);
        let g = analytic[j];
        let err = (g - fd).abs() / 1.0f64.max(g.abs()).max(fd.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}
