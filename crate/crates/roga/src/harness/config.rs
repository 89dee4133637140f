//! Experiment configuration: JSON schema, validation, and resolution.
//!
//! Configs are strict: unknown keys are rejected, schema errors carry the
//! key path, and every optional field has a documented default. Loading
//! materializes defaults, so re-emitting a resolved config and loading it
//! back yields the identical resolved config.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domains::{
    make_rotated_moons, make_spurious_blobs, standardize, DomainDataset, SplitPlan,
};
use crate::error::{Error, Result};
use crate::model::{Activation, InitScheme, ModelKind, ModelSpec};
use crate::optim::OptimizerConfig;

/// Which optimizer drives training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Momentum SGD on the pooled batch.
    Sgd,
    /// Sharpness-aware step on the pooled batch.
    Sam,
    /// Per-domain perturbed gradients with the alignment term.
    Roga,
}

/// Optimizer section of the config file: the kind plus hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub kind: OptimizerKind,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default = "default_hvp_step")]
    pub hvp_step: f64,
    #[serde(default = "default_grad_floor")]
    pub grad_floor: f64,
}

fn default_rho() -> f64 {
    OptimizerConfig::default().rho
}
fn default_alpha() -> f64 {
    OptimizerConfig::default().alpha
}
fn default_lr() -> f64 {
    OptimizerConfig::default().lr
}
fn default_hvp_step() -> f64 {
    OptimizerConfig::default().hvp_step
}
fn default_grad_floor() -> f64 {
    OptimizerConfig::default().grad_floor
}

impl OptimizerSection {
    pub fn to_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            rho: self.rho,
            alpha: self.alpha,
            lr: self.lr,
            momentum: self.momentum,
            hvp_step: self.hvp_step,
            grad_floor: self.grad_floor,
        }
    }
}

/// Dataset family and its generator parameters. `seed` is the base seed;
/// domain `i` draws from the stream `seed ⊕ i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Gaussian blobs with one invariant feature and one spurious feature
    /// whose sign varies per domain. The default is four domains with
    /// spurious signs `+,+,+,−`: training on the first three and testing
    /// on the sign-flipped fourth punishes models that lean on the
    /// spurious coordinate.
    SpuriousBlobs {
        #[serde(default = "default_core_sep")]
        core_sep: f64,
        #[serde(default = "default_spur_strengths")]
        spur_strengths: Vec<f64>,
        #[serde(default = "default_spur_signs")]
        spur_signs: Vec<i8>,
        #[serde(default = "default_n_per_domain")]
        n_per_domain: usize,
        #[serde(default = "default_d_noise")]
        d_noise: usize,
        #[serde(default = "default_dataset_seed")]
        seed: u64,
        #[serde(default = "default_standardize")]
        standardize: bool,
    },
    /// Interleaved half-circles rotated by a per-domain angle.
    RotatedMoons {
        #[serde(default = "default_angles")]
        angles: Vec<f64>,
        #[serde(default = "default_n_per_domain")]
        n_per_domain: usize,
        #[serde(default = "default_noise_sd")]
        noise_sd: f64,
        #[serde(default = "default_dataset_seed")]
        seed: u64,
        #[serde(default = "default_standardize")]
        standardize: bool,
    },
}

fn default_core_sep() -> f64 {
    1.0
}
fn default_spur_strengths() -> Vec<f64> {
    vec![3.0, 3.0, 3.0, 3.0]
}
fn default_spur_signs() -> Vec<i8> {
    vec![1, 1, 1, -1]
}
fn default_n_per_domain() -> usize {
    2000
}
fn default_d_noise() -> usize {
    8
}
fn default_dataset_seed() -> u64 {
    42
}
fn default_standardize() -> bool {
    true
}
fn default_angles() -> Vec<f64> {
    vec![0.0, 0.4, 0.8, 1.2]
}
fn default_noise_sd() -> f64 {
    0.2
}

impl DatasetConfig {
    /// The benchmark used throughout the docs and tests: four
    /// spurious-blob domains, the last one sign-flipped.
    pub fn default_benchmark() -> Self {
        DatasetConfig::SpuriousBlobs {
            core_sep: default_core_sep(),
            spur_strengths: default_spur_strengths(),
            spur_signs: default_spur_signs(),
            n_per_domain: default_n_per_domain(),
            d_noise: default_d_noise(),
            seed: default_dataset_seed(),
            standardize: default_standardize(),
        }
    }

    pub fn domain_count(&self) -> usize {
        match self {
            DatasetConfig::SpuriousBlobs { spur_signs, .. } => spur_signs.len(),
            DatasetConfig::RotatedMoons { angles, .. } => angles.len(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            DatasetConfig::SpuriousBlobs { d_noise, .. } => 2 + d_noise,
            DatasetConfig::RotatedMoons { .. } => 2,
        }
    }

    pub fn n_per_domain(&self) -> usize {
        match self {
            DatasetConfig::SpuriousBlobs { n_per_domain, .. }
            | DatasetConfig::RotatedMoons { n_per_domain, .. } => *n_per_domain,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DatasetConfig::SpuriousBlobs {
                core_sep,
                spur_strengths,
                spur_signs,
                n_per_domain,
                ..
            } => {
                if spur_strengths.len() != spur_signs.len() {
                    return Err(Error::Config(format!(
                        "dataset.spur_strengths has {} entries but dataset.spur_signs has {}",
                        spur_strengths.len(),
                        spur_signs.len()
                    )));
                }
                if spur_signs.len() < 2 {
                    return Err(Error::Config("dataset needs at least 2 domains".into()));
                }
                if spur_signs.iter().any(|&s| s != 1 && s != -1) {
                    return Err(Error::Config("dataset.spur_signs entries must be ±1".into()));
                }
                if !(core_sep.is_finite() && *core_sep > 0.0) {
                    return Err(Error::Config(format!(
                        "dataset.core_sep must be > 0, got {core_sep}"
                    )));
                }
                if spur_strengths.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                    return Err(Error::Config("dataset.spur_strengths must be >= 0".into()));
                }
                if *n_per_domain < 2 {
                    return Err(Error::Config("dataset.n_per_domain must be at least 2".into()));
                }
            }
            DatasetConfig::RotatedMoons { angles, n_per_domain, noise_sd, .. } => {
                if angles.len() < 2 {
                    return Err(Error::Config("dataset needs at least 2 domains".into()));
                }
                if angles.iter().any(|a| !a.is_finite()) {
                    return Err(Error::Config("dataset.angles must be finite".into()));
                }
                if !(noise_sd.is_finite() && *noise_sd >= 0.0) {
                    return Err(Error::Config(format!(
                        "dataset.noise_sd must be >= 0, got {noise_sd}"
                    )));
                }
                if *n_per_domain < 2 {
                    return Err(Error::Config("dataset.n_per_domain must be at least 2".into()));
                }
            }
        }
        Ok(())
    }

    /// Materializes every domain (ids `0..K`), standardizing afterwards
    /// when configured.
    pub fn build(&self) -> Result<Vec<DomainDataset>> {
        self.validate()?;
        let mut out = Vec::with_capacity(self.domain_count());
        for id in 0..self.domain_count() as u32 {
            let stream = self.base_seed() ^ u64::from(id);
            let raw = match self {
                DatasetConfig::SpuriousBlobs {
                    core_sep,
                    spur_strengths,
                    spur_signs,
                    n_per_domain,
                    d_noise,
                    ..
                } => make_spurious_blobs(
                    *core_sep,
                    spur_strengths[id as usize],
                    spur_signs[id as usize],
                    *n_per_domain,
                    *d_noise,
                    stream,
                    id,
                )?,
                DatasetConfig::RotatedMoons { angles, n_per_domain, noise_sd, .. } => {
                    make_rotated_moons(angles[id as usize], *n_per_domain, *noise_sd, stream, id)?
                }
            };
            out.push(if self.standardized() { standardize(&raw) } else { raw });
        }
        Ok(out)
    }

    pub fn base_seed(&self) -> u64 {
        match self {
            DatasetConfig::SpuriousBlobs { seed, .. }
            | DatasetConfig::RotatedMoons { seed, .. } => *seed,
        }
    }

    pub fn set_base_seed(&mut self, new_seed: u64) {
        match self {
            DatasetConfig::SpuriousBlobs { seed, .. }
            | DatasetConfig::RotatedMoons { seed, .. } => *seed = new_seed,
        }
    }

    fn standardized(&self) -> bool {
        match self {
            DatasetConfig::SpuriousBlobs { standardize, .. }
            | DatasetConfig::RotatedMoons { standardize, .. } => *standardize,
        }
    }
}

/// Split selection: a concrete plan, or a symbolic mode resolved at load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SplitSetting {
    Mode(SplitMode),
    Plan(SplitPlan),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitMode {
    /// One run per domain, holding out each in turn.
    #[serde(rename = "all-leave-one-out")]
    AllLeaveOneOut,
    /// Hold out the highest domain id, train on the rest (the default; on
    /// the default benchmark this holds out the sign-flipped domain).
    #[serde(rename = "hold-out-last")]
    HoldOutLast,
}

impl Default for SplitSetting {
    fn default() -> Self {
        SplitSetting::Mode(SplitMode::HoldOutLast)
    }
}

/// Model section: hidden layers only; the input width comes from the
/// dataset and the output is always the single logit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_model_kind")]
    pub kind: ModelKind,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default = "default_init")]
    pub init: InitScheme,
}

fn default_model_kind() -> ModelKind {
    ModelKind::Mlp
}
fn default_hidden() -> Vec<usize> {
    vec![16, 16]
}
fn default_activation() -> Activation {
    Activation::Tanh
}
fn default_init() -> InitScheme {
    InitScheme::GlorotUniform
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: default_model_kind(),
            hidden: default_hidden(),
            activation: default_activation(),
            init: default_init(),
        }
    }
}

impl ModelConfig {
    pub fn to_model_spec(&self, input_dim: usize) -> Result<ModelSpec> {
        let spec = match self.kind {
            ModelKind::Logistic => {
                if !self.hidden.is_empty() {
                    return Err(Error::Config(
                        "model.hidden must be empty for a logistic model".into(),
                    ));
                }
                ModelSpec::logistic(input_dim)
            }
            ModelKind::Mlp => {
                let mut widths = Vec::with_capacity(self.hidden.len() + 2);
                widths.push(input_dim);
                widths.extend_from_slice(&self.hidden);
                widths.push(1);
                ModelSpec::mlp(widths, self.activation)
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// A full experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub split: SplitSetting,
    #[serde(default)]
    pub model: ModelConfig,
    pub optimizer: OptimizerSection,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_epochs() -> usize {
    30
}
fn default_batch_size() -> usize {
    64
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl ExperimentConfig {
    /// Validates relationships between sections and materializes the
    /// default split into a concrete plan.
    pub fn resolve(mut self) -> Result<Self> {
        self.dataset.validate()?;
        self.optimizer.to_config().validate()?;
        self.model.to_model_spec(self.dataset.input_dim())?;

        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.batch_size > self.dataset.n_per_domain() {
            return Err(Error::Config(format!(
                "batch_size {} exceeds domain size {}",
                self.batch_size,
                self.dataset.n_per_domain()
            )));
        }

        let ids: Vec<u32> = (0..self.dataset.domain_count() as u32).collect();
        match &self.split {
            SplitSetting::Mode(SplitMode::HoldOutLast) => {
                let held = *ids.last().expect("at least 2 domains");
                self.split = SplitSetting::Plan(SplitPlan {
                    train_domain_ids: ids[..ids.len() - 1].to_vec(),
                    held_out_domain_id: held,
                });
            }
            SplitSetting::Mode(SplitMode::AllLeaveOneOut) => {
                if ids.len() < 3 {
                    return Err(Error::Config(
                        "all-leave-one-out needs at least 3 domains".into(),
                    ));
                }
            }
            SplitSetting::Plan(plan) => plan.validate(&ids)?,
        }
        if let SplitSetting::Plan(plan) = &self.split {
            plan.validate(&ids)?;
        }
        Ok(self)
    }

    /// The single concrete plan of this config, if it has one.
    pub fn single_plan(&self) -> Result<SplitPlan> {
        match &self.split {
            SplitSetting::Plan(p) => Ok(p.clone()),
            SplitSetting::Mode(_) => Err(Error::Config(
                "this operation needs a single resolved split plan".into(),
            )),
        }
    }

    /// All split plans this config expands to.
    pub fn plans(&self) -> Result<Vec<SplitPlan>> {
        match &self.split {
            SplitSetting::Plan(p) => Ok(vec![p.clone()]),
            SplitSetting::Mode(SplitMode::AllLeaveOneOut) => {
                crate::domains::leave_one_out_splits(self.dataset.domain_count())
            }
            SplitSetting::Mode(SplitMode::HoldOutLast) => {
                Err(Error::Config("unresolved split; call resolve() first".into()))
            }
        }
    }
}

/// Parses JSON with key-path error reporting and rejects unknown keys.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let parsed: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        Error::Config(format!("at {}: {}", e.path(), e.inner()))
    })?;
    parsed.resolve()
}

/// Loads, validates, and resolves an experiment config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}
