//! Training loops: one run = one (config, split plan, seed) triple.

use serde::{Deserialize, Serialize};

use crate::data::DomainBatch;
use crate::domains::{BatchSampler, DomainDataset, SplitPlan};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, OptimizerKind, SplitSetting};
use crate::metrics::{self, MetricsReport};
use crate::model::{self, init_params, InitSpec, ModelSpec};
use crate::objective::{batch_objectives, BatchObjective};
use crate::optim::{roga_step_terms, GradientTerms, StepOutcome};
use crate::rng::Rng64;
use crate::vector::ParamVector;

/// Seed-stream tags, XOR-ed with the run seed so initialization and batch
/// sampling draw from distinct deterministic streams.
const INIT_STREAM: u64 = 0x696e_6974; // "init"
const SAMPLER_STREAM: u64 = 0x7361_6d70; // "samp"

/// How parameters are updated each step. Ablation variants reuse the
/// multi-domain machinery with individual terms switched off.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMethod {
    /// Momentum SGD on the pooled (all train domains) batch.
    PooledSgd,
    /// SAM on the pooled batch.
    PooledSam,
    /// Per-domain updates with the given terms, averaged over domains.
    MultiDomain(GradientTerms),
}

impl TrainMethod {
    pub fn from_kind(kind: OptimizerKind) -> Self {
        match kind {
            OptimizerKind::Sgd => TrainMethod::PooledSgd,
            OptimizerKind::Sam => TrainMethod::PooledSam,
            OptimizerKind::Roga => TrainMethod::MultiDomain(GradientTerms::FULL),
        }
    }
}

/// Per-epoch training curve entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    /// Mean per-domain training loss at θ over the epoch's steps.
    pub train_loss: f64,
    /// Loss on the held-out domain at the end of the epoch.
    pub heldout_loss: f64,
    pub heldout: MetricsReport,
}

/// Per-epoch means of the step diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochDiagnostics {
    pub epoch: usize,
    pub loss: f64,
    pub perturbed_loss: f64,
    pub alignment: f64,
    pub grad_norm: f64,
    pub aggregate_grad_norm: f64,
}

/// The exact inputs that produced a run; replaying them single-threaded
/// reproduces the run bit-for-bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfigEcho {
    pub config: ExperimentConfig,
    pub seed: u64,
    /// Set for ablation-grid runs ("a".."d"), null for plain training.
    pub ablation_variant: Option<String>,
}

/// Everything a finished run produced.
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub model: ModelSpec,
    pub final_params: ParamVector,
    pub per_epoch: Vec<EpochRow>,
    pub diagnostics: Vec<EpochDiagnostics>,
    pub config_echo: RunConfigEcho,
    pub wall_time_s: f64,
}

impl RunArtifacts {
    pub fn final_row(&self) -> &EpochRow {
        self.per_epoch.last().expect("at least one epoch")
    }
}

/// Scores a model on a batch and reports all four metrics at threshold 0.5.
pub fn evaluate(spec: &ModelSpec, params: &ParamVector, data: &DomainBatch) -> Result<MetricsReport> {
    let scores = model::predict_scores(spec, params, data.features())?;
    metrics::report(&scores, data.labels(), 0.5)
}

/// Runs one training job for the config's single split plan.
pub fn run_training(config: &ExperimentConfig, seed: u64) -> Result<RunArtifacts> {
    let plan = config.single_plan()?;
    run_with_plan(config, &plan, seed, TrainMethod::from_kind(config.optimizer.kind), None)
}

/// Runs one training job for an explicit plan, method, and optional
/// ablation label.
pub(crate) fn run_with_plan(
    config: &ExperimentConfig,
    plan: &SplitPlan,
    seed: u64,
    method: TrainMethod,
    ablation_variant: Option<String>,
) -> Result<RunArtifacts> {
    let started = std::time::Instant::now();

    let datasets = config.dataset.build()?;
    let ids: Vec<u32> = datasets.iter().map(DomainDataset::domain_id).collect();
    plan.validate(&ids)?;

    let mut train_sets: Vec<DomainDataset> = datasets
        .iter()
        .filter(|d| plan.train_domain_ids.contains(&d.domain_id()))
        .cloned()
        .collect();
    train_sets.sort_by_key(DomainDataset::domain_id);
    let heldout = datasets
        .iter()
        .find(|d| d.domain_id() == plan.held_out_domain_id)
        .expect("validated above")
        .to_batch();

    let spec = config.model.to_model_spec(config.dataset.input_dim())?;
    let mut params = init_params(
        &spec,
        &InitSpec { scheme: config.model.init, seed: seed ^ INIT_STREAM },
    )?;
    let mut velocity = ParamVector::zeros(params.len());
    let cfg = config.optimizer.to_config();

    let min_train = train_sets.iter().map(DomainDataset::len).min().expect("nonempty");
    let steps_per_epoch = min_train / config.batch_size;
    if steps_per_epoch == 0 {
        return Err(Error::Config(format!(
            "batch_size {} exceeds smallest training domain size {min_train}",
            config.batch_size
        )));
    }

    let mut sampler = BatchSampler::new(
        &train_sets,
        config.batch_size,
        Rng64::new(seed ^ SAMPLER_STREAM),
    )?;

    let mut per_epoch = Vec::with_capacity(config.epochs);
    let mut diagnostics = Vec::with_capacity(config.epochs);
    let mut global_step = 0usize;
    for epoch in 0..config.epochs {
        let mut sums = [0.0f64; 5]; // loss, perturbed, alignment, grad_norm, aggregate
        for _ in 0..steps_per_epoch {
            let batches = sampler.next_batches();
            let outcome = step_once(&spec, &params, &velocity, &cfg, &batches, method)
                .map_err(|e| at_step(e, global_step))?;
            let d = &outcome.diagnostics;
            sums[0] += d.mean_loss();
            sums[1] += d.mean_perturbed_loss();
            sums[2] += d.mean_alignment();
            sums[3] += d.mean_grad_norm();
            sums[4] += d.aggregate_grad_norm;
            params = outcome.theta;
            velocity = outcome.velocity;
            global_step += 1;
        }
        let inv = 1.0 / steps_per_epoch as f64;
        diagnostics.push(EpochDiagnostics {
            epoch,
            loss: sums[0] * inv,
            perturbed_loss: sums[1] * inv,
            alignment: sums[2] * inv,
            grad_norm: sums[3] * inv,
            aggregate_grad_norm: sums[4] * inv,
        });
        per_epoch.push(EpochRow {
            epoch,
            train_loss: sums[0] * inv,
            heldout_loss: model::loss(&spec, &params, &heldout)?,
            heldout: evaluate(&spec, &params, &heldout)?,
        });
    }

    let mut echo_config = config.clone();
    echo_config.split = SplitSetting::Plan(plan.clone());
    Ok(RunArtifacts {
        model: spec,
        final_params: params,
        per_epoch,
        diagnostics,
        config_echo: RunConfigEcho { config: echo_config, seed, ablation_variant },
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

fn step_once(
    spec: &ModelSpec,
    params: &ParamVector,
    velocity: &ParamVector,
    cfg: &crate::optim::OptimizerConfig,
    batches: &[DomainBatch],
    method: TrainMethod,
) -> Result<StepOutcome> {
    match method {
        TrainMethod::PooledSgd => {
            let pooled = DomainBatch::concat(batches, 0)?;
            let obj = BatchObjective::new(spec, &pooled);
            crate::optim::sgd_step(&obj, params, cfg, velocity)
        }
        TrainMethod::PooledSam => {
            let pooled = DomainBatch::concat(batches, 0)?;
            let obj = BatchObjective::new(spec, &pooled);
            crate::optim::sam_step(&obj, params, cfg, velocity)
        }
        TrainMethod::MultiDomain(terms) => {
            let objs = batch_objectives(spec, batches);
            roga_step_terms(&objs, params, cfg, velocity, terms)
        }
    }
}

fn at_step(e: Error, step: usize) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(format!("at step {step}: {msg}")),
        other => other,
    }
}
