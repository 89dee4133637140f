//! The four-variant ablation grid over the training objective:
//! (a) the base optimizer, (b) adding the per-domain perturbed loss,
//! (c) adding only the gradient-alignment term, (d) the full update.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::config::ExperimentConfig;
use crate::harness::train::{run_with_plan, RunArtifacts, TrainMethod};
use crate::optim::GradientTerms;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    /// (a) pooled momentum SGD (ρ and α inactive).
    BaseOptimizer,
    /// (b) per-domain perturbed gradients, no alignment term.
    PerturbedLoss,
    /// (c) plain per-domain gradients plus the alignment term; ε̂ is kept
    /// only inside the inner product.
    AlignmentOnly,
    /// (d) the complete update.
    Full,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] = [
        AblationVariant::BaseOptimizer,
        AblationVariant::PerturbedLoss,
        AblationVariant::AlignmentOnly,
        AblationVariant::Full,
    ];

    /// Row label matching the customary (a)–(d) presentation.
    pub fn label(self) -> &'static str {
        match self {
            AblationVariant::BaseOptimizer => "a",
            AblationVariant::PerturbedLoss => "b",
            AblationVariant::AlignmentOnly => "c",
            AblationVariant::Full => "d",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            AblationVariant::BaseOptimizer => "base optimizer (pooled SGD)",
            AblationVariant::PerturbedLoss => "+ per-domain perturbed loss",
            AblationVariant::AlignmentOnly => "+ gradient alignment only",
            AblationVariant::Full => "full update",
        }
    }

    pub fn method(self) -> TrainMethod {
        match self {
            AblationVariant::BaseOptimizer => TrainMethod::PooledSgd,
            AblationVariant::PerturbedLoss => TrainMethod::MultiDomain(GradientTerms::PERTURBED_ONLY),
            AblationVariant::AlignmentOnly => TrainMethod::MultiDomain(GradientTerms::ALIGNMENT_ONLY),
            AblationVariant::Full => TrainMethod::MultiDomain(GradientTerms::FULL),
        }
    }
}

/// One finished run of the grid.
#[derive(Clone, Debug)]
pub struct AblationCell {
    pub variant: AblationVariant,
    pub seed: u64,
    pub artifacts: RunArtifacts,
}

/// Mean ± sample standard deviation of the final held-out metrics for one
/// variant across seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: AblationVariant,
    pub label: String,
    pub seeds: usize,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub loss_mean: f64,
    pub loss_std: f64,
    pub eer_mean: f64,
    pub eer_std: f64,
}

#[derive(Clone, Debug)]
pub struct AblationReport {
    /// Exactly four rows, in (a)–(d) order.
    pub rows: Vec<AblationRow>,
    /// Every underlying run (4 × |seeds|).
    pub runs: Vec<AblationCell>,
}

impl AblationReport {
    /// The variant with the highest mean held-out AUC; ties go to the
    /// earlier row.
    pub fn best_by_auc(&self) -> AblationVariant {
        self.rows
            .iter()
            .max_by(|a, b| {
                a.auc_mean
                    .partial_cmp(&b.auc_mean)
                    .expect("finite AUC means")
                    .then(std::cmp::Ordering::Greater) // keep the earlier row on ties
            })
            .expect("four rows")
            .variant
    }

    pub fn row(&self, variant: AblationVariant) -> &AblationRow {
        self.rows
            .iter()
            .find(|r| r.variant == variant)
            .expect("all four variants present")
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs all four variants for every configured seed on the config's single
/// split plan. Runs execute in a fixed (variant, seed) order; use
/// [`run_ablation_with`] to parallelize while keeping that order in the
/// output.
pub fn run_ablation(config: &ExperimentConfig) -> Result<AblationReport> {
    run_ablation_with(config, &mut |job| job.run())
}

/// A single pending ablation run, exposed so callers can schedule jobs on
/// their own threads.
pub struct AblationJob<'a> {
    pub variant: AblationVariant,
    pub seed: u64,
    config: &'a ExperimentConfig,
}

impl AblationJob<'_> {
    pub fn run(&self) -> Result<AblationCell> {
        let plan = self.config.single_plan()?;
        let artifacts = run_variant(self.config, &plan, self.seed, self.variant)?;
        Ok(AblationCell { variant: self.variant, seed: self.seed, artifacts })
    }
}

/// Trains one ablation variant for one (plan, seed) pair.
pub fn run_variant(
    config: &ExperimentConfig,
    plan: &crate::domains::SplitPlan,
    seed: u64,
    variant: AblationVariant,
) -> Result<RunArtifacts> {
    run_with_plan(config, plan, seed, variant.method(), Some(variant.label().to_string()))
}

/// Drives the grid through a caller-supplied executor, then aggregates.
pub fn run_ablation_with(
    config: &ExperimentConfig,
    execute: &mut dyn FnMut(AblationJob) -> Result<AblationCell>,
) -> Result<AblationReport> {
    let mut runs = Vec::with_capacity(4 * config.seeds.len());
    for variant in AblationVariant::ALL {
        for &seed in &config.seeds {
            runs.push(execute(AblationJob { variant, seed, config })?);
        }
    }
    Ok(aggregate(runs))
}

/// Aggregates finished cells into the four-row table. Cells may arrive in
/// any order; rows and per-variant statistics are computed in (a)–(d),
/// ascending-seed order.
pub fn aggregate(mut runs: Vec<AblationCell>) -> AblationReport {
    runs.sort_by_key(|c| (c.variant.label(), c.seed));
    let rows = AblationVariant::ALL
        .iter()
        .map(|&variant| {
            let cells: Vec<&AblationCell> = runs.iter().filter(|c| c.variant == variant).collect();
            let col = |f: &dyn Fn(&AblationCell) -> f64| -> Vec<f64> { cells.iter().map(|c| f(c)).collect() };
            let (auc_mean, auc_std) = mean_std(&col(&|c| c.artifacts.final_row().heldout.auc));
            let (acc_mean, acc_std) = mean_std(&col(&|c| c.artifacts.final_row().heldout.acc));
            let (loss_mean, loss_std) = mean_std(&col(&|c| c.artifacts.final_row().heldout_loss));
            let (eer_mean, eer_std) = mean_std(&col(&|c| c.artifacts.final_row().heldout.eer));
            AblationRow {
                variant,
                label: variant.label().to_string(),
                seeds: cells.len(),
                auc_mean,
                auc_std,
                acc_mean,
                acc_std,
                loss_mean,
                loss_std,
                eer_mean,
                eer_std,
            }
        })
        .collect();
    AblationReport { rows, runs }
}
