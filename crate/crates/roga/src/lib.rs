//! Multi-domain robust-optimization toolkit.
//!
//! The crate trains binary classifiers whose parameters are pushed toward
//! flat, domain-robust minima: each training domain contributes the loss at
//! an adversarially perturbed parameter point (perturbation radius ρ), and a
//! gradient-alignment term keeps the perturbed gradient of every domain
//! consistent with its plain risk gradient. Plain momentum SGD and the
//! single-perturbation SAM step are included as baselines, together with a
//! synthetic multi-domain benchmark, leave-one-domain-out evaluation,
//! ranking metrics, and sharpness probes.
//!
//! The `roga` binary exposes the experiment harness: `gen-data`, `train`,
//! `ablate`, `probe`, and `eval` subcommands over JSON configs and CSV
//! datasets.

pub mod data;
pub mod domains;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod optim;
pub mod probes;
pub mod rng;
pub mod vector;

pub use data::{DomainBatch, Matrix};
pub use error::{Error, Result};
pub use model::{Activation, InitScheme, InitSpec, ModelKind, ModelSpec};
pub use objective::{BatchObjective, Objective};
pub use optim::{OptimizerConfig, StepDiagnostics, StepOutcome};
pub use vector::ParamVector;
