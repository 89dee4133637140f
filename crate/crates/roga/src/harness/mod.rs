//! Experiment orchestration: config parsing, training runs, the ablation
//! grid, evaluation, and run-artifact emission.

pub mod ablate;
pub mod config;
pub mod emit;
pub mod train;

pub use ablate::{run_ablation, AblationReport, AblationVariant};
pub use config::{load_config, parse_config, DatasetConfig, ExperimentConfig, OptimizerKind};
pub use train::{evaluate, run_training, RunArtifacts};
