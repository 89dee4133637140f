//! Run-artifact files. Everything written here is a pure function of the
//! artifacts: floats use shortest round-trip formatting and JSON field
//! order is fixed, so re-emitting identical artifacts produces
//! byte-identical files. The one volatile quantity, wall time, goes to its
//! own `timing.json` so the deterministic files stay deterministic.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::ablate::AblationReport;
use crate::harness::train::{RunArtifacts, RunConfigEcho};
use crate::metrics::MetricsReport;
use crate::model::ModelSpec;
use crate::vector::ParamVector;

#[derive(Serialize)]
struct RunSummary<'a> {
    config: &'a RunConfigEcho,
    epochs: usize,
    #[serde(rename = "final")]
    final_metrics: FinalMetrics,
}

#[derive(Serialize)]
struct FinalMetrics {
    train_loss: f64,
    heldout_loss: f64,
    acc: f64,
    auc: f64,
    ap: f64,
    eer: f64,
    n_pos: usize,
    n_neg: usize,
}

#[derive(Serialize)]
struct SavedParams<'a> {
    model: &'a ModelSpec,
    params: &'a ParamVector,
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))
}

fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable artifacts");
    s.push('\n');
    s
}

/// Writes `run_summary.json`, `curves.csv`, `diagnostics.csv`,
/// `params.json`, and `timing.json` into `out_dir` (created if needed).
pub fn emit_results(artifacts: &RunArtifacts, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let last = artifacts.final_row();
    let summary = RunSummary {
        config: &artifacts.config_echo,
        epochs: artifacts.per_epoch.len(),
        final_metrics: FinalMetrics {
            train_loss: last.train_loss,
            heldout_loss: last.heldout_loss,
            acc: last.heldout.acc,
            auc: last.heldout.auc,
            ap: last.heldout.ap,
            eer: last.heldout.eer,
            n_pos: last.heldout.n_pos,
            n_neg: last.heldout.n_neg,
        },
    };
    write_file(out_dir, "run_summary.json", &to_pretty_json(&summary))?;

    let mut curves = String::from("epoch,train_loss,heldout_loss,acc,auc,ap,eer\n");
    for row in &artifacts.per_epoch {
        let _ = writeln!(
            curves,
            "{},{},{},{},{},{},{}",
            row.epoch,
            row.train_loss,
            row.heldout_loss,
            row.heldout.acc,
            row.heldout.auc,
            row.heldout.ap,
            row.heldout.eer
        );
    }
    write_file(out_dir, "curves.csv", &curves)?;

    let mut diag = String::from("epoch,loss,perturbed_loss,alignment,grad_norm,aggregate_grad_norm\n");
    for row in &artifacts.diagnostics {
        let _ = writeln!(
            diag,
            "{},{},{},{},{},{}",
            row.epoch, row.loss, row.perturbed_loss, row.alignment, row.grad_norm, row.aggregate_grad_norm
        );
    }
    write_file(out_dir, "diagnostics.csv", &diag)?;

    write_file(
        out_dir,
        "params.json",
        &to_pretty_json(&SavedParams { model: &artifacts.model, params: &artifacts.final_params }),
    )?;

    write_file(
        out_dir,
        "timing.json",
        &format!("{{\n  \"wall_time_s\": {}\n}}\n", artifacts.wall_time_s),
    )
}

/// Mean ± sample standard deviation of final held-out metrics across a set
/// of runs (one split plan).
#[derive(Serialize)]
pub struct Aggregate {
    pub held_out_domain_id: u32,
    pub seeds: Vec<u64>,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub ap_mean: f64,
    pub ap_std: f64,
    pub eer_mean: f64,
    pub eer_std: f64,
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

/// Builds the per-plan aggregate over runs that share a split plan.
pub fn aggregate_runs(held_out_domain_id: u32, runs: &[&RunArtifacts]) -> Aggregate {
    let metric = |f: &dyn Fn(&MetricsReport) -> f64| -> Vec<f64> {
        runs.iter().map(|r| f(&r.final_row().heldout)).collect()
    };
    let (auc_mean, auc_std) = mean_std(&metric(&|m| m.auc));
    let (acc_mean, acc_std) = mean_std(&metric(&|m| m.acc));
    let (ap_mean, ap_std) = mean_std(&metric(&|m| m.ap));
    let (eer_mean, eer_std) = mean_std(&metric(&|m| m.eer));
    Aggregate {
        held_out_domain_id,
        seeds: runs.iter().map(|r| r.config_echo.seed).collect(),
        auc_mean,
        auc_std,
        acc_mean,
        acc_std,
        ap_mean,
        ap_std,
        eer_mean,
        eer_std,
    }
}

/// Writes `aggregate.json` for one split plan's runs.
pub fn emit_aggregate(aggregate: &Aggregate, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_file(out_dir, "aggregate.json", &to_pretty_json(aggregate))
}

/// Writes the 4-row ablation table as `ablation.csv` plus a JSON copy.
pub fn emit_ablation(report: &AblationReport, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut csv = String::from(
        "variant,description,seeds,auc_mean,auc_std,acc_mean,acc_std,loss_mean,loss_std,eer_mean,eer_std\n",
    );
    for row in &report.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{}",
            row.label,
            row.variant.describe(),
            row.seeds,
            row.auc_mean,
            row.auc_std,
            row.acc_mean,
            row.acc_std,
            row.loss_mean,
            row.loss_std,
            row.eer_mean,
            row.eer_std
        );
    }
    write_file(out_dir, "ablation.csv", &csv)?;
    write_file(out_dir, "ablation.json", &to_pretty_json(&report.rows))
}

/// Renders the ablation table for the terminal.
pub fn format_ablation_table(report: &AblationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<3} {:<32} {:>8} {:>8} {:>8} {:>8}",
        "", "variant", "AUC", "ACC", "Loss", "EER"
    );
    for row in &report.rows {
        let _ = writeln!(
            out,
            "({}) {:<32} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            row.label,
            row.variant.describe(),
            row.auc_mean,
            row.acc_mean,
            row.loss_mean,
            row.eer_mean
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config;
    use crate::harness::train::run_training;

    fn quick_run() -> RunArtifacts {
        let cfg = parse_config(
            r#"{"dataset": {"family": "spurious_blobs", "n_per_domain": 60},
                "optimizer": {"kind": "sgd"}, "epochs": 2, "batch_size": 30}"#,
        )
        .unwrap();
        run_training(&cfg, 0).unwrap()
    }

    #[test]
    fn summary_json_parses_and_round_trips() {
        let run = quick_run();
        let dir = tempfile::tempdir().unwrap();
        emit_results(&run, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("run_summary.json")).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["epochs"], 2);
        assert!(value["final"]["auc"].is_number());
        assert_eq!(value["config"]["seed"], 0);
        let re = serde_json::to_value(serde_json::from_str::<serde_json::Value>(&text).unwrap()).unwrap();
        assert_eq!(value, re);
    }

    #[test]
    fn curves_row_count_is_epochs_plus_header() {
        let run = quick_run();
        let dir = tempfile::tempdir().unwrap();
        emit_results(&run, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("curves.csv")).unwrap();
        assert_eq!(text.lines().count(), 2 + 1);
        assert!(text.starts_with("epoch,train_loss,heldout_loss,acc,auc,ap,eer\n"));
    }

    #[test]
    fn re_emitting_identical_artifacts_is_byte_identical() {
        let run = quick_run();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        emit_results(&run, dir_a.path()).unwrap();
        emit_results(&run, dir_b.path()).unwrap();
        for name in ["run_summary.json", "curves.csv", "diagnostics.csv", "params.json"] {
            let a = std::fs::read(dir_a.path().join(name)).unwrap();
            let b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs");
        }
    }

    #[test]
    fn params_json_reloads() {
        let run = quick_run();
        let dir = tempfile::tempdir().unwrap();
        emit_results(&run, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("params.json")).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        let params: Vec<f64> = serde_json::from_value(value["params"].clone()).unwrap();
        assert_eq!(params.len(), run.final_params.len());
    }
}
