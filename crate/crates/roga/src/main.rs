//! Command-line entry point for the benchmark harness.
//!
//! Subcommands: `gen-data`, `train`, `ablate`, `probe`, `eval`. Exit codes:
//! 0 success, 2 configuration error, 3 numeric error, 4 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand};

use roga::domains::{self, SplitPlan};
use roga::error::{Error, Result};
use roga::harness::ablate::{aggregate, AblationCell, AblationVariant};
use roga::harness::config::{load_config, DatasetConfig, ExperimentConfig, OptimizerKind};
use roga::harness::emit;
use roga::harness::train::{run_training, RunArtifacts};
use roga::objective::{BatchObjective, Objective};
use roga::probes;
use roga::rng::Rng64;
use roga::vector::ParamVector;
use roga::{DomainBatch, ModelSpec};

#[derive(Parser)]
#[command(
    name = "roga",
    about = "Multi-domain robust-optimization benchmark harness",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured datasets as CSV files plus a descriptor
    /// JSON that regenerates them bit-for-bit.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the dataset base seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train with the configured optimizer for every seed (and every
    /// leave-one-out plan when the split asks for it).
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Replace the config's seed list with this single seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads across runs; 1 is fully deterministic mode.
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Override the configured optimizer.
        #[arg(long, value_enum)]
        optimizer: Option<OptimizerKind>,
    },
    /// Run the four-variant objective ablation grid over all seeds.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Sharpness and loss-slice probes at saved parameters, on the pooled
    /// training domains of the configured split.
    Probe {
        /// params.json written by `train`.
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Perturbation radii, one sharpness row each.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.01, 0.05, 0.1])]
        rhos: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        restarts: usize,
        #[arg(long, default_value_t = 20)]
        ascent_iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2.0)]
        half_range: f64,
        #[arg(long, default_value_t = 41)]
        steps: usize,
    },
    /// Evaluate saved parameters against a dataset CSV; prints a metrics
    /// report as JSON.
    Eval {
        #[arg(long)]
        params: PathBuf,
        /// Dataset CSV (header f0..f{d-1},label,domain_id).
        #[arg(long)]
        data: PathBuf,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenData { config, out, seed } => gen_data(&config, &out, seed),
        Command::Train { config, seed, out, threads, optimizer } => {
            train(&config, seed, out, threads, optimizer)
        }
        Command::Ablate { config, seed, out, threads } => ablate(&config, seed, out, threads),
        Command::Probe {
            params,
            config,
            out,
            rhos,
            restarts,
            ascent_iters,
            seed,
            half_range,
            steps,
        } => probe(&params, &config, &out, &rhos, restarts, ascent_iters, seed, half_range, steps),
        Command::Eval { params, data, out } => eval(&params, &data, out.as_deref()),
    }
}

/// `gen-data` accepts either a full experiment config or a bare
/// `{"dataset": ...}` descriptor file (as written by a previous run).
fn load_dataset_config(path: &Path) -> Result<DatasetConfig> {
    match load_config(path) {
        Ok(cfg) => Ok(cfg.dataset),
        Err(full_err) => {
            #[derive(serde::Deserialize)]
            struct DatasetOnly {
                dataset: DatasetConfig,
                #[serde(default)]
                #[allow(dead_code)]
                domains: serde_json::Value,
            }
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str::<DatasetOnly>(&text)
                .map(|d| d.dataset)
                .map_err(|_| full_err)
        }
    }
}

fn gen_data(config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut dataset = load_dataset_config(config)?;
    if let Some(s) = seed {
        dataset.set_base_seed(s);
    }
    dataset.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let built = dataset.build()?;
    for ds in &built {
        let path = out.join(format!("domain_{}.csv", ds.domain_id()));
        domains::write_dataset_csv(ds, &path)?;
        println!("wrote {} ({} examples)", path.display(), ds.len());
    }

    #[derive(serde::Serialize)]
    struct Descriptor<'a> {
        dataset: &'a DatasetConfig,
        domains: Vec<&'a domains::GeneratorDescriptor>,
    }
    let descriptor = Descriptor {
        dataset: &dataset,
        domains: built.iter().map(|d| d.descriptor()).collect(),
    };
    let path = out.join("descriptor.json");
    let mut text = serde_json::to_string_pretty(&descriptor).expect("serializable descriptor");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn apply_overrides(
    mut cfg: ExperimentConfig,
    seed: Option<u64>,
    out: Option<PathBuf>,
    optimizer: Option<OptimizerKind>,
) -> ExperimentConfig {
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    if let Some(dir) = out {
        cfg.output_dir = dir;
    }
    if let Some(kind) = optimizer {
        cfg.optimizer.kind = kind;
    }
    cfg
}

/// Runs `jobs` closures on up to `threads` workers, preserving output
/// order. Each job is independent; results land in their input slot.
fn run_jobs<T: Send>(
    jobs: Vec<Box<dyn FnOnce() -> Result<T> + Send + '_>>,
    threads: usize,
) -> Vec<Result<T>> {
    let threads = threads.max(1).min(jobs.len().max(1));
    if threads <= 1 {
        return jobs.into_iter().map(|j| j()).collect();
    }
    let jobs: Vec<Mutex<Option<Box<dyn FnOnce() -> Result<T> + Send + '_>>>> =
        jobs.into_iter().map(|j| Mutex::new(Some(j))).collect();
    let mut slots: Vec<Option<Result<T>>> = (0..jobs.len()).map(|_| None).collect();
    let next = AtomicUsize::new(0);
    let results: Vec<Mutex<&mut Option<Result<T>>>> =
        slots.iter_mut().map(Mutex::new).collect();
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let job = jobs[i].lock().expect("job mutex").take().expect("job taken once");
                let result = job();
                **results[i].lock().expect("result mutex") = Some(result);
            });
        }
    });
    drop(results);
    slots.into_iter().map(|s| s.expect("every slot filled")).collect()
}

fn run_dir(base: &Path, plan: &SplitPlan, seed: u64) -> PathBuf {
    base.join(format!("seed{}_holdout{}", seed, plan.held_out_domain_id))
}

fn train(
    config: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    threads: usize,
    optimizer: Option<OptimizerKind>,
) -> Result<()> {
    let cfg = apply_overrides(load_config(config)?, seed, out, optimizer);
    let plans = cfg.plans()?;

    let mut specs = Vec::new();
    for plan in &plans {
        for &s in &cfg.seeds {
            specs.push((plan.clone(), s));
        }
    }
    let jobs: Vec<Box<dyn FnOnce() -> Result<RunArtifacts> + Send + '_>> = specs
        .iter()
        .map(|(plan, s)| {
            let cfg = &cfg;
            let plan = plan.clone();
            let s = *s;
            Box::new(move || {
                let mut single = cfg.clone();
                single.split = roga::harness::config::SplitSetting::Plan(plan);
                run_training(&single, s)
            }) as Box<dyn FnOnce() -> Result<RunArtifacts> + Send>
        })
        .collect();
    let results = run_jobs(jobs, threads);

    let mut runs: Vec<RunArtifacts> = Vec::with_capacity(results.len());
    for ((plan, s), result) in specs.iter().zip(results) {
        let artifacts = result?;
        let dir = run_dir(&cfg.output_dir, plan, *s);
        emit::emit_results(&artifacts, &dir)?;
        let f = artifacts.final_row();
        println!(
            "seed {} holdout {}: train_loss {:.4} heldout auc {:.4} acc {:.4} eer {:.4} -> {}",
            s,
            plan.held_out_domain_id,
            f.train_loss,
            f.heldout.auc,
            f.heldout.acc,
            f.heldout.eer,
            dir.display()
        );
        runs.push(artifacts);
    }

    for plan in &plans {
        let plan_runs: Vec<&RunArtifacts> = runs
            .iter()
            .filter(|r| match &r.config_echo.config.split {
                roga::harness::config::SplitSetting::Plan(p) => p == plan,
                _ => false,
            })
            .collect();
        let agg = emit::aggregate_runs(plan.held_out_domain_id, &plan_runs);
        let dir = cfg.output_dir.join(format!("holdout{}", plan.held_out_domain_id));
        emit::emit_aggregate(&agg, &dir)?;
        println!(
            "holdout {}: mean auc {:.4} ± {:.4} over {} seed(s)",
            plan.held_out_domain_id,
            agg.auc_mean,
            agg.auc_std,
            plan_runs.len()
        );
    }
    Ok(())
}

fn ablate(config: &Path, seed: Option<u64>, out: Option<PathBuf>, threads: usize) -> Result<()> {
    let cfg = apply_overrides(load_config(config)?, seed, out, None);
    let plan = cfg.single_plan()?;

    let mut specs = Vec::new();
    for variant in AblationVariant::ALL {
        for &s in &cfg.seeds {
            specs.push((variant, s));
        }
    }
    let jobs: Vec<Box<dyn FnOnce() -> Result<AblationCell> + Send + '_>> = specs
        .iter()
        .map(|&(variant, s)| {
            let cfg = &cfg;
            let plan = plan.clone();
            Box::new(move || {
                let artifacts = roga::harness::ablate::run_variant(cfg, &plan, s, variant)?;
                Ok(AblationCell { variant, seed: s, artifacts })
            }) as Box<dyn FnOnce() -> Result<AblationCell> + Send>
        })
        .collect();
    let results = run_jobs(jobs, threads);
    let mut cells = Vec::with_capacity(results.len());
    for result in results {
        cells.push(result?);
    }

    for cell in &cells {
        let dir = cfg
            .output_dir
            .join(format!("variant_{}", cell.variant.label()))
            .join(format!("seed{}_holdout{}", cell.seed, plan.held_out_domain_id));
        emit::emit_results(&cell.artifacts, &dir)?;
    }
    let report = aggregate(cells);
    emit::emit_ablation(&report, &cfg.output_dir)?;
    print!("{}", emit::format_ablation_table(&report));
    println!(
        "best variant by mean held-out AUC: ({})",
        report.best_by_auc().label()
    );
    Ok(())
}

#[derive(serde::Deserialize)]
struct SavedParams {
    model: ModelSpec,
    params: ParamVector,
}

fn load_params(path: &Path) -> Result<SavedParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let saved: SavedParams = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    saved.model.validate()?;
    if saved.params.len() != saved.model.param_count() {
        return Err(Error::Dimension(format!(
            "{}: {} parameters for a model expecting {}",
            path.display(),
            saved.params.len(),
            saved.model.param_count()
        )));
    }
    Ok(saved)
}

#[allow(clippy::too_many_arguments)]
fn probe(
    params_path: &Path,
    config: &Path,
    out: &Path,
    rhos: &[f64],
    restarts: usize,
    ascent_iters: usize,
    seed: u64,
    half_range: f64,
    steps: usize,
) -> Result<()> {
    let saved = load_params(params_path)?;
    let cfg = load_config(config)?;
    let plan = cfg.single_plan()?;
    let datasets = cfg.dataset.build()?;
    let mut train_batches: Vec<DomainBatch> = datasets
        .iter()
        .filter(|d| plan.train_domain_ids.contains(&d.domain_id()))
        .map(|d| d.to_batch())
        .collect();
    train_batches.sort_by_key(DomainBatch::domain_id);
    let pooled = DomainBatch::concat(&train_batches, 0)?;
    let obj = BatchObjective::new(&saved.model, &pooled);

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let mut csv = String::from("rho,base_loss,max_perturbed_loss,sharpness,ascent_iters,restarts\n");
    for &rho in rhos {
        let r = probes::sharpness(&obj, &saved.params, rho, ascent_iters, restarts, seed)?;
        use std::fmt::Write as _;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.rho, r.base_loss, r.max_perturbed_loss, r.sharpness, r.ascent_iters, r.restarts
        );
        println!("rho {}: sharpness {:.6}", r.rho, r.sharpness);
    }
    let path = out.join("sharpness.csv");
    std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;

    let write_slice = |name: &str, direction: &ParamVector| -> Result<()> {
        let slice = probes::loss_slice_1d(&obj, &saved.params, direction, half_range, steps)?;
        let mut csv = String::from("t,loss\n");
        for (t, l) in slice {
            use std::fmt::Write as _;
            let _ = writeln!(csv, "{t},{l}");
        }
        let path = out.join(name);
        std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))
    };

    // Slice 1: along the training gradient at the saved parameters.
    let g = obj.grad(&saved.params)?;
    if g.norm() > 0.0 {
        write_slice("slice_gradient.csv", &g)?;
    } else {
        eprintln!("gradient is zero at the saved parameters; skipping slice_gradient.csv");
    }
    // Slice 2: a seeded random unit direction.
    let mut rng = Rng64::new(seed ^ 0x736c_6963); // "slic"
    let random = ParamVector::new((0..saved.params.len()).map(|_| rng.next_normal()).collect())?;
    write_slice("slice_random.csv", &random)?;
    println!("wrote probes to {}", out.display());
    Ok(())
}

fn eval(params_path: &Path, data: &Path, out: Option<&Path>) -> Result<()> {
    let saved = load_params(params_path)?;
    let batch = domains::read_dataset_csv(data)?;
    let report = roga::harness::evaluate(&saved.model, &saved.params, &batch)?;
    let mut text = serde_json::to_string_pretty(&report).expect("serializable report");
    text.push('\n');
    if let Some(path) = out {
        std::fs::write(path, &text).map_err(|e| Error::io(path, e))?;
    }
    print!("{text}");
    Ok(())
}
