//! Config-driven commands behind the `dtdg` binary. Each command writes a
//! self-describing run directory containing `resolved_config.json`.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use dtdg_core::graph::{generate_synthetic, load_network, save_network, DynamicNetwork, GenerationSummary};
use dtdg_core::models::{build_model, load_checkpoint, save_checkpoint, Model};
use dtdg_core::pipeline::{
    evaluate, grid_search, train_model, write_results_csv, BootstrapConfig, EvalReport, Evaluation, GridRow, NodeGroup,
    ScoredNode, TrainOutcome, WindowSpec,
};
use dtdg_core::seed::derive_seed;
use serde::{Deserialize, Serialize};

pub use config::{GridConfig, Overrides, ResolvedConfig, RunConfig, Versions, WindowConfig};

pub const REPORT_FILE: &str = "report.json";
pub const SCORES_FILE: &str = "scores.csv";
pub const TIMING_FILE: &str = "timing.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const RESULTS_FILE: &str = "results.csv";
pub const RESOLVED_FILE: &str = "resolved_config.json";
pub const CHECKPOINT_DIR: &str = "checkpoint";

/// Everything needed to re-evaluate a checkpoint without its run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMetadata {
    pub master_seed: u64,
    pub window_spec: WindowSpec,
    pub bootstrap: BootstrapConfig,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// Wall-clock measurements, kept out of the report so that the report is
/// reproducible byte for byte.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_seconds: Option<f64>,
    pub evaluate_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct GenerateOutput {
    pub dir: PathBuf,
    pub summary: GenerationSummary,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub dir: PathBuf,
    pub report: EvalReport,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

#[derive(Debug, Clone)]
pub struct GridOutput {
    pub dir: PathBuf,
    pub rows: Vec<GridRow>,
    pub best: usize,
    pub report: EvalReport,
}

#[derive(Debug, Clone)]
pub struct EvaluateOutput {
    pub path: PathBuf,
    pub report: EvalReport,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_resolved(dir: &Path, command: &'static str, cfg: &RunConfig) -> Result<()> {
    config::write_json(
        &dir.join(RESOLVED_FILE),
        &ResolvedConfig {
            command,
            versions: Versions::current(),
            config: cfg,
        },
    )
}

fn load_data(cfg: &RunConfig) -> Result<DynamicNetwork> {
    let dir = cfg.data_dir()?;
    load_network(dir).with_context(|| format!("loading network bundle {}", dir.display()))
}

/// Per-node test scores, one row per node and scored month.
pub fn write_scores_csv(scores: &[ScoredNode], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["node_id", "month", "group", "label", "score"])?;
    for s in scores {
        let group = match s.group {
            NodeGroup::Seen => "seen",
            NodeGroup::Unseen => "unseen",
        };
        w.write_record([
            s.node.to_string(),
            s.month.to_string(),
            group.to_string(),
            s.label.to_string(),
            format!("{}", s.score),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_history_csv(outcome: &TrainOutcome, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["epoch", "train_loss", "val_score", "val_auc_seen", "val_auc_unseen"])?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for r in &outcome.history {
        w.write_record([
            r.epoch.to_string(),
            format!("{}", r.train_loss),
            format!("{}", r.validation.score),
            opt(r.validation.auc_seen),
            opt(r.validation.auc_unseen),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_evaluation(dir: &Path, ev: &Evaluation, train_seconds: Option<f64>) -> Result<()> {
    fs::write(dir.join(REPORT_FILE), ev.report.to_json()?).context("writing report")?;
    write_scores_csv(&ev.scores, &dir.join(SCORES_FILE))?;
    config::write_json(
        &dir.join(TIMING_FILE),
        &Timing {
            train_seconds,
            evaluate_seconds: ev.wall_time_seconds,
        },
    )
}

fn in_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    Ok(pool.install(f))
}

/// Stores a trained model with its metadata, evaluates it on the test
/// windows and writes report, scores, history and timing into `dir`.
fn finish_training(
    dir: &Path,
    cfg: &RunConfig,
    net: &DynamicNetwork,
    spec: &WindowSpec,
    outcome: &TrainOutcome,
    train_seconds: f64,
) -> Result<Evaluation> {
    let meta = CheckpointMetadata {
        master_seed: cfg.seed,
        window_spec: *spec,
        bootstrap: cfg.bootstrap,
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.epochs_run(),
    };
    save_checkpoint(&outcome.model, &dir.join(CHECKPOINT_DIR), serde_json::to_value(&meta)?)
        .context("saving checkpoint")?;
    write_history_csv(outcome, &dir.join(HISTORY_FILE))?;
    let ev = in_pool(cfg.jobs, || evaluate(&outcome.model, net, spec, cfg.bootstrap))?.context("evaluating")?;
    write_evaluation(dir, &ev, Some(train_seconds))?;
    Ok(ev)
}

/// Generates a synthetic network bundle into the output directory.
pub fn cmd_generate(config_path: Option<&Path>, overrides: &Overrides) -> Result<GenerateOutput> {
    let cfg = RunConfig::load(config_path, overrides)?;
    let dir = cfg.out_dir()?.to_path_buf();
    let net = generate_synthetic(&cfg.generator).context("generating network")?;
    save_network(&net, &dir).with_context(|| format!("writing bundle to {}", dir.display()))?;
    write_resolved(&dir, "generate", &cfg)?;
    let summary = GenerationSummary::of(&net);
    config::write_json(&dir.join("summary.json"), &summary)?;
    Ok(GenerateOutput { dir, summary })
}

/// Trains the configured model, stores the checkpoint and evaluates it.
pub fn cmd_train(config_path: Option<&Path>, overrides: &Overrides) -> Result<TrainOutput> {
    let mut cfg = RunConfig::load(config_path, overrides)?;
    let net = load_data(&cfg)?;
    let spec = cfg.window.resolve(net.n_months())?;
    cfg.window = WindowConfig::explicit(&spec);
    let model_cfg = cfg.model()?.clone();
    let dir = cfg.out_dir()?.to_path_buf();
    create_dir(&dir)?;
    write_resolved(&dir, "train", &cfg)?;

    let start = Instant::now();
    let model =
        build_model(&model_cfg, net.feature_width()).with_context(|| format!("building {}", model_cfg.architecture))?;
    let outcome =
        train_model(model, &net, &spec, &cfg.train).with_context(|| format!("training {}", model_cfg.architecture))?;
    let train_seconds = start.elapsed().as_secs_f64();
    let ev = finish_training(&dir, &cfg, &net, &spec, &outcome, train_seconds)?;
    Ok(TrainOutput {
        dir,
        report: ev.report,
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.epochs_run(),
    })
}

/// Trains one model per grid point, writes the results table and stores
/// and evaluates the best model under `best/`.
pub fn cmd_gridsearch(config_path: Option<&Path>, overrides: &Overrides) -> Result<GridOutput> {
    let mut cfg = RunConfig::load(config_path, overrides)?;
    let net = load_data(&cfg)?;
    let spec = cfg.window.resolve(net.n_months())?;
    cfg.window = WindowConfig::explicit(&spec);
    let grid = cfg.grid()?.clone();
    grid.candidates.validate(grid.architecture)?;
    let dir = cfg.out_dir()?.to_path_buf();
    create_dir(&dir)?;
    write_resolved(&dir, "gridsearch", &cfg)?;

    let start = Instant::now();
    let out = grid_search(
        &grid.candidates,
        grid.architecture,
        derive_seed(cfg.seed, "grid"),
        &net,
        &spec,
        &cfg.train,
        cfg.jobs,
    )
    .with_context(|| format!("grid search over {}", grid.architecture))?;
    let seconds = start.elapsed().as_secs_f64();
    write_results_csv(&out.rows, Some(out.best), &dir.join(RESULTS_FILE))?;
    let best_dir = dir.join("best");
    create_dir(&best_dir)?;
    let ev = finish_training(&best_dir, &cfg, &net, &spec, &out.best_outcome, seconds)?;
    Ok(GridOutput {
        dir,
        rows: out.rows,
        best: out.best,
        report: ev.report,
    })
}

/// Evaluates a stored checkpoint on a bundle without training. The window
/// split and bootstrap settings come from the checkpoint unless a config is
/// given; `--seed` replaces the bootstrap stream only.
pub fn cmd_evaluate(checkpoint: &Path, config_path: Option<&Path>, overrides: &Overrides) -> Result<EvaluateOutput> {
    let (model, manifest): (Model, _) =
        load_checkpoint(checkpoint).with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let meta: CheckpointMetadata = serde_json::from_value(manifest.metadata.clone())
        .context("checkpoint metadata lacks the window split and seeds")?;
    let mut cfg = RunConfig::load(config_path, overrides)?;
    if config_path.is_none() {
        cfg.window = WindowConfig::explicit(&meta.window_spec);
        cfg.bootstrap = meta.bootstrap;
        cfg.seed = meta.master_seed;
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
            cfg.bootstrap.seed = derive_seed(seed, "bootstrap");
        }
    }
    cfg.model = Some(model.config().clone());
    let net = load_data(&cfg)?;
    let spec = cfg.window.resolve(net.n_months())?;
    cfg.window = WindowConfig::explicit(&spec);
    let dir = cfg.out.clone().unwrap_or_else(|| checkpoint.to_path_buf());
    create_dir(&dir)?;
    write_resolved(&dir, "evaluate", &cfg)?;
    let ev = in_pool(cfg.jobs, || evaluate(&model, &net, &spec, cfg.bootstrap))?.context("evaluating checkpoint")?;
    write_evaluation(&dir, &ev, None)?;
    Ok(EvaluateOutput {
        path: dir.join(REPORT_FILE),
        report: ev.report,
    })
}
