use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::train::{train_model, TrainConfig, TrainOutcome};
use super::windows::WindowSpec;
use crate::error::{Error, Result};
use crate::graph::DynamicNetwork;
use crate::models::{build_model, Architecture, EncoderKind, ModelConfig};
use crate::seed::derive_indexed;

/// Candidate values per hyperparameter. Lists for hyperparameters the
/// architecture does not have must be empty. Among the others, an empty
/// `gnn_hidden`, `dropout` or `smote_rate` list means "use the default"
/// (embedding width, 0, 0); the rest must be non-empty.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub gnn_layers: Vec<usize>,
    pub gnn_hidden: Vec<usize>,
    pub embedding_dim: Vec<usize>,
    pub heads: Vec<usize>,
    pub rnn_hidden: Vec<usize>,
    pub dropout: Vec<f64>,
    pub smote_rate: Vec<f64>,
}

fn check_list<T>(arch: Architecture, name: &str, list: &[T], applies: bool) -> Result<()> {
    check(arch, name, list, applies, true)
}

fn check_optional<T>(arch: Architecture, name: &str, list: &[T], applies: bool) -> Result<()> {
    check(arch, name, list, applies, false)
}

fn check<T>(arch: Architecture, name: &str, list: &[T], applies: bool, required: bool) -> Result<()> {
    match (applies, list.is_empty()) {
        (true, true) if required => Err(Error::Config(format!("grid list {name} must be non-empty for {arch}"))),
        (false, false) => Err(Error::Config(format!("grid list {name} does not apply to {arch}"))),
        _ => Ok(()),
    }
}

fn options<T: Copy>(list: &[T]) -> Vec<Option<T>> {
    if list.is_empty() {
        vec![None]
    } else {
        list.iter().copied().map(Some).collect()
    }
}

impl GridSpec {
    pub fn validate(&self, arch: Architecture) -> Result<()> {
        let gnn = arch.uses_gnn();
        check_list(arch, "gnn_layers", &self.gnn_layers, gnn)?;
        check_optional(arch, "gnn_hidden", &self.gnn_hidden, gnn)?;
        check_list(arch, "embedding_dim", &self.embedding_dim, gnn)?;
        check_list(arch, "heads", &self.heads, arch.encoder() == EncoderKind::Gat)?;
        check_list(arch, "rnn_hidden", &self.rnn_hidden, !arch.is_static())?;
        check_optional(arch, "dropout", &self.dropout, gnn)?;
        check_optional(arch, "smote_rate", &self.smote_rate, true)
    }

    /// Number of grid points: the product of the non-empty list lengths.
    pub fn size(&self) -> usize {
        [
            self.gnn_layers.len(),
            self.gnn_hidden.len(),
            self.embedding_dim.len(),
            self.heads.len(),
            self.rnn_hidden.len(),
            self.dropout.len(),
            self.smote_rate.len(),
        ]
        .into_iter()
        .filter(|&n| n > 0)
        .product()
    }

    /// Every grid point in enumeration order (last list varies fastest).
    /// Point `i` gets the seed `derive_indexed(seed, i)`.
    pub fn configs(&self, arch: Architecture, seed: u64) -> Result<Vec<ModelConfig>> {
        self.validate(arch)?;
        let mut out = Vec::with_capacity(self.size());
        for layers in options(&self.gnn_layers) {
            for hidden in options(&self.gnn_hidden) {
                for emb in options(&self.embedding_dim) {
                    for heads in options(&self.heads) {
                        for rnn in options(&self.rnn_hidden) {
                            for dropout in options(&self.dropout) {
                                for smote in options(&self.smote_rate) {
                                    out.push(ModelConfig {
                                        architecture: arch,
                                        gnn_layers: layers,
                                        gnn_hidden: hidden,
                                        embedding_dim: emb,
                                        rnn_hidden: rnn,
                                        heads,
                                        dropout: dropout.unwrap_or(0.0),
                                        smote_rate: smote.unwrap_or(0.0),
                                        seed: derive_indexed(seed, out.len() as u64),
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub index: usize,
    pub config: ModelConfig,
    pub val_auc_seen: Option<f64>,
    pub val_auc_unseen: Option<f64>,
    pub best_epoch: Option<usize>,
    pub wall_time_seconds: f64,
    pub error: Option<String>,
}

impl GridRow {
    /// `(seen + unseen) / 2`, or the single available AUC.
    pub fn score(&self) -> Option<f64> {
        super::evaluate::selection_score(self.val_auc_seen, self.val_auc_unseen)
    }
}

/// Index of the row with the highest score; ties go to the earliest row.
pub fn select_best(rows: &[GridRow]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in rows.iter().enumerate() {
        if let Some(s) = r.score() {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub rows: Vec<GridRow>,
    pub best: usize,
    pub best_outcome: TrainOutcome,
}

/// Trains one model per grid point on up to `jobs` threads. Failed cells are
/// kept as rows with their error; the run fails only if every cell fails.
pub fn grid_search(
    grid: &GridSpec,
    architecture: Architecture,
    seed: u64,
    net: &DynamicNetwork,
    spec: &WindowSpec,
    train_cfg: &TrainConfig,
    jobs: usize,
) -> Result<GridOutcome> {
    let configs = grid.configs(architecture, seed)?;
    let run = |(index, config): (usize, &ModelConfig)| {
        let start = Instant::now();
        let result = build_model(config, net.feature_width()).and_then(|m| train_model(m, net, spec, train_cfg));
        let wall = start.elapsed().as_secs_f64();
        match result {
            Ok(outcome) => (
                GridRow {
                    index,
                    config: config.clone(),
                    val_auc_seen: outcome.best.auc_seen,
                    val_auc_unseen: outcome.best.auc_unseen,
                    best_epoch: Some(outcome.best_epoch),
                    wall_time_seconds: wall,
                    error: None,
                },
                Some(outcome),
            ),
            Err(e) => (
                GridRow {
                    index,
                    config: config.clone(),
                    val_auc_seen: None,
                    val_auc_unseen: None,
                    best_epoch: None,
                    wall_time_seconds: wall,
                    error: Some(format!("{e}")),
                },
                None,
            ),
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<(GridRow, Option<TrainOutcome>)> =
        pool.install(|| configs.par_iter().enumerate().map(run).collect());
    let rows: Vec<GridRow> = results.iter().map(|(r, _)| r.clone()).collect();
    let best = select_best(&rows).ok_or_else(|| {
        let first = rows.iter().find_map(|r| r.error.clone()).unwrap_or_default();
        Error::Data(format!("every grid cell failed; first error: {first}"))
    })?;
    let best_outcome = results
        .into_iter()
        .nth(best)
        .and_then(|(_, o)| o)
        .expect("best row trained successfully");
    Ok(GridOutcome {
        rows,
        best,
        best_outcome,
    })
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const RESULTS_HEADER: [&str; 15] = [
    "index",
    "architecture",
    "gnn_layers",
    "gnn_hidden",
    "embedding_dim",
    "heads",
    "rnn_hidden",
    "dropout",
    "smote_rate",
    "seed",
    "val_auc_seen",
    "val_auc_unseen",
    "val_score",
    "best",
    "wall_time_seconds",
];

/// One CSV row per grid point plus a trailing `error` column.
pub fn write_results_csv(rows: &[GridRow], best: Option<usize>, path: &Path) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = RESULTS_HEADER.to_vec();
    header.push("error");
    w.write_record(&header).map_err(csv_err)?;
    for (i, r) in rows.iter().enumerate() {
        let c = &r.config;
        w.write_record([
            r.index.to_string(),
            c.architecture.to_string(),
            opt(c.gnn_layers),
            opt(c.gnn_hidden),
            opt(c.embedding_dim),
            opt(c.heads),
            opt(c.rnn_hidden),
            c.dropout.to_string(),
            c.smote_rate.to_string(),
            c.seed.to_string(),
            opt(r.val_auc_seen),
            opt(r.val_auc_unseen),
            opt(r.score()),
            u8::from(best == Some(i)).to_string(),
            format!("{:.3}", r.wall_time_seconds),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(format!("csv buffer: {e}")))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
