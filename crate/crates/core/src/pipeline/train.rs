use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::evaluate::{group_auc, score_phase, selection_score, NodeGroup, Phase};
use super::smote::{smote_oversample, DEFAULT_SMOTE_K};
use super::windows::WindowSpec;
use crate::error::{Error, Result};
use crate::graph::DynamicNetwork;
use crate::models::{Model, PreparedNetwork};
use crate::numcore::{AdamConfig, AdamState, Tape, Tensor};
use crate::seed::{derive_seed, rng_from};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub lr: f64,
    pub smote_k: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 500,
            early_stop_patience: 50,
            lr: 1e-4,
            smote_k: DEFAULT_SMOTE_K,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.early_stop_patience == 0 {
            return Err(Error::Config(
                "max_epochs and early_stop_patience must be positive".into(),
            ));
        }
        if self.early_stop_patience > self.max_epochs {
            return Err(Error::Config(format!(
                "early_stop_patience {} exceeds max_epochs {}",
                self.early_stop_patience, self.max_epochs
            )));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be >= 0, got {}", self.lr)));
        }
        if self.smote_k == 0 {
            return Err(Error::Config("smote_k must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub score: f64,
    pub auc_seen: Option<f64>,
    pub auc_unseen: Option<f64>,
}

impl Validation {
    pub fn constant(score: f64) -> Self {
        Validation {
            score,
            auc_seen: None,
            auc_unseen: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation: Validation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best: Validation,
}

impl TrainOutcome {
    pub fn epochs_run(&self) -> usize {
        self.history.len()
    }
}

/// Mean seen/unseen validation AUC; falls back to the single available group.
pub fn validate_model(model: &Model, data: &PreparedNetwork, spec: &WindowSpec) -> Result<Validation> {
    let scored = score_phase(model, data, spec, Phase::Validation)?;
    let seen = group_auc(&scored, NodeGroup::Seen);
    let unseen = group_auc(&scored, NodeGroup::Unseen);
    let score =
        selection_score(seen, unseen).ok_or_else(|| Error::Data("validation windows contain a single class".into()))?;
    Ok(Validation {
        score,
        auc_seen: seen,
        auc_unseen: unseen,
    })
}

/// Trains `model` on the training windows of `spec` with early stopping on the
/// validation windows.
pub fn train_model(model: Model, net: &DynamicNetwork, spec: &WindowSpec, cfg: &TrainConfig) -> Result<TrainOutcome> {
    spec.validate(net.n_months())?;
    let data = model.prepare(net)?;
    let windows = spec.train_windows(model.architecture().is_static())?;
    train_model_with(model, &data, &windows, cfg, |m, _| validate_model(m, &data, spec))
}

fn numeric_at(epoch: usize, e: Error) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(format!("epoch {epoch}: {msg}")),
        other => other.context(format!("epoch {epoch}")),
    }
}

/// Training loop with a caller-supplied validation hook, called after every
/// epoch with the current model and the 1-based epoch. One Adam step per
/// window; training stops once `early_stop_patience` epochs pass without a
/// strict improvement, and the best epoch's parameters are returned.
pub fn train_model_with<V>(
    mut model: Model,
    data: &PreparedNetwork,
    windows: &[Vec<usize>],
    cfg: &TrainConfig,
    mut validate: V,
) -> Result<TrainOutcome>
where
    V: FnMut(&Model, usize) -> Result<Validation>,
{
    cfg.validate()?;
    if windows.is_empty() {
        return Err(Error::Config("no training windows".into()));
    }
    let mut any_positive = false;
    for w in windows {
        let last = *w.last().ok_or_else(|| Error::Config("empty training window".into()))?;
        any_positive |= data.month(last)?.labels.contains(&1);
    }
    if !any_positive {
        return Err(Error::Data("no positive labels in any training window".into()));
    }
    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new(model.params(), adam_cfg)?;
    let mut dropout_rng = rng_from(derive_seed(cfg.seed, "dropout"));
    let mut smote_rng = rng_from(derive_seed(cfg.seed, "smote"));
    let smote_rate = model.config().smote_rate;

    let mut history = Vec::new();
    let mut best: Option<(usize, Validation, Model)> = None;
    let mut since_best = 0;
    for epoch in 1..=cfg.max_epochs {
        let mut loss_sum = 0.0;
        for w in windows {
            let mut tape = Tape::new();
            let vars = model.bind(&mut tape);
            let step = (|| -> Result<f64> {
                let (rep, mut logits) = model.window_forward(&mut tape, &vars, data, w, true, &mut dropout_rng)?;
                let last = *w.last().expect("checked above");
                let labels = &data.month(last)?.labels;
                let mut targets: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
                if smote_rate > 0.0 {
                    let r = tape.value(rep);
                    let points: Vec<Vec<f64>> = (0..r.rows()).map(|i| r.row(i).to_vec()).collect();
                    let aug = smote_oversample(&points, labels, smote_rate, cfg.smote_k, &mut smote_rng)?;
                    if aug.n_synthetic() > 0 {
                        let synthetic = Tensor::from_rows(&aug.points[points.len()..])?;
                        let s = tape.constant(synthetic);
                        let all = tape.concat_rows(&[rep, s])?;
                        logits = model.head_logits(&mut tape, &vars, all)?;
                        targets = aug.labels.iter().map(|&l| f64::from(l)).collect();
                    }
                }
                let loss = tape.bce_with_logits(logits, Arc::new(targets))?;
                let grads = tape.backward(loss)?;
                let g: Vec<Vec<f64>> = vars
                    .iter()
                    .zip(model.params())
                    .map(|(&v, p)| grads.get(v).map_or_else(|| vec![0.0; p.len()], <[f64]>::to_vec))
                    .collect();
                adam.step(model.params_mut(), &g)?;
                Ok(tape.value(loss).values()[0])
            })();
            loss_sum += step.map_err(|e| numeric_at(epoch, e))?;
        }
        let validation = validate(&model, epoch).map_err(|e| numeric_at(epoch, e))?;
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / windows.len() as f64,
            validation,
        });
        let improved = best.as_ref().is_none_or(|(_, b, _)| validation.score > b.score);
        if improved {
            best = Some((epoch, validation, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                break;
            }
        }
    }
    let (best_epoch, best, model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        best,
    })
}
