use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_indexed, rng_from};

fn class_counts(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::shape("auc", &[scores.len()], &[labels.len()]));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Data(format!("labels must be 0 or 1, found {l}")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("non-finite score passed to auc".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Data(format!(
            "auc needs both classes, got {pos} positives and {neg} negatives"
        )));
    }
    Ok((pos, neg))
}

/// Mann–Whitney AUC: the fraction of (positive, negative) pairs ranked
/// correctly, ties counting one half. Computed from mid-ranks in
/// `O(n log n)`; the rank sums are exact in floating point.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = class_counts(scores, labels)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean.
        let mid = (i + j + 2) as f64 / 2.0;
        let tied_pos = idx[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum += mid * tied_pos as f64;
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 1000,
            alpha: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub mean: f64,
    pub half_width: f64,
    pub lower: f64,
    pub upper: f64,
    pub samples: Vec<f64>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Stratified percentile bootstrap of the AUC. Replicate `b` draws from its
/// own stream `derive_indexed(cfg.seed, b)`, so the result does not depend on
/// how replicates are scheduled across threads.
pub fn bootstrap_ci(scores: &[f64], labels: &[u8], cfg: BootstrapConfig) -> Result<BootstrapCi> {
    class_counts(scores, labels)?;
    if cfg.replicates == 0 {
        return Err(Error::Config("bootstrap needs at least one replicate".into()));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", cfg.alpha)));
    }
    let pos: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 1)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 0)
        .map(|(&s, _)| s)
        .collect();
    let mut sample_labels = vec![1u8; pos.len()];
    sample_labels.resize(labels.len(), 0);
    let samples = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_from(derive_indexed(cfg.seed, b as u64));
            let mut s = Vec::with_capacity(labels.len());
            s.extend((0..pos.len()).map(|_| pos[rng.random_range(0..pos.len())]));
            s.extend((0..neg.len()).map(|_| neg[rng.random_range(0..neg.len())]));
            auc(&s, &sample_labels)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let lower = quantile(&sorted, cfg.alpha / 2.0);
    let upper = quantile(&sorted, 1.0 - cfg.alpha / 2.0);
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    Ok(BootstrapCi {
        mean,
        half_width: (upper - lower) / 2.0,
        lower,
        upper,
        samples,
    })
}
