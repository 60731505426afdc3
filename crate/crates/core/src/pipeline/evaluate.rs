use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{auc, bootstrap_ci, BootstrapConfig};
use super::windows::{MonthRange, WindowSpec};
use crate::error::{Error, Result};
use crate::graph::{DynamicNetwork, NodeId};
use crate::models::{Model, ModelConfig, PreparedNetwork};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeGroup {
    Seen,
    Unseen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NodeSplit {
    pub seen: BTreeSet<NodeId>,
    pub unseen: BTreeSet<NodeId>,
}

/// Seen nodes were born by the end of training; unseen nodes were born in
/// `target`. Nodes born between the two belong to neither set.
pub fn split_by_birth(births: &BTreeMap<NodeId, usize>, train_end: usize, target: MonthRange) -> NodeSplit {
    let mut split = NodeSplit::default();
    for (&id, &b) in births {
        if b <= train_end {
            split.seen.insert(id);
        } else if target.contains(b) {
            split.unseen.insert(id);
        }
    }
    split
}

/// Test-time node sets.
pub fn split_seen_unseen(net: &DynamicNetwork, spec: &WindowSpec) -> NodeSplit {
    split_by_birth(&net.birth_months(), spec.train.end, spec.test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredNode {
    pub node: NodeId,
    pub month: usize,
    pub group: NodeGroup,
    pub label: u8,
    pub score: f64,
}

/// Scores every seen or unseen node at the last month of each window of the
/// phase's range.
pub fn score_phase(model: &Model, data: &PreparedNetwork, spec: &WindowSpec, phase: Phase) -> Result<Vec<ScoredNode>> {
    let (range, windows) = match phase {
        Phase::Validation => (spec.val, spec.val_windows()?),
        Phase::Test => (spec.test, spec.test_windows()?),
    };
    let mut out = Vec::new();
    for w in windows {
        let last = *w.last().expect("non-empty window");
        let probs = model.predict(data, &w)?;
        let labels = &data.month(last)?.labels;
        for (row, (&p, &label)) in probs.iter().zip(labels).enumerate() {
            let b = data.birth()[row];
            let group = if b <= spec.train.end {
                NodeGroup::Seen
            } else if range.contains(b) {
                NodeGroup::Unseen
            } else {
                continue;
            };
            out.push(ScoredNode {
                node: data.order()[row],
                month: last,
                group,
                label,
                score: p,
            });
        }
    }
    Ok(out)
}

pub fn group_scores(scored: &[ScoredNode], group: NodeGroup) -> (Vec<f64>, Vec<u8>) {
    scored
        .iter()
        .filter(|s| s.group == group)
        .map(|s| (s.score, s.label))
        .unzip()
}

/// AUC of one group, `None` when it is empty or single-class.
pub fn group_auc(scored: &[ScoredNode], group: NodeGroup) -> Option<f64> {
    let (s, l) = group_scores(scored, group);
    auc(&s, &l).ok()
}

/// Mean of the available group AUCs.
pub fn selection_score(seen: Option<f64>, unseen: Option<f64>) -> Option<f64> {
    match (seen, unseen) {
        (Some(a), Some(b)) => Some((a + b) / 2.0),
        (a, b) => a.or(b),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucSummary {
    /// AUC on the full group.
    pub auc: f64,
    pub mean: f64,
    pub half_width: f64,
    pub lower: f64,
    pub upper: f64,
    pub n_positive: usize,
    pub n_negative: usize,
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub architecture: String,
    pub config: ModelConfig,
    pub window_spec: WindowSpec,
    pub bootstrap: BootstrapConfig,
    pub n_seen: usize,
    pub n_unseen: usize,
    pub auc_seen: Option<AucSummary>,
    pub auc_unseen: Option<AucSummary>,
    /// Why a group's AUC is absent.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub absent: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_seconds: Option<f64>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s =
            serde_json::to_string_pretty(self).map_err(|e| Error::Data(format!("report serialisation: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Data(format!("report parse: {e}")))
    }
}

fn summarise(
    scored: &[ScoredNode],
    group: NodeGroup,
    cfg: BootstrapConfig,
    absent: &mut Vec<String>,
) -> Result<Option<AucSummary>> {
    let (s, l) = group_scores(scored, group);
    let name = match group {
        NodeGroup::Seen => "seen",
        NodeGroup::Unseen => "unseen",
    };
    let pos = l.iter().filter(|&&x| x == 1).count();
    if s.is_empty() || pos == 0 || pos == l.len() {
        absent.push(format!("{name}: {} nodes, {pos} positive", l.len()));
        return Ok(None);
    }
    let ci = bootstrap_ci(
        &s,
        &l,
        BootstrapConfig {
            seed: derive_seed(cfg.seed, name),
            ..cfg
        },
    )?;
    Ok(Some(AucSummary {
        auc: auc(&s, &l)?,
        mean: ci.mean,
        half_width: ci.half_width,
        lower: ci.lower,
        upper: ci.upper,
        n_positive: pos,
        n_negative: l.len() - pos,
        samples: ci.samples,
    }))
}

/// Builds the report for already scored test nodes.
pub fn report_from_scores(
    config: &ModelConfig,
    spec: &WindowSpec,
    bootstrap: BootstrapConfig,
    scored: &[ScoredNode],
) -> Result<EvalReport> {
    let mut absent = Vec::new();
    let auc_seen = summarise(scored, NodeGroup::Seen, bootstrap, &mut absent)?;
    let auc_unseen = summarise(scored, NodeGroup::Unseen, bootstrap, &mut absent)?;
    Ok(EvalReport {
        architecture: config.architecture.to_string(),
        config: config.clone(),
        window_spec: *spec,
        bootstrap,
        n_seen: scored.iter().filter(|s| s.group == NodeGroup::Seen).count(),
        n_unseen: scored.iter().filter(|s| s.group == NodeGroup::Unseen).count(),
        auc_seen,
        auc_unseen,
        absent,
        wall_time_seconds: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub scores: Vec<ScoredNode>,
    pub wall_time_seconds: f64,
}

/// Test-range evaluation. The report itself carries no timing so that it is
/// a pure function of model, data and seeds; the elapsed time is returned
/// alongside.
pub fn evaluate(
    model: &Model,
    net: &DynamicNetwork,
    spec: &WindowSpec,
    bootstrap: BootstrapConfig,
) -> Result<Evaluation> {
    let start = Instant::now();
    spec.validate(net.n_months())?;
    let data = model.prepare(net)?;
    let scores = score_phase(model, &data, spec, Phase::Test)?;
    let report = report_from_scores(model.config(), spec, bootstrap, &scores)?;
    Ok(Evaluation {
        report,
        scores,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    })
}
