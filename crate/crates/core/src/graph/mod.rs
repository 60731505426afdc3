//! Monthly network snapshots with colored edges, labels and referrals.
//!
//! A [`DynamicNetwork`] is an ordered list of [`Snapshot`]s, one per month,
//! whose node and edge sets only ever grow. Edge colors record which
//! connection types (credit card, geohash proximity, contacts) link two
//! customers; once a flag is set it stays set.

mod bundle;
mod components;
mod generator;
mod labels;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bundle::{load_network, save_network, Manifest, FORMAT_VERSION};
pub use components::{
    augment_with_pagerank, component_labels, connected_components, pagerank_per_component, pagerank_scores,
    PageRankConfig,
};
pub use generator::{generate_synthetic, EdgeProbabilities, GenerationSummary, GeneratorConfig};
pub use labels::{label_nodes, LabelMode};
pub use validate::{validate_monotone, Violation, ViolationKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Connection-type flags of an undirected edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct EdgeColor {
    pub credit_card: bool,
    pub geohash: bool,
    pub contacts: bool,
}

impl EdgeColor {
    pub const CREDIT_CARD: EdgeColor = EdgeColor {
        credit_card: true,
        geohash: false,
        contacts: false,
    };
    pub const GEOHASH: EdgeColor = EdgeColor {
        credit_card: false,
        geohash: true,
        contacts: false,
    };
    pub const CONTACTS: EdgeColor = EdgeColor {
        credit_card: false,
        geohash: false,
        contacts: true,
    };

    pub fn new(credit_card: bool, geohash: bool, contacts: bool) -> Self {
        EdgeColor {
            credit_card,
            geohash,
            contacts,
        }
    }

    pub fn is_empty(self) -> bool {
        !(self.credit_card || self.geohash || self.contacts)
    }

    pub fn union(self, other: EdgeColor) -> EdgeColor {
        EdgeColor {
            credit_card: self.credit_card || other.credit_card,
            geohash: self.geohash || other.geohash,
            contacts: self.contacts || other.contacts,
        }
    }

    /// True when every flag set in `other` is also set in `self`.
    pub fn covers(self, other: EdgeColor) -> bool {
        self.union(other) == self
    }

    pub fn count(self) -> u8 {
        u8::from(self.credit_card) + u8::from(self.geohash) + u8::from(self.contacts)
    }
}

/// Scalar GCN edge weight: the number of active connection types.
pub fn edge_weight(color: EdgeColor) -> Result<f64> {
    if color.is_empty() {
        return Err(Error::Invalid("edge with no active color has no weight".into()));
    }
    Ok(f64::from(color.count()))
}

/// Undirected edge stored with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub a: NodeId,
    pub b: NodeId,
    pub color: EdgeColor,
}

impl Edge {
    /// Canonicalises endpoint order. Self-edges and empty colors are rejected.
    pub fn new(u: NodeId, v: NodeId, color: EdgeColor) -> Result<Self> {
        if u == v {
            return Err(Error::Invalid(format!("self-edge on node {u}")));
        }
        if color.is_empty() {
            return Err(Error::Invalid(format!("edge {u}-{v} has no active color")));
        }
        let (a, b) = if u < v { (u, v) } else { (v, u) };
        Ok(Edge { a, b, color })
    }

    pub fn key(&self) -> (NodeId, NodeId) {
        (self.a, self.b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub features: Vec<f64>,
    pub label: u8,
}

/// Network state in one month. Nodes are kept sorted by id and edges by
/// endpoint pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    month: usize,
    nodes: Vec<NodeId>,
    feature_width: usize,
    features: Vec<f64>,
    labels: Vec<u8>,
    edges: Vec<Edge>,
}

impl Snapshot {
    pub fn new(month: usize, mut nodes: Vec<NodeRecord>, mut edges: Vec<Edge>) -> Result<Self> {
        nodes.sort_by_key(|r| r.id);
        if let Some(w) = nodes.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::Invalid(format!(
                "node {} listed twice at month {month}",
                w[0].id
            )));
        }
        let feature_width = nodes.first().map_or(0, |r| r.features.len());
        for r in &nodes {
            if r.features.len() != feature_width {
                return Err(Error::RaggedWidth {
                    month,
                    expected: feature_width,
                    found: r.features.len(),
                    node: r.id.to_string(),
                });
            }
            if r.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!(
                    "non-finite feature for node {} at month {month}",
                    r.id
                )));
            }
            if r.label > 1 {
                return Err(Error::Invalid(format!(
                    "label {} of node {} at month {month} is not 0/1",
                    r.label, r.id
                )));
            }
        }
        let ids: Vec<NodeId> = nodes.iter().map(|r| r.id).collect();
        for e in &mut edges {
            *e = Edge::new(e.a, e.b, e.color).map_err(|err| Error::Invalid(format!("month {month}: {err}")))?;
            for end in [e.a, e.b] {
                if ids.binary_search(&end).is_err() {
                    return Err(Error::UnknownNode {
                        month,
                        node: end.to_string(),
                    });
                }
            }
        }
        edges.sort_by_key(Edge::key);
        if let Some(w) = edges.windows(2).find(|w| w[0].key() == w[1].key()) {
            return Err(Error::Invalid(format!(
                "edge {}-{} listed twice at month {month}",
                w[0].a, w[0].b
            )));
        }
        Ok(Snapshot {
            month,
            feature_width,
            features: nodes.iter().flat_map(|r| r.features.iter().copied()).collect(),
            labels: nodes.iter().map(|r| r.label).collect(),
            nodes: ids,
            edges,
        })
    }

    pub fn month(&self) -> usize {
        self.month
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn feature_width(&self) -> usize {
        self.feature_width
    }

    pub fn position(&self, id: NodeId) -> Option<usize> {
        self.nodes.binary_search(&id).ok()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.position(id).is_some()
    }

    /// Feature row of the node at sorted position `i`.
    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_width..(i + 1) * self.feature_width]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, a: NodeId, b: NodeId) -> Option<&Edge> {
        let key = if a < b { (a, b) } else { (b, a) };
        self.edges
            .binary_search_by_key(&key, Edge::key)
            .ok()
            .map(|i| &self.edges[i])
    }

    pub fn records(&self) -> Vec<NodeRecord> {
        (0..self.len())
            .map(|i| NodeRecord {
                id: self.nodes[i],
                features: self.features(i).to_vec(),
                label: self.labels[i],
            })
            .collect()
    }

    /// Neighbour lists by sorted node position.
    pub fn neighbours(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.len()];
        for e in &self.edges {
            let (i, j) = (self.position(e.a).unwrap(), self.position(e.b).unwrap());
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    pub(crate) fn with_labels(&self, labels: Vec<u8>) -> Snapshot {
        debug_assert_eq!(labels.len(), self.nodes.len());
        Snapshot { labels, ..self.clone() }
    }

    pub(crate) fn with_extra_column(&self, column: &[f64]) -> Snapshot {
        let w = self.feature_width;
        let mut features = Vec::with_capacity(self.len() * (w + 1));
        for (i, extra) in column.iter().enumerate() {
            features.extend_from_slice(self.features(i));
            features.push(*extra);
        }
        Snapshot {
            feature_width: w + 1,
            features,
            ..self.clone()
        }
    }
}

/// `referrer` invited `referred` during `month`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ReferralEvent {
    pub referrer: NodeId,
    pub referred: NodeId,
    pub month: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicNetwork {
    snapshots: Vec<Snapshot>,
    referrals: Vec<ReferralEvent>,
    feature_names: Vec<String>,
    label_mode: LabelMode,
}

impl DynamicNetwork {
    /// Checks structure (consecutive months from 0, one feature width,
    /// referrers present). Monotonicity is checked by [`Self::validate`].
    pub fn new(
        snapshots: Vec<Snapshot>,
        mut referrals: Vec<ReferralEvent>,
        feature_names: Vec<String>,
        label_mode: LabelMode,
    ) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::Invalid("network has no snapshots".into()));
        }
        for (m, s) in snapshots.iter().enumerate() {
            if s.month != m {
                return Err(Error::Invalid(format!(
                    "snapshot at position {m} has month index {}",
                    s.month
                )));
            }
            if s.is_empty() {
                return Err(Error::Invalid(format!("month {m} has no nodes")));
            }
            if s.feature_width != feature_names.len() {
                return Err(Error::RaggedWidth {
                    month: m,
                    expected: feature_names.len(),
                    found: s.feature_width,
                    node: s.nodes[0].to_string(),
                });
            }
        }
        for ev in &referrals {
            match snapshots.get(ev.month) {
                Some(s) if s.contains(ev.referrer) => {}
                Some(_) => {
                    return Err(Error::UnknownNode {
                        month: ev.month,
                        node: ev.referrer.to_string(),
                    })
                }
                None => {
                    return Err(Error::Invalid(format!(
                        "referral by {} at month {} is past the last snapshot",
                        ev.referrer, ev.month
                    )))
                }
            }
        }
        referrals.sort_by_key(|e| (e.month, e.referrer, e.referred));
        Ok(DynamicNetwork {
            snapshots,
            referrals,
            feature_names,
            label_mode,
        })
    }

    /// Fails with the first monotonicity violation, if any.
    pub fn validate(&self) -> Result<()> {
        match validate_monotone(self).into_iter().next() {
            None => Ok(()),
            Some(v) => Err(Error::Monotonicity(v.to_string())),
        }
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn snapshot(&self, month: usize) -> Option<&Snapshot> {
        self.snapshots.get(month)
    }

    pub fn n_months(&self) -> usize {
        self.snapshots.len()
    }

    pub fn referrals(&self) -> &[ReferralEvent] {
        &self.referrals
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_width(&self) -> usize {
        self.feature_names.len()
    }

    pub fn label_mode(&self) -> LabelMode {
        self.label_mode
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("non-empty")
    }

    /// First month in which each node appears.
    pub fn birth_months(&self) -> BTreeMap<NodeId, usize> {
        let mut birth = BTreeMap::new();
        for s in &self.snapshots {
            for &id in &s.nodes {
                birth.entry(id).or_insert(s.month);
            }
        }
        birth
    }

    /// Recomputes every snapshot's labels from the referral events.
    pub fn relabel(&self, mode: LabelMode) -> DynamicNetwork {
        let labels = label_nodes(self, mode);
        DynamicNetwork {
            snapshots: self
                .snapshots
                .iter()
                .zip(labels)
                .map(|(s, l)| s.with_labels(l))
                .collect(),
            label_mode: mode,
            ..self.clone()
        }
    }

    pub(crate) fn with_snapshots(&self, snapshots: Vec<Snapshot>, feature_names: Vec<String>) -> DynamicNetwork {
        DynamicNetwork {
            snapshots,
            feature_names,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_weight_counts_colors() {
        assert_eq!(edge_weight(EdgeColor::new(true, false, false)).unwrap(), 1.0);
        assert_eq!(edge_weight(EdgeColor::new(true, true, true)).unwrap(), 3.0);
        assert_eq!(edge_weight(EdgeColor::new(false, true, true)).unwrap(), 2.0);
        assert!(edge_weight(EdgeColor::default()).is_err());
    }

    fn rec(id: u64, w: usize) -> NodeRecord {
        NodeRecord {
            id: NodeId(id),
            features: vec![0.5; w],
            label: 0,
        }
    }

    #[test]
    fn snapshot_rejects_bad_input() {
        let e = |a, b| Edge {
            a: NodeId(a),
            b: NodeId(b),
            color: EdgeColor::CONTACTS,
        };
        assert!(Snapshot::new(0, vec![rec(1, 2), rec(2, 2)], vec![e(1, 1)]).is_err());
        assert!(matches!(
            Snapshot::new(0, vec![rec(1, 2), rec(2, 2)], vec![e(1, 3)]),
            Err(Error::UnknownNode { .. })
        ));
        assert!(Snapshot::new(0, vec![rec(1, 2), rec(2, 2)], vec![e(1, 2), e(2, 1)]).is_err());
        assert!(matches!(
            Snapshot::new(4, vec![rec(1, 2), rec(2, 3)], vec![]),
            Err(Error::RaggedWidth { month: 4, .. })
        ));
        let s = Snapshot::new(0, vec![rec(2, 1), rec(1, 1)], vec![e(2, 1)]).unwrap();
        assert_eq!(s.nodes(), &[NodeId(1), NodeId(2)]);
        assert_eq!(s.edges()[0].a, NodeId(1));
        assert!(s.edge(NodeId(2), NodeId(1)).is_some());
    }
}
