//! Network tensors in birth order.
//!
//! Nodes are ranked by `(birth month, id)`. Because networks only grow, the
//! nodes of month `t` are exactly the first `n_t` ranks, so every per-month
//! matrix is a row prefix of the next one and recurrent state can be carried
//! forward by appending zero rows for newcomers.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::{augment_with_pagerank, edge_weight, DynamicNetwork, NodeId};
use crate::numcore::{Adjacency, Tensor};

/// Message-passing structure of one snapshot: every undirected edge in both
/// directions plus one self-loop per node.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    n: usize,
    adjacency: Arc<Adjacency>,
    gcn_weights: Arc<Vec<f64>>,
    src: Arc<Vec<usize>>,
    dst: Arc<Vec<usize>>,
}

impl GraphInput {
    /// `edges` are undirected `(u, v, weight)` over rows `0..n`.
    pub fn new(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut degree = vec![1.0; n];
        let mut triples = Vec::with_capacity(n + 2 * edges.len());
        for i in 0..n {
            triples.push((i, i, 1.0));
        }
        for &(u, v, w) in edges {
            if u >= n || v >= n {
                return Err(Error::Index(format!("edge ({u}, {v}) outside {n} nodes")));
            }
            if u == v {
                return Err(Error::Index(format!("self-edge on node {u}")));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Domain(format!("edge weight must be positive, got {w}")));
            }
            degree[u] += w;
            degree[v] += w;
            triples.push((u, v, w));
            triples.push((v, u, w));
        }
        let (adjacency, weights) = Adjacency::with_weights(n, n, &triples)?;
        let gcn_weights = adjacency
            .dst()
            .iter()
            .zip(adjacency.src())
            .zip(&weights)
            .map(|((&d, &s), &w)| w / (degree[d] * degree[s]).sqrt())
            .collect();
        Ok(GraphInput {
            n,
            src: Arc::new(adjacency.src().to_vec()),
            dst: Arc::new(adjacency.dst().to_vec()),
            adjacency: Arc::new(adjacency),
            gcn_weights: Arc::new(gcn_weights),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn adjacency(&self) -> &Arc<Adjacency> {
        &self.adjacency
    }

    /// Entries of `D^{-1/2} (A_w + I) D^{-1/2}` in adjacency storage order.
    pub fn gcn_weights(&self) -> &Arc<Vec<f64>> {
        &self.gcn_weights
    }

    pub fn src(&self) -> &Arc<Vec<usize>> {
        &self.src
    }

    pub fn dst(&self) -> &Arc<Vec<usize>> {
        &self.dst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonthData {
    pub x: Tensor,
    pub labels: Vec<u8>,
    pub graph: GraphInput,
}

impl MonthData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedNetwork {
    order: Vec<NodeId>,
    birth: Vec<usize>,
    months: Vec<MonthData>,
    with_pagerank: bool,
}

impl PreparedNetwork {
    /// Lays out `net` in birth order, optionally appending the per-component
    /// PageRank column to the features.
    pub fn new(net: &DynamicNetwork, with_pagerank: bool) -> Result<Self> {
        if net.feature_width() == 0 {
            return Err(Error::Config(
                "networks without node features cannot be modelled".into(),
            ));
        }
        let augmented;
        let net = if with_pagerank {
            augmented = augment_with_pagerank(net)?;
            &augmented
        } else {
            net
        };
        let births = net.birth_months();
        let mut ranked: Vec<(usize, NodeId)> = births.iter().map(|(&id, &b)| (b, id)).collect();
        ranked.sort_unstable();
        let order: Vec<NodeId> = ranked.iter().map(|&(_, id)| id).collect();
        let birth: Vec<usize> = ranked.iter().map(|&(b, _)| b).collect();
        let rank: HashMap<NodeId, usize> = order.iter().enumerate().map(|(i, &id)| (id, i)).collect();

        let mut months = Vec::with_capacity(net.n_months());
        for s in net.snapshots() {
            let n = s.len();
            let width = s.feature_width();
            let mut x = Vec::with_capacity(n * width);
            let mut labels = Vec::with_capacity(n);
            for &id in &order[..n] {
                let row = s
                    .position(id)
                    .ok_or_else(|| Error::Monotonicity(format!("node {id} disappears at month {}", s.month())))?;
                x.extend_from_slice(s.features(row));
                labels.push(s.labels()[row]);
            }
            let edges = s
                .edges()
                .iter()
                .map(|e| Ok((rank[&e.a], rank[&e.b], edge_weight(e.color)?)))
                .collect::<Result<Vec<_>>>()?;
            months.push(MonthData {
                x: Tensor::matrix(n, width, x)?,
                labels,
                graph: GraphInput::new(n, &edges)?,
            });
        }
        Ok(PreparedNetwork {
            order,
            birth,
            months,
            with_pagerank,
        })
    }

    pub fn n_months(&self) -> usize {
        self.months.len()
    }

    pub fn month(&self, m: usize) -> Result<&MonthData> {
        self.months
            .get(m)
            .ok_or_else(|| Error::Index(format!("month {m} outside 0..{}", self.months.len())))
    }

    /// Node ids in row order.
    pub fn order(&self) -> &[NodeId] {
        &self.order
    }

    /// Birth month of each row.
    pub fn birth(&self) -> &[usize] {
        &self.birth
    }

    pub fn input_width(&self) -> usize {
        self.months[0].x.cols()
    }

    pub fn with_pagerank(&self) -> bool {
        self.with_pagerank
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, EdgeColor, LabelMode, NodeRecord, Snapshot};

    fn rec(id: u64, f: f64) -> NodeRecord {
        NodeRecord {
            id: NodeId(id),
            features: vec![f],
            label: 0,
        }
    }

    #[test]
    fn rows_follow_birth_order() {
        let s0 = Snapshot::new(0, vec![rec(9, 0.9)], vec![]).unwrap();
        let e = Edge::new(NodeId(9), NodeId(2), EdgeColor::new(true, false, true)).unwrap();
        let s1 = Snapshot::new(1, vec![rec(2, 0.2), rec(9, 1.9)], vec![e]).unwrap();
        let net = DynamicNetwork::new(vec![s0, s1], vec![], vec!["f".into()], LabelMode::default()).unwrap();
        let p = PreparedNetwork::new(&net, false).unwrap();
        assert_eq!(p.order(), &[NodeId(9), NodeId(2)]);
        assert_eq!(p.birth(), &[0, 1]);
        assert_eq!(p.month(1).unwrap().x.values(), &[1.9, 0.2]);
        // Degrees with self-loop: 1 + 2 on both ends.
        let g = &p.month(1).unwrap().graph;
        let w: Vec<f64> = g.gcn_weights().to_vec();
        assert_eq!(g.adjacency().len(), 4);
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-15 && (w[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(matches!(GraphInput::new(2, &[(0, 2, 1.0)]), Err(Error::Index(_))));
        assert!(matches!(GraphInput::new(2, &[(1, 1, 1.0)]), Err(Error::Index(_))));
        assert!(matches!(GraphInput::new(2, &[(0, 1, 0.0)]), Err(Error::Domain(_))));
    }
}
