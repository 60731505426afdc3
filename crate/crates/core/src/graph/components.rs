use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DynamicNetwork, NodeId, Snapshot};
use crate::error::{Error, Result};

/// Component index of every node (by sorted position). Indices are dense and
/// ordered by the smallest node id they contain.
pub fn component_labels(s: &Snapshot) -> Vec<usize> {
    let n = s.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for e in s.edges() {
        let i = find(&mut parent, s.position(e.a).expect("validated endpoint"));
        let j = find(&mut parent, s.position(e.b).expect("validated endpoint"));
        if i != j {
            parent[i.max(j)] = i.min(j);
        }
    }
    // Nodes are sorted by id, so the first time a root is met is at the
    // component's smallest id.
    let mut ids = vec![usize::MAX; n];
    let mut next = 0;
    let mut out = vec![0; n];
    for (i, slot) in out.iter_mut().enumerate() {
        let r = find(&mut parent, i);
        if ids[r] == usize::MAX {
            ids[r] = next;
            next += 1;
        }
        *slot = ids[r];
    }
    out
}

pub fn connected_components(s: &Snapshot) -> BTreeMap<NodeId, usize> {
    s.nodes().iter().copied().zip(component_labels(s)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PageRankConfig {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PageRankConfig {
    fn default() -> Self {
        PageRankConfig {
            damping: 0.85,
            tol: 1e-10,
            max_iter: 1000,
        }
    }
}

/// PageRank computed separately inside each connected component, aligned with
/// the snapshot's node order. Scores in a component sum to one.
///
/// Each undirected edge is followed both ways with uniform out-weights and
/// teleportation is uniform over the component. Iteration stops once the L1
/// change of a component's vector drops below `tol`.
pub fn pagerank_scores(s: &Snapshot, cfg: PageRankConfig) -> Result<Vec<f64>> {
    if !(cfg.damping > 0.0 && cfg.damping < 1.0) {
        return Err(Error::Domain(format!(
            "damping must lie in (0, 1), got {}",
            cfg.damping
        )));
    }
    let comp = component_labels(s);
    let n_comp = comp.iter().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); n_comp];
    for (i, &c) in comp.iter().enumerate() {
        members[c].push(i);
    }
    let nbrs = s.neighbours();
    let mut scores = vec![0.0; s.len()];
    for nodes in &members {
        if nodes.len() == 1 {
            scores[nodes[0]] = 1.0;
            continue;
        }
        let k = nodes.len();
        let base = (1.0 - cfg.damping) / k as f64;
        let mut local = vec![usize::MAX; s.len()];
        for (li, &gi) in nodes.iter().enumerate() {
            local[gi] = li;
        }
        let mut x = vec![1.0 / k as f64; k];
        let mut next = vec![0.0; k];
        let mut residual = f64::INFINITY;
        let mut converged = false;
        for _ in 0..cfg.max_iter {
            next.iter_mut().for_each(|v| *v = base);
            for (li, &gi) in nodes.iter().enumerate() {
                let share = cfg.damping * x[li] / nbrs[gi].len() as f64;
                for &gj in &nbrs[gi] {
                    next[local[gj]] += share;
                }
            }
            residual = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
            std::mem::swap(&mut x, &mut next);
            if residual < cfg.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Numeric(format!(
                "PageRank did not converge in {} iterations at month {} (residual {residual:e})",
                cfg.max_iter,
                s.month()
            )));
        }
        for (li, &gi) in nodes.iter().enumerate() {
            scores[gi] = x[li];
        }
    }
    Ok(scores)
}

pub fn pagerank_per_component(s: &Snapshot, cfg: PageRankConfig) -> Result<BTreeMap<NodeId, f64>> {
    Ok(s.nodes().iter().copied().zip(pagerank_scores(s, cfg)?).collect())
}

/// Appends a `pagerank` feature column to every snapshot.
pub fn augment_with_pagerank(net: &DynamicNetwork) -> Result<DynamicNetwork> {
    let snapshots = net
        .snapshots()
        .iter()
        .map(|s| Ok(s.with_extra_column(&pagerank_scores(s, PageRankConfig::default())?)))
        .collect::<Result<Vec<_>>>()?;
    let mut names = net.feature_names().to_vec();
    names.push("pagerank".into());
    Ok(net.with_snapshots(snapshots, names))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, EdgeColor, NodeRecord};

    fn snap(n: u64, edges: &[(u64, u64)]) -> Snapshot {
        let nodes = (0..n)
            .map(|i| NodeRecord {
                id: NodeId(i * 10),
                features: vec![],
                label: 0,
            })
            .collect();
        let edges = edges
            .iter()
            .map(|&(a, b)| Edge::new(NodeId(a * 10), NodeId(b * 10), EdgeColor::CONTACTS).unwrap())
            .collect();
        Snapshot::new(0, nodes, edges).unwrap()
    }

    #[test]
    fn triangle_is_one_component() {
        let s = snap(3, &[(0, 1), (1, 2), (2, 0)]);
        assert_eq!(component_labels(&s), vec![0, 0, 0]);
        let pr = pagerank_scores(&s, PageRankConfig::default()).unwrap();
        for p in pr {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn edgeless_graph_is_all_singletons() {
        let s = snap(4, &[]);
        assert_eq!(component_labels(&s), vec![0, 1, 2, 3]);
        assert!(pagerank_scores(&s, PageRankConfig::default())
            .unwrap()
            .iter()
            .all(|&p| p == 1.0));
    }

    #[test]
    fn component_ids_follow_smallest_member() {
        let s = snap(5, &[(3, 4), (1, 4), (0, 2)]);
        assert_eq!(component_labels(&s), vec![0, 1, 0, 1, 1]);
    }

    #[test]
    fn path_center_dominates() {
        let s = snap(3, &[(0, 1), (1, 2)]);
        let pr = pagerank_scores(&s, PageRankConfig::default()).unwrap();
        assert!(pr[1] > pr[0]);
        assert!((pr[0] - pr[2]).abs() < 1e-12);
        assert!((pr.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        // Stationary equations for the path solved by hand:
        // a = 0.05 + 0.425 b, b = 0.05 + 1.7 a  =>  a = 0.07125 / 0.2775.
        let a = 0.071_25 / 0.2775;
        assert!((pr[0] - a).abs() < 1e-9, "{} vs {a}", pr[0]);
    }

    #[test]
    fn rejects_bad_damping_and_reports_non_convergence() {
        let s = snap(3, &[(0, 1), (1, 2)]);
        let bad = PageRankConfig {
            damping: 1.0,
            ..PageRankConfig::default()
        };
        assert!(matches!(pagerank_scores(&s, bad), Err(Error::Domain(_))));
        let short = PageRankConfig {
            max_iter: 1,
            ..PageRankConfig::default()
        };
        let err = pagerank_scores(&s, short).unwrap_err().to_string();
        assert!(err.contains("residual"), "{err}");
    }
}
