use std::fmt;

use serde::{Deserialize, Serialize};

use super::DynamicNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    NodeRemoved,
    EdgeRemoved,
    ColorReverted,
}

/// One monotonicity failure: `entity` existed at `month - 1` but is missing
/// (or has lost a color flag) at `month`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub month: usize,
    pub entity: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            ViolationKind::NodeRemoved => "node removed",
            ViolationKind::EdgeRemoved => "edge removed",
            ViolationKind::ColorReverted => "edge color flag reverted",
        };
        write!(f, "{what} at month {}: {}", self.month, self.entity)
    }
}

/// Reports every place where the network shrinks between consecutive months.
///
/// An edge is only reported when both endpoints survive, and a color flag only
/// when the edge survives, so each planted removal yields one record.
pub fn validate_monotone(net: &DynamicNetwork) -> Vec<Violation> {
    let mut out = Vec::new();
    for pair in net.snapshots().windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        let month = next.month();
        for &id in prev.nodes() {
            if !next.contains(id) {
                out.push(Violation {
                    kind: ViolationKind::NodeRemoved,
                    month,
                    entity: format!("node {id}"),
                });
            }
        }
        for e in prev.edges() {
            if !(next.contains(e.a) && next.contains(e.b)) {
                continue;
            }
            match next.edge(e.a, e.b) {
                None => out.push(Violation {
                    kind: ViolationKind::EdgeRemoved,
                    month,
                    entity: format!("edge {}-{}", e.a, e.b),
                }),
                Some(now) if !now.color.covers(e.color) => out.push(Violation {
                    kind: ViolationKind::ColorReverted,
                    month,
                    entity: format!("edge {}-{} colors {:?} -> {:?}", e.a, e.b, e.color, now.color),
                }),
                Some(_) => {}
            }
        }
    }
    out
}
