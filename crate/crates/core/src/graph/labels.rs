use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DynamicNetwork, NodeId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelMode {
    /// Influencer at month `t` iff the node referred someone in a month `<= t`.
    #[default]
    ExPostCumulative,
    /// Influencer at month `t` iff the node refers someone in `(t, t + horizon]`.
    FutureHorizon { horizon: usize },
}

impl fmt::Display for LabelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelMode::ExPostCumulative => write!(f, "ex_post_cumulative"),
            LabelMode::FutureHorizon { horizon } => write!(f, "future_horizon({horizon})"),
        }
    }
}

impl FromStr for LabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "ex_post_cumulative" {
            return Ok(LabelMode::ExPostCumulative);
        }
        if let Some(h) = s.strip_prefix("future_horizon(").and_then(|r| r.strip_suffix(')')) {
            if let Ok(horizon) = h.trim().parse::<usize>() {
                if horizon > 0 {
                    return Ok(LabelMode::FutureHorizon { horizon });
                }
            }
        }
        Err(Error::Config(format!("unknown label mode {s:?}")))
    }
}

/// Per-snapshot 0/1 labels (aligned with each snapshot's node order) derived
/// from the referral events.
pub fn label_nodes(net: &DynamicNetwork, mode: LabelMode) -> Vec<Vec<u8>> {
    let mut months: HashMap<NodeId, Vec<usize>> = HashMap::new();
    for ev in net.referrals() {
        months.entry(ev.referrer).or_default().push(ev.month);
    }
    net.snapshots()
        .iter()
        .map(|s| {
            let t = s.month();
            s.nodes()
                .iter()
                .map(|id| {
                    let hit = months.get(id).is_some_and(|ms| {
                        ms.iter().any(|&m| match mode {
                            LabelMode::ExPostCumulative => m <= t,
                            LabelMode::FutureHorizon { horizon } => m > t && m <= t + horizon,
                        })
                    });
                    u8::from(hit)
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{NodeRecord, ReferralEvent, Snapshot};

    fn net(events: Vec<ReferralEvent>) -> DynamicNetwork {
        let snaps = (0..5)
            .map(|m| {
                let nodes = [1u64, 2, 3]
                    .iter()
                    .map(|&id| NodeRecord {
                        id: NodeId(id),
                        features: vec![0.0],
                        label: 0,
                    })
                    .collect();
                Snapshot::new(m, nodes, vec![]).unwrap()
            })
            .collect();
        DynamicNetwork::new(snaps, events, vec!["f_0".into()], LabelMode::default()).unwrap()
    }

    fn label_of(labels: &[Vec<u8>], month: usize, pos: usize) -> u8 {
        labels[month][pos]
    }

    #[test]
    fn cumulative_labels() {
        let n = net(vec![ReferralEvent {
            referrer: NodeId(1),
            referred: NodeId(3),
            month: 2,
        }]);
        let l = label_nodes(&n, LabelMode::ExPostCumulative);
        assert_eq!(label_of(&l, 0, 0), 0);
        assert_eq!(label_of(&l, 1, 0), 0);
        for m in 2..5 {
            assert_eq!(label_of(&l, m, 0), 1);
            assert_eq!(label_of(&l, m, 2), 0);
        }
    }

    #[test]
    fn future_horizon_labels() {
        let n = net(vec![ReferralEvent {
            referrer: NodeId(1),
            referred: NodeId(3),
            month: 2,
        }]);
        let l = label_nodes(&n, LabelMode::FutureHorizon { horizon: 1 });
        let col: Vec<u8> = (0..5).map(|m| label_of(&l, m, 0)).collect();
        assert_eq!(col, vec![0, 1, 0, 0, 0]);
    }

    #[test]
    fn no_events_no_influencers() {
        let n = net(vec![]);
        for mode in [LabelMode::ExPostCumulative, LabelMode::FutureHorizon { horizon: 3 }] {
            assert!(label_nodes(&n, mode).iter().flatten().all(|&l| l == 0));
        }
    }

    #[test]
    fn parses_modes() {
        assert_eq!(
            "future_horizon(2)".parse::<LabelMode>().unwrap(),
            LabelMode::FutureHorizon { horizon: 2 }
        );
        assert!(matches!("sometimes".parse::<LabelMode>(), Err(Error::Config(_))));
        let json = serde_json::to_string(&LabelMode::FutureHorizon { horizon: 2 }).unwrap();
        assert_eq!(json, r#"{"kind":"future_horizon","horizon":2}"#);
    }
}
