//! Synthetic referral network with a planted influencer mechanism.
//!
//! Every node carries a hidden class. Hidden influencers emit a referral each
//! month with probability `referral_rate`; the referred customer joins the
//! network the following month, attached to the referrer by a contacts edge.
//! `homophily_strength` scales every way the hidden class leaks into the
//! observable data: same-class partner preference when edges form, extra
//! contact activity of influencers, the referrer's own activity in a referral
//! month, and the exposure of the referrer's neighbours in that month. At zero
//! strength features and topology are independent of the labels.
//!
//! Feature layout for width `F >= 4`, with `R = F - 1`: `R / 3` class columns,
//! then the activity columns, then `R / 3` exposure columns, and a last column
//! marking the month a customer joined (label independent). Narrower widths
//! share one block for every shift.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DynamicNetwork, Edge, EdgeColor, LabelMode, NodeId, NodeRecord, ReferralEvent, Snapshot};
use crate::error::{Error, Result};
use crate::seed::{rng_from, Rng as ChaRng};

/// Per node and month probability of starting a new edge of each color.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeProbabilities {
    pub credit_card: f64,
    pub geohash: f64,
    pub contacts: f64,
}

impl Default for EdgeProbabilities {
    fn default() -> Self {
        EdgeProbabilities {
            credit_card: 0.03,
            geohash: 0.15,
            contacts: 0.12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_initial_nodes: usize,
    pub n_months: usize,
    /// Organic arrivals per month as a fraction of the current node count.
    pub node_growth_rate: f64,
    pub edge_probabilities: EdgeProbabilities,
    pub referral_rate: f64,
    pub target_influencer_fraction: f64,
    pub feature_width: usize,
    pub homophily_strength: f64,
    /// Radius of the geohash proximity rule in the unit square.
    pub geohash_radius: f64,
    /// Edge-formation rounds run in month 0 to give the network a history.
    pub initial_edge_rounds: usize,
    /// Mean shift of the class feature block for influencers (times homophily).
    pub class_feature_shift: f64,
    /// Mean shift of the activity block in a month with a referral (times homophily).
    pub referral_feature_bump: f64,
    /// Mean shift of the exposure block for every neighbour of a customer who
    /// referred in the current month (times homophily).
    pub exposure_feature_bump: f64,
    /// Shift of the last column in a customer's first month.
    pub onboarding_feature_bump: f64,
    /// Relative extra contact-edge rate of influencers (times homophily).
    pub contact_boost: f64,
    /// Probability, times homophily, that a social edge goes to a same-class
    /// partner instead of a uniformly drawn one.
    pub partner_homophily: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_initial_nodes: 1300,
            n_months: 12,
            node_growth_rate: 0.01,
            edge_probabilities: EdgeProbabilities::default(),
            referral_rate: 0.3,
            target_influencer_fraction: 0.13,
            feature_width: 8,
            homophily_strength: 0.8,
            geohash_radius: 0.02,
            initial_edge_rounds: 4,
            class_feature_shift: 0.3,
            referral_feature_bump: 2.0,
            exposure_feature_bump: 3.0,
            onboarding_feature_bump: 3.0,
            contact_boost: 1.0,
            partner_homophily: 0.0,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("node_growth_rate", self.node_growth_rate),
            ("edge_probabilities.credit_card", self.edge_probabilities.credit_card),
            ("edge_probabilities.geohash", self.edge_probabilities.geohash),
            ("edge_probabilities.contacts", self.edge_probabilities.contacts),
            ("referral_rate", self.referral_rate),
            ("homophily_strength", self.homophily_strength),
            ("partner_homophily", self.partner_homophily),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if self.n_months < 2 {
            return Err(Error::Config(format!(
                "n_months must be at least 2, got {}",
                self.n_months
            )));
        }
        if self.n_initial_nodes == 0 {
            return Err(Error::Config("n_initial_nodes = 0 produces an empty network".into()));
        }
        if !(self.target_influencer_fraction > 0.0 && self.target_influencer_fraction < 0.5) {
            return Err(Error::Config(format!(
                "target_influencer_fraction must lie in (0, 0.5), got {}",
                self.target_influencer_fraction
            )));
        }
        if self.referral_rate == 0.0 {
            return Err(Error::Config("referral_rate = 0 can never produce influencers".into()));
        }
        if self.feature_width == 0 {
            return Err(Error::Config("feature_width must be positive".into()));
        }
        if !(self.geohash_radius > 0.0 && self.geohash_radius <= 1.0) {
            return Err(Error::Config(format!(
                "geohash_radius must lie in (0, 1], got {}",
                self.geohash_radius
            )));
        }
        for (name, v) in [
            ("class_feature_shift", self.class_feature_shift),
            ("referral_feature_bump", self.referral_feature_bump),
            ("exposure_feature_bump", self.exposure_feature_bump),
            ("onboarding_feature_bump", self.onboarding_feature_bump),
            ("contact_boost", self.contact_boost),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    /// Probability that a node born in `birth` is a hidden influencer, chosen
    /// so that its chance of having referred by the last month equals the
    /// target fraction (capped at 1 for late arrivals).
    fn latent_probability(&self, birth: usize) -> f64 {
        let active = (self.n_months - birth) as i32;
        let ever = 1.0 - (1.0 - self.referral_rate).powi(active);
        (self.target_influencer_fraction / ever).min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub nodes_per_month: Vec<usize>,
    pub edges_per_month: Vec<usize>,
    pub influencer_fraction_per_month: Vec<f64>,
    pub referrals: usize,
}

impl GenerationSummary {
    pub fn of(net: &DynamicNetwork) -> Self {
        let snaps = net.snapshots();
        GenerationSummary {
            nodes_per_month: snaps.iter().map(Snapshot::len).collect(),
            edges_per_month: snaps.iter().map(|s| s.edges().len()).collect(),
            influencer_fraction_per_month: snaps
                .iter()
                .map(|s| s.labels().iter().map(|&l| f64::from(l)).sum::<f64>() / s.len() as f64)
                .collect(),
            referrals: net.referrals().len(),
        }
    }

    pub fn final_influencer_fraction(&self) -> f64 {
        *self.influencer_fraction_per_month.last().unwrap_or(&0.0)
    }
}

struct FeatureLayout {
    class: std::ops::Range<usize>,
    activity: std::ops::Range<usize>,
    exposure: std::ops::Range<usize>,
    marker: Option<usize>,
}

impl FeatureLayout {
    fn new(f: usize) -> Self {
        if f < 4 {
            let shared = 0..(f - 1).max(1);
            return FeatureLayout {
                class: shared.clone(),
                activity: shared.clone(),
                exposure: shared,
                marker: (f >= 2).then_some(f - 1),
            };
        }
        let r = f - 1;
        let third = r / 3;
        FeatureLayout {
            class: 0..third,
            activity: third..r - third,
            exposure: r - third..r,
            marker: Some(r),
        }
    }
}

struct Customer {
    id: NodeId,
    birth: usize,
    latent: bool,
    pos: (f64, f64),
    effect: Vec<f64>,
}

struct State<'a> {
    cfg: &'a GeneratorConfig,
    rng: ChaRng,
    customers: Vec<Customer>,
    influencers: Vec<usize>,
    others: Vec<usize>,
    edges: BTreeMap<(NodeId, NodeId), EdgeColor>,
    next_id: u64,
}

impl State<'_> {
    fn spawn(&mut self, id: NodeId, birth: usize) -> usize {
        let latent = self.rng.random::<f64>() < self.cfg.latent_probability(birth);
        let pos = (self.rng.random::<f64>(), self.rng.random::<f64>());
        let effect = (0..self.cfg.feature_width)
            .map(|_| 0.5 * self.rng.sample::<f64, _>(StandardNormal))
            .collect();
        let idx = self.customers.len();
        self.customers.push(Customer {
            id,
            birth,
            latent,
            pos,
            effect,
        });
        if latent {
            self.influencers.push(idx);
        } else {
            self.others.push(idx);
        }
        idx
    }

    fn fresh_id(&mut self) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        id
    }

    fn connect(&mut self, i: usize, j: usize, color: EdgeColor) {
        if i == j {
            return;
        }
        let (a, b) = (self.customers[i].id, self.customers[j].id);
        let key = if a < b { (a, b) } else { (b, a) };
        let slot = self.edges.entry(key).or_default();
        *slot = slot.union(color);
    }

    fn social_partner(&mut self, i: usize) -> usize {
        let h = self.cfg.homophily_strength * self.cfg.partner_homophily;
        let pool = if self.rng.random::<f64>() < h {
            if self.customers[i].latent {
                &self.influencers
            } else {
                &self.others
            }
        } else {
            // Uniform over everyone: pick the class list by size.
            let n_inf = self.influencers.len();
            let n = n_inf + self.others.len();
            if self.rng.random_range(0..n) < n_inf {
                &self.influencers
            } else {
                &self.others
            }
        };
        pool[self.rng.random_range(0..pool.len())]
    }

    fn form_edges(&mut self) {
        let p = self.cfg.edge_probabilities;
        let h = self.cfg.homophily_strength;
        let r = self.cfg.geohash_radius;
        let cells = (1.0 / r).floor().max(1.0) as i64;
        let cell_of = |pos: (f64, f64)| {
            (
                ((pos.0 * cells as f64) as i64).min(cells - 1),
                ((pos.1 * cells as f64) as i64).min(cells - 1),
            )
        };
        let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, c) in self.customers.iter().enumerate() {
            grid.entry(cell_of(c.pos)).or_default().push(i);
        }
        for i in 0..self.customers.len() {
            if self.rng.random::<f64>() < p.credit_card {
                let j = self.social_partner(i);
                self.connect(i, j, EdgeColor::CREDIT_CARD);
            }
            if self.rng.random::<f64>() < p.geohash {
                let me = self.customers[i].pos;
                let (cx, cy) = cell_of(me);
                let mut near = Vec::new();
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        if let Some(bucket) = grid.get(&(cx + dx, cy + dy)) {
                            for &j in bucket {
                                let q = self.customers[j].pos;
                                let d2 = (q.0 - me.0).powi(2) + (q.1 - me.1).powi(2);
                                if j != i && d2 <= r * r {
                                    near.push(j);
                                }
                            }
                        }
                    }
                }
                if !near.is_empty() {
                    near.sort_unstable();
                    let j = near[self.rng.random_range(0..near.len())];
                    self.connect(i, j, EdgeColor::GEOHASH);
                }
            }
            let boost = if self.customers[i].latent {
                1.0 + h * self.cfg.contact_boost
            } else {
                1.0
            };
            if self.rng.random::<f64>() < (p.contacts * boost).min(1.0) {
                let j = self.social_partner(i);
                self.connect(i, j, EdgeColor::CONTACTS);
            }
        }
    }

    fn features(&mut self, i: usize, month: usize, referred_now: bool, exposed: bool) -> Vec<f64> {
        let layout = FeatureLayout::new(self.cfg.feature_width);
        let h = self.cfg.homophily_strength;
        let latent = self.customers[i].latent;
        let newborn = self.customers[i].birth == month;
        (0..self.cfg.feature_width)
            .map(|k| {
                let noise: f64 = self.rng.sample(StandardNormal);
                let mut x = noise + self.customers[i].effect[k];
                if latent && layout.class.contains(&k) {
                    x += h * self.cfg.class_feature_shift;
                }
                if referred_now && layout.activity.contains(&k) {
                    x += h * self.cfg.referral_feature_bump;
                }
                if exposed && layout.exposure.contains(&k) {
                    x += h * self.cfg.exposure_feature_bump;
                }
                if newborn && layout.marker == Some(k) {
                    x += self.cfg.onboarding_feature_bump;
                }
                x
            })
            .collect()
    }

    /// Customers adjacent to a referrer of this month. The reference edge to
    /// the referred customer does not exist yet.
    fn exposed(&self, referred_now: &[bool]) -> Vec<bool> {
        let index: HashMap<NodeId, usize> = self.customers.iter().enumerate().map(|(i, c)| (c.id, i)).collect();
        let mut out = vec![false; self.customers.len()];
        for &(a, b) in self.edges.keys() {
            let (i, j) = (index[&a], index[&b]);
            out[j] |= referred_now[i];
            out[i] |= referred_now[j];
        }
        out
    }

    fn snapshot(&self, month: usize, features: Vec<Vec<f64>>) -> Result<Snapshot> {
        let nodes = self
            .customers
            .iter()
            .zip(features)
            .map(|(c, features)| NodeRecord {
                id: c.id,
                features,
                label: 0,
            })
            .collect();
        let edges = self
            .edges
            .iter()
            .map(|(&(a, b), &color)| Edge { a, b, color })
            .collect();
        Snapshot::new(month, nodes, edges)
    }
}

/// Generates a monotone dynamic network labelled ex post (cumulatively).
pub fn generate_synthetic(cfg: &GeneratorConfig) -> Result<DynamicNetwork> {
    cfg.validate()?;
    let mut st = State {
        cfg,
        rng: rng_from(cfg.seed),
        customers: Vec::new(),
        influencers: Vec::new(),
        others: Vec::new(),
        edges: BTreeMap::new(),
        next_id: 0,
    };
    let mut referrals = Vec::new();
    let mut pending: Vec<(usize, NodeId)> = Vec::new();
    let mut snapshots = Vec::with_capacity(cfg.n_months);

    for month in 0..cfg.n_months {
        if month == 0 {
            for _ in 0..cfg.n_initial_nodes {
                let id = st.fresh_id();
                st.spawn(id, 0);
            }
        } else {
            for (referrer, id) in std::mem::take(&mut pending) {
                let j = st.spawn(id, month);
                st.connect(referrer, j, EdgeColor::CONTACTS);
            }
            let expected = cfg.node_growth_rate * st.customers.len() as f64;
            let mut arrivals = expected.floor() as usize;
            if st.rng.random::<f64>() < expected.fract() {
                arrivals += 1;
            }
            for _ in 0..arrivals {
                let id = st.fresh_id();
                st.spawn(id, month);
            }
        }
        let rounds = if month == 0 { cfg.initial_edge_rounds.max(1) } else { 1 };
        for _ in 0..rounds {
            st.form_edges();
        }

        let mut referred_now = vec![false; st.customers.len()];
        for i in 0..st.customers.len() {
            if st.customers[i].latent && st.rng.random::<f64>() < cfg.referral_rate {
                let id = st.fresh_id();
                referrals.push(ReferralEvent {
                    referrer: st.customers[i].id,
                    referred: id,
                    month,
                });
                pending.push((i, id));
                referred_now[i] = true;
            }
        }
        let exposed = st.exposed(&referred_now);
        let features = (0..st.customers.len())
            .map(|i| st.features(i, month, referred_now[i], exposed[i]))
            .collect();
        snapshots.push(st.snapshot(month, features)?);
    }

    let names = (0..cfg.feature_width).map(|k| format!("f_{k}")).collect();
    let net = DynamicNetwork::new(snapshots, referrals, names, LabelMode::ExPostCumulative)?;
    Ok(net.relabel(LabelMode::ExPostCumulative))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::validate_monotone;

    fn small(seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            n_initial_nodes: 150,
            n_months: 6,
            seed,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn deterministic_and_monotone() {
        let a = generate_synthetic(&small(4)).unwrap();
        let b = generate_synthetic(&small(4)).unwrap();
        assert_eq!(a, b);
        assert!(validate_monotone(&a).is_empty());
        assert_ne!(a, generate_synthetic(&small(5)).unwrap());
    }

    #[test]
    fn reference_edge_appears_the_following_month() {
        let net = generate_synthetic(&small(8)).unwrap();
        let ev = net
            .referrals()
            .iter()
            .find(|e| e.month + 1 < net.n_months())
            .copied()
            .expect("some referral");
        let now = net.snapshot(ev.month).unwrap();
        let next = net.snapshot(ev.month + 1).unwrap();
        assert!(now.edge(ev.referrer, ev.referred).is_none());
        let e = next.edge(ev.referrer, ev.referred).expect("reference edge");
        assert!(e.color.contacts);
    }

    #[test]
    fn rejects_infeasible_configs() {
        let bad = [
            GeneratorConfig {
                n_initial_nodes: 0,
                ..small(1)
            },
            GeneratorConfig {
                n_months: 1,
                ..small(1)
            },
            GeneratorConfig {
                target_influencer_fraction: 0.5,
                ..small(1)
            },
            GeneratorConfig {
                referral_rate: 1.5,
                ..small(1)
            },
        ];
        for cfg in bad {
            assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
        }
    }
}
