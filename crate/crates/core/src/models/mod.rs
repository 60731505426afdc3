//! Snapshot encoders, recurrent decoders and the ten model assemblies.
//!
//! A [`Model`] owns a flat list of named parameter tensors. Forward passes
//! bind them to a [`Tape`] with [`Model::bind`] and run on a
//! [`PreparedNetwork`], whose birth-ordered layout lets every month's
//! matrices be row prefixes of the next month's.

mod checkpoint;
mod data;
mod layers;

#[cfg(test)]
mod tests;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, ParamEntry, CHECKPOINT_VERSION};
pub use data::{GraphInput, MonthData, PreparedNetwork};
pub use layers::{GatHead, GatLayer, GcnLayer, GruCell, Head, LstmCell, RnnCell, ATTENTION_SLOPE};

use crate::error::{Error, Result};
use crate::graph::DynamicNetwork;
use crate::numcore::{glorot, sigmoid, Activation, Tape, Tensor, Var};
use crate::seed::{derive_seed, rng_from};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    GcnLstm,
    GcnGru,
    GatLstm,
    GatGru,
    PagerankLstm,
    PagerankGru,
    FeaturesLstm,
    FeaturesGru,
    StaticGcn,
    StaticGat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    Gcn,
    Gat,
    PageRank,
    Features,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderKind {
    Lstm,
    Gru,
}

impl Architecture {
    pub const ALL: [Architecture; 10] = [
        Architecture::GcnLstm,
        Architecture::GcnGru,
        Architecture::GatLstm,
        Architecture::GatGru,
        Architecture::PagerankLstm,
        Architecture::PagerankGru,
        Architecture::FeaturesLstm,
        Architecture::FeaturesGru,
        Architecture::StaticGcn,
        Architecture::StaticGat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::GcnLstm => "gcn_lstm",
            Architecture::GcnGru => "gcn_gru",
            Architecture::GatLstm => "gat_lstm",
            Architecture::GatGru => "gat_gru",
            Architecture::PagerankLstm => "pagerank_lstm",
            Architecture::PagerankGru => "pagerank_gru",
            Architecture::FeaturesLstm => "features_lstm",
            Architecture::FeaturesGru => "features_gru",
            Architecture::StaticGcn => "static_gcn",
            Architecture::StaticGat => "static_gat",
        }
    }

    pub fn encoder(self) -> EncoderKind {
        match self {
            Architecture::GcnLstm | Architecture::GcnGru | Architecture::StaticGcn => EncoderKind::Gcn,
            Architecture::GatLstm | Architecture::GatGru | Architecture::StaticGat => EncoderKind::Gat,
            Architecture::PagerankLstm | Architecture::PagerankGru => EncoderKind::PageRank,
            Architecture::FeaturesLstm | Architecture::FeaturesGru => EncoderKind::Features,
        }
    }

    pub fn decoder(self) -> Option<DecoderKind> {
        match self {
            Architecture::GcnLstm | Architecture::GatLstm | Architecture::PagerankLstm | Architecture::FeaturesLstm => {
                Some(DecoderKind::Lstm)
            }
            Architecture::GcnGru | Architecture::GatGru | Architecture::PagerankGru | Architecture::FeaturesGru => {
                Some(DecoderKind::Gru)
            }
            Architecture::StaticGcn | Architecture::StaticGat => None,
        }
    }

    pub fn is_static(self) -> bool {
        self.decoder().is_none()
    }

    pub fn uses_gnn(self) -> bool {
        matches!(self.encoder(), EncoderKind::Gcn | EncoderKind::Gat)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown architecture '{s}'")))
    }
}

/// Architecture plus hyperparameters. Fields that do not apply to the
/// architecture must be absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub architecture: Architecture,
    /// Number of graph layers, the last one producing the embedding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gnn_layers: Option<usize>,
    /// Width of the hidden graph layers; defaults to `embedding_dim`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gnn_hidden: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rnn_hidden: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heads: Option<usize>,
    /// Dropout of the graph layers.
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub smote_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

fn positive(name: &str, v: Option<usize>) -> Result<usize> {
    match v {
        Some(0) => Err(Error::Config(format!("{name} must be positive"))),
        Some(x) => Ok(x),
        None => Err(Error::Config(format!("{name} is required"))),
    }
}

fn absent(arch: Architecture, name: &str, present: bool) -> Result<()> {
    if present {
        return Err(Error::Config(format!("{name} does not apply to {arch}")));
    }
    Ok(())
}

impl ModelConfig {
    pub fn new(architecture: Architecture) -> Self {
        ModelConfig {
            architecture,
            gnn_layers: None,
            gnn_hidden: None,
            embedding_dim: None,
            rnn_hidden: None,
            heads: None,
            dropout: 0.0,
            smote_rate: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let arch = self.architecture;
        if arch.uses_gnn() {
            let layers = positive("gnn_layers", self.gnn_layers)?;
            positive("embedding_dim", self.embedding_dim)?;
            if self.gnn_hidden.is_some() {
                positive("gnn_hidden", self.gnn_hidden)?;
            }
            if !(0.0..1.0).contains(&self.dropout) {
                return Err(Error::Config(format!(
                    "dropout must lie in [0, 1), got {}",
                    self.dropout
                )));
            }
            if arch.encoder() == EncoderKind::Gat {
                let heads = positive("heads", self.heads)?;
                let hidden = self.hidden_width();
                if layers > 1 && hidden % heads != 0 {
                    return Err(Error::Config(format!(
                        "gnn_hidden {hidden} is not divisible by {heads} heads"
                    )));
                }
            } else {
                absent(arch, "heads", self.heads.is_some())?;
            }
        } else {
            absent(arch, "gnn_layers", self.gnn_layers.is_some())?;
            absent(arch, "gnn_hidden", self.gnn_hidden.is_some())?;
            absent(arch, "embedding_dim", self.embedding_dim.is_some())?;
            absent(arch, "heads", self.heads.is_some())?;
            absent(arch, "dropout", self.dropout != 0.0)?;
        }
        if arch.is_static() {
            absent(arch, "rnn_hidden", self.rnn_hidden.is_some())?;
        } else {
            positive("rnn_hidden", self.rnn_hidden)?;
        }
        if !(self.smote_rate >= 0.0 && self.smote_rate.is_finite()) {
            return Err(Error::Config(format!(
                "smote_rate must be >= 0, got {}",
                self.smote_rate
            )));
        }
        Ok(())
    }

    fn hidden_width(&self) -> usize {
        self.gnn_hidden.or(self.embedding_dim).unwrap_or(0)
    }

    /// Width of the per-month encoder output for raw feature width `f`.
    pub fn embedding_width(&self, feature_width: usize) -> usize {
        match self.architecture.encoder() {
            EncoderKind::Gcn | EncoderKind::Gat => self.embedding_dim.unwrap_or(0),
            EncoderKind::PageRank => feature_width + 1,
            EncoderKind::Features => feature_width,
        }
    }

    /// Width of the representation fed to the classifier head.
    pub fn representation_width(&self, feature_width: usize) -> usize {
        self.rnn_hidden.unwrap_or_else(|| self.embedding_width(feature_width))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Encoder {
    Identity,
    Gcn(Vec<GcnLayer>),
    Gat(Vec<GatLayer>),
}

/// Per-month encoder outputs of one window. `steps[k]` has one row per node
/// present in `months[k]`, in birth order, so a node's sequence starts at
/// its first month inside the window.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    pub months: Vec<usize>,
    pub steps: Vec<Var>,
}

impl EmbeddingSequence {
    /// Number of window months in which row `i` is present.
    pub fn sequence_len(&self, tape: &Tape, i: usize) -> usize {
        self.steps.iter().filter(|&&s| tape.value(s).rows() > i).count()
    }

    /// The embedding vectors of row `i`, oldest first.
    pub fn node_sequence(&self, tape: &Tape, i: usize) -> Vec<Vec<f64>> {
        self.steps
            .iter()
            .map(|&s| tape.value(s))
            .filter(|t| t.rows() > i)
            .map(|t| t.row(i).to_vec())
            .collect()
    }
}

/// Normalised attention coefficients of one GAT head on one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub layer: usize,
    pub head: usize,
    /// `(dst, src)` per coefficient.
    pub pairs: Vec<(usize, usize)>,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    feature_width: usize,
    names: Vec<String>,
    params: Vec<Tensor>,
    encoder: Encoder,
    decoder: Option<RnnCell>,
    head: Head,
}

struct Builder<R> {
    names: Vec<String>,
    params: Vec<Tensor>,
    rng: R,
}

impl<R: Rng> Builder<R> {
    fn glorot(&mut self, name: String, rows: usize, cols: usize) -> Result<usize> {
        let t = glorot(&[rows, cols], rows, cols, &mut self.rng)?;
        Ok(self.push(name, t))
    }

    fn zeros(&mut self, name: String, len: usize) -> Result<usize> {
        let t = Tensor::zeros(&[len])?;
        Ok(self.push(name, t))
    }

    fn push(&mut self, name: String, t: Tensor) -> usize {
        self.names.push(name);
        self.params.push(t);
        self.params.len() - 1
    }
}

/// Allocates and initialises (Glorot uniform, zero biases) the parameters
/// implied by `cfg` for networks with `feature_width` raw features.
pub fn build_model(cfg: &ModelConfig, feature_width: usize) -> Result<Model> {
    cfg.validate()?;
    if feature_width == 0 {
        return Err(Error::Config("feature_width must be positive".into()));
    }
    let mut b = Builder {
        names: Vec::new(),
        params: Vec::new(),
        rng: rng_from(derive_seed(cfg.seed, "init")),
    };
    let arch = cfg.architecture;
    let input = match arch.encoder() {
        EncoderKind::PageRank => feature_width + 1,
        _ => feature_width,
    };
    let encoder = match arch.encoder() {
        EncoderKind::PageRank | EncoderKind::Features => Encoder::Identity,
        EncoderKind::Gcn => {
            let layers = cfg.gnn_layers.unwrap_or(1);
            let (hidden, emb) = (cfg.hidden_width(), cfg.embedding_dim.unwrap_or(0));
            let mut out = Vec::with_capacity(layers);
            let mut width = input;
            for l in 0..layers {
                let last = l + 1 == layers;
                let next = if last { emb } else { hidden };
                out.push(GcnLayer {
                    weight: b.glorot(format!("gcn.{l}.weight"), width, next)?,
                    bias: b.zeros(format!("gcn.{l}.bias"), next)?,
                    activation: (!last).then_some(Activation::Elu),
                });
                width = next;
            }
            Encoder::Gcn(out)
        }
        EncoderKind::Gat => {
            let layers = cfg.gnn_layers.unwrap_or(1);
            let heads = cfg.heads.unwrap_or(1);
            let (hidden, emb) = (cfg.hidden_width(), cfg.embedding_dim.unwrap_or(0));
            let mut out = Vec::with_capacity(layers);
            let mut width = input;
            for l in 0..layers {
                let last = l + 1 == layers;
                let dim = if last { emb } else { hidden / heads };
                let mut hs = Vec::with_capacity(heads);
                for h in 0..heads {
                    hs.push(GatHead {
                        weight: b.glorot(format!("gat.{l}.{h}.weight"), width, dim)?,
                        attention: b.glorot(format!("gat.{l}.{h}.attention"), 1, 2 * dim)?,
                        bias: b.zeros(format!("gat.{l}.{h}.bias"), dim)?,
                        dim,
                    });
                }
                out.push(GatLayer {
                    heads: hs,
                    concat: !last,
                    activation: (!last).then_some(Activation::Elu),
                });
                width = if last { emb } else { dim * heads };
            }
            Encoder::Gat(out)
        }
    };
    let emb = cfg.embedding_width(feature_width);
    let decoder = match (arch.decoder(), cfg.rnn_hidden) {
        (Some(DecoderKind::Lstm), Some(h)) => Some(RnnCell::Lstm(LstmCell {
            wx: b.glorot("lstm.wx".into(), emb, 4 * h)?,
            wh: b.glorot("lstm.wh".into(), h, 4 * h)?,
            bias: b.zeros("lstm.bias".into(), 4 * h)?,
            hidden: h,
        })),
        (Some(DecoderKind::Gru), Some(h)) => Some(RnnCell::Gru(GruCell {
            wx_gates: b.glorot("gru.wx_gates".into(), emb, 2 * h)?,
            wh_gates: b.glorot("gru.wh_gates".into(), h, 2 * h)?,
            b_gates: b.zeros("gru.b_gates".into(), 2 * h)?,
            wx_cand: b.glorot("gru.wx_cand".into(), emb, h)?,
            wh_cand: b.glorot("gru.wh_cand".into(), h, h)?,
            b_cand: b.zeros("gru.b_cand".into(), h)?,
            hidden: h,
        })),
        _ => None,
    };
    let rep = cfg.representation_width(feature_width);
    let head = Head {
        weight: b.glorot("head.weight".into(), rep, 1)?,
        bias: b.zeros("head.bias".into(), 1)?,
    };
    Ok(Model {
        config: cfg.clone(),
        feature_width,
        names: b.names,
        params: b.params,
        encoder,
        decoder,
        head,
    })
}

impl Model {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn architecture(&self) -> Architecture {
        self.config.architecture
    }

    /// Raw network feature width the model was built for.
    pub fn feature_width(&self) -> usize {
        self.feature_width
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn n_parameters(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Replaces all parameters; shapes must match.
    pub fn set_params(&mut self, params: Vec<Tensor>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::shape("set_params", &[self.params.len()], &[params.len()]));
        }
        for (old, new) in self.params.iter().zip(&params) {
            if old.shape() != new.shape() {
                return Err(Error::shape("set_params", old.shape(), new.shape()));
            }
        }
        self.params = params;
        Ok(())
    }

    pub fn has_gnn(&self) -> bool {
        !matches!(self.encoder, Encoder::Identity)
    }

    /// Lays out `net` the way this model consumes it.
    pub fn prepare(&self, net: &DynamicNetwork) -> Result<PreparedNetwork> {
        if net.feature_width() != self.feature_width {
            return Err(
                Error::shape("prepare", &[self.feature_width], &[net.feature_width()]).context(format!(
                    "model expects {} node features, network has {}",
                    self.feature_width,
                    net.feature_width()
                )),
            );
        }
        PreparedNetwork::new(net, self.config.architecture.encoder() == EncoderKind::PageRank)
    }

    /// Records every parameter on `tape` as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.param(p)).collect()
    }

    /// Like [`Model::bind`] but without gradient tracking.
    pub fn bind_constant(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.constant(p.clone())).collect()
    }

    fn check_input(&self, month: &MonthData) -> Result<()> {
        let expected = match self.config.architecture.encoder() {
            EncoderKind::PageRank => self.feature_width + 1,
            _ => self.feature_width,
        };
        if month.x.cols() != expected {
            return Err(Error::shape("encode", &[month.len(), expected], month.x.shape()));
        }
        Ok(())
    }

    fn encode_inner<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        month: &MonthData,
        training: bool,
        rng: &mut R,
        mut sink: Option<&mut Vec<Vec<f64>>>,
    ) -> Result<Var> {
        self.check_input(month)?;
        let mut x = tape.constant(month.x.clone());
        let p = self.config.dropout;
        match &self.encoder {
            Encoder::Identity => {}
            Encoder::Gcn(layers) => {
                for l in layers {
                    x = l.forward(tape, vars, x, &month.graph, p, training, rng)?;
                }
            }
            Encoder::Gat(layers) => {
                for l in layers {
                    x = l.forward(tape, vars, x, &month.graph, p, training, rng, sink.as_deref_mut())?;
                }
            }
        }
        Ok(x)
    }

    /// Encoder output for one snapshot.
    pub fn encode<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        month: &MonthData,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        self.encode_inner(tape, vars, month, training, rng, None)
    }

    /// Encodes each month of `window` independently.
    pub fn encode_window<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        data: &PreparedNetwork,
        window: &[usize],
        training: bool,
        rng: &mut R,
    ) -> Result<EmbeddingSequence> {
        if window.is_empty() {
            return Err(Error::Config("empty window".into()));
        }
        if window.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!("window months must increase: {window:?}")));
        }
        let mut steps = Vec::with_capacity(window.len());
        for &m in window {
            steps.push(self.encode(tape, vars, data.month(m)?, training, rng)?);
        }
        Ok(EmbeddingSequence {
            months: window.to_vec(),
            steps,
        })
    }

    /// Representation of every node of the sequence's last month: the final
    /// recurrent state, or the last embedding for static models.
    pub fn decode(&self, tape: &mut Tape, vars: &[Var], seq: &EmbeddingSequence) -> Result<Var> {
        match &self.decoder {
            Some(cell) => cell.unroll(tape, vars, &seq.steps),
            None => seq
                .steps
                .last()
                .copied()
                .ok_or_else(|| Error::Config("empty embedding sequence".into())),
        }
    }

    pub fn head_logits(&self, tape: &mut Tape, vars: &[Var], rep: Var) -> Result<Var> {
        self.head.logits(tape, vars, rep)
    }

    /// Representation and logits for the last month of `window`. Static
    /// models only encode that month.
    pub fn window_forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        data: &PreparedNetwork,
        window: &[usize],
        training: bool,
        rng: &mut R,
    ) -> Result<(Var, Var)> {
        let months = if self.decoder.is_none() {
            window.last().map_or(&[][..], std::slice::from_ref)
        } else {
            window
        };
        let seq = self.encode_window(tape, vars, data, months, training, rng)?;
        let rep = self.decode(tape, vars, &seq)?;
        let logits = self.head_logits(tape, vars, rep)?;
        Ok((rep, logits))
    }

    /// Influencer probabilities for the nodes of the window's last month, in
    /// birth order (evaluation mode).
    pub fn predict(&self, data: &PreparedNetwork, window: &[usize]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = self.bind_constant(&mut tape);
        let mut rng = rng_from(0);
        let (_, logits) = self.window_forward(&mut tape, &vars, data, window, false, &mut rng)?;
        Ok(tape.value(logits).values().iter().map(|&z| sigmoid(z)).collect())
    }

    /// Evaluation-mode attention coefficients of every GAT layer and head on
    /// one snapshot. Empty for non-attention models.
    pub fn attention(&self, month: &MonthData) -> Result<Vec<AttentionMap>> {
        let Encoder::Gat(layers) = &self.encoder else {
            return Ok(Vec::new());
        };
        let mut tape = Tape::new();
        let vars = self.bind_constant(&mut tape);
        let mut sink = Vec::new();
        self.encode_inner(&mut tape, &vars, month, false, &mut rng_from(0), Some(&mut sink))?;
        let adj = month.graph.adjacency();
        let pairs: Vec<(usize, usize)> = adj.dst().iter().copied().zip(adj.src().iter().copied()).collect();
        let heads = layers[0].heads.len();
        Ok(sink
            .into_iter()
            .enumerate()
            .map(|(k, alpha)| AttentionMap {
                layer: k / heads,
                head: k % heads,
                pairs: pairs.clone(),
                alpha,
            })
            .collect())
    }
}
