use std::collections::BTreeSet;

use rand::Rng;

use super::*;
use crate::graph::{Edge, EdgeColor, LabelMode, NodeId, NodeRecord, Snapshot};
use crate::numcore::grad_check;
use crate::seed::rng_from;

type Mat = Vec<Vec<f64>>;

fn to_mat(t: &Tensor) -> Mat {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

fn mm(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .map(|row| {
            (0..b[0].len())
                .map(|j| row.iter().zip(b).map(|(x, brow)| x * brow[j]).sum())
                .collect()
        })
        .collect()
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn random_tensor(rng: &mut impl Rng, r: usize, c: usize) -> Tensor {
    Tensor::matrix(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn random_edges(rng: &mut impl Rng, n: usize, p: f64) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                out.push((u, v, f64::from(rng.random_range(1..=3u8))));
            }
        }
    }
    out
}

fn month(x: Tensor, edges: &[(usize, usize, f64)]) -> MonthData {
    let n = x.rows();
    MonthData {
        x,
        labels: vec![0; n],
        graph: GraphInput::new(n, edges).unwrap(),
    }
}

fn gcn_cfg(layers: usize, emb: usize) -> ModelConfig {
    ModelConfig {
        gnn_layers: Some(layers),
        gnn_hidden: Some(4),
        embedding_dim: Some(emb),
        ..ModelConfig::new(Architecture::StaticGcn)
    }
}

fn gat_cfg(layers: usize, heads: usize, emb: usize) -> ModelConfig {
    ModelConfig {
        gnn_layers: Some(layers),
        gnn_hidden: Some(2 * heads),
        embedding_dim: Some(emb),
        heads: Some(heads),
        ..ModelConfig::new(Architecture::StaticGat)
    }
}

fn encode_eval(model: &Model, m: &MonthData) -> Tensor {
    let mut tape = Tape::new();
    let vars = model.bind_constant(&mut tape);
    let out = model.encode(&mut tape, &vars, m, false, &mut rng_from(0)).unwrap();
    tape.value(out).clone()
}

/// Dense `D^{-1/2}(A + I)D^{-1/2}` built from scratch.
fn dense_norm_adj(n: usize, edges: &[(usize, usize, f64)]) -> Mat {
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for &(u, v, w) in edges {
        a[u][v] += w;
        a[v][u] += w;
    }
    let d: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    (0..n)
        .map(|i| (0..n).map(|j| a[i][j] / (d[i] * d[j]).sqrt()).collect())
        .collect()
}

#[test]
fn gcn_matches_dense_oracle() {
    let mut rng = rng_from(11);
    for (n, edges) in [(2, vec![(0, 1, 1.0)]), (7, random_edges(&mut rng, 7, 0.4))] {
        let x = random_tensor(&mut rng, n, 3);
        let model = build_model(&gcn_cfg(1, 2), 3).unwrap();
        let out = encode_eval(&model, &month(x.clone(), &edges));
        let w = to_mat(&model.params()[0]);
        let want = mm(&mm(&dense_norm_adj(n, &edges), &to_mat(&x)), &w);
        for i in 0..n {
            for j in 0..2 {
                assert!((out.get(i, j) - want[i][j]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn gcn_isolated_node_is_a_dense_layer() {
    let mut rng = rng_from(3);
    let mut model = build_model(&gcn_cfg(2, 2), 3).unwrap();
    for p in model.params_mut() {
        let r = random_tensor(&mut rng, p.rows(), p.cols());
        *p = Tensor::new(p.shape().to_vec(), r.into_values()).unwrap();
    }
    let x = random_tensor(&mut rng, 1, 3);
    let out = encode_eval(&model, &month(x.clone(), &[]));
    let p = model.params();
    let dense = |x: &Mat, w: &Tensor, b: &Tensor| -> Mat {
        mm(x, &to_mat(w))
            .into_iter()
            .map(|r| r.iter().zip(b.values()).map(|(a, c)| a + c).collect())
            .collect()
    };
    let h = dense(&to_mat(&x), &p[0], &p[1]);
    let h: Mat = vec![h[0].iter().map(|&v| Activation::Elu.apply(v)).collect()];
    let want = dense(&h, &p[2], &p[3]);
    for j in 0..2 {
        assert!((out.get(0, j) - want[0][j]).abs() < 1e-12);
    }
}

#[test]
fn gat_single_node_attends_to_itself() {
    let model = build_model(&gat_cfg(1, 3, 2), 4).unwrap();
    let x = random_tensor(&mut rng_from(5), 1, 4);
    let m = month(x.clone(), &[]);
    for map in model.attention(&m).unwrap() {
        assert_eq!(map.alpha, vec![1.0]);
    }
    let out = encode_eval(&model, &m);
    // Average of the three heads' W x + b (biases are zero at init).
    let p = model.params();
    for j in 0..2 {
        let mean: f64 = (0..3).map(|h| mm(&to_mat(&x), &to_mat(&p[3 * h]))[0][j]).sum::<f64>() / 3.0;
        assert!((out.get(0, j) - mean).abs() < 1e-12);
    }
}

#[test]
fn gat_matches_dense_attention_oracle() {
    let mut rng = rng_from(21);
    let model = build_model(&gat_cfg(1, 1, 3), 2).unwrap();
    let x = random_tensor(&mut rng, 2, 2);
    let m = month(x.clone(), &[(0, 1, 2.0)]);
    let out = encode_eval(&model, &m);
    let p = model.params();
    let wx = mm(&to_mat(&x), &to_mat(&p[0]));
    let a = p[1].values();
    let leaky = |v: f64| if v > 0.0 { v } else { 0.2 * v };
    for i in 0..2 {
        let logits: Vec<f64> = (0..2)
            .map(|j| leaky((0..3).map(|k| a[k] * wx[i][k] + a[3 + k] * wx[j][k]).sum()))
            .collect();
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        for k in 0..3 {
            let want: f64 = (0..2).map(|j| logits[j].exp() / z * wx[j][k]).sum();
            assert!((out.get(i, k) - want).abs() < 1e-10);
        }
    }
}

#[test]
fn gat_attention_rows_sum_to_one() {
    let mut rng = rng_from(8);
    let model = build_model(&gat_cfg(2, 2, 3), 3).unwrap();
    let n = 12;
    let m = month(random_tensor(&mut rng, n, 3), &random_edges(&mut rng, n, 0.3));
    let maps = model.attention(&m).unwrap();
    assert_eq!(maps.len(), 4);
    for map in maps {
        let mut sums = vec![0.0; n];
        for (&(d, _), a) in map.pairs.iter().zip(&map.alpha) {
            sums[d] += a;
        }
        assert!(sums.iter().all(|s| (s - 1.0).abs() < 1e-12));
    }
}

#[test]
fn encoders_are_permutation_equivariant() {
    let mut rng = rng_from(13);
    let n = 9;
    let x = random_tensor(&mut rng, n, 3);
    let edges = random_edges(&mut rng, n, 0.35);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.reverse();
    perm.swap(0, 4);
    // Row i of the permuted input is row perm[i] of the original.
    let mut inv = vec![0; n];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    let px = Tensor::from_rows(&perm.iter().map(|&p| x.row(p).to_vec()).collect::<Vec<_>>()).unwrap();
    let pedges: Vec<_> = edges.iter().map(|&(u, v, w)| (inv[u], inv[v], w)).collect();
    for cfg in [gcn_cfg(2, 3), gat_cfg(2, 2, 3)] {
        let model = build_model(&cfg, 3).unwrap();
        let a = encode_eval(&model, &month(x.clone(), &edges));
        let b = encode_eval(&model, &month(px.clone(), &pedges));
        for (i, &p) in perm.iter().enumerate() {
            for j in 0..3 {
                assert!((b.get(i, j) - a.get(p, j)).abs() < 1e-10);
            }
        }
    }
}

fn zero_model(arch: Architecture, f: usize, h: usize) -> Model {
    let cfg = ModelConfig {
        rnn_hidden: Some(h),
        ..ModelConfig::new(arch)
    };
    let mut m = build_model(&cfg, f).unwrap();
    for p in m.params_mut() {
        p.values_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    m
}

fn cell_step(model: &Model, x: &Tensor, h: &Tensor, c: Option<&Tensor>) -> (Tensor, Option<Tensor>) {
    let mut tape = Tape::new();
    let vars = model.bind_constant(&mut tape);
    let (xv, hv) = (tape.constant(x.clone()), tape.constant(h.clone()));
    match model.decoder.as_ref().unwrap() {
        RnnCell::Lstm(cell) => {
            let cv = tape.constant(c.unwrap().clone());
            let (h2, c2) = cell.step(&mut tape, &vars, xv, hv, cv).unwrap();
            (tape.value(h2).clone(), Some(tape.value(c2).clone()))
        }
        RnnCell::Gru(cell) => {
            let h2 = cell.step(&mut tape, &vars, xv, hv).unwrap();
            (tape.value(h2).clone(), None)
        }
    }
}

#[test]
fn zero_parameter_cells() {
    let x = Tensor::matrix(1, 2, vec![0.7, -1.3]).unwrap();
    let zero = Tensor::zeros(&[1, 2]).unwrap();
    let c0 = Tensor::matrix(1, 2, vec![0.8, -2.0]).unwrap();

    let lstm = zero_model(Architecture::FeaturesLstm, 2, 2);
    let (h, c) = cell_step(&lstm, &x, &zero, Some(&zero));
    assert_eq!(h.values(), &[0.0, 0.0]);
    assert_eq!(c.unwrap().values(), &[0.0, 0.0]);
    let (h, c) = cell_step(&lstm, &x, &zero, Some(&c0));
    let c = c.unwrap();
    for k in 0..2 {
        let c_want = 0.5 * c0.values()[k];
        assert!((c.values()[k] - c_want).abs() < 1e-15);
        assert!((h.values()[k] - 0.5 * c_want.tanh()).abs() < 1e-15);
    }

    let gru = zero_model(Architecture::FeaturesGru, 2, 2);
    let (h, _) = cell_step(&gru, &x, &c0, None);
    for k in 0..2 {
        assert!((h.values()[k] - 0.5 * c0.values()[k]).abs() < 1e-15);
    }
    let (h, _) = cell_step(&gru, &x, &zero, None);
    assert_eq!(h.values(), &[0.0, 0.0]);
}

/// 6 nodes over 2 months: rows 0..4 exist in month 0, nodes 4 and 5 join in
/// month 1 together with two new edges; two positives at the end.
fn toy_network(seed: u64) -> DynamicNetwork {
    let mut rng = rng_from(seed);
    let rec = |id: u64, rng: &mut crate::seed::Rng, label: u8| NodeRecord {
        id: NodeId(id),
        features: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
        label,
    };
    let e = |a: u64, b: u64, c: EdgeColor| Edge::new(NodeId(a), NodeId(b), c).unwrap();
    let base = vec![
        e(0, 1, EdgeColor::CREDIT_CARD),
        e(1, 2, EdgeColor::new(true, true, false)),
        e(2, 3, EdgeColor::GEOHASH),
    ];
    let s0 = Snapshot::new(0, (0..4).map(|i| rec(i, &mut rng, 0)).collect(), base.clone()).unwrap();
    let mut grown = base;
    grown.push(e(3, 4, EdgeColor::CONTACTS));
    grown.push(e(0, 5, EdgeColor::new(true, false, true)));
    let labels = [1, 0, 0, 1, 0, 0];
    let s1 = Snapshot::new(1, (0..6).map(|i| rec(i, &mut rng, labels[i as usize])).collect(), grown).unwrap();
    let names = (0..3).map(|k| format!("f_{k}")).collect();
    DynamicNetwork::new(vec![s0, s1], vec![], names, LabelMode::ExPostCumulative).unwrap()
}

fn small_config(arch: Architecture) -> ModelConfig {
    let mut cfg = ModelConfig::new(arch);
    if arch.uses_gnn() {
        cfg.gnn_layers = Some(2);
        cfg.gnn_hidden = Some(4);
        cfg.embedding_dim = Some(3);
    }
    if arch.encoder() == EncoderKind::Gat {
        cfg.heads = Some(2);
    }
    if !arch.is_static() {
        cfg.rnn_hidden = Some(3);
    }
    cfg
}

fn window_loss(model: &Model, data: &PreparedNetwork, tape: &mut Tape, vars: &[Var]) -> Result<Var> {
    let (_, logits) = model.window_forward(tape, vars, data, &[0, 1], false, &mut rng_from(0))?;
    let labels: Vec<f64> = data.month(1)?.labels.iter().map(|&l| f64::from(l)).collect();
    tape.bce_with_logits(logits, std::sync::Arc::new(labels))
}

#[test]
fn every_assembly_passes_grad_check() {
    for seed in 0..3 {
        let net = toy_network(seed);
        for arch in Architecture::ALL {
            let cfg = ModelConfig {
                seed,
                ..small_config(arch)
            };
            let model = build_model(&cfg, 3).unwrap();
            let data = model.prepare(&net).unwrap();
            let err = grad_check(model.params(), 1e-5, |tape, vars| {
                window_loss(&model, &data, tape, vars)
            })
            .unwrap();
            assert!(err < 1e-4, "{arch}: {err}");
        }
    }
}

#[test]
fn sequences_start_at_first_appearance() {
    let net = toy_network(1);
    let model = build_model(&small_config(Architecture::GcnGru), 3).unwrap();
    let data = model.prepare(&net).unwrap();
    let mut tape = Tape::new();
    let vars = model.bind_constant(&mut tape);
    let seq = model
        .encode_window(&mut tape, &vars, &data, &[0, 1], false, &mut rng_from(0))
        .unwrap();
    assert_eq!(seq.sequence_len(&tape, 0), 2);
    assert_eq!(seq.sequence_len(&tape, 5), 1);
    assert!(seq.node_sequence(&tape, 3).iter().all(|v| v.len() == 3));
    // Month 1 inside the window equals encoding month 1 alone.
    let alone = encode_eval(&model, data.month(1).unwrap());
    assert_eq!(tape.value(seq.steps[1]), &alone);
    assert!(model
        .encode_window(&mut tape, &vars, &data, &[], false, &mut rng_from(0))
        .is_err());
}

#[test]
fn unroll_matches_stepwise_application() {
    let net = toy_network(2);
    for arch in [Architecture::FeaturesGru, Architecture::FeaturesLstm] {
        let model = build_model(&small_config(arch), 3).unwrap();
        let data = model.prepare(&net).unwrap();
        let probs = model.predict(&data, &[0, 1]).unwrap();
        let hd = 3;
        let x0 = &data.month(0).unwrap().x;
        let x1 = &data.month(1).unwrap().x;
        for i in 0..6 {
            let mut h = Tensor::zeros(&[1, hd]).unwrap();
            let mut c = Some(Tensor::zeros(&[1, hd]).unwrap());
            let rows: Vec<&Tensor> = if i < 4 { vec![x0, x1] } else { vec![x1] };
            for x in rows {
                let xi = Tensor::matrix(1, 3, x.row(i).to_vec()).unwrap();
                let (h2, c2) = cell_step(&model, &xi, &h, c.as_ref());
                h = h2;
                c = c2.or(c);
            }
            let p = model.params();
            let (w, b) = (&p[p.len() - 2], &p[p.len() - 1]);
            let z: f64 = h.values().iter().zip(w.values()).map(|(a, b)| a * b).sum::<f64>() + b.values()[0];
            assert!((probs[i] - sig(z)).abs() < 1e-14, "{arch} row {i}");
        }
    }
}

#[test]
fn zero_network_predicts_one_half() {
    let net = toy_network(0);
    for arch in [Architecture::GcnLstm, Architecture::GatGru, Architecture::PagerankGru] {
        let mut model = build_model(&small_config(arch), 3).unwrap();
        model.params_mut().iter_mut().for_each(|p| p.values_mut().fill(0.0));
        let data = model.prepare(&net).unwrap();
        let probs = model.predict(&data, &[0, 1]).unwrap();
        assert_eq!(probs, vec![0.5; 6]);
    }
}

#[test]
fn reference_configurations_build() {
    let gat = ModelConfig {
        gnn_hidden: Some(100),
        embedding_dim: Some(200),
        gnn_layers: Some(4),
        heads: Some(4),
        rnn_hidden: Some(100),
        dropout: 0.5,
        ..ModelConfig::new(Architecture::GatGru)
    };
    let m = build_model(&gat, 8).unwrap();
    assert_eq!(m.param_names().iter().filter(|n| n.ends_with(".attention")).count(), 16);

    let gcn = ModelConfig {
        gnn_hidden: Some(200),
        embedding_dim: Some(200),
        gnn_layers: Some(1),
        rnn_hidden: Some(200),
        dropout: 0.5,
        ..ModelConfig::new(Architecture::GcnLstm)
    };
    let m = build_model(&gcn, 8).unwrap();
    assert_eq!(m.params()[0].shape(), &[8, 200]);

    let feat = ModelConfig {
        rnn_hidden: Some(200),
        ..ModelConfig::new(Architecture::FeaturesGru)
    };
    let m = build_model(&feat, 8).unwrap();
    assert!(!m.has_gnn());
    assert!(m
        .param_names()
        .iter()
        .all(|n| n.starts_with("gru.") || n.starts_with("head.")));
}

#[test]
fn inconsistent_configs_are_rejected() {
    let bad = [
        ModelConfig {
            heads: Some(2),
            ..small_config(Architecture::GcnGru)
        },
        ModelConfig {
            embedding_dim: Some(4),
            ..small_config(Architecture::FeaturesGru)
        },
        ModelConfig {
            rnn_hidden: Some(4),
            ..small_config(Architecture::StaticGcn)
        },
        ModelConfig {
            rnn_hidden: None,
            ..small_config(Architecture::GatLstm)
        },
        ModelConfig {
            gnn_hidden: Some(5),
            ..small_config(Architecture::StaticGat)
        },
        ModelConfig {
            dropout: 1.0,
            ..small_config(Architecture::GcnGru)
        },
    ];
    for cfg in bad {
        assert!(matches!(build_model(&cfg, 3), Err(Error::Config(_))), "{cfg:?}");
    }
    assert!("gcn_transformer".parse::<Architecture>().is_err());
    for a in Architecture::ALL {
        assert_eq!(a.name().parse::<Architecture>().unwrap(), a);
    }
}

#[test]
fn dropout_is_inactive_in_evaluation() {
    let net = toy_network(4);
    let cfg = ModelConfig {
        dropout: 0.5,
        ..small_config(Architecture::GatGru)
    };
    let model = build_model(&cfg, 3).unwrap();
    let data = model.prepare(&net).unwrap();
    assert_eq!(
        model.predict(&data, &[0, 1]).unwrap(),
        model.predict(&data, &[0, 1]).unwrap()
    );
    let names: BTreeSet<_> = model.param_names().iter().collect();
    assert_eq!(names.len(), model.param_names().len());
}

#[test]
fn checkpoint_round_trip_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let model = build_model(&small_config(Architecture::GatLstm), 3).unwrap();
    save_checkpoint(&model, dir.path(), serde_json::json!({"note": 1})).unwrap();
    let (back, manifest) = load_checkpoint(dir.path()).unwrap();
    assert_eq!(back, model);
    assert_eq!(manifest.metadata["note"], 1);

    let bin = dir.path().join("params.bin");
    let mut bytes = std::fs::read(&bin).unwrap();
    bytes.truncate(bytes.len() - 8);
    std::fs::write(&bin, bytes).unwrap();
    assert!(matches!(load_checkpoint(dir.path()), Err(Error::Checkpoint(_))));
}

#[test]
fn prepare_checks_feature_width() {
    let model = build_model(&small_config(Architecture::FeaturesGru), 4).unwrap();
    assert!(model.prepare(&toy_network(0)).is_err());
}
