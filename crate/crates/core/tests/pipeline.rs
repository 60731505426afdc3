use dtdg_core::graph::{generate_synthetic, DynamicNetwork, GeneratorConfig, NodeId};
use dtdg_core::models::{build_model, Architecture, Model, ModelConfig};
use dtdg_core::numcore::Tensor;
use dtdg_core::pipeline::*;

fn network(seed: u64) -> DynamicNetwork {
    generate_synthetic(&GeneratorConfig {
        n_initial_nodes: 160,
        n_months: 9,
        seed,
        ..GeneratorConfig::default()
    })
    .unwrap()
}

fn small(arch: Architecture) -> ModelConfig {
    let mut c = ModelConfig::new(arch);
    if arch.uses_gnn() {
        c.gnn_layers = Some(1);
        c.embedding_dim = Some(6);
    }
    if arch == Architecture::GatGru || arch == Architecture::GatLstm || arch == Architecture::StaticGat {
        c.heads = Some(2);
    }
    if !arch.is_static() {
        c.rnn_hidden = Some(5);
    }
    c
}

fn zeroed(mut model: Model) -> Model {
    let zeros = model
        .params()
        .iter()
        .map(|p| Tensor::zeros(p.shape()).unwrap())
        .collect();
    model.set_params(zeros).unwrap();
    model
}

fn quick(seed: u64) -> TrainConfig {
    TrainConfig {
        max_epochs: 8,
        early_stop_patience: 3,
        lr: 0.01,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn constant_model_stops_after_patience_plus_one_epochs() {
    let net = network(1);
    let spec = WindowSpec::default_for(9, 3).unwrap();
    let model = zeroed(build_model(&small(Architecture::FeaturesGru), net.feature_width()).unwrap());
    let cfg = TrainConfig {
        max_epochs: 40,
        early_stop_patience: 5,
        lr: 0.0,
        ..TrainConfig::default()
    };
    let out = train_model(model.clone(), &net, &spec, &cfg).unwrap();
    assert_eq!(out.epochs_run(), 6);
    assert_eq!(out.best_epoch, 1);
    assert_eq!(out.best.score, 0.5);
    assert_eq!(out.model.params(), model.params());
}

#[test]
fn flat_validation_returns_first_epoch_parameters() {
    let net = network(2);
    let spec = WindowSpec::default_for(9, 3).unwrap();
    let model = build_model(&small(Architecture::GcnGru), net.feature_width()).unwrap();
    let data = model.prepare(&net).unwrap();
    let windows = spec.train_windows(false).unwrap();
    let mut first: Option<Vec<Tensor>> = None;
    let out = train_model_with(model.clone(), &data, &windows, &quick(0), |m, epoch| {
        if epoch == 1 {
            first = Some(m.params().to_vec());
        }
        Ok(Validation::constant(0.7))
    })
    .unwrap();
    assert_eq!(out.epochs_run(), 4);
    assert_eq!(out.best_epoch, 1);
    let first = first.unwrap();
    assert_eq!(out.model.params(), first.as_slice());
    assert_ne!(
        first.as_slice(),
        model.params(),
        "a step with lr > 0 must move the parameters"
    );
}

#[test]
fn strictly_improving_validation_runs_to_max_epochs() {
    let net = network(2);
    let spec = WindowSpec::default_for(9, 3).unwrap();
    let model = build_model(&small(Architecture::FeaturesLstm), net.feature_width()).unwrap();
    let data = model.prepare(&net).unwrap();
    let windows = spec.train_windows(false).unwrap();
    let out = train_model_with(model, &data, &windows, &quick(0), |_, epoch| {
        Ok(Validation::constant(epoch as f64 / 100.0))
    })
    .unwrap();
    assert_eq!(out.epochs_run(), 8);
    assert_eq!(out.best_epoch, 8);
    assert!(out.history.iter().all(|r| r.train_loss.is_finite()));
}

#[test]
fn training_and_evaluation_are_deterministic() {
    let net = network(3);
    let spec = WindowSpec::default_for(9, 3).unwrap();
    let boot = BootstrapConfig {
        replicates: 50,
        ..BootstrapConfig::default()
    };
    for arch in [
        Architecture::GatLstm,
        Architecture::StaticGcn,
        Architecture::PagerankGru,
    ] {
        let mut cfg = small(arch);
        cfg.smote_rate = 0.5;
        if arch.uses_gnn() {
            cfg.dropout = 0.3;
        }
        let run = || {
            let model = build_model(&cfg, net.feature_width()).unwrap();
            let out = train_model(model, &net, &spec, &quick(7)).unwrap();
            let ev = evaluate(&out.model, &net, &spec, boot).unwrap();
            (out.history, ev.report.to_json().unwrap())
        };
        let (h1, r1) = run();
        let (h2, r2) = run();
        assert_eq!(h1, h2, "{arch}");
        assert_eq!(r1, r2, "{arch}");
    }
}

#[test]
fn report_json_round_trips_without_timing() {
    let net = network(4);
    let spec = WindowSpec::default_for(9, 3).unwrap();
    let model = build_model(&small(Architecture::GcnLstm), net.feature_width()).unwrap();
    let ev = evaluate(&model, &net, &spec, BootstrapConfig::default()).unwrap();
    let json = ev.report.to_json().unwrap();
    assert!(!json.contains("wall_time"));
    assert_eq!(EvalReport::from_json(&json).unwrap(), ev.report);
    let seen = ev.report.auc_seen.as_ref().unwrap();
    assert_eq!(seen.samples.len(), 1000);
    assert!(seen.lower <= seen.mean && seen.mean <= seen.upper);
    assert_eq!(seen.n_positive + seen.n_negative, ev.report.n_seen);
}

#[test]
fn constant_and_oracle_scores_give_chance_and_perfect_auc() {
    let net = network(5);
    let spec = WindowSpec::default_for(9, 3).unwrap();
    let model = zeroed(build_model(&small(Architecture::FeaturesGru), net.feature_width()).unwrap());
    let ev = evaluate(&model, &net, &spec, BootstrapConfig::default()).unwrap();
    assert!(ev.scores.iter().all(|s| s.score == 0.5));
    assert_eq!(ev.report.auc_seen.as_ref().unwrap().auc, 0.5);

    let oracle: Vec<ScoredNode> = ev
        .scores
        .iter()
        .map(|s| ScoredNode {
            score: f64::from(s.label),
            ..*s
        })
        .collect();
    let report = report_from_scores(model.config(), &spec, BootstrapConfig::default(), &oracle).unwrap();
    for summary in [report.auc_seen.unwrap(), report.auc_unseen.unwrap()] {
        assert_eq!(summary.auc, 1.0);
        assert_eq!(summary.half_width, 0.0);
    }
}

#[test]
fn test_scores_cover_seen_and_unseen_nodes_once_per_window() {
    let net = network(6);
    let spec = WindowSpec::default_for(9, 3).unwrap();
    let model = build_model(&small(Architecture::FeaturesGru), net.feature_width()).unwrap();
    let ev = evaluate(&model, &net, &spec, BootstrapConfig::default()).unwrap();
    let births = net.birth_months();
    let windows = spec.test_windows().unwrap();
    for w in &windows {
        let last = *w.last().unwrap();
        let at: Vec<&ScoredNode> = ev.scores.iter().filter(|s| s.month == last).collect();
        let snap = net.snapshot(last).unwrap();
        let expected = snap
            .nodes()
            .iter()
            .filter(|id| births[id] <= spec.train.end || spec.test.contains(births[id]))
            .count();
        assert_eq!(at.len(), expected);
        for s in at {
            let b = births[&s.node];
            let group = if b <= spec.train.end {
                NodeGroup::Seen
            } else {
                NodeGroup::Unseen
            };
            assert_eq!(s.group, group);
            assert_eq!(s.label, snap.labels()[snap.position(s.node).unwrap()]);
        }
    }
    assert!(ev.scores.iter().all(|s| s.node != NodeId(u64::MAX)));
}

#[test]
fn grid_search_records_every_cell_and_picks_the_best() {
    let net = network(7);
    let spec = WindowSpec::default_for(9, 3).unwrap();
    let grid = GridSpec {
        rnn_hidden: vec![3, 5],
        smote_rate: vec![0.0, 0.5],
        ..GridSpec::default()
    };
    let out = grid_search(&grid, Architecture::FeaturesGru, 11, &net, &spec, &quick(0), 1).unwrap();
    assert_eq!(out.rows.len(), 4);
    let best = out.best;
    let top = out.rows[best].score().unwrap();
    assert!(out.rows.iter().all(|r| r.score().unwrap() <= top));
    assert_eq!(out.best_outcome.model.config(), &out.rows[best].config);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("results.csv");
    write_results_csv(&out.rows, Some(out.best), &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.starts_with(&RESULTS_HEADER.join(",")));

    let again = grid_search(&grid, Architecture::FeaturesGru, 11, &net, &spec, &quick(0), 2).unwrap();
    let strip = |rows: &[GridRow]| {
        rows.iter()
            .map(|r| (r.config.clone(), r.score(), r.best_epoch))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&again.rows), strip(&out.rows));
}
