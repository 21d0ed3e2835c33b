//! Training-level behaviour of the encoder model and the factorization
//! baselines on small graphs.

mod common;

use polylink::baselines::{BaselineKind, Factorization, A_NAME};
use polylink::datagen::{generate, SyntheticSpec};
use polylink::decoder::EdgeScorer;
use polylink::diffmath::{checkpoint, ParamStore};
use polylink::graph::{split_edges, Fold};
use polylink::metrics::evaluate;
use polylink::trainer::{train, validation_loss, GraphModel, LinkModel, StopOn, TrainConfig};
use polylink::{NodeKind, RelationId};

fn small_spec() -> SyntheticSpec {
    SyntheticSpec {
        n_drugs: 40,
        n_proteins: 60,
        n_side_effects: 3,
        density_side_effect: 0.15,
        density_ppi: 0.05,
        density_target: 0.05,
        ..Default::default()
    }
}

fn quick_config(seed: u64) -> TrainConfig {
    TrainConfig {
        lr: 0.01,
        max_epochs: 8,
        batch_size: 64,
        hidden_dims: vec![8, 6],
        baseline_dim: 6,
        seed,
        early_stop_window: 8,
        ..Default::default()
    }
}

#[test]
fn baseline_gradients_match_finite_differences() {
    let g = common::toy_graph(4, 9, 4, false);
    for kind in [BaselineKind::Rescal, BaselineKind::Dedicom] {
        let model = Factorization::new(kind, &g, 3).unwrap();
        let mut store = ParamStore::new();
        LinkModel::<f64>::init_params(&model, &mut store, 11).unwrap();
        let batch = common::all_edge_contributions(&model, 2);
        let check = common::grad_check(&model, &store, &batch, 1e-5);
        assert!(check.n_entries > 0);
        assert!(
            check.max_rel_error < 1e-5,
            "{}: {} at {}",
            kind.as_str(),
            check.max_rel_error,
            check.worst_param
        );
    }
}

#[test]
fn zero_learning_rate_leaves_factors_unchanged() {
    let (g, _) = generate(&small_spec()).unwrap();
    let split = split_edges(&g, (0.8, 0.1, 0.1), 1).unwrap();
    let model = Factorization::new(BaselineKind::Rescal, &split.training_graph(&g), 6).unwrap();
    let cfg = TrainConfig {
        lr: 0.0,
        max_epochs: 2,
        ..quick_config(3)
    };
    let mut initial = ParamStore::<f64>::new();
    model.init_params(&mut initial, cfg.seed).unwrap();
    let out = train::<f64, _>(&model, &split, &cfg).unwrap();
    assert_eq!(out.store.get(A_NAME).unwrap(), initial.get(A_NAME).unwrap());
}

#[test]
fn baseline_training_is_deterministic() {
    let (g, _) = generate(&small_spec()).unwrap();
    let split = split_edges(&g, (0.8, 0.1, 0.1), 1).unwrap();
    let model = Factorization::new(BaselineKind::Dedicom, &split.training_graph(&g), 6).unwrap();
    let cfg = quick_config(5);
    let a = train::<f64, _>(&model, &split, &cfg).unwrap();
    let b = train::<f64, _>(&model, &split, &cfg).unwrap();
    let bytes = |s: &ParamStore<f64>| checkpoint::encode("dedicom", &[], s).unwrap();
    assert_eq!(bytes(&a.store), bytes(&b.store));
}

#[test]
fn training_descends_on_planted_graph() {
    let (g, _) = generate(&small_spec()).unwrap();
    let split = split_edges(&g, (0.8, 0.1, 0.1), 2).unwrap();
    let cfg = quick_config(9);
    let model = GraphModel::<f64>::new(&split.training_graph(&g), cfg.layer_spec()).unwrap();
    let out = train(&model, &split, &cfg).unwrap();
    let losses: Vec<f64> = out.state.epochs.iter().map(|e| e.train_loss).collect();
    assert!(losses.len() >= 2);
    assert!(losses.last().unwrap() < &losses[0], "{losses:?}");
}

#[test]
fn planted_parameters_beat_random_ones() {
    let spec = small_spec();
    let (g, truth) = generate(&spec).unwrap();
    let split = split_edges(&g, (0.8, 0.1, 0.1), 4).unwrap();
    let relations: Vec<RelationId> = g.side_effect_ids().collect();
    let planted = validation_loss(&truth, &split, &relations).unwrap();
    let model = GraphModel::<f64>::new(&split.training_graph(&g), quick_config(0).layer_spec()).unwrap();
    let mut store = ParamStore::new();
    model.init_params(&mut store, 0).unwrap();
    let random = validation_loss(model.scorer(&store).unwrap().as_ref(), &split, &relations).unwrap();
    assert!(planted < random, "planted {planted} vs random {random}");
}

struct Constant;

impl EdgeScorer<f64> for Constant {
    fn raw(&self, _: RelationId, _: usize, _: usize) -> f64 {
        0.0
    }
}

#[test]
fn constant_half_scorer() {
    let (g, _) = generate(&small_spec()).unwrap();
    let split = split_edges(&g, (0.8, 0.1, 0.1), 4).unwrap();
    let relations: Vec<RelationId> = g.side_effect_ids().collect();
    let loss = validation_loss(&Constant, &split, &relations).unwrap();
    assert!((loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
    let report = evaluate(&g, &split, &Constant, Fold::Test).unwrap();
    for row in &report.relations {
        assert_eq!(row.auroc, 0.5);
    }
}

#[test]
fn oracle_scorer_ranks_test_edges_well() {
    let (g, truth) = generate(&SyntheticSpec::default()).unwrap();
    let split = split_edges(&g, (0.8, 0.1, 0.1), 7).unwrap();
    let report = evaluate(&g, &split, &truth, Fold::Test).unwrap();
    assert!(report.macro_avg.auroc >= 0.95, "{}", report.macro_avg.auroc);
}

#[test]
fn side_effect_density_hits_target() {
    let spec = SyntheticSpec {
        n_drugs: 100,
        n_side_effects: 1,
        density_side_effect: 0.05,
        ..Default::default()
    };
    let (g, _) = generate(&spec).unwrap();
    let r = g.side_effect_ids().next().unwrap();
    let n = g.n_nodes(NodeKind::Drug);
    let density = g.n_edges(r) as f64 / (n * (n - 1) / 2) as f64;
    assert!((0.045..=0.055).contains(&density), "{density}");
}

#[test]
fn auprc_stopping_keeps_best_epoch_parameters() {
    let (g, _) = generate(&small_spec()).unwrap();
    let split = split_edges(&g, (0.8, 0.1, 0.1), 3).unwrap();
    let cfg = TrainConfig {
        stop_on: StopOn::ValAuprc,
        ..quick_config(1)
    };
    let model = GraphModel::<f64>::new(&split.training_graph(&g), cfg.layer_spec()).unwrap();
    let out = train(&model, &split, &cfg).unwrap();
    let best = out.state.epochs.iter().find(|e| e.epoch == out.state.best_epoch).unwrap();
    assert_eq!(best.monitored, out.state.best_value);
    let scorer = model.scorer(&out.store).unwrap();
    let val = evaluate(model.graph(), &split, scorer.as_ref(), Fold::Val).unwrap();
    assert!((1.0 - val.macro_avg.auprc - out.state.best_value).abs() < 1e-12);
}
