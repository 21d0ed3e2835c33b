//! Helpers shared by the integration tests: small random graphs, a dense
//! reference encoder and a central-difference gradient checker.
#![allow(dead_code)]

use polylink::diffmath::{ParamId, ParamStore, Tape, Tensor};
use polylink::encoder::{Channel, Encoder, LayerSpec, NodeEmbeddings};
use polylink::graph::{build_graph, ComboRecord, GraphInput, MonoRecord, MultimodalGraph, NodeKind, NodeRef};
use polylink::rng::stream;
use polylink::trainer::{batch_objective, Contribution, LinkModel};
use rand::Rng as _;

pub fn combo(a: &str, b: &str, se: &str) -> ComboRecord {
    ComboRecord {
        drug_a: a.into(),
        drug_b: b.into(),
        side_effect_id: se.into(),
        side_effect_name: format!("{se} name"),
    }
}

pub fn mono(d: &str, f: &str) -> MonoRecord {
    MonoRecord {
        drug: d.into(),
        feature_id: f.into(),
        feature_name: format!("{f} name"),
    }
}

/// Random records over `n_drugs` drugs and `n_proteins` proteins. Chains
/// guarantee that every node appears; `features` controls whether drugs get
/// mono features.
pub fn toy_input(seed: u64, n_drugs: usize, n_proteins: usize, features: bool) -> GraphInput {
    let mut rng = stream(seed, "toy-graph", 0);
    let d = |i: usize| format!("D{i}");
    let p = |i: usize| format!("P{i}");
    let mut input = GraphInput::default();
    for i in 1..n_proteins {
        input.ppi.push((p(i - 1), p(i)));
    }
    for a in 0..n_proteins {
        for b in a + 2..n_proteins {
            if rng.gen_bool(0.25) {
                input.ppi.push((p(a), p(b)));
            }
        }
    }
    for i in 0..n_drugs {
        input.combos.push(combo(&d(i), &d((i + 1) % n_drugs), "SE1"));
        for t in 0..n_proteins {
            if rng.gen_bool(0.3) {
                input.targets.push((d(i), p(t)));
            }
        }
    }
    input.targets.push((d(0), p(0)));
    input.combos.push(combo(&d(0), &d(n_drugs / 2), "SE2"));
    for a in 0..n_drugs {
        for b in a + 1..n_drugs {
            if rng.gen_bool(0.4) {
                input.combos.push(combo(&d(a), &d(b), "SE2"));
            }
        }
    }
    if features {
        for i in 0..n_drugs {
            input.mono.push(mono(&d(i), &format!("F{}", i % 4)));
            for f in 0..4 {
                if rng.gen_bool(0.3) {
                    input.mono.push(mono(&d(i), &format!("F{f}")));
                }
            }
        }
    }
    input
}

pub fn toy_graph(seed: u64, n_drugs: usize, n_proteins: usize, features: bool) -> MultimodalGraph {
    build_graph(&toy_input(seed, n_drugs, n_proteins, features), 0).unwrap().0
}

/// Dense layer-0 input: feature rows divided by their sums, or the identity.
fn dense_input(graph: &MultimodalGraph, kind: NodeKind) -> Vec<Vec<f64>> {
    let n = graph.n_nodes(kind);
    match graph.features(kind) {
        None => (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect(),
        Some(f) => f
            .rows
            .iter()
            .map(|cols| {
                let mut row = vec![0.0; f.n_cols()];
                for &c in cols {
                    row[c] = 1.0 / cols.len() as f64;
                }
                row
            })
            .collect(),
    }
}

fn vec_mat(x: &[f64], w: &Tensor<f64>) -> Vec<f64> {
    (0..w.cols()).map(|c| (0..w.rows()).map(|r| x[r] * w.get(r, c)).sum()).collect()
}

/// Brute-force forward pass: every node sums, over every relation and
/// neighbor, `h_j W / √(deg_i deg_j)`, adds its own `h_i W_self` and
/// applies ReLU.
pub fn dense_encoder(graph: &MultimodalGraph, store: &ParamStore<f64>, spec: &LayerSpec) -> NodeEmbeddings<f64> {
    let kinds = [NodeKind::Drug, NodeKind::Protein];
    let mut h = [dense_input(graph, NodeKind::Drug), dense_input(graph, NodeKind::Protein)];
    let slot = |k: NodeKind| if k == NodeKind::Drug { 0 } else { 1 };
    for (layer, &width) in spec.hidden.iter().enumerate() {
        let mut next = [Vec::new(), Vec::new()];
        for kind in kinds {
            for i in 0..graph.n_nodes(kind) {
                let node = NodeRef { kind, index: i };
                let w_self = store.get(&Encoder::<f64>::self_param(layer, kind)).unwrap();
                let mut acc = vec_mat(&h[slot(kind)][i], w_self);
                for r in graph.relation_ids() {
                    if graph.n_edges(r) == 0 {
                        continue;
                    }
                    let rel = graph.relation(r).unwrap();
                    let (src, dst) = rel.endpoint_kinds();
                    if kind != src && kind != dst {
                        continue;
                    }
                    let sender = if kind == src { dst } else { src };
                    let channel = Channel {
                        relation: r,
                        receiver: kind,
                        sender,
                        reversed: !rel.symmetric && kind == dst,
                    };
                    let w = store.get(&Encoder::<f64>::channel_param(layer, &channel)).unwrap();
                    let nbrs = graph.neighbors(node, r).unwrap();
                    for &j in nbrs {
                        let dj = graph.degree(NodeRef { kind: sender, index: j }, r).unwrap();
                        let c = 1.0 / ((nbrs.len() * dj) as f64).sqrt();
                        for (a, v) in acc.iter_mut().zip(vec_mat(&h[slot(sender)][j], w)) {
                            *a += c * v;
                        }
                    }
                }
                if layer + 1 < spec.hidden.len() || spec.final_activation {
                    acc.iter_mut().for_each(|v| *v = v.max(0.0));
                }
                assert_eq!(acc.len(), width);
                next[slot(kind)].push(acc);
            }
        }
        h = next;
    }
    let to_tensor = |rows: &Vec<Vec<f64>>| {
        let c = spec.output_dim();
        Tensor::from_fn(rows.len(), c, |i, j| rows[i][j])
    };
    NodeEmbeddings {
        drug: to_tensor(&h[0]),
        protein: to_tensor(&h[1]),
    }
}

/// One contribution per training edge of every model relation, with a
/// single uniformly drawn negative.
pub fn all_edge_contributions<M: LinkModel<f64> + ?Sized>(model: &M, seed: u64) -> Vec<Contribution> {
    let g = model.graph();
    let mut rng = stream(seed, "toy-negatives", 0);
    let mut out = Vec::new();
    for &r in model.relations() {
        let (_, dst) = g.relation(r).unwrap().endpoint_kinds();
        for (i, j) in g.edges(r) {
            out.push(Contribution {
                relation: r,
                i,
                j,
                negatives: vec![rng.gen_range(0..g.n_nodes(dst))],
            });
        }
    }
    out
}

pub fn loss_value<M: LinkModel<f64> + ?Sized>(model: &M, store: &ParamStore<f64>, batch: &[Contribution]) -> f64 {
    let mut tape = Tape::new();
    let loss = batch_objective(&mut tape, model, store, batch, None).unwrap();
    tape.value(loss).get(0, 0)
}

/// Entry-wise comparison of analytic and central-difference gradients.
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub n_entries: usize,
}

/// Denominator floor for relative errors; entries whose gradients are
/// both below it are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

pub fn grad_check<M: LinkModel<f64> + ?Sized>(model: &M, store: &ParamStore<f64>, batch: &[Contribution], h: f64) -> GradCheck {
    let mut analytic = store.clone();
    analytic.zero_grad();
    let mut tape = Tape::new();
    let loss = batch_objective(&mut tape, model, &analytic, batch, None).unwrap();
    tape.backward(loss, &mut analytic).unwrap();
    let mut probe = store.clone();
    let mut out = GradCheck {
        max_rel_error: 0.0,
        worst_param: String::new(),
        n_entries: 0,
    };
    for p in 0..store.len() {
        let id = ParamId(p);
        for k in 0..store.value(id).len() {
            let x0 = store.value(id).data()[k];
            probe.value_mut(id).data_mut()[k] = x0 + h;
            let up = loss_value(model, &probe, batch);
            probe.value_mut(id).data_mut()[k] = x0 - h;
            let down = loss_value(model, &probe, batch);
            probe.value_mut(id).data_mut()[k] = x0;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.grad(id).data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            out.n_entries += 1;
            if rel > out.max_rel_error {
                out.max_rel_error = rel;
                out.worst_param = format!("{}[{k}]", store.entry(id).name);
            }
        }
    }
    out
}
