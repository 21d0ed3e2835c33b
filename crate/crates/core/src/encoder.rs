//! Relation-aware graph convolutional encoder.
//!
//! Layer `k` updates every node as
//!
//! ```text
//! h_i' = φ( Σ_r Σ_{j ∈ N_r(i)} c_r(i,j) · h_j W_r  +  h_i W_self(kind(i)) ),
//! c_r(i,j) = 1 / √(|N_r(i)| · |N_r(j)|)
//! ```
//!
//! with one weight matrix per message channel and layer. Drug-target edges
//! give two channels (protein→drug and drug→protein); every other relation
//! gives one. Node kinds without features use one-hot inputs, realised as
//! row selection from the first-layer weights.

use std::sync::Arc;

use crate::diffmath::{dropout_mask, glorot_uniform, ParamStore, SparseAdjacency, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::{MultimodalGraph, NodeKind, NodeRef, RelationId};
use crate::rng::Rng;
use crate::scalar::Scalar;

const KINDS: [NodeKind; 2] = [NodeKind::Drug, NodeKind::Protein];

fn kind_slot(kind: NodeKind) -> usize {
    match kind {
        NodeKind::Drug => 0,
        NodeKind::Protein => 1,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    /// Output widths `d(1), …, d(K)`.
    pub hidden: Vec<usize>,
    /// Apply the activation after the last layer as well.
    pub final_activation: bool,
}

impl Default for LayerSpec {
    fn default() -> Self {
        LayerSpec {
            hidden: vec![64, 32],
            final_activation: true,
        }
    }
}

impl LayerSpec {
    pub fn output_dim(&self) -> usize {
        *self.hidden.last().unwrap_or(&0)
    }
}

/// One direction of message flow for one relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Channel {
    pub relation: RelationId,
    pub receiver: NodeKind,
    pub sender: NodeKind,
    /// Receiver is the destination kind of an asymmetric relation.
    pub reversed: bool,
}

impl Channel {
    fn tag(&self) -> String {
        if self.reversed {
            format!("r{}rev", self.relation.0)
        } else {
            format!("r{}", self.relation.0)
        }
    }
}

#[derive(Debug, Clone)]
enum Input<T> {
    Features(Arc<Tensor<T>>),
    OneHot,
}

/// Normalised adjacency of `relation` with rows indexed by source-kind
/// nodes: entry `(i, j)` is `1/√(|N_r(i)| · |N_r(j)|)`.
pub fn normalization_constants<T: Scalar>(
    graph: &MultimodalGraph,
    relation: RelationId,
) -> Result<SparseAdjacency<T>> {
    let rel = graph.relation(relation)?;
    let (_, dst) = rel.endpoint_kinds();
    let adj = graph.adjacency(relation)?;
    let rows = adj
        .out
        .iter()
        .map(|l| {
            let di = l.len() as f64;
            l.iter()
                .map(|&j| {
                    let dj = adj.inc[j].len() as f64;
                    (j, T::of(1.0 / (di * dj).sqrt()))
                })
                .collect()
        })
        .collect();
    SparseAdjacency::from_rows(graph.n_nodes(dst), rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeEmbeddings<T> {
    pub drug: Tensor<T>,
    pub protein: Tensor<T>,
}

impl<T: Scalar> NodeEmbeddings<T> {
    pub fn of(&self, kind: NodeKind) -> &Tensor<T> {
        match kind {
            NodeKind::Drug => &self.drug,
            NodeKind::Protein => &self.protein,
        }
    }

    pub fn get(&self, node: NodeRef) -> &[T] {
        self.of(node.kind).row(node.index)
    }

    pub fn dim(&self) -> usize {
        self.drug.cols().max(self.protein.cols())
    }
}

/// Encoder bound to one (training) graph.
#[derive(Debug, Clone)]
pub struct Encoder<T> {
    pub spec: LayerSpec,
    channels: Vec<Channel>,
    adjacency: Vec<Arc<SparseAdjacency<T>>>,
    inputs: [Input<T>; 2],
    counts: [usize; 2],
}

impl<T: Scalar> Encoder<T> {
    /// Build channels from every relation with at least one edge. With
    /// `normalize_features` each feature row is divided by its sum.
    pub fn new(graph: &MultimodalGraph, spec: LayerSpec, normalize_features: bool) -> Result<Self> {
        if spec.hidden.is_empty() || spec.hidden.contains(&0) {
            return Err(Error::Argument(format!("layer widths {:?} must be non-empty and positive", spec.hidden)));
        }
        let mut channels = Vec::new();
        let mut adjacency = Vec::new();
        for r in graph.relation_ids() {
            if graph.n_edges(r) == 0 {
                continue;
            }
            let rel = graph.relation(r)?;
            let (src, dst) = rel.endpoint_kinds();
            let a = normalization_constants::<T>(graph, r)?;
            if rel.symmetric {
                channels.push(Channel {
                    relation: r,
                    receiver: src,
                    sender: src,
                    reversed: false,
                });
                adjacency.push(Arc::new(a));
            } else {
                let at = a.transpose();
                channels.push(Channel {
                    relation: r,
                    receiver: src,
                    sender: dst,
                    reversed: false,
                });
                adjacency.push(Arc::new(a));
                channels.push(Channel {
                    relation: r,
                    receiver: dst,
                    sender: src,
                    reversed: true,
                });
                adjacency.push(Arc::new(at));
            }
        }
        let input = |kind: NodeKind| match graph.features(kind) {
            None => Input::OneHot,
            Some(f) => {
                let n = graph.n_nodes(kind);
                let mut x = Tensor::zeros(n, f.n_cols());
                for (i, cols) in f.rows.iter().enumerate() {
                    let w = if normalize_features && !cols.is_empty() {
                        T::one() / T::of(cols.len() as f64)
                    } else {
                        T::one()
                    };
                    for &c in cols {
                        x.set(i, c, w);
                    }
                }
                Input::Features(Arc::new(x))
            }
        };
        Ok(Encoder {
            spec,
            channels,
            adjacency,
            inputs: [input(NodeKind::Drug), input(NodeKind::Protein)],
            counts: [graph.n_nodes(NodeKind::Drug), graph.n_nodes(NodeKind::Protein)],
        })
    }

    /// Replace the layer-0 input of one kind with an explicit dense matrix.
    pub fn with_input(mut self, kind: NodeKind, x: Tensor<T>) -> Result<Self> {
        if x.rows() != self.counts[kind_slot(kind)] {
            return Err(Error::Contract(format!(
                "{} input has {} rows for {} nodes",
                kind.as_str(),
                x.rows(),
                self.counts[kind_slot(kind)]
            )));
        }
        self.inputs[kind_slot(kind)] = Input::Features(Arc::new(x));
        Ok(self)
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn adjacency(&self, channel: usize) -> &SparseAdjacency<T> {
        &self.adjacency[channel]
    }

    fn input_width(&self, kind: NodeKind) -> usize {
        match &self.inputs[kind_slot(kind)] {
            Input::Features(x) => x.cols(),
            Input::OneHot => self.counts[kind_slot(kind)],
        }
    }

    fn width(&self, layer: usize, kind: NodeKind) -> usize {
        if layer == 0 {
            self.input_width(kind)
        } else {
            self.spec.hidden[layer - 1]
        }
    }

    pub fn channel_param(layer: usize, channel: &Channel) -> String {
        format!("enc.l{layer}.{}", channel.tag())
    }

    pub fn self_param(layer: usize, kind: NodeKind) -> String {
        format!("enc.l{layer}.self.{}", kind.as_str())
    }

    /// Register Glorot-initialised weights for every layer and channel.
    pub fn init_params(&self, store: &mut ParamStore<T>, rng: &mut Rng) -> Result<()> {
        for (k, &d_out) in self.spec.hidden.iter().enumerate() {
            for kind in KINDS {
                if self.counts[kind_slot(kind)] == 0 {
                    continue;
                }
                let d_in = self.width(k, kind);
                store.insert(Self::self_param(k, kind), glorot_uniform(d_in, d_out, d_in, d_out, rng)?)?;
            }
            for ch in &self.channels {
                let d_in = self.width(k, ch.sender);
                store.insert(Self::channel_param(k, ch), glorot_uniform(d_in, d_out, d_in, d_out, rng)?)?;
            }
        }
        Ok(())
    }

    /// Record the forward pass; returns `[Z_drug, Z_protein]`. Dropout is
    /// applied to every layer's input when `dropout` is given.
    pub fn forward(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        mut dropout: Option<(f64, &mut Rng)>,
    ) -> Result<[Var; 2]> {
        let n_layers = self.spec.hidden.len();
        // Per kind: either a recorded state or "one-hot identity".
        let mut state: [Option<Var>; 2] = [None, None];
        for kind in KINDS {
            if let Input::Features(x) = &self.inputs[kind_slot(kind)] {
                state[kind_slot(kind)] = Some(tape.constant((**x).clone()));
            }
        }
        for k in 0..n_layers {
            let d_out = self.spec.hidden[k];
            // Dropout on layer inputs. For one-hot inputs the mask is a row
            // mask applied to every first-layer weight read by that kind.
            let mut row_masks: [Option<Arc<Tensor<T>>>; 2] = [None, None];
            if let Some((rate, rng)) = dropout.as_mut() {
                if *rate > 0.0 {
                    for kind in KINDS {
                        let s = kind_slot(kind);
                        let n = self.counts[s];
                        match state[s] {
                            Some(h) => {
                                let (r, c) = tape.value(h).shape();
                                let mask = Arc::new(dropout_mask(r, c, *rate, rng)?);
                                state[s] = Some(tape.mul_const(h, mask)?);
                            }
                            None => {
                                let rows = dropout_mask::<T>(n, 1, *rate, rng)?;
                                let full = Tensor::from_fn(n, d_out, |i, _| rows.get(i, 0));
                                row_masks[s] = Some(Arc::new(full));
                            }
                        }
                    }
                }
            }
            let transform = |tape: &mut Tape<T>, kind: NodeKind, name: &str| -> Result<Var> {
                let w = tape.param(store, store.id(name)?);
                let s = kind_slot(kind);
                match state[s] {
                    Some(h) => tape.matmul(h, w),
                    None => match &row_masks[s] {
                        Some(m) => tape.mul_const(w, m.clone()),
                        None => Ok(w),
                    },
                }
            };
            let mut next: [Option<Var>; 2] = [None, None];
            for kind in KINDS {
                let s = kind_slot(kind);
                if self.counts[s] == 0 {
                    next[s] = Some(tape.constant(Tensor::zeros(0, d_out)));
                    continue;
                }
                let mut acc = transform(tape, kind, &Self::self_param(k, kind))?;
                for (c, ch) in self.channels.iter().enumerate() {
                    if ch.receiver != kind {
                        continue;
                    }
                    let msg = transform(tape, ch.sender, &Self::channel_param(k, ch))?;
                    let agg = tape.spmm(self.adjacency[c].clone(), msg)?;
                    if !tape.value(agg).is_finite() {
                        return Err(Error::Numeric(format!(
                            "layer {k}: message of relation #{} into {} nodes",
                            ch.relation.0,
                            kind.as_str()
                        )));
                    }
                    acc = tape.add(acc, agg)?;
                }
                let out = if k + 1 < n_layers || self.spec.final_activation {
                    tape.relu(acc)
                } else {
                    acc
                };
                if !tape.value(out).is_finite() {
                    return Err(Error::Numeric(format!("layer {k}: {} activations", kind.as_str())));
                }
                next[s] = Some(out);
            }
            state = next;
        }
        Ok([state[0].expect("layer output"), state[1].expect("layer output")])
    }

    /// Deterministic evaluation-mode embeddings.
    pub fn encode(&self, store: &ParamStore<T>) -> Result<NodeEmbeddings<T>> {
        let mut tape = Tape::new();
        let [d, p] = self.forward(&mut tape, store, None)?;
        Ok(NodeEmbeddings {
            drug: tape.value(d).clone(),
            protein: tape.value(p).clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::{combo, s, star};
    use crate::graph::{build_graph, BinaryFeatures, GraphInput, PPI};
    use crate::rng::stream;

    #[test]
    fn coefficients_on_single_edge_and_star() {
        let g = star();
        let a = normalization_constants::<f64>(&g, RelationId(2)).unwrap();
        for leaf in 1..=4 {
            assert_eq!(a.get(0, leaf), Some(0.5));
            assert_eq!(a.get(leaf, 0), Some(0.5));
        }
        // D5 has no side-effect neighbors.
        assert_eq!(a.row(5).count(), 0);
        let t = normalization_constants::<f64>(&g, crate::graph::DRUG_TARGET).unwrap();
        assert_eq!(t.get(0, 0), Some(1.0));
    }

    #[test]
    fn coefficient_symmetry() {
        let g = star();
        let a = normalization_constants::<f64>(&g, PPI).unwrap();
        assert_eq!(a.to_dense(), a.to_dense().transpose());
    }

    fn scalar_star() -> (MultimodalGraph, Encoder<f64>, ParamStore<f64>) {
        let input = GraphInput {
            combos: (1..=4).map(|k| combo("D0", &format!("D{k}"), "SE")).collect(),
            mono: (0..=4).map(|k| crate::graph::fixtures::mono(&format!("D{k}"), "F")).collect(),
            ..Default::default()
        };
        let g = build_graph(&input, 0).unwrap().0;
        let spec = LayerSpec {
            hidden: vec![1],
            final_activation: true,
        };
        let enc = Encoder::new(&g, spec, false).unwrap();
        let mut store = ParamStore::new();
        for name in ["enc.l0.self.drug", "enc.l0.r2"] {
            store.insert(name, Tensor::identity(1)).unwrap();
        }
        (g, enc, store)
    }

    #[test]
    fn star_center_with_identity_weights() {
        let (_, enc, store) = scalar_star();
        let z = enc.encode(&store).unwrap();
        assert!((z.drug.get(0, 0) - 3.0).abs() < 1e-15);
        // Each leaf: 1 (self) + 0.5 (center).
        assert!((z.drug.get(1, 0) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn isolated_node_relu_of_self_term() {
        let mut g = build_graph(
            &GraphInput {
                ppi: vec![(s("P0"), s("P1"))],
                combos: vec![combo("D0", "D1", "SE")],
                ..Default::default()
            },
            0,
        )
        .unwrap()
        .0;
        g.drug_features = Some(BinaryFeatures {
            names: vec![s("a"), s("b")],
            rows: vec![vec![0], vec![0]],
        });
        let empty = split_free(&g);
        let enc = Encoder::new(&empty, LayerSpec { hidden: vec![2], final_activation: true }, false)
            .unwrap()
            .with_input(NodeKind::Drug, Tensor::from_vec(2, 2, vec![1.0, -1.0, 1.0, -1.0]).unwrap())
            .unwrap();
        let mut store = ParamStore::new();
        store.insert("enc.l0.self.drug", Tensor::identity(2)).unwrap();
        store.insert("enc.l0.self.protein", Tensor::zeros(2, 2)).unwrap();
        let z = enc.encode(&store).unwrap();
        assert_eq!(z.drug.row(0), &[1.0, 0.0]);
    }

    /// Graph with every edge removed.
    fn split_free(g: &MultimodalGraph) -> MultimodalGraph {
        g.with_edges(&vec![Vec::new(); g.n_relations()])
    }

    #[test]
    fn zero_weights_give_zero_embeddings_and_relu_is_nonnegative() {
        let g = star();
        let enc = Encoder::<f64>::new(&g, LayerSpec { hidden: vec![4, 3], final_activation: true }, true).unwrap();
        let mut store = ParamStore::new();
        enc.init_params(&mut store, &mut stream(1, "t", 0)).unwrap();
        let z = enc.encode(&store).unwrap();
        assert!(z.drug.data().iter().chain(z.protein.data()).all(|&v| v >= 0.0));
        assert_eq!(z.drug.shape(), (6, 3));
        assert_eq!(z.protein.shape(), (3, 3));
        let mut zero = store.clone();
        for i in 0..zero.len() {
            let id = crate::diffmath::ParamId(i);
            zero.value_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let z = enc.encode(&zero).unwrap();
        assert!(z.drug.data().iter().chain(z.protein.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn evaluation_mode_is_deterministic() {
        let g = star();
        let enc = Encoder::<f64>::new(&g, LayerSpec::default(), true).unwrap();
        let mut store = ParamStore::new();
        enc.init_params(&mut store, &mut stream(2, "t", 0)).unwrap();
        assert_eq!(enc.encode(&store).unwrap(), enc.encode(&store).unwrap());
        let mut tape = Tape::new();
        let mut rng = stream(3, "drop", 0);
        let [d, _] = enc.forward(&mut tape, &store, Some((0.5, &mut rng))).unwrap();
        assert_ne!(tape.value(d), &enc.encode(&store).unwrap().drug);
    }

    #[test]
    fn bad_layer_spec_rejected() {
        let g = star();
        assert!(Encoder::<f64>::new(&g, LayerSpec { hidden: vec![], final_activation: true }, true).is_err());
        assert!(Encoder::<f64>::new(&g, LayerSpec { hidden: vec![3, 0], final_activation: true }, true).is_err());
    }
}
