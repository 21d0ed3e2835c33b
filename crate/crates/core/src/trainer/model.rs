use crate::decoder::{record_scores, DecoderParams, EdgeScorer, EmbeddingScorer, Head};
use crate::diffmath::{ParamStore, Tape, Var};
use crate::encoder::{Encoder, LayerSpec, NodeEmbeddings};
use crate::error::{Error, Result};
use crate::graph::{MultimodalGraph, NodeKind, RelationId};
use crate::rng::{stream, Rng};
use crate::scalar::Scalar;

/// Pairs of one relation to be scored together.
pub type PairGroup<'a> = (RelationId, &'a [(usize, usize)]);

/// A link predictor the trainer can fit: it owns no parameters, only the
/// recipe for registering and using them.
pub trait LinkModel<T: Scalar>: Sync {
    fn name(&self) -> &'static str;

    /// Graph holding exactly the training edges.
    fn graph(&self) -> &MultimodalGraph;

    /// Relations whose training edges enter the loss.
    fn relations(&self) -> &[RelationId];

    fn init_params(&self, store: &mut ParamStore<T>, seed: u64) -> Result<()>;

    /// One `n×1` raw-score variable per group. Dropout, when given, is
    /// applied wherever the model has layer inputs.
    fn record(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        groups: &[PairGroup<'_>],
        dropout: Option<(f64, &mut Rng)>,
    ) -> Result<Vec<Var>>;

    /// Frozen evaluation-mode scorer.
    fn scorer(&self, store: &ParamStore<T>) -> Result<Box<dyn EdgeScorer<T>>>;
}

/// Graph convolutional encoder plus factorized decoder.
#[derive(Debug, Clone)]
pub struct GraphModel<T> {
    pub encoder: Encoder<T>,
    graph: MultimodalGraph,
    relations: Vec<RelationId>,
}

impl<T: Scalar> GraphModel<T> {
    pub fn new(train_graph: &MultimodalGraph, spec: LayerSpec) -> Result<Self> {
        let encoder = Encoder::new(train_graph, spec, true)?;
        Ok(GraphModel {
            encoder,
            relations: train_graph.relation_ids().collect(),
            graph: train_graph.clone(),
        })
    }

    pub fn embeddings(&self, store: &ParamStore<T>) -> Result<NodeEmbeddings<T>> {
        self.encoder.encode(store)
    }
}

fn kind_index(kind: NodeKind) -> usize {
    match kind {
        NodeKind::Drug => 0,
        NodeKind::Protein => 1,
    }
}

impl<T: Scalar> LinkModel<T> for GraphModel<T> {
    fn name(&self) -> &'static str {
        "main"
    }

    fn graph(&self) -> &MultimodalGraph {
        &self.graph
    }

    fn relations(&self) -> &[RelationId] {
        &self.relations
    }

    fn init_params(&self, store: &mut ParamStore<T>, seed: u64) -> Result<()> {
        let mut rng = stream(seed, "init", 0);
        self.encoder.init_params(store, &mut rng)?;
        DecoderParams::init(
            store,
            self.graph.n_side_effects(),
            self.encoder.spec.output_dim(),
            &mut rng,
        )
    }

    fn record(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        groups: &[PairGroup<'_>],
        dropout: Option<(f64, &mut Rng)>,
    ) -> Result<Vec<Var>> {
        let z = self.encoder.forward(tape, store, dropout)?;
        groups
            .iter()
            .map(|&(r, pairs)| {
                let (src, dst) = self.graph.relation(r)?.endpoint_kinds();
                let head = Head::of(&self.graph, r)?;
                record_scores(tape, store, head, z[kind_index(src)], z[kind_index(dst)], pairs)
            })
            .collect()
    }

    fn scorer(&self, store: &ParamStore<T>) -> Result<Box<dyn EdgeScorer<T>>> {
        let emb = self.encoder.encode(store)?;
        let params = DecoderParams::from_store(store)?;
        if params.dim() != emb.dim() {
            return Err(Error::Contract(format!(
                "decoder width {} but embeddings have {}",
                params.dim(),
                emb.dim()
            )));
        }
        Ok(Box::new(EmbeddingScorer::new(&self.graph, emb, &params)?))
    }
}
