use rand::Rng as _;

use crate::graph::{MultimodalGraph, RelationId};
use crate::rng::Rng;

/// Uniform corruption of the destination endpoint, rejecting the source
/// itself and every training positive of the same source and relation.
#[derive(Debug, Clone, Copy)]
pub struct NegativeSampler<'g> {
    graph: &'g MultimodalGraph,
}

impl<'g> NegativeSampler<'g> {
    /// `graph` must hold exactly the training edges.
    pub fn new(graph: &'g MultimodalGraph) -> Self {
        NegativeSampler { graph }
    }

    /// Number of admissible replacements for source `i`.
    pub fn admissible(&self, relation: RelationId, i: usize) -> usize {
        let rel = &self.graph.relations[relation.0];
        let (src, dst) = rel.endpoint_kinds();
        let n = self.graph.n_nodes(dst);
        let positives = &self.graph.adjacency[relation.0].out[i];
        let self_excluded = src == dst && positives.binary_search(&i).is_err();
        n - positives.len() - usize::from(self_excluded)
    }

    fn is_admissible(&self, relation: RelationId, same_kind: bool, i: usize, n: usize) -> bool {
        !(same_kind && n == i) && self.graph.adjacency[relation.0].out[i].binary_search(&n).is_err()
    }

    /// Replacement for `j` in `(i, relation, j)`; `None` when every
    /// same-kind node is excluded.
    pub fn sample(&self, relation: RelationId, i: usize, rng: &mut Rng) -> Option<usize> {
        let rel = &self.graph.relations[relation.0];
        let (src, dst) = rel.endpoint_kinds();
        let same_kind = src == dst;
        let n = self.graph.n_nodes(dst);
        let ok = self.admissible(relation, i);
        if ok == 0 {
            return None;
        }
        if ok * 8 >= n {
            loop {
                let c = rng.gen_range(0..n);
                if self.is_admissible(relation, same_kind, i, c) {
                    return Some(c);
                }
            }
        }
        // Dense exclusion: pick the t-th admissible node directly.
        let t = rng.gen_range(0..ok);
        (0..n).filter(|&c| self.is_admissible(relation, same_kind, i, c)).nth(t)
    }
}
