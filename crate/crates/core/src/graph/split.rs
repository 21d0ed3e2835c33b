use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{MultimodalGraph, RelationFamily, RelationId};
use crate::error::{Error, Result};
use crate::rng::{stream, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fold {
    Train,
    Val,
    Test,
}

impl Fold {
    pub fn as_str(self) -> &'static str {
        match self {
            Fold::Train => "train",
            Fold::Val => "val",
            Fold::Test => "test",
        }
    }
}

impl std::str::FromStr for Fold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Fold::Train),
            "val" => Ok(Fold::Val),
            "test" => Ok(Fold::Test),
            other => Err(Error::Argument(format!("unknown fold {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelationSplit {
    pub train_pos: Vec<(usize, usize)>,
    pub val_pos: Vec<(usize, usize)>,
    pub test_pos: Vec<(usize, usize)>,
    pub val_neg: Vec<(usize, usize)>,
    pub test_neg: Vec<(usize, usize)>,
}

impl RelationSplit {
    pub fn positives(&self, fold: Fold) -> &[(usize, usize)] {
        match fold {
            Fold::Train => &self.train_pos,
            Fold::Val => &self.val_pos,
            Fold::Test => &self.test_pos,
        }
    }

    /// Frozen negatives; training negatives are resampled and have no frozen set.
    pub fn negatives(&self, fold: Fold) -> &[(usize, usize)] {
        match fold {
            Fold::Train => &[],
            Fold::Val => &self.val_neg,
            Fold::Test => &self.test_neg,
        }
    }
}

/// Frozen per-relation train/validation/test partition with balanced
/// evaluation negatives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSplit {
    pub seed: u64,
    pub relations: Vec<RelationSplit>,
}

fn fold_size(m: usize, fraction: f64) -> usize {
    ((fraction * m as f64).floor() as usize).max(1)
}

/// Uniform non-edge of `relation`, canonicalised, never a self pair.
fn sample_non_edge(graph: &MultimodalGraph, relation: RelationId, rng: &mut Rng) -> Option<(usize, usize)> {
    let rel = &graph.relations[relation.0];
    let (src, dst) = rel.endpoint_kinds();
    let (ns, nd) = (graph.n_nodes(src), graph.n_nodes(dst));
    if ns == 0 || nd == 0 {
        return None;
    }
    let edges = graph.n_edges(relation);
    let capacity = if rel.symmetric { ns * ns.saturating_sub(1) / 2 } else { ns * nd };
    if edges >= capacity {
        return None;
    }
    loop {
        let i = rng.gen_range(0..ns);
        let j = rng.gen_range(0..nd);
        if rel.symmetric && i == j {
            continue;
        }
        let (a, b) = if rel.symmetric && i > j { (j, i) } else { (i, j) };
        if !graph.has_edge(relation, a, b) {
            return Some((a, b));
        }
    }
}

/// Shuffle each relation's canonical edges under `seed` and cut them into
/// train/validation/test, then draw one frozen negative per evaluation
/// positive.
///
/// Validation and test each receive `max(1, floor(f * m))` edges. Side
/// effects need at least three edges; smaller protein-protein or
/// drug-target relations stay entirely in training.
pub fn split_edges(graph: &MultimodalGraph, fractions: (f64, f64, f64), seed: u64) -> Result<EdgeSplit> {
    let (ft, fv, fs) = fractions;
    if [ft, fv, fs].iter().any(|f| !(0.0..=1.0).contains(f)) || ((ft + fv + fs) - 1.0).abs() > 1e-9 {
        return Err(Error::Argument(format!("split fractions {fractions:?} must sum to 1")));
    }
    let mut relations = Vec::with_capacity(graph.n_relations());
    for r in graph.relation_ids() {
        let rel = &graph.relations[r.0];
        let mut edges = graph.edges(r);
        let m = edges.len();
        if m < 3 {
            if rel.family == RelationFamily::SideEffect {
                return Err(Error::Split {
                    relation: rel.label().to_string(),
                    reason: format!("{m} edges, need at least 3"),
                });
            }
            relations.push(RelationSplit {
                train_pos: edges,
                ..Default::default()
            });
            continue;
        }
        let mut rng = stream(seed, "split", r.0 as u64);
        edges.shuffle(&mut rng);
        let n_val = fold_size(m, fv);
        let n_test = fold_size(m, fs);
        let val_pos = edges[..n_val].to_vec();
        let test_pos = edges[n_val..n_val + n_test].to_vec();
        let train_pos = edges[n_val + n_test..].to_vec();

        let mut neg_rng = stream(seed, "eval-negatives", r.0 as u64);
        let mut draw = |count: usize| -> Result<Vec<(usize, usize)>> {
            (0..count)
                .map(|_| {
                    sample_non_edge(graph, r, &mut neg_rng).ok_or_else(|| Error::Split {
                        relation: rel.label().to_string(),
                        reason: "no non-edges left to sample negatives from".into(),
                    })
                })
                .collect()
        };
        let val_neg = draw(val_pos.len())?;
        let test_neg = draw(test_pos.len())?;
        relations.push(RelationSplit {
            train_pos,
            val_pos,
            test_pos,
            val_neg,
            test_neg,
        });
    }
    Ok(EdgeSplit { seed, relations })
}

impl EdgeSplit {
    pub fn relation(&self, r: RelationId) -> &RelationSplit {
        &self.relations[r.0]
    }

    /// Graph restricted to training edges; message passing never sees
    /// validation or test edges.
    pub fn training_graph(&self, graph: &MultimodalGraph) -> MultimodalGraph {
        let edges: Vec<_> = self.relations.iter().map(|s| s.train_pos.clone()).collect();
        graph.with_edges(&edges)
    }

    /// Keep only `keep` training edges of `relation`, chosen under `seed`.
    pub fn downsample_train(&mut self, relation: RelationId, keep: usize, seed: u64) {
        let split = &mut self.relations[relation.0];
        if split.train_pos.len() <= keep {
            return;
        }
        let mut rng = stream(seed, "downsample", relation.0 as u64);
        split.train_pos.shuffle(&mut rng);
        split.train_pos.truncate(keep);
        split.train_pos.sort_unstable();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::{combo, s};
    use crate::graph::{build_graph, GraphInput};
    use std::collections::BTreeSet;

    fn chain(n_edges: usize) -> MultimodalGraph {
        let combos = (0..n_edges).map(|k| combo(&format!("D{k}"), &format!("D{}", k + 1), "X")).collect();
        build_graph(
            &GraphInput {
                combos,
                ppi: vec![(s("P0"), s("P1")), (s("P1"), s("P2")), (s("P2"), s("P3"))],
                ..Default::default()
            },
            0,
        )
        .unwrap()
        .0
    }

    #[test]
    fn ten_edges_split_eight_one_one() {
        let g = chain(10);
        let sp = split_edges(&g, (0.8, 0.1, 0.1), 3).unwrap();
        let r = sp.relation(RelationId(2));
        assert_eq!((r.train_pos.len(), r.val_pos.len(), r.test_pos.len()), (8, 1, 1));
        assert_eq!(r.val_neg.len(), 1);
        assert_eq!(r.test_neg.len(), 1);
    }

    #[test]
    fn three_edges_clamp_to_one_each() {
        let g = chain(3);
        let sp = split_edges(&g, (0.8, 0.1, 0.1), 3).unwrap();
        let r = sp.relation(RelationId(2));
        assert_eq!((r.train_pos.len(), r.val_pos.len(), r.test_pos.len()), (1, 1, 1));
    }

    #[test]
    fn too_few_side_effect_edges_is_an_error() {
        let g = chain(2);
        match split_edges(&g, (0.8, 0.1, 0.1), 3) {
            Err(Error::Split { relation, .. }) => assert_eq!(relation, "X"),
            other => panic!("expected split error, got {other:?}"),
        }
    }

    #[test]
    fn deterministic_and_partitioning() {
        let g = chain(40);
        let a = split_edges(&g, (0.8, 0.1, 0.1), 11).unwrap();
        let b = split_edges(&g, (0.8, 0.1, 0.1), 11).unwrap();
        assert_eq!(a, b);
        let c = split_edges(&g, (0.8, 0.1, 0.1), 12).unwrap();
        assert_ne!(a, c);
        for r in g.relation_ids() {
            let sp = a.relation(r);
            let mut all: Vec<_> = sp.train_pos.iter().chain(&sp.val_pos).chain(&sp.test_pos).copied().collect();
            let n = all.len();
            all.sort_unstable();
            all.dedup();
            assert_eq!(n, all.len());
            assert_eq!(all, g.edges(r));
            for &(i, j) in sp.val_neg.iter().chain(&sp.test_neg) {
                assert!(i < j);
                assert!(!g.has_edge(r, i, j));
            }
        }
    }

    #[test]
    fn training_graph_hides_held_out_edges() {
        let g = chain(20);
        let sp = split_edges(&g, (0.8, 0.1, 0.1), 5).unwrap();
        let tg = sp.training_graph(&g);
        let r = RelationId(2);
        let train: BTreeSet<_> = sp.relation(r).train_pos.iter().copied().collect();
        assert_eq!(tg.edges(r).into_iter().collect::<BTreeSet<_>>(), train);
        for &(i, j) in &sp.relation(r).test_pos {
            assert!(!tg.has_edge(r, i, j));
        }
    }
}
