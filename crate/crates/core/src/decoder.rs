//! Edge decoder. Drug pairs are scored through a shared global interaction
//! matrix scaled by a per-side-effect diagonal,
//! `g = z_iᵀ D_r R_sym D_r z_j`; protein pairs and drug-target pairs use a
//! bilinear form `z_iᵀ M_r z_j`. Probabilities are `σ(g)`.
//!
//! `R` and the protein-protein `M` enter in symmetrised form `(A + Aᵀ)/2`,
//! so undirected relations score identically in both orientations.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::diffmath::{glorot_uniform, ParamStore, Tape, Tensor, Var};
use crate::encoder::NodeEmbeddings;
use crate::error::{Error, Result};
use crate::graph::{MultimodalGraph, NodeRef, RelationFamily, RelationId};
use crate::rng::Rng;
use crate::scalar::{sigmoid, Scalar};

pub const R_NAME: &str = "dec.R";
pub const D_NAME: &str = "dec.D";
pub const M_PPI_NAME: &str = "dec.M.ppi";
pub const M_DT_NAME: &str = "dec.M.dt";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeScore<T> {
    pub raw: T,
    pub prob: T,
}

impl<T: Scalar> EdgeScore<T> {
    pub fn from_raw(raw: T) -> Self {
        EdgeScore { raw, prob: sigmoid(raw) }
    }
}

/// Which decoder branch a relation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Row of `D` holding this side effect's diagonal.
    SideEffect(usize),
    ProteinProtein,
    DrugTarget,
}

impl Head {
    pub fn of(graph: &MultimodalGraph, relation: RelationId) -> Result<Head> {
        Ok(match graph.relation(relation)?.family {
            RelationFamily::SideEffect => Head::SideEffect(relation.0 - 2),
            RelationFamily::ProteinProtein => Head::ProteinProtein,
            RelationFamily::DrugTarget => Head::DrugTarget,
        })
    }
}

/// `(A + Aᵀ) / 2`.
pub fn symmetrize<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    let half = T::of(0.5);
    Tensor::from_fn(a.rows(), a.cols(), |i, j| (a.get(i, j) + a.get(j, i)) * half)
}

/// `Σ_a Σ_b u_a S_ab v_b` for symmetric `S`, summed so that swapping `u`
/// and `v` gives a bit-identical result.
pub fn symmetric_form<T: Scalar>(u: &[T], s: &Tensor<T>, v: &[T]) -> T {
    let d = u.len();
    let mut g = T::zero();
    for a in 0..d {
        g += s.get(a, a) * (u[a] * v[a]);
        for b in a + 1..d {
            g += s.get(a, b) * (u[a] * v[b] + u[b] * v[a]);
        }
    }
    g
}

/// `uᵀ M v` by plain loops.
pub fn bilinear<T: Scalar>(u: &[T], m: &Tensor<T>, v: &[T]) -> T {
    let mut g = T::zero();
    for (a, &ua) in u.iter().enumerate() {
        let row = m.row(a);
        g += ua * row.iter().zip(v).map(|(&x, &y)| x * y).sum::<T>();
    }
    g
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams<T> {
    pub r: Tensor<T>,
    /// One row per side effect: the diagonal of `D_r`.
    pub d: Tensor<T>,
    pub m_ppi: Tensor<T>,
    pub m_dt: Tensor<T>,
}

impl<T: Scalar> DecoderParams<T> {
    pub fn from_store(store: &ParamStore<T>) -> Result<Self> {
        Ok(DecoderParams {
            r: store.get(R_NAME)?.clone(),
            d: store.get(D_NAME)?.clone(),
            m_ppi: store.get(M_PPI_NAME)?.clone(),
            m_dt: store.get(M_DT_NAME)?.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.r.rows()
    }

    /// Glorot-initialised decoder parameters; the diagonals use the same
    /// bound with `fan_in = fan_out = d`.
    pub fn init(store: &mut ParamStore<T>, n_side_effects: usize, dim: usize, rng: &mut Rng) -> Result<()> {
        store.insert(R_NAME, glorot_uniform(dim, dim, dim, dim, rng)?)?;
        store.insert(D_NAME, glorot_uniform(n_side_effects, dim, dim, dim, rng)?)?;
        store.insert(M_PPI_NAME, glorot_uniform(dim, dim, dim, dim, rng)?)?;
        store.insert(M_DT_NAME, glorot_uniform(dim, dim, dim, dim, rng)?)?;
        Ok(())
    }

    pub fn score(&self, head: Head, z_i: &[T], z_j: &[T]) -> Result<EdgeScore<T>> {
        let d = self.dim();
        if z_i.len() != d || z_j.len() != d {
            return Err(Error::Contract(format!(
                "embedding lengths {} and {} for decoder width {d}",
                z_i.len(),
                z_j.len()
            )));
        }
        let raw = match head {
            Head::SideEffect(slot) => {
                if slot >= self.d.rows() {
                    return Err(Error::Lookup(format!("side effect slot {slot}")));
                }
                let diag = self.d.row(slot);
                let u: Vec<T> = z_i.iter().zip(diag).map(|(&a, &b)| a * b).collect();
                let v: Vec<T> = z_j.iter().zip(diag).map(|(&a, &b)| a * b).collect();
                symmetric_form(&u, &symmetrize(&self.r), &v)
            }
            Head::ProteinProtein => symmetric_form(z_i, &symmetrize(&self.m_ppi), z_j),
            Head::DrugTarget => bilinear(z_i, &self.m_dt, z_j),
        };
        Ok(EdgeScore::from_raw(raw))
    }

    /// Score with endpoint-kind checking. Drug-target is scored drug first.
    pub fn score_nodes(
        &self,
        graph: &MultimodalGraph,
        emb: &NodeEmbeddings<T>,
        relation: RelationId,
        i: NodeRef,
        j: NodeRef,
    ) -> Result<EdgeScore<T>> {
        let (src, dst) = graph.relation(relation)?.endpoint_kinds();
        if i.kind != src || j.kind != dst {
            return Err(Error::Contract(format!(
                "relation #{} expects ({}, {}) endpoints, got ({}, {})",
                relation.0,
                src.as_str(),
                dst.as_str(),
                i.kind.as_str(),
                j.kind.as_str()
            )));
        }
        self.score(Head::of(graph, relation)?, emb.get(i), emb.get(j))
    }
}

/// Record raw scores for `(i_k, j_k)` pairs of one relation on the tape.
/// `zi`/`zj` are the source- and destination-kind embedding matrices.
pub fn record_scores<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    head: Head,
    zi: Var,
    zj: Var,
    pairs: &[(usize, usize)],
) -> Result<Var> {
    let left: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let right: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let mut a = tape.gather_rows(zi, left)?;
    let mut b = tape.gather_rows(zj, right)?;
    let core = match head {
        Head::SideEffect(slot) => {
            let d = tape.param(store, store.id(D_NAME)?);
            let diag = tape.gather_rows(d, vec![slot; pairs.len()])?;
            a = tape.mul(a, diag)?;
            b = tape.mul(b, diag)?;
            symmetric_param(tape, store, R_NAME)?
        }
        Head::ProteinProtein => symmetric_param(tape, store, M_PPI_NAME)?,
        Head::DrugTarget => tape.param(store, store.id(M_DT_NAME)?),
    };
    let left = tape.matmul(a, core)?;
    tape.row_dot(left, b)
}

/// `(A + Aᵀ)/2` of a stored parameter, recorded on the tape.
pub fn symmetric_param<T: Scalar>(tape: &mut Tape<T>, store: &ParamStore<T>, name: &str) -> Result<Var> {
    let a = tape.param(store, store.id(name)?);
    let at = tape.transpose(a);
    let s = tape.add(a, at)?;
    Ok(tape.scale(s, T::of(0.5)))
}

/// Anything that assigns a raw score to a candidate edge.
pub trait EdgeScorer<T: Scalar>: Sync {
    fn raw(&self, relation: RelationId, i: usize, j: usize) -> T;

    fn prob(&self, relation: RelationId, i: usize, j: usize) -> T {
        sigmoid(self.raw(relation, i, j))
    }

    /// Raw scores of `(i, j)` for every `j` of the destination kind.
    fn raw_row(&self, relation: RelationId, i: usize, out: &mut [T]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.raw(relation, i, j);
        }
    }
}

#[derive(Debug, Clone)]
struct RelationForm<T> {
    /// Diagonal applied to both embeddings (side effects only).
    diag: Option<Vec<T>>,
    core: Tensor<T>,
    symmetric: bool,
    /// Dense `diag · core · diag`, used for whole-row scoring.
    full: Tensor<T>,
}

/// Scorer over trained embeddings and decoder parameters.
#[derive(Debug, Clone)]
pub struct EmbeddingScorer<T> {
    pub embeddings: NodeEmbeddings<T>,
    src_kind: Vec<crate::graph::NodeKind>,
    dst_kind: Vec<crate::graph::NodeKind>,
    forms: Vec<RelationForm<T>>,
}

impl<T: Scalar> EmbeddingScorer<T> {
    pub fn new(graph: &MultimodalGraph, embeddings: NodeEmbeddings<T>, params: &DecoderParams<T>) -> Result<Self> {
        let r_sym = symmetrize(&params.r);
        let m_sym = symmetrize(&params.m_ppi);
        let mut forms = Vec::new();
        let mut src_kind = Vec::new();
        let mut dst_kind = Vec::new();
        for rel in graph.relation_ids() {
            let (s, d) = graph.relation(rel)?.endpoint_kinds();
            src_kind.push(s);
            dst_kind.push(d);
            let form = match Head::of(graph, rel)? {
                Head::SideEffect(slot) => {
                    let diag = params.d.row(slot).to_vec();
                    let full = Tensor::from_fn(r_sym.rows(), r_sym.cols(), |a, b| diag[a] * r_sym.get(a, b) * diag[b]);
                    RelationForm {
                        diag: Some(diag),
                        core: r_sym.clone(),
                        symmetric: true,
                        full,
                    }
                }
                Head::ProteinProtein => RelationForm {
                    diag: None,
                    core: m_sym.clone(),
                    symmetric: true,
                    full: m_sym.clone(),
                },
                Head::DrugTarget => RelationForm {
                    diag: None,
                    core: params.m_dt.clone(),
                    symmetric: false,
                    full: params.m_dt.clone(),
                },
            };
            forms.push(form);
        }
        Ok(EmbeddingScorer {
            embeddings,
            src_kind,
            dst_kind,
            forms,
        })
    }
}

impl<T: Scalar> EdgeScorer<T> for EmbeddingScorer<T> {
    fn raw(&self, relation: RelationId, i: usize, j: usize) -> T {
        let f = &self.forms[relation.0];
        let zi = self.embeddings.of(self.src_kind[relation.0]).row(i);
        let zj = self.embeddings.of(self.dst_kind[relation.0]).row(j);
        match (&f.diag, f.symmetric) {
            (Some(diag), _) => {
                let u: Vec<T> = zi.iter().zip(diag).map(|(&a, &b)| a * b).collect();
                let v: Vec<T> = zj.iter().zip(diag).map(|(&a, &b)| a * b).collect();
                symmetric_form(&u, &f.core, &v)
            }
            (None, true) => symmetric_form(zi, &f.core, zj),
            (None, false) => bilinear(zi, &f.core, zj),
        }
    }

    fn raw_row(&self, relation: RelationId, i: usize, out: &mut [T]) {
        let f = &self.forms[relation.0];
        let zi = self.embeddings.of(self.src_kind[relation.0]).row(i);
        let zd = self.embeddings.of(self.dst_kind[relation.0]);
        let d = zi.len();
        let w: Vec<T> = (0..d)
            .map(|b| (0..d).map(|a| zi[a] * f.full.get(a, b)).sum())
            .collect();
        for (j, o) in out.iter_mut().enumerate() {
            *o = zd.row(j).iter().zip(&w).map(|(&x, &y)| x * y).sum();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub relation: RelationId,
    pub i: usize,
    pub j: usize,
    pub prob: f64,
}

/// Heap entry ordered so that the *worst* prediction is the heap maximum.
struct Worst(Prediction);

impl PartialEq for Worst {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Worst {}
impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        rank_order(&self.0, &other.0)
    }
}

/// Ranking order: higher probability first, then `(relation, i, j)` ascending.
pub fn rank_order(a: &Prediction, b: &Prediction) -> Ordering {
    b.prob
        .total_cmp(&a.prob)
        .then(a.relation.cmp(&b.relation))
        .then(a.i.cmp(&b.i))
        .then(a.j.cmp(&b.j))
}

/// Top-`k` candidate edges over all canonical pairs of the given relations,
/// skipping pairs for which `exclude` returns true.
pub fn score_all_pairs<T: Scalar, S: EdgeScorer<T> + ?Sized>(
    scorer: &S,
    graph: &MultimodalGraph,
    relations: &[RelationId],
    exclude: impl Fn(RelationId, usize, usize) -> bool,
    k: usize,
) -> Result<Vec<Prediction>> {
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    let mut heap: BinaryHeap<Worst> = BinaryHeap::with_capacity(k + 1);
    for &r in relations {
        let rel = graph.relation(r)?;
        let (src, dst) = rel.endpoint_kinds();
        let n_dst = graph.n_nodes(dst);
        let mut row = vec![T::zero(); n_dst];
        for i in 0..graph.n_nodes(src) {
            scorer.raw_row(r, i, &mut row);
            let start = if rel.symmetric { i + 1 } else { 0 };
            for (j, &raw) in row.iter().enumerate().skip(start) {
                if exclude(r, i, j) {
                    continue;
                }
                let cand = Prediction {
                    relation: r,
                    i,
                    j,
                    prob: sigmoid(raw).as_f64(),
                };
                if heap.len() < k {
                    heap.push(Worst(cand));
                } else if rank_order(&cand, &heap.peek().expect("non-empty").0) == Ordering::Less {
                    heap.pop();
                    heap.push(Worst(cand));
                }
            }
        }
    }
    let mut out: Vec<Prediction> = heap.into_iter().map(|w| w.0).collect();
    out.sort_by(rank_order);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::{combo, star};
    use crate::graph::{build_graph, GraphInput, NodeKind};
    use crate::rng::stream;
    use rand::Rng as _;

    fn random_params(d: usize, n_se: usize, seed: u64) -> DecoderParams<f64> {
        let mut rng = stream(seed, "dec-test", 0);
        let mut m = |r, c| Tensor::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
        DecoderParams {
            r: m(d, d),
            d: m(n_se, d),
            m_ppi: m(d, d),
            m_dt: m(d, d),
        }
    }

    fn triple_loop(zi: &[f64], diag: &[f64], r: &Tensor<f64>, zj: &[f64]) -> f64 {
        let d = zi.len();
        let mut g = 0.0;
        for a in 0..d {
            for b in 0..d {
                let rs = 0.5 * (r.get(a, b) + r.get(b, a));
                g += zi[a] * diag[a] * rs * diag[b] * zj[b];
            }
        }
        g
    }

    #[test]
    fn zero_embedding_scores_half() {
        let p = random_params(4, 2, 1);
        let s = p.score(Head::SideEffect(1), &[0.0; 4], &[0.3, 0.1, -0.2, 0.9]).unwrap();
        assert_eq!(s.raw, 0.0);
        assert_eq!(s.prob, 0.5);
    }

    #[test]
    fn identities_give_sigma_one() {
        let d = 3;
        let p: DecoderParams<f64> = DecoderParams {
            r: Tensor::identity(d),
            d: Tensor::filled(1, d, 1.0),
            m_ppi: Tensor::identity(d),
            m_dt: Tensor::identity(d),
        };
        let e1 = [1.0, 0.0, 0.0];
        let s = p.score(Head::SideEffect(0), &e1, &e1).unwrap();
        assert_eq!(s.raw, 1.0);
        assert!((s.prob - 0.731_06).abs() < 1e-5);
    }

    #[test]
    fn symmetric_and_matches_triple_loop() {
        let mut rng = stream(2, "dec-test-z", 0);
        for seed in 0..50 {
            let p = random_params(4, 3, seed);
            let zi: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let zj: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            for slot in 0..3 {
                let a = p.score(Head::SideEffect(slot), &zi, &zj).unwrap();
                let b = p.score(Head::SideEffect(slot), &zj, &zi).unwrap();
                assert_eq!(a.raw, b.raw);
                let want = triple_loop(&zi, p.d.row(slot), &p.r, &zj);
                assert!((a.raw - want).abs() < 1e-12);
            }
            let a = p.score(Head::ProteinProtein, &zi, &zj).unwrap();
            let b = p.score(Head::ProteinProtein, &zj, &zi).unwrap();
            assert_eq!(a.raw, b.raw);
        }
    }

    #[test]
    fn unit_diagonals_share_the_global_model() {
        let mut p = random_params(4, 3, 9);
        p.d = Tensor::filled(3, 4, 1.0);
        let zi = [0.3, -0.2, 0.5, 1.0];
        let zj = [0.1, 0.7, -0.4, 0.2];
        let s0 = p.score(Head::SideEffect(0), &zi, &zj).unwrap();
        for slot in 1..3 {
            assert_eq!(p.score(Head::SideEffect(slot), &zi, &zj).unwrap(), s0);
        }
    }

    #[test]
    fn kind_mismatch_is_contract_error() {
        let g = star();
        let p = random_params(2, g.n_side_effects(), 3);
        let emb = NodeEmbeddings {
            drug: Tensor::filled(g.n_nodes(NodeKind::Drug), 2, 0.5),
            protein: Tensor::filled(g.n_nodes(NodeKind::Protein), 2, 0.5),
        };
        let err = p
            .score_nodes(&g, &emb, RelationId(2), NodeRef::drug(0), NodeRef::protein(0))
            .unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
        assert!(p.score_nodes(&g, &emb, RelationId(1), NodeRef::drug(0), NodeRef::protein(1)).is_ok());
    }

    #[test]
    fn tape_scores_match_direct_scores() {
        let p = random_params(3, 2, 4);
        let mut store = ParamStore::new();
        store.insert(R_NAME, p.r.clone()).unwrap();
        store.insert(D_NAME, p.d.clone()).unwrap();
        store.insert(M_PPI_NAME, p.m_ppi.clone()).unwrap();
        store.insert(M_DT_NAME, p.m_dt.clone()).unwrap();
        let z = Tensor::from_fn(4, 3, |i, j| ((i * 3 + j) as f64).cos());
        let mut tape = Tape::new();
        let zv = tape.constant(z.clone());
        let pairs = [(0, 1), (2, 3), (1, 3)];
        for head in [Head::SideEffect(1), Head::ProteinProtein, Head::DrugTarget] {
            let g = record_scores(&mut tape, &store, head, zv, zv, &pairs).unwrap();
            for (k, &(i, j)) in pairs.iter().enumerate() {
                let want = p.score(head, z.row(i), z.row(j)).unwrap().raw;
                assert!((tape.value(g).get(k, 0) - want).abs() < 1e-12);
            }
        }
    }

    fn three_drug_graph() -> MultimodalGraph {
        let input = GraphInput {
            combos: vec![combo("A", "B", "X"), combo("B", "C", "X"), combo("A", "C", "X")],
            ..Default::default()
        };
        build_graph(&input, 0).unwrap().0
    }

    #[test]
    fn everything_excluded_gives_empty_list() {
        let g = three_drug_graph();
        let p = random_params(2, 1, 5);
        let emb = NodeEmbeddings {
            drug: Tensor::filled(3, 2, 1.0),
            protein: Tensor::zeros(0, 2),
        };
        let scorer = EmbeddingScorer::new(&g, emb, &p).unwrap();
        let top = score_all_pairs(&scorer, &g, &[RelationId(2)], |_, _, _| true, 10).unwrap();
        assert!(top.is_empty());
        let top = score_all_pairs(&scorer, &g, &[RelationId(2)], |_, _, _| false, 10).unwrap();
        assert_eq!(top.len(), 3);
        // Identical embeddings tie; order falls back to (i, j).
        assert_eq!(
            top.iter().map(|p| (p.i, p.j)).collect::<Vec<_>>(),
            vec![(0, 1), (0, 2), (1, 2)]
        );
    }

    #[test]
    fn row_scoring_agrees_with_pointwise() {
        let g = star();
        let p = random_params(3, g.n_side_effects(), 6);
        let mut rng = stream(6, "emb", 0);
        let emb = NodeEmbeddings {
            drug: Tensor::from_fn(g.n_nodes(NodeKind::Drug), 3, |_, _| rng.gen_range(-1.0..1.0)),
            protein: Tensor::from_fn(g.n_nodes(NodeKind::Protein), 3, |_, _| rng.gen_range(-1.0..1.0)),
        };
        let scorer = EmbeddingScorer::new(&g, emb, &p).unwrap();
        for r in g.relation_ids() {
            let (s, d) = g.relation(r).unwrap().endpoint_kinds();
            let mut row = vec![0.0; g.n_nodes(d)];
            for i in 0..g.n_nodes(s) {
                scorer.raw_row(r, i, &mut row);
                for (j, &v) in row.iter().enumerate() {
                    assert!((v - scorer.raw(r, i, j)).abs() < 1e-12);
                }
            }
        }
    }
}
