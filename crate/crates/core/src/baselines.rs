//! Directly fitted tensor factorizations of the side-effect tensor.
//!
//! RESCAL scores `a_iᵀ T_r a_j`; DEDICOM scores `a_iᵀ U_r T U_r a_j` with a
//! shared `T` and diagonal `U_r`. Cores enter symmetrised. Both reuse the
//! main model's loss, sampler, optimizer and stopping rule.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::decoder::{symmetric_form, symmetric_param, symmetrize, EdgeScore, EdgeScorer};
use crate::diffmath::{glorot_uniform, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::{EdgeSplit, MultimodalGraph, NodeKind, RelationId};
use crate::rng::{stream, Rng};
use crate::scalar::Scalar;
use crate::trainer::{self, LinkModel, PairGroup, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Rescal,
    Dedicom,
}

impl BaselineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Rescal => "rescal",
            BaselineKind::Dedicom => "dedicom",
        }
    }
}

fn check_dims(a_i: &[f64], a_j: &[f64], d: usize) -> Result<()> {
    if a_i.len() != d || a_j.len() != d {
        return Err(Error::Contract(format!(
            "factor lengths {} and {} against core width {d}",
            a_i.len(),
            a_j.len()
        )));
    }
    Ok(())
}

/// `a_iᵀ T_sym a_j`.
pub fn rescal_score(a_i: &[f64], a_j: &[f64], t_r: &Tensor<f64>) -> Result<EdgeScore<f64>> {
    if t_r.rows() != t_r.cols() {
        return Err(Error::Contract("core must be square".into()));
    }
    check_dims(a_i, a_j, t_r.rows())?;
    Ok(EdgeScore::from_raw(symmetric_form(a_i, &symmetrize(t_r), a_j)))
}

/// `a_iᵀ U_r T_sym U_r a_j` with `U_r = diag(u_r)`.
pub fn dedicom_score(a_i: &[f64], a_j: &[f64], u_r: &[f64], t: &Tensor<f64>) -> Result<EdgeScore<f64>> {
    if t.rows() != t.cols() || u_r.len() != t.rows() {
        return Err(Error::Contract("core must be square and match the diagonal".into()));
    }
    check_dims(a_i, a_j, t.rows())?;
    let u: Vec<f64> = a_i.iter().zip(u_r).map(|(a, b)| a * b).collect();
    let v: Vec<f64> = a_j.iter().zip(u_r).map(|(a, b)| a * b).collect();
    Ok(EdgeScore::from_raw(symmetric_form(&u, &symmetrize(t), &v)))
}

pub const A_NAME: &str = "fact.A";
pub const T_SHARED_NAME: &str = "fact.T";
pub const U_NAME: &str = "fact.U";

pub fn rescal_core_name(slot: usize) -> String {
    format!("fact.T.{slot}")
}

/// Factorization model over the drug-drug side-effect relations.
#[derive(Debug, Clone)]
pub struct Factorization {
    pub kind: BaselineKind,
    pub dim: usize,
    graph: MultimodalGraph,
    relations: Vec<RelationId>,
}

impl Factorization {
    pub fn new(kind: BaselineKind, train_graph: &MultimodalGraph, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("factor width must be positive".into()));
        }
        let relations: Vec<RelationId> = train_graph.side_effect_ids().collect();
        if relations.is_empty() {
            return Err(Error::Argument("no side-effect relations to factorize".into()));
        }
        Ok(Factorization {
            kind,
            dim,
            graph: train_graph.clone(),
            relations,
        })
    }

    fn slot(&self, r: RelationId) -> Result<usize> {
        self.graph
            .side_effect_slot(r)
            .ok_or_else(|| Error::Contract(format!("relation #{} is not a side effect", r.0)))
    }
}

impl<T: Scalar> LinkModel<T> for Factorization {
    fn name(&self) -> &'static str {
        self.kind.as_str()
    }

    fn graph(&self) -> &MultimodalGraph {
        &self.graph
    }

    fn relations(&self) -> &[RelationId] {
        &self.relations
    }

    fn init_params(&self, store: &mut ParamStore<T>, seed: u64) -> Result<()> {
        let mut rng = stream(seed, "init", 0);
        let n = self.graph.n_nodes(NodeKind::Drug);
        let d = self.dim;
        store.insert(A_NAME, glorot_uniform(n, d, n, d, &mut rng)?)?;
        match self.kind {
            BaselineKind::Rescal => {
                for s in 0..self.graph.n_side_effects() {
                    store.insert(rescal_core_name(s), glorot_uniform(d, d, d, d, &mut rng)?)?;
                }
            }
            BaselineKind::Dedicom => {
                store.insert(T_SHARED_NAME, glorot_uniform(d, d, d, d, &mut rng)?)?;
                let n_se = self.graph.n_side_effects();
                store.insert(U_NAME, glorot_uniform(n_se, d, d, d, &mut rng)?)?;
            }
        }
        Ok(())
    }

    fn record(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        groups: &[PairGroup<'_>],
        _dropout: Option<(f64, &mut Rng)>,
    ) -> Result<Vec<Var>> {
        let a = tape.param(store, store.id(A_NAME)?);
        let shared = match self.kind {
            BaselineKind::Dedicom => Some(symmetric_param(tape, store, T_SHARED_NAME)?),
            BaselineKind::Rescal => None,
        };
        groups
            .iter()
            .map(|&(r, pairs)| {
                let slot = self.slot(r)?;
                let left: Vec<usize> = pairs.iter().map(|p| p.0).collect();
                let right: Vec<usize> = pairs.iter().map(|p| p.1).collect();
                let mut x = tape.gather_rows(a, left)?;
                let mut y = tape.gather_rows(a, right)?;
                let core = match shared {
                    Some(t) => {
                        let u = tape.param(store, store.id(U_NAME)?);
                        let diag = tape.gather_rows(u, vec![slot; pairs.len()])?;
                        x = tape.mul(x, diag)?;
                        y = tape.mul(y, diag)?;
                        t
                    }
                    None => symmetric_param(tape, store, &rescal_core_name(slot))?,
                };
                let xt = tape.matmul(x, core)?;
                tape.row_dot(xt, y)
            })
            .collect()
    }

    fn scorer(&self, store: &ParamStore<T>) -> Result<Box<dyn EdgeScorer<T>>> {
        let a = store.get(A_NAME)?.clone();
        let mut forms: Vec<Option<Tensor<T>>> = vec![None; self.graph.n_relations()];
        for &r in &self.relations {
            let slot = self.slot(r)?;
            forms[r.0] = Some(match self.kind {
                BaselineKind::Rescal => symmetrize(store.get(&rescal_core_name(slot))?),
                BaselineKind::Dedicom => {
                    let t = symmetrize(store.get(T_SHARED_NAME)?);
                    let u = store.get(U_NAME)?.row(slot).to_vec();
                    Tensor::from_fn(self.dim, self.dim, |x, y| u[x] * t.get(x, y) * u[y])
                }
            });
        }
        Ok(Box::new(FactorScorer { a, forms: Arc::new(forms) }))
    }
}

/// Scores `a_iᵀ S_r a_j` with a precomputed symmetric `S_r` per relation.
/// Relations without a core score zero.
#[derive(Debug, Clone)]
pub struct FactorScorer<T> {
    pub a: Tensor<T>,
    forms: Arc<Vec<Option<Tensor<T>>>>,
}

impl<T: Scalar> EdgeScorer<T> for FactorScorer<T> {
    fn raw(&self, relation: RelationId, i: usize, j: usize) -> T {
        match self.forms.get(relation.0).and_then(Option::as_ref) {
            Some(s) => symmetric_form(self.a.row(i), s, self.a.row(j)),
            None => T::zero(),
        }
    }
}

/// Train a baseline on the side-effect relations of `split`.
pub fn train_baseline<T: Scalar>(
    kind: BaselineKind,
    graph: &MultimodalGraph,
    split: &EdgeSplit,
    cfg: &TrainConfig,
) -> Result<(Factorization, TrainOutcome<T>)> {
    let model = Factorization::new(kind, &split.training_graph(graph), cfg.baseline_dim)?;
    let outcome = trainer::train(&model, split, cfg)?;
    Ok((model, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn rand_vec(rng: &mut Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn triple_loop(x: &[f64], u: &[f64], t: &Tensor<f64>, y: &[f64]) -> f64 {
        let d = x.len();
        let mut g = 0.0;
        for a in 0..d {
            for b in 0..d {
                g += x[a] * u[a] * 0.5 * (t.get(a, b) + t.get(b, a)) * u[b] * y[b];
            }
        }
        g
    }

    #[test]
    fn rescal_fixtures_and_oracle() {
        let t = Tensor::identity(3);
        assert_eq!(rescal_score(&[0.0; 3], &[1.0, 2.0, 3.0], &t).unwrap().prob, 0.5);
        assert_eq!(rescal_score(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &t).unwrap().raw, 1.0);
        let mut rng = stream(1, "rescal", 0);
        for _ in 0..20 {
            let (x, y) = (rand_vec(&mut rng, 3), rand_vec(&mut rng, 3));
            let t = Tensor::from_vec(3, 3, rand_vec(&mut rng, 9)).unwrap();
            let g = rescal_score(&x, &y, &t).unwrap().raw;
            assert!((g - triple_loop(&x, &[1.0; 3], &t, &y)).abs() < 1e-12);
        }
        assert!(rescal_score(&[1.0], &[1.0, 2.0], &Tensor::identity(2)).is_err());
    }

    #[test]
    fn dedicom_fixtures_and_oracle() {
        let mut rng = stream(2, "dedicom", 0);
        let t = Tensor::from_vec(4, 4, rand_vec(&mut rng, 16)).unwrap();
        let (x, y) = (rand_vec(&mut rng, 4), rand_vec(&mut rng, 4));
        let ident = dedicom_score(&x, &y, &[1.0; 4], &t).unwrap();
        assert_eq!(ident.raw, rescal_score(&x, &y, &t).unwrap().raw);
        assert_eq!(dedicom_score(&x, &y, &[0.0; 4], &t).unwrap().prob, 0.5);
        let u = rand_vec(&mut rng, 4);
        let g = dedicom_score(&x, &y, &u, &t).unwrap().raw;
        assert!((g - triple_loop(&x, &u, &t, &y)).abs() < 1e-12);
        assert!(dedicom_score(&x, &y, &[1.0; 3], &t).is_err());
    }
}
