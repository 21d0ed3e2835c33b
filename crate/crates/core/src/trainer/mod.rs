//! Negative-sampling training loop shared by the main model and the
//! factorization baselines.
//!
//! Every positive edge `(i, r, j)` contributes
//! `−log σ(g(i,r,j)) − mean_n log(1 − σ(g(i,r,n)))`, with `n` drawn
//! uniformly from admissible replacements of `j`. A batch sums its
//! contributions; Adam steps once per batch.

mod model;
mod sampler;

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::decoder::EdgeScorer;
use crate::diffmath::{adam_step, AdamConfig, ParamStore, Tape, Var};
use crate::encoder::LayerSpec;
use crate::error::{Error, Result};
use crate::graph::{EdgeSplit, Fold, RelationId};
use crate::metrics::evaluate_relations;
use crate::rng::{stream, Rng};
use crate::scalar::{sigmoid, Scalar};

pub use model::{GraphModel, LinkModel, PairGroup};
pub use sampler::NegativeSampler;

pub const PROB_FLOOR: f64 = 1e-12;

/// Quantity watched by early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StopOn {
    #[default]
    ValLoss,
    /// One minus the macro validation AUPRC over side effects.
    ValAuprc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub early_stop_window: usize,
    pub negatives_per_positive: usize,
    pub seed: u64,
    pub hidden_dims: Vec<usize>,
    pub final_activation: bool,
    pub stop_on: StopOn,
    /// Factor width of the RESCAL and DEDICOM baselines.
    pub baseline_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            max_epochs: 100,
            batch_size: 512,
            dropout: 0.1,
            early_stop_window: 2,
            negatives_per_positive: 1,
            seed: 0,
            hidden_dims: vec![64, 32],
            final_activation: true,
            stop_on: StopOn::ValLoss,
            baseline_dim: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Argument(m.to_string()));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be a non-negative number");
        }
        if self.max_epochs == 0 || self.batch_size == 0 || self.early_stop_window == 0 {
            return bad("max_epochs, batch_size and early_stop_window must be positive");
        }
        if self.negatives_per_positive == 0 {
            return bad("negatives_per_positive must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) || self.baseline_dim == 0 {
            return bad("layer widths must be positive");
        }
        Ok(())
    }

    pub fn layer_spec(&self) -> LayerSpec {
        LayerSpec {
            hidden: self.hidden_dims.clone(),
            final_activation: self.final_activation,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

/// `−log p_pos − log(1 − p_neg)` with both probabilities clamped to
/// `[1e-12, 1 − 1e-12]`.
pub fn edge_loss(p_pos: f64, p_neg: f64) -> f64 {
    let c = |p: f64| p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    -c(p_pos).ln() - (1.0 - c(p_neg)).ln()
}

/// Window rule: stop once `window` consecutive epochs each fail to improve
/// on the best value seen so far.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub window: usize,
    pub best: Option<(usize, f64)>,
    pub strikes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(window: usize) -> Self {
        EarlyStopping {
            window,
            best: None,
            strikes: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, value: f64) -> Observation {
        let improved = match self.best {
            None => true,
            Some((_, b)) => value < b,
        };
        if improved {
            self.best = Some((epoch, value));
            self.strikes = 0;
        } else {
            self.strikes += 1;
        }
        Observation {
            improved,
            stop: self.strikes >= self.window,
        }
    }
}

/// One positive edge with its sampled replacements for `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contribution {
    pub relation: RelationId,
    pub i: usize,
    pub j: usize,
    pub negatives: Vec<usize>,
}

fn log_clamped<T: Scalar>(tape: &mut Tape<T>, p: Var) -> Var {
    let c = tape.clamp(p, T::of(PROB_FLOOR), T::one() - T::of(PROB_FLOOR));
    tape.log(c)
}

/// Summed loss of `batch`, recorded on `tape`. Every contribution must
/// carry the same number of negatives.
pub fn batch_objective<T: Scalar, M: LinkModel<T> + ?Sized>(
    tape: &mut Tape<T>,
    model: &M,
    store: &ParamStore<T>,
    batch: &[Contribution],
    dropout: Option<(f64, &mut Rng)>,
) -> Result<Var> {
    let k = batch.first().map_or(1, |c| c.negatives.len());
    if k == 0 || batch.iter().any(|c| c.negatives.len() != k) {
        return Err(Error::Contract("contributions need equal, non-zero negative counts".into()));
    }
    let mut grouped: BTreeMap<RelationId, (Vec<(usize, usize)>, Vec<(usize, usize)>)> = BTreeMap::new();
    for c in batch {
        let g = grouped.entry(c.relation).or_default();
        g.0.push((c.i, c.j));
        g.1.extend(c.negatives.iter().map(|&n| (c.i, n)));
    }
    let mut groups: Vec<PairGroup<'_>> = Vec::with_capacity(2 * grouped.len());
    for (&r, (pos, neg)) in &grouped {
        groups.push((r, pos));
        groups.push((r, neg));
    }
    let raw = model.record(tape, store, &groups, dropout)?;
    let inv_k = T::one() / T::of(k as f64);
    let mut total: Option<Var> = None;
    for pair in raw.chunks(2) {
        let p = tape.sigmoid(pair[0]);
        let lp = log_clamped(tape, p);
        let pos = tape.sum(lp);
        let q = tape.sigmoid(pair[1]);
        let one_minus = tape.affine(q, -T::one(), T::one());
        let lq = log_clamped(tape, one_minus);
        let neg = tape.sum(lq);
        let neg = tape.scale(neg, inv_k);
        let both = tape.add(pos, neg)?;
        total = Some(match total {
            None => both,
            Some(t) => tape.add(t, both)?,
        });
    }
    let total = match total {
        Some(t) => t,
        None => tape.constant(crate::diffmath::Tensor::scalar(T::zero())),
    };
    Ok(tape.scale(total, -T::one()))
}

/// Mean edge loss over validation positives paired index-wise with their
/// frozen negatives.
pub fn validation_loss<T: Scalar, S: EdgeScorer<T> + ?Sized>(
    scorer: &S,
    split: &EdgeSplit,
    relations: &[RelationId],
) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for &r in relations {
        let rs = split.relation(r);
        for (&(i, j), &(a, b)) in rs.val_pos.iter().zip(&rs.val_neg) {
            let p = sigmoid(scorer.raw(r, i, j).as_f64());
            let q = sigmoid(scorer.raw(r, a, b).as_f64());
            total += edge_loss(p, q);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Argument("validation set is empty".into()));
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss per positive contribution.
    pub train_loss: f64,
    pub val_loss: f64,
    /// Value watched by early stopping (equals `val_loss` by default).
    pub monitored: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainState {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_value: f64,
    pub stopped_early: bool,
    /// Positive edges skipped because no admissible negative existed.
    pub skipped_edges: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters of the best epoch.
    pub store: ParamStore<T>,
    pub state: TrainState,
}

/// Where training starts from.
pub enum Start<T> {
    Fresh,
    /// Continue from stored parameters; `epoch` is the last completed one.
    Resume { store: ParamStore<T>, epoch: usize },
}

/// Sampled contributions for one epoch, in shuffled order.
pub fn epoch_contributions<T: Scalar, M: LinkModel<T> + ?Sized>(
    model: &M,
    split: &EdgeSplit,
    cfg: &TrainConfig,
    epoch: usize,
    skipped: &mut usize,
) -> Vec<Contribution> {
    let mut edges: Vec<(RelationId, usize, usize)> = model
        .relations()
        .iter()
        .flat_map(|&r| split.relation(r).train_pos.iter().map(move |&(i, j)| (r, i, j)))
        .collect();
    edges.shuffle(&mut stream(cfg.seed, "epoch-order", epoch as u64));
    let sampler = NegativeSampler::new(model.graph());
    let mut rng = stream(cfg.seed, "negatives", epoch as u64);
    let mut out = Vec::with_capacity(edges.len());
    for (relation, i, j) in edges {
        let negatives: Option<Vec<usize>> = (0..cfg.negatives_per_positive)
            .map(|_| sampler.sample(relation, i, &mut rng))
            .collect();
        match negatives {
            Some(negatives) => out.push(Contribution {
                relation,
                i,
                j,
                negatives,
            }),
            None => *skipped += 1,
        }
    }
    out
}

fn monitored<T: Scalar, M: LinkModel<T> + ?Sized>(
    model: &M,
    store: &ParamStore<T>,
    split: &EdgeSplit,
    cfg: &TrainConfig,
) -> Result<(f64, f64)> {
    let scorer = model.scorer(store)?;
    let val_loss = validation_loss(scorer.as_ref(), split, model.relations())?;
    let value = match cfg.stop_on {
        StopOn::ValLoss => val_loss,
        StopOn::ValAuprc => {
            let se: Vec<RelationId> = model
                .relations()
                .iter()
                .copied()
                .filter(|&r| model.graph().side_effect_slot(r).is_some())
                .collect();
            let report = evaluate_relations(model.graph(), split, scorer.as_ref(), Fold::Val, &se)?;
            1.0 - report.macro_avg.auprc
        }
    };
    Ok((val_loss, value))
}

pub fn train<T: Scalar, M: LinkModel<T> + ?Sized>(
    model: &M,
    split: &EdgeSplit,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    train_with(model, split, cfg, Start::Fresh, &mut |_| {})
}

/// Full training run; `observer` sees every finished epoch.
pub fn train_with<T: Scalar, M: LinkModel<T> + ?Sized>(
    model: &M,
    split: &EdgeSplit,
    cfg: &TrainConfig,
    start: Start<T>,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let n_train: usize = model.relations().iter().map(|&r| split.relation(r).train_pos.len()).sum();
    if n_train == 0 {
        return Err(Error::Argument("no training edges".into()));
    }
    let adam = cfg.adam();
    let mut stopper = EarlyStopping::new(cfg.early_stop_window);
    let (mut store, first_epoch) = match start {
        Start::Fresh => {
            let mut store = ParamStore::new();
            model.init_params(&mut store, cfg.seed)?;
            (store, 1)
        }
        Start::Resume { store, epoch } => {
            let (_, value) = monitored(model, &store, split, cfg)?;
            stopper.best = Some((epoch, value));
            (store, epoch + 1)
        }
    };
    let mut best = store.clone();
    let mut state = TrainState::default();

    for epoch in first_epoch..=cfg.max_epochs {
        let clock = Instant::now();
        let contributions = epoch_contributions(model, split, cfg, epoch, &mut state.skipped_edges);
        let mut drop_rng = stream(cfg.seed, "dropout", epoch as u64);
        let mut epoch_loss = 0.0;
        for (b, batch) in contributions.chunks(cfg.batch_size).enumerate() {
            let mut tape = Tape::new();
            let dropout = (cfg.dropout > 0.0).then_some((cfg.dropout, &mut drop_rng));
            let loss = batch_objective(&mut tape, model, &store, batch, dropout)?;
            let value = tape.value(loss).get(0, 0).as_f64();
            if !value.is_finite() {
                return Err(Error::Numeric(format!("loss at epoch {epoch}, batch {}: {value}", b + 1)));
            }
            epoch_loss += value;
            tape.backward(loss, &mut store)?;
            adam_step(&mut store, &adam)
                .map_err(|e| Error::Numeric(format!("epoch {epoch}, batch {}: {e}", b + 1)))?;
        }
        let (val_loss, value) = monitored(model, &store, split, cfg)?;
        let record = EpochRecord {
            epoch,
            train_loss: epoch_loss / contributions.len().max(1) as f64,
            val_loss,
            monitored: value,
            seconds: clock.elapsed().as_secs_f64(),
        };
        observer(&record);
        state.epochs.push(record);
        let obs = stopper.observe(epoch, value);
        if obs.improved {
            best = store.clone();
        }
        if obs.stop {
            state.stopped_early = true;
            break;
        }
    }
    let (best_epoch, best_value) = stopper.best.unwrap_or((first_epoch.saturating_sub(1), f64::NAN));
    state.best_epoch = best_epoch;
    state.best_value = best_value;
    Ok(TrainOutcome { store: best, state })
}
