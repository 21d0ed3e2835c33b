//! Exploratory statistics: target overlap, side-effect co-occurrence and
//! the relation-vector distance check.

use std::collections::{BTreeSet, HashMap};

use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{MultimodalGraph, RelationId, DRUG_TARGET};
use crate::rng::stream;

/// `|a ∩ b| / |a ∪ b|`, zero when both are empty.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Jaccard over two sorted duplicate-free slices.
pub fn jaccard_sorted(a: &[usize], b: &[usize]) -> f64 {
    let (mut x, mut y, mut inter) = (0, 0, 0);
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                x += 1;
                y += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairSource {
    /// Uniform distinct drug pairs; `count` defaults to the number of
    /// labeled drug pairs.
    RandomPairs { count: Option<usize>, seed: u64 },
    /// Drug pairs carrying at least one side effect.
    ComboPairs,
    /// Drug pairs carrying the given side effect.
    ComboPairsWith(RelationId),
}

/// Fractions of pairs with Jaccard `= 0`, in `(0, 0.5)` and in `[0.5, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JaccardStrata {
    pub n_pairs: usize,
    pub zero: f64,
    pub low: f64,
    pub high: f64,
}

impl JaccardStrata {
    fn from_values(values: impl Iterator<Item = f64>) -> Self {
        let (mut n, mut zero, mut low, mut high) = (0usize, 0usize, 0usize, 0usize);
        for v in values {
            n += 1;
            if v == 0.0 {
                zero += 1;
            } else if v < 0.5 {
                low += 1;
            } else {
                high += 1;
            }
        }
        if n == 0 {
            return JaccardStrata::default();
        }
        let f = |c: usize| c as f64 / n as f64;
        JaccardStrata {
            n_pairs: n,
            zero: f(zero),
            low: f(low),
            high: f(high),
        }
    }
}

/// Canonical drug pairs with at least one side-effect label.
pub fn labeled_pairs(graph: &MultimodalGraph) -> BTreeSet<(usize, usize)> {
    graph.side_effect_ids().flat_map(|r| graph.edges(r)).collect()
}

/// Jaccard overlap of the target sets of each pair drawn from `source`.
pub fn jaccard_values(graph: &MultimodalGraph, source: PairSource) -> Result<Vec<f64>> {
    if graph.n_edges(DRUG_TARGET) == 0 {
        return Err(Error::Argument("no drug-target edges to compare".into()));
    }
    let pairs: Vec<(usize, usize)> = match source {
        PairSource::ComboPairs => labeled_pairs(graph).into_iter().collect(),
        PairSource::ComboPairsWith(r) => {
            if graph.side_effect_slot(r).is_none() {
                return Err(Error::Lookup(format!("relation {} is not a side effect", r.0)));
            }
            graph.edges(r)
        }
        PairSource::RandomPairs { count, seed } => {
            let n = graph.n_nodes(crate::graph::NodeKind::Drug);
            if n < 2 {
                return Err(Error::Argument("random pairs need two drugs".into()));
            }
            let count = count.unwrap_or_else(|| labeled_pairs(graph).len());
            let mut rng = stream(seed, "jaccard-pairs", 0);
            (0..count)
                .map(|_| {
                    let i = rng.gen_range(0..n);
                    let mut j = rng.gen_range(0..n - 1);
                    if j >= i {
                        j += 1;
                    }
                    (i.min(j), i.max(j))
                })
                .collect()
        }
    };
    Ok(pairs
        .iter()
        .map(|&(i, j)| jaccard_sorted(graph.targets_of(i), graph.targets_of(j)))
        .collect())
}

pub fn jaccard_strata(graph: &MultimodalGraph, source: PairSource) -> Result<JaccardStrata> {
    Ok(JaccardStrata::from_values(jaccard_values(graph, source)?.into_iter()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let q = if lambda < 1.18 {
        // Theta-function form; converges fast for small arguments.
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let s: f64 = (1..=20).map(|k| (-((2 * k - 1) as f64).powi(2) * c).exp()).sum();
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum();
        2.0 * s
    };
    q.clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value at
/// effective size `n·m/(n+m)`.
pub fn ks_2sample(x: &[f64], y: &[f64]) -> Result<KsResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Argument("ks test needs two non-empty samples".into()));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::Numeric("NaN in ks sample".into()));
    }
    let mut a = x.to_vec();
    let mut b = y.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let t = a[i].min(b[j]);
        while i < n && a[i] <= t {
            i += 1;
        }
        while j < m && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_q(ne.sqrt() * d),
    })
}

/// Side-effect label sets over the universe of labeled drug pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceTable {
    pub relations: Vec<RelationId>,
    pub labels: Vec<String>,
    /// Universe size: number of drug pairs with at least one label.
    pub n_pairs: usize,
    /// Per relation, sorted indices into the pair universe.
    members: Vec<Vec<usize>>,
    /// Symmetric count matrix, `counts[a][a]` = total of `a`.
    counts: Vec<Vec<u64>>,
}

impl CooccurrenceTable {
    /// Side effects of `graph`, in relation order.
    pub fn from_graph(graph: &MultimodalGraph) -> Result<Self> {
        let mut relations = Vec::new();
        let mut labels = Vec::new();
        let mut sets = Vec::new();
        for r in graph.side_effect_ids() {
            relations.push(r);
            labels.push(graph.relation(r)?.label().to_string());
            sets.push(graph.edges(r).into_iter().collect());
        }
        Self::from_label_sets(relations, labels, sets)
    }

    pub fn from_label_sets(
        relations: Vec<RelationId>,
        labels: Vec<String>,
        sets: Vec<BTreeSet<(usize, usize)>>,
    ) -> Result<Self> {
        if relations.len() != sets.len() || labels.len() != sets.len() {
            return Err(Error::Contract("relation, label and set counts differ".into()));
        }
        let universe: BTreeSet<(usize, usize)> = sets.iter().flatten().copied().collect();
        let index: HashMap<(usize, usize), usize> = universe.iter().enumerate().map(|(k, &p)| (p, k)).collect();
        let members: Vec<Vec<usize>> = sets
            .iter()
            .map(|s| {
                let mut v: Vec<usize> = s.iter().map(|p| index[p]).collect();
                v.sort_unstable();
                v
            })
            .collect();
        let n = sets.len();
        let mut per_pair: Vec<Vec<usize>> = vec![Vec::new(); universe.len()];
        for (a, m) in members.iter().enumerate() {
            for &p in m {
                per_pair[p].push(a);
            }
        }
        let mut counts = vec![vec![0u64; n]; n];
        for ls in &per_pair {
            for &a in ls {
                for &b in ls {
                    counts[a][b] += 1;
                }
            }
        }
        Ok(CooccurrenceTable {
            relations,
            labels,
            n_pairs: universe.len(),
            members,
            counts,
        })
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn slot(&self, relation: RelationId) -> Result<usize> {
        self.relations
            .iter()
            .position(|&r| r == relation)
            .ok_or_else(|| Error::Lookup(format!("relation {} not in co-occurrence table", relation.0)))
    }

    /// Count of drug pairs labeled with both slots.
    pub fn count(&self, a: usize, b: usize) -> u64 {
        self.counts[a][b]
    }

    pub fn total(&self, a: usize) -> u64 {
        self.counts[a][a]
    }

    /// Slots by total descending, then slot ascending.
    pub fn by_frequency(&self) -> Vec<usize> {
        let mut v: Vec<usize> = (0..self.len()).collect();
        v.sort_by(|&a, &b| self.total(b).cmp(&self.total(a)).then(a.cmp(&b)));
        v
    }

    /// The `k` slots co-occurring most with `a`, ties by slot ascending.
    pub fn top_cooccurring(&self, a: usize, k: usize) -> Vec<usize> {
        let mut v: Vec<usize> = (0..self.len()).filter(|&b| b != a).collect();
        v.sort_by(|&x, &y| self.count(a, y).cmp(&self.count(a, x)).then(x.cmp(&y)));
        v.truncate(k);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Over,
    Under,
    Insignificant,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Over => "over",
            Verdict::Under => "under",
            Verdict::Insignificant => "insignificant",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairVerdict {
    pub relation: RelationId,
    pub label: String,
    pub observed: u64,
    /// Null mean `k_focus · k_r / n_pairs`.
    pub expected: f64,
    pub p_value: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermutationConfig {
    pub n_permutations: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        PermutationConfig {
            n_permutations: 1000,
            alpha: 0.05,
            seed: 0,
        }
    }
}

/// Permutation test of the co-occurrence of `focus` with each of `others`.
///
/// Under the null each relation's label set is an independent uniform
/// subset of the labeled pairs with its observed size. The two-sided
/// p-value is `(1 + #{|null − E| ≥ |obs − E|}) / (n + 1)` and significance
/// uses the Bonferroni threshold `alpha / m` over the `m` tested relations.
pub fn cooccurrence_test(
    table: &CooccurrenceTable,
    focus: RelationId,
    others: &[RelationId],
    cfg: PermutationConfig,
) -> Result<Vec<PairVerdict>> {
    if cfg.n_permutations < 100 {
        return Err(Error::Argument("at least 100 permutations required".into()));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::Argument(format!("alpha {} outside (0, 1)", cfg.alpha)));
    }
    let f = table.slot(focus)?;
    let tested: Vec<usize> = others
        .iter()
        .filter(|&&r| r != focus)
        .map(|&r| table.slot(r))
        .collect::<Result<_>>()?;
    if tested.is_empty() {
        return Ok(Vec::new());
    }
    let u = table.n_pairs;
    let kf = table.members[f].len();
    let expected: Vec<f64> = tested
        .iter()
        .map(|&b| kf as f64 * table.members[b].len() as f64 / u as f64)
        .collect();
    let observed: Vec<u64> = tested.iter().map(|&b| table.count(f, b)).collect();

    let exceed: Vec<usize> = (0..cfg.n_permutations)
        .into_par_iter()
        .map(|p| {
            let mut rng = stream(cfg.seed, "cooccurrence-null", p as u64);
            let mut mark = vec![false; u];
            for k in sample(&mut rng, u, kf) {
                mark[k] = true;
            }
            tested
                .iter()
                .enumerate()
                .map(|(t, &b)| {
                    let null = sample(&mut rng, u, table.members[b].len())
                        .into_iter()
                        .filter(|&k| mark[k])
                        .count() as f64;
                    let dev_obs = (observed[t] as f64 - expected[t]).abs();
                    usize::from((null - expected[t]).abs() >= dev_obs - 1e-9)
                })
                .collect::<Vec<usize>>()
        })
        .reduce(
            || vec![0; tested.len()],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );

    let threshold = cfg.alpha / tested.len() as f64;
    Ok(tested
        .iter()
        .enumerate()
        .map(|(t, &b)| {
            let p_value = (1 + exceed[t]) as f64 / (cfg.n_permutations + 1) as f64;
            let verdict = if p_value > threshold {
                Verdict::Insignificant
            } else if observed[t] as f64 > expected[t] {
                Verdict::Over
            } else {
                Verdict::Under
            };
            PairVerdict {
                relation: table.relations[b],
                label: table.labels[b].clone(),
                observed: observed[t],
                expected: expected[t],
                p_value,
                verdict,
            }
        })
        .collect())
}

/// Share of each verdict among `verdicts` as `(over, under, insignificant)`.
pub fn verdict_shares(verdicts: &[PairVerdict]) -> (f64, f64, f64) {
    if verdicts.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let n = verdicts.len() as f64;
    let share = |v: Verdict| verdicts.iter().filter(|p| p.verdict == v).count() as f64 / n;
    (share(Verdict::Over), share(Verdict::Under), share(Verdict::Insignificant))
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// KS comparison of each relation's mean distance to its `k` most
/// co-occurring relations against `k` relations drawn at random.
/// `vectors[s]` belongs to table slot `s`.
pub fn embedding_cooccurrence_distance(
    vectors: &[Vec<f64>],
    table: &CooccurrenceTable,
    k: usize,
    seed: u64,
) -> Result<KsResult> {
    let n = table.len();
    if vectors.len() != n {
        return Err(Error::Contract(format!("{} vectors for {n} relations", vectors.len())));
    }
    if k == 0 || k + 1 > n {
        return Err(Error::Argument(format!("k = {k} needs at least k + 1 relations, have {n}")));
    }
    let mean_dist = |a: usize, others: &[usize]| {
        others.iter().map(|&b| euclidean(&vectors[a], &vectors[b])).sum::<f64>() / others.len() as f64
    };
    let mut near = Vec::with_capacity(n);
    let mut random = Vec::with_capacity(n);
    for a in 0..n {
        near.push(mean_dist(a, &table.top_cooccurring(a, k)));
        let mut rng = stream(seed, "random-relations", a as u64);
        let picks: Vec<usize> = sample(&mut rng, n - 1, k)
            .into_iter()
            .map(|b| if b >= a { b + 1 } else { b })
            .collect();
        random.push(mean_dist(a, &picks));
    }
    ks_2sample(&near, &random)
}
