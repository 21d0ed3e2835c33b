//! Ranking metrics over frozen positive/negative evaluation sets.

use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;

use crate::decoder::EdgeScorer;
use crate::error::{Error, Result};
use crate::graph::{EdgeSplit, Fold, MultimodalGraph, RelationId};
use crate::scalar::Scalar;

/// Scores with binary labels for one relation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Contract(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if let Some(s) = scores.iter().find(|s| s.is_nan()) {
            return Err(Error::Numeric(format!("score {s}")));
        }
        Ok(ScoredSet { scores, labels })
    }

    pub fn n_pos(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn n_neg(&self) -> usize {
        self.labels.len() - self.n_pos()
    }

    /// Tied blocks in descending score order as `(n_pos, n_neg)`.
    fn blocks(&self) -> Vec<(usize, usize)> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        let mut blocks = Vec::new();
        let mut k = 0;
        while k < order.len() {
            let s = self.scores[order[k]];
            let (mut p, mut n) = (0, 0);
            while k < order.len() && self.scores[order[k]].total_cmp(&s) == Ordering::Equal {
                if self.labels[order[k]] {
                    p += 1;
                } else {
                    n += 1;
                }
                k += 1;
            }
            blocks.push((p, n));
        }
        blocks
    }
}

/// Probability that a random positive outranks a random negative; ties
/// count one half.
pub fn auroc(set: &ScoredSet) -> Result<f64> {
    let (n_pos, n_neg) = (set.n_pos(), set.n_neg());
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "auroc needs both classes, got {n_pos} positives and {n_neg} negatives"
        )));
    }
    // Walk from the bottom: every positive beats the negatives below its block.
    let mut below = 0usize;
    let mut wins = 0.0;
    for &(p, n) in set.blocks().iter().rev() {
        wins += p as f64 * (below as f64 + 0.5 * n as f64);
        below += n;
    }
    Ok(wins / (n_pos as f64 * n_neg as f64))
}

/// Step-interpolated average precision with precision read at the end of
/// each tied block.
pub fn auprc(set: &ScoredSet) -> Result<f64> {
    let n_pos = set.n_pos();
    if n_pos == 0 {
        return Err(Error::UndefinedMetric("average precision needs a positive".into()));
    }
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut ap = 0.0;
    for (p, n) in set.blocks() {
        tp += p;
        seen += p + n;
        if p > 0 {
            ap += p as f64 * tp as f64 / seen as f64;
        }
    }
    Ok(ap / n_pos as f64)
}

pub const AP_CUTOFF: usize = 50;

/// Average precision truncated at rank 50, normalized by `min(50, n_pos)`.
/// A tied block straddling the cutoff contributes the share of its
/// positives that falls inside, at the precision of rank 50.
pub fn ap_at_50(set: &ScoredSet) -> Result<f64> {
    ap_at_k(set, AP_CUTOFF)
}

pub fn ap_at_k(set: &ScoredSet, k: usize) -> Result<f64> {
    let n_pos = set.n_pos();
    if n_pos == 0 {
        return Err(Error::UndefinedMetric("average precision needs a positive".into()));
    }
    if k == 0 {
        return Err(Error::Argument("cutoff must be at least 1".into()));
    }
    let mut tp = 0.0;
    let mut start = 0usize;
    let mut ap = 0.0;
    for (p, n) in set.blocks() {
        if start >= k {
            break;
        }
        let size = p + n;
        let inside = (k - start).min(size);
        let hits = p as f64 * inside as f64 / size as f64;
        tp += hits;
        ap += hits * tp / (start + inside) as f64;
        start += size;
    }
    Ok(ap / n_pos.min(k) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationMetrics {
    pub relation: RelationId,
    pub label: String,
    pub n_pos: usize,
    pub n_neg: usize,
    pub auroc: f64,
    pub auprc: f64,
    pub ap50: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MacroMetrics {
    pub auroc: f64,
    pub auprc: f64,
    pub ap50: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub fold: Fold,
    pub relations: Vec<RelationMetrics>,
    /// Relations left out of the macro average because a metric was undefined.
    pub undefined: Vec<RelationId>,
    pub macro_avg: MacroMetrics,
}

/// Positives and frozen negatives of `relation` in `fold`, scored.
pub fn scored_set<T: Scalar, S: EdgeScorer<T> + ?Sized>(
    split: &EdgeSplit,
    scorer: &S,
    relation: RelationId,
    fold: Fold,
) -> Result<ScoredSet> {
    let rs = split.relation(relation);
    let pos = rs.positives(fold);
    let neg = rs.negatives(fold);
    // Raw scores rank identically to probabilities and never saturate.
    let scores = pos
        .iter()
        .chain(neg)
        .map(|&(i, j)| scorer.raw(relation, i, j).as_f64())
        .collect();
    let labels = pos.iter().map(|_| true).chain(neg.iter().map(|_| false)).collect();
    ScoredSet::new(scores, labels)
}

/// Evaluate every side-effect relation of `graph`.
pub fn evaluate<T: Scalar, S: EdgeScorer<T> + ?Sized>(
    graph: &MultimodalGraph,
    split: &EdgeSplit,
    scorer: &S,
    fold: Fold,
) -> Result<EvalReport> {
    let relations: Vec<RelationId> = graph.side_effect_ids().collect();
    evaluate_relations(graph, split, scorer, fold, &relations)
}

pub fn evaluate_relations<T: Scalar, S: EdgeScorer<T> + ?Sized>(
    graph: &MultimodalGraph,
    split: &EdgeSplit,
    scorer: &S,
    fold: Fold,
    relations: &[RelationId],
) -> Result<EvalReport> {
    if fold == Fold::Train {
        return Err(Error::Argument("evaluation folds are val and test".into()));
    }
    let per: Vec<Result<Option<RelationMetrics>>> = relations
        .par_iter()
        .map(|&r| {
            let set = scored_set(split, scorer, r, fold)?;
            let metrics = (|| Ok::<_, Error>((auroc(&set)?, auprc(&set)?, ap_at_50(&set)?)))();
            match metrics {
                Ok((auroc, auprc, ap50)) => Ok(Some(RelationMetrics {
                    relation: r,
                    label: graph.relation(r)?.label().to_string(),
                    n_pos: set.n_pos(),
                    n_neg: set.n_neg(),
                    auroc,
                    auprc,
                    ap50,
                })),
                Err(Error::UndefinedMetric(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut rows = Vec::new();
    let mut undefined = Vec::new();
    for (&r, m) in relations.iter().zip(per) {
        match m? {
            Some(m) => rows.push(m),
            None => undefined.push(r),
        }
    }
    let macro_avg = macro_average(&rows);
    Ok(EvalReport {
        fold,
        relations: rows,
        undefined,
        macro_avg,
    })
}

/// Unweighted means; all zero for an empty slice.
pub fn macro_average(rows: &[RelationMetrics]) -> MacroMetrics {
    if rows.is_empty() {
        return MacroMetrics::default();
    }
    let n = rows.len() as f64;
    MacroMetrics {
        auroc: rows.iter().map(|m| m.auroc).sum::<f64>() / n,
        auprc: rows.iter().map(|m| m.auprc).sum::<f64>() / n,
        ap50: rows.iter().map(|m| m.ap50).sum::<f64>() / n,
    }
}

impl EvalReport {
    /// Relations by AUPRC descending, then relation id ascending.
    pub fn ranked_by_auprc(&self) -> Vec<&RelationMetrics> {
        let mut v: Vec<&RelationMetrics> = self.relations.iter().collect();
        v.sort_by(|a, b| b.auprc.total_cmp(&a.auprc).then(a.relation.cmp(&b.relation)));
        v
    }

    pub fn best(&self, n: usize) -> Vec<&RelationMetrics> {
        self.ranked_by_auprc().into_iter().take(n).collect()
    }

    pub fn worst(&self, n: usize) -> Vec<&RelationMetrics> {
        let mut v = self.ranked_by_auprc();
        v.reverse();
        v.truncate(n);
        v
    }

    /// Per-relation rows followed by a `macro` row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Format {
            file: "report".into(),
            message: e.to_string(),
        };
        w.write_record(["relation_id", "n_pos", "n_neg", "auroc", "auprc", "ap50"])
            .map_err(io)?;
        for m in &self.relations {
            w.write_record([
                m.label.clone(),
                m.n_pos.to_string(),
                m.n_neg.to_string(),
                m.auroc.to_string(),
                m.auprc.to_string(),
                m.ap50.to_string(),
            ])
            .map_err(io)?;
        }
        let n_pos: usize = self.relations.iter().map(|m| m.n_pos).sum();
        let n_neg: usize = self.relations.iter().map(|m| m.n_neg).sum();
        w.write_record([
            "macro".to_string(),
            n_pos.to_string(),
            n_neg.to_string(),
            self.macro_avg.auroc.to_string(),
            self.macro_avg.auprc.to_string(),
            self.macro_avg.ap50.to_string(),
        ])
        .map_err(io)?;
        w.flush().map_err(|e| Error::io("report", e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(scores: &[f64], labels: &[u8]) -> ScoredSet {
        ScoredSet::new(scores.to_vec(), labels.iter().map(|&l| l == 1).collect()).unwrap()
    }

    #[test]
    fn auroc_fixtures() {
        assert_eq!(auroc(&set(&[0.9, 0.8, 0.1], &[1, 1, 0])).unwrap(), 1.0);
        assert_eq!(auroc(&set(&[0.9, 0.1], &[0, 1])).unwrap(), 0.0);
        assert_eq!(auroc(&set(&[0.3, 0.3], &[0, 1])).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(auroc(&set(&[0.1, 0.2], &[1, 1])), Err(Error::UndefinedMetric(_))));
        assert!(matches!(auprc(&set(&[0.1, 0.2], &[0, 0])), Err(Error::UndefinedMetric(_))));
        assert!(matches!(ap_at_50(&set(&[0.1], &[0])), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn auprc_fixtures() {
        assert_eq!(auprc(&set(&[0.9, 0.8], &[1, 0])).unwrap(), 1.0);
        assert_eq!(auprc(&set(&[0.9, 0.8], &[0, 1])).unwrap(), 0.5);
    }

    #[test]
    fn ap50_fixtures() {
        let all = ScoredSet::new((0..50).map(|k| k as f64).collect(), vec![true; 50]).unwrap();
        assert_eq!(ap_at_50(&all).unwrap(), 1.0);
        let v = ap_at_50(&set(&[0.9, 0.8, 0.7, 0.1], &[1, 0, 1, 0])).unwrap();
        assert!((v - 0.5 * (1.0 + 2.0 / 3.0)).abs() < 1e-15);

        let mut scores: Vec<f64> = (0..60).map(|k| 100.0 - k as f64).collect();
        let mut labels = vec![false; 60];
        labels[55] = true;
        scores.push(-1.0);
        labels.push(true);
        assert_eq!(ap_at_50(&ScoredSet::new(scores, labels).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn straddling_tie_counts_fractionally() {
        // 49 negatives above a 2-item tie holding one positive: half of it
        // lands on rank 50 with precision 0.5/50.
        let mut scores = vec![1.0; 49];
        let mut labels = vec![false; 49];
        scores.extend([0.5, 0.5]);
        labels.extend([true, false]);
        let v = ap_at_50(&ScoredSet::new(scores, labels).unwrap()).unwrap();
        assert!((v - 0.5 * 0.5 / 50.0).abs() < 1e-15);
    }

    #[test]
    fn report_csv_has_macro_row() {
        let rows = vec![
            RelationMetrics {
                relation: RelationId(2),
                label: "A".into(),
                n_pos: 2,
                n_neg: 2,
                auroc: 1.0,
                auprc: 1.0,
                ap50: 1.0,
            },
            RelationMetrics {
                relation: RelationId(3),
                label: "B".into(),
                n_pos: 1,
                n_neg: 1,
                auroc: 0.5,
                auprc: 0.5,
                ap50: 0.5,
            },
        ];
        let report = EvalReport {
            fold: Fold::Test,
            macro_avg: macro_average(&rows),
            relations: rows,
            undefined: vec![],
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "relation_id,n_pos,n_neg,auroc,auprc,ap50\nA,2,2,1,1,1\nB,1,1,0.5,0.5,0.5\nmacro,3,3,0.75,0.75,0.75\n"
        );
        assert_eq!(report.best(1)[0].label, "A");
        assert_eq!(report.worst(1)[0].label, "B");
    }
}
