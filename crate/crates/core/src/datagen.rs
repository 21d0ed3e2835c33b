//! Seeded planted-model graphs for end-to-end checks.
//!
//! Latent vectors are standard normal. A side effect `r` scores drug pairs
//! with `g* = x_iᵀ D*_r R* D*_r x_j`, protein pairs use `x_iᵀ M*_ppi x_j`
//! and drug-target pairs `x_iᵀ M*_dt y_j`, exactly the decoder's forms.
//! Each relation gets its own offset and scale so that edges appear
//! independently with probability `σ(s · (g* − q))` at the requested
//! density. Drug features are noisy sign indicators of random projections
//! of the latent vectors; proteins are featureless.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::decoder::{bilinear, symmetric_form, symmetrize, EdgeScorer};
use crate::diffmath::Tensor;
use crate::error::{Error, Result};
use crate::graph::{build_graph, ComboRecord, GraphInput, MonoRecord, MultimodalGraph, RelationFamily, RelationId};
use crate::rng::{stream, Rng};
use crate::scalar::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_drugs: usize,
    pub n_proteins: usize,
    pub n_side_effects: usize,
    pub latent_dim: usize,
    pub density_side_effect: f64,
    pub density_ppi: f64,
    pub density_target: f64,
    pub feature_width: usize,
    pub seed: u64,
    /// Probability that a drug feature bit is flipped.
    pub feature_noise: f64,
    /// Share of the target density placed above the offset; the rest comes
    /// from the soft tail of the sigmoid.
    pub sharpness: f64,
    /// Side-effect diagonals are drawn uniformly from this range.
    pub diagonal_range: (f64, f64),
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_drugs: 120,
            n_proteins: 300,
            n_side_effects: 12,
            latent_dim: 8,
            density_side_effect: 0.05,
            density_ppi: 0.01,
            density_target: 0.02,
            feature_width: 16,
            seed: 7,
            feature_noise: 0.05,
            sharpness: 0.95,
            diagonal_range: (0.5, 1.5),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if self.n_drugs < 2 || self.n_proteins < 2 {
            return bad("need at least two drugs and two proteins".into());
        }
        if self.n_side_effects == 0 || self.latent_dim == 0 || self.feature_width == 0 {
            return bad("n_side_effects, latent_dim and feature_width must be positive".into());
        }
        for (name, d) in [
            ("density_side_effect", self.density_side_effect),
            ("density_ppi", self.density_ppi),
            ("density_target", self.density_target),
        ] {
            if !(d > 0.0 && d < 1.0) {
                return bad(format!("{name} = {d} outside (0, 1)"));
            }
        }
        if !(0.0..0.5).contains(&self.feature_noise) {
            return bad("feature_noise must lie in [0, 0.5)".into());
        }
        if !(self.sharpness > 0.0 && self.sharpness < 1.0) {
            return bad("sharpness must lie in (0, 1)".into());
        }
        let (lo, hi) = self.diagonal_range;
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return bad(format!("diagonal range {lo}..{hi} is empty"));
        }
        Ok(())
    }
}

/// Per-relation map `g* ↦ scale · (g* − offset)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub scale: f64,
    pub offset: f64,
    /// Mean model probability over all candidate pairs.
    pub expected_density: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedTruth {
    pub spec: SyntheticSpec,
    /// Rows follow the graph's drug order.
    pub drug_latent: Tensor<f64>,
    /// Rows follow the graph's protein order.
    pub protein_latent: Tensor<f64>,
    /// Symmetric global core.
    pub r: Tensor<f64>,
    /// Row `s` is the diagonal of side-effect slot `s` of the graph.
    pub d: Tensor<f64>,
    /// Symmetric protein-protein core.
    pub m_ppi: Tensor<f64>,
    pub m_dt: Tensor<f64>,
    /// Indexed by graph relation id.
    pub calibration: Vec<Calibration>,
    /// Generated records, in the ingestion format.
    pub records: GraphInput,
}

fn gaussian(rows: usize, cols: usize, rng: &mut Rng) -> Tensor<f64> {
    Tensor::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn family_raw(
    family: RelationFamily,
    diag: Option<&[f64]>,
    cores: (&Tensor<f64>, &Tensor<f64>, &Tensor<f64>),
    x: &[f64],
    y: &[f64],
) -> f64 {
    let (r, m_ppi, m_dt) = cores;
    match family {
        RelationFamily::SideEffect => {
            let diag = diag.expect("side effect diagonal");
            let u: Vec<f64> = x.iter().zip(diag).map(|(a, b)| a * b).collect();
            let v: Vec<f64> = y.iter().zip(diag).map(|(a, b)| a * b).collect();
            symmetric_form(&u, r, &v)
        }
        RelationFamily::ProteinProtein => symmetric_form(x, m_ppi, y),
        RelationFamily::DrugTarget => bilinear(x, m_dt, y),
    }
}

/// Value below which a share `1 − tail` of `values` lies.
fn upper_quantile(values: &[f64], tail: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = (((1.0 - tail) * v.len() as f64).floor() as usize).min(v.len() - 1);
    v[k]
}

/// Offset at the `1 − sharpness·density` quantile, then bisection on the
/// scale until the mean probability equals `density`.
pub fn calibrate(g: &[f64], density: f64, sharpness: f64) -> Result<Calibration> {
    if g.is_empty() {
        return Err(Error::Generation("no candidate pairs".into()));
    }
    let offset = upper_quantile(g, sharpness * density);
    let mean_p = |s: f64| g.iter().map(|&v| sigmoid(s * (v - offset))).sum::<f64>() / g.len() as f64;
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut rounds = 0;
    while mean_p(hi) > density {
        hi *= 2.0;
        rounds += 1;
        if rounds > 50 {
            return Err(Error::Generation(format!("density {density} unreachable")));
        }
    }
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if mean_p(mid) > density {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let scale = 0.5 * (lo + hi);
    let expected_density = mean_p(scale);
    if ((expected_density - density) / density).abs() > 0.1 {
        return Err(Error::Generation(format!(
            "density {density} unreachable, closest {expected_density}"
        )));
    }
    Ok(Calibration {
        scale,
        offset,
        expected_density,
    })
}

struct Family<'a> {
    family: RelationFamily,
    label: String,
    diag: Option<&'a [f64]>,
    density: f64,
}

/// Draw a planted graph. Nodes left without any edge or feature are absent
/// from the graph and from the truth.
pub fn generate(spec: &SyntheticSpec) -> Result<(MultimodalGraph, PlantedTruth)> {
    spec.validate()?;
    let d = spec.latent_dim;
    let seed = spec.seed;
    let xs = gaussian(spec.n_drugs, d, &mut stream(seed, "latent-drug", 0));
    let ys = gaussian(spec.n_proteins, d, &mut stream(seed, "latent-protein", 0));
    let mut core_rng = stream(seed, "cores", 0);
    let r = symmetrize(&gaussian(d, d, &mut core_rng));
    let m_ppi = symmetrize(&gaussian(d, d, &mut core_rng));
    let m_dt = gaussian(d, d, &mut core_rng);
    let mut diag_rng = stream(seed, "diagonals", 0);
    let diags = Tensor::from_fn(spec.n_side_effects, d, |_, _| diag_rng.gen_range(spec.diagonal_range.0..spec.diagonal_range.1));

    let drug_id = |k: usize| format!("CID{k:06}");
    let protein_id = |k: usize| format!("G{k:05}");
    let se_id = |k: usize| format!("SE{k:04}");

    let mut families = vec![
        Family {
            family: RelationFamily::ProteinProtein,
            label: "ppi".into(),
            diag: None,
            density: spec.density_ppi,
        },
        Family {
            family: RelationFamily::DrugTarget,
            label: "targets".into(),
            diag: None,
            density: spec.density_target,
        },
    ];
    for s in 0..spec.n_side_effects {
        families.push(Family {
            family: RelationFamily::SideEffect,
            label: se_id(s),
            diag: Some(diags.row(s)),
            density: spec.density_side_effect,
        });
    }

    let mut records = GraphInput::default();
    let mut calibrations = std::collections::HashMap::new();
    for (k, fam) in families.iter().enumerate() {
        let (src, dst) = match fam.family {
            RelationFamily::ProteinProtein => (&ys, &ys),
            RelationFamily::DrugTarget => (&xs, &ys),
            RelationFamily::SideEffect => (&xs, &xs),
        };
        let symmetric = fam.family != RelationFamily::DrugTarget;
        let mut pairs = Vec::new();
        for i in 0..src.rows() {
            let start = if symmetric { i + 1 } else { 0 };
            for j in start..dst.rows() {
                pairs.push((i, j));
            }
        }
        let g: Vec<f64> = pairs
            .iter()
            .map(|&(i, j)| family_raw(fam.family, fam.diag, (&r, &m_ppi, &m_dt), src.row(i), dst.row(j)))
            .collect();
        let cal = calibrate(&g, fam.density, spec.sharpness)
            .map_err(|e| Error::Generation(format!("relation {}: {e}", fam.label)))?;
        let mut rng = stream(seed, "edges", k as u64);
        for (&(i, j), &gv) in pairs.iter().zip(&g) {
            let p = sigmoid(cal.scale * (gv - cal.offset));
            if !rng.gen_bool(p) {
                continue;
            }
            match fam.family {
                RelationFamily::ProteinProtein => records.ppi.push((protein_id(i), protein_id(j))),
                RelationFamily::DrugTarget => records.targets.push((drug_id(i), protein_id(j))),
                RelationFamily::SideEffect => records.combos.push(ComboRecord {
                    drug_a: drug_id(i),
                    drug_b: drug_id(j),
                    side_effect_id: fam.label.clone(),
                    side_effect_name: format!("synthetic effect {}", &fam.label[2..]),
                }),
            }
        }
        calibrations.insert(fam.label.clone(), cal);
    }

    // Feature f indicates the side of a random hyperplane through the
    // origin on which the drug's latent vector falls.
    let planes = gaussian(spec.feature_width, d, &mut stream(seed, "feature-planes", 0));
    let mut feat_rng = stream(seed, "features", 0);
    for i in 0..spec.n_drugs {
        for f in 0..spec.feature_width {
            let side: f64 = planes.row(f).iter().zip(xs.row(i)).map(|(a, b)| a * b).sum();
            let flip = feat_rng.gen_bool(spec.feature_noise);
            if (side > 0.0) != flip {
                records.mono.push(MonoRecord {
                    drug: drug_id(i),
                    feature_id: format!("MONO{f:03}"),
                    feature_name: format!("latent half-space {f}"),
                });
            }
        }
    }

    let (graph, _) = build_graph(&records, 0)?;
    let remap = |ids: &[String], latent: &Tensor<f64>, parse: &dyn Fn(&str) -> usize| {
        Tensor::from_fn(ids.len(), d, |row, c| latent.get(parse(&ids[row]), c))
    };
    let drug_latent = remap(&graph.drug_ids, &xs, &|s: &str| s[3..].parse().expect("generated id"));
    let protein_latent = remap(&graph.protein_ids, &ys, &|s: &str| s[1..].parse().expect("generated id"));
    let n_se = graph.n_side_effects();
    let mut d_rows = Tensor::zeros(n_se, d);
    let mut calibration = Vec::with_capacity(graph.n_relations());
    for rid in graph.relation_ids() {
        let rel = graph.relation(rid)?;
        calibration.push(calibrations[rel.label()]);
        if let Some(slot) = graph.side_effect_slot(rid) {
            let orig: usize = rel.label()[2..].parse().expect("generated id");
            d_rows.row_mut(slot).copy_from_slice(diags.row(orig));
        }
    }
    let truth = PlantedTruth {
        spec: spec.clone(),
        drug_latent,
        protein_latent,
        r,
        d: d_rows,
        m_ppi,
        m_dt,
        calibration,
        records,
    };
    Ok((graph, truth))
}

impl PlantedTruth {
    fn family(&self, relation: RelationId) -> RelationFamily {
        match relation.0 {
            0 => RelationFamily::ProteinProtein,
            1 => RelationFamily::DrugTarget,
            _ => RelationFamily::SideEffect,
        }
    }

    /// Planted `g*` before calibration.
    pub fn planted_score(&self, relation: RelationId, i: usize, j: usize) -> f64 {
        let family = self.family(relation);
        let (x, y) = match family {
            RelationFamily::ProteinProtein => (self.protein_latent.row(i), self.protein_latent.row(j)),
            RelationFamily::DrugTarget => (self.drug_latent.row(i), self.protein_latent.row(j)),
            RelationFamily::SideEffect => (self.drug_latent.row(i), self.drug_latent.row(j)),
        };
        let diag = (family == RelationFamily::SideEffect).then(|| self.d.row(relation.0 - 2));
        family_raw(family, diag, (&self.r, &self.m_ppi, &self.m_dt), x, y)
    }

    /// Exact model probabilities of `pairs` under `relation`.
    pub fn oracle_scores(&self, relation: RelationId, pairs: &[(usize, usize)]) -> Vec<f64> {
        pairs.iter().map(|&(i, j)| self.prob(relation, i, j)).collect()
    }
}

impl EdgeScorer<f64> for PlantedTruth {
    fn raw(&self, relation: RelationId, i: usize, j: usize) -> f64 {
        let c = &self.calibration[relation.0];
        c.scale * (self.planted_score(relation, i, j) - c.offset)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{NodeKind, DRUG_TARGET, PPI};

    #[test]
    fn deterministic_under_seed() {
        let spec = SyntheticSpec {
            n_drugs: 40,
            n_proteins: 50,
            n_side_effects: 3,
            ..Default::default()
        };
        let (a, ta) = generate(&spec).unwrap();
        let (b, tb) = generate(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = generate(&SyntheticSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        for spec in [
            SyntheticSpec {
                latent_dim: 0,
                ..Default::default()
            },
            SyntheticSpec {
                density_ppi: 0.0,
                ..Default::default()
            },
            SyntheticSpec {
                n_side_effects: 0,
                ..Default::default()
            },
        ] {
            assert!(matches!(generate(&spec), Err(Error::Argument(_))));
        }
    }

    #[test]
    fn unreachable_density_is_a_generation_error() {
        let g: Vec<f64> = (0..100).map(|k| k as f64).collect();
        assert!(matches!(calibrate(&g, 0.7, 0.8), Err(Error::Generation(_))));
        let c = calibrate(&g, 0.05, 0.8).unwrap();
        assert!((c.expected_density - 0.05).abs() < 1e-6);
    }

    #[test]
    fn realized_edges_have_positive_probability_and_symmetry() {
        let spec = SyntheticSpec {
            n_drugs: 30,
            n_proteins: 40,
            n_side_effects: 2,
            ..Default::default()
        };
        let (g, t) = generate(&spec).unwrap();
        for r in g.relation_ids() {
            for (i, j) in g.edges(r) {
                assert!(t.prob(r, i, j) > 0.0);
                if r != DRUG_TARGET {
                    assert_eq!(t.raw(r, i, j), t.raw(r, j, i));
                }
            }
        }
        assert!(g.n_edges(PPI) > 0);
        assert_eq!(t.drug_latent.rows(), g.n_nodes(NodeKind::Drug));
        assert_eq!(t.protein_latent.rows(), g.n_nodes(NodeKind::Protein));
        assert_eq!(t.d.rows(), g.n_side_effects());
    }
}
