//! Typed two-layer graph: drugs and proteins, one protein-protein relation,
//! one drug-target relation and any number of side-effect relations between
//! drug pairs.

mod split;

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};

pub use split::{split_edges, EdgeSplit, Fold, RelationSplit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Drug,
    Protein,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Drug => "drug",
            NodeKind::Protein => "protein",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRef {
    pub kind: NodeKind,
    pub index: usize,
}

impl NodeRef {
    pub fn drug(index: usize) -> Self {
        NodeRef {
            kind: NodeKind::Drug,
            index,
        }
    }

    pub fn protein(index: usize) -> Self {
        NodeRef {
            kind: NodeKind::Protein,
            index,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelationFamily {
    ProteinProtein,
    DrugTarget,
    SideEffect,
}

/// Dense relation index. `0` is protein-protein, `1` is drug-target and
/// side effects follow from `2` in first-seen order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub usize);

pub const PPI: RelationId = RelationId(0);
pub const DRUG_TARGET: RelationId = RelationId(1);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationRef {
    pub family: RelationFamily,
    pub side_effect_id: Option<String>,
    pub side_effect_name: Option<String>,
    pub symmetric: bool,
}

impl RelationRef {
    /// External identifier used in every CSV output.
    pub fn label(&self) -> &str {
        match self.family {
            RelationFamily::ProteinProtein => "ppi",
            RelationFamily::DrugTarget => "targets",
            RelationFamily::SideEffect => self.side_effect_id.as_deref().unwrap_or(""),
        }
    }

    /// Node kinds of the (source, destination) endpoints in canonical orientation.
    pub fn endpoint_kinds(&self) -> (NodeKind, NodeKind) {
        match self.family {
            RelationFamily::ProteinProtein => (NodeKind::Protein, NodeKind::Protein),
            RelationFamily::DrugTarget => (NodeKind::Drug, NodeKind::Protein),
            RelationFamily::SideEffect => (NodeKind::Drug, NodeKind::Drug),
        }
    }
}

/// Per-relation neighbor lists. `out[i]` holds the destinations of source
/// node `i`, `inc[j]` the sources of destination node `j`; both sorted and
/// duplicate free. For symmetric relations the two are identical.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    pub out: Vec<Vec<usize>>,
    pub inc: Vec<Vec<usize>>,
    pub n_edges: usize,
}

impl Adjacency {
    fn from_edges(n_src: usize, n_dst: usize, symmetric: bool, edges: &BTreeSet<(usize, usize)>) -> Self {
        let mut out = vec![Vec::new(); n_src];
        let mut inc = vec![Vec::new(); n_dst];
        for &(i, j) in edges {
            out[i].push(j);
            inc[j].push(i);
            if symmetric {
                out[j].push(i);
                inc[i].push(j);
            }
        }
        for l in out.iter_mut().chain(inc.iter_mut()) {
            l.sort_unstable();
            l.dedup();
        }
        Adjacency {
            out,
            inc,
            n_edges: edges.len(),
        }
    }
}

/// Binary feature matrix stored as sorted column lists per row.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BinaryFeatures {
    pub names: Vec<String>,
    pub rows: Vec<Vec<usize>>,
}

impl BinaryFeatures {
    pub fn n_cols(&self) -> usize {
        self.names.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalGraph {
    pub drug_ids: Vec<String>,
    pub protein_ids: Vec<String>,
    pub relations: Vec<RelationRef>,
    pub adjacency: Vec<Adjacency>,
    /// `None` means one-hot identity inputs.
    pub drug_features: Option<BinaryFeatures>,
    pub protein_features: Option<BinaryFeatures>,
    drug_index: HashMap<String, usize>,
    protein_index: HashMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComboRecord {
    pub drug_a: String,
    pub drug_b: String,
    pub side_effect_id: String,
    pub side_effect_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonoRecord {
    pub drug: String,
    pub feature_id: String,
    pub feature_name: String,
}

/// Parsed records of the four published files.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GraphInput {
    pub ppi: Vec<(String, String)>,
    pub targets: Vec<(String, String)>,
    pub combos: Vec<ComboRecord>,
    pub mono: Vec<MonoRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    pub source: &'static str,
    pub record: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BuildReport {
    pub rejected: Vec<RecordError>,
    pub duplicates: usize,
    /// Side effects below the count threshold, with their pair counts.
    pub dropped_relations: Vec<(String, usize)>,
    /// Mono feature ids removed because they name a retained side effect.
    pub leaked_features: Vec<String>,
}

struct Registry {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl Registry {
    fn new() -> Self {
        Registry {
            ids: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_string());
        self.index.insert(id.to_string(), i);
        i
    }
}

fn canonical(a: usize, b: usize) -> (usize, usize) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Assemble a graph from raw records.
///
/// Side effects with fewer than `min_relation_count` distinct drug pairs are
/// dropped, and mono features that share an id with a retained side effect
/// are removed from the drug feature matrix. Nodes are indexed in first-seen
/// order (drugs: combos, targets, mono; proteins: ppi, targets).
pub fn build_graph(input: &GraphInput, min_relation_count: usize) -> Result<(MultimodalGraph, BuildReport)> {
    let mut report = BuildReport::default();
    let mut drugs = Registry::new();
    let mut proteins = Registry::new();

    let reject = |report: &mut BuildReport, source, record, reason: &str| {
        report.rejected.push(RecordError {
            source,
            record,
            reason: reason.to_string(),
        })
    };

    // Side-effect pair sets in first-seen order.
    let mut se_order: Vec<String> = Vec::new();
    let mut se_names: HashMap<String, String> = HashMap::new();
    let mut se_pairs: HashMap<String, BTreeSet<(usize, usize)>> = HashMap::new();
    for (n, rec) in input.combos.iter().enumerate() {
        let (a, b, se) = (rec.drug_a.trim(), rec.drug_b.trim(), rec.side_effect_id.trim());
        if a.is_empty() || b.is_empty() || se.is_empty() {
            reject(&mut report, "combo", n, "empty identifier");
            continue;
        }
        let ia = drugs.intern(a);
        let ib = drugs.intern(b);
        if ia == ib {
            reject(&mut report, "combo", n, "identical endpoints");
            continue;
        }
        if !se_pairs.contains_key(se) {
            se_order.push(se.to_string());
            se_names.insert(se.to_string(), rec.side_effect_name.trim().to_string());
        }
        if !se_pairs.entry(se.to_string()).or_default().insert(canonical(ia, ib)) {
            report.duplicates += 1;
        }
    }

    let mut target_edges = BTreeSet::new();
    let mut target_recs = Vec::new();
    for (n, (d, p)) in input.targets.iter().enumerate() {
        let (d, p) = (d.trim(), p.trim());
        if d.is_empty() || p.is_empty() {
            reject(&mut report, "targets", n, "empty identifier");
            continue;
        }
        target_recs.push((drugs.intern(d), p));
    }

    let mut mono_recs = Vec::new();
    for (n, rec) in input.mono.iter().enumerate() {
        let (d, f) = (rec.drug.trim(), rec.feature_id.trim());
        if d.is_empty() || f.is_empty() {
            reject(&mut report, "mono", n, "empty identifier");
            continue;
        }
        mono_recs.push((drugs.intern(d), f));
    }

    let mut ppi_edges = BTreeSet::new();
    for (n, (a, b)) in input.ppi.iter().enumerate() {
        let (a, b) = (a.trim(), b.trim());
        if a.is_empty() || b.is_empty() {
            reject(&mut report, "ppi", n, "empty identifier");
            continue;
        }
        let ia = proteins.intern(a);
        let ib = proteins.intern(b);
        if ia == ib {
            reject(&mut report, "ppi", n, "identical endpoints");
            continue;
        }
        if !ppi_edges.insert(canonical(ia, ib)) {
            report.duplicates += 1;
        }
    }
    for (d, p) in target_recs {
        let ip = proteins.intern(p);
        if !target_edges.insert((d, ip)) {
            report.duplicates += 1;
        }
    }

    let n_drugs = drugs.ids.len();
    let n_proteins = proteins.ids.len();

    let mut relations = vec![
        RelationRef {
            family: RelationFamily::ProteinProtein,
            side_effect_id: None,
            side_effect_name: None,
            symmetric: true,
        },
        RelationRef {
            family: RelationFamily::DrugTarget,
            side_effect_id: None,
            side_effect_name: None,
            symmetric: false,
        },
    ];
    let mut adjacency = vec![
        Adjacency::from_edges(n_proteins, n_proteins, true, &ppi_edges),
        Adjacency::from_edges(n_drugs, n_proteins, false, &target_edges),
    ];
    let mut retained: BTreeSet<&str> = BTreeSet::new();
    for se in &se_order {
        let pairs = &se_pairs[se];
        if pairs.len() < min_relation_count {
            report.dropped_relations.push((se.clone(), pairs.len()));
            continue;
        }
        retained.insert(se);
        relations.push(RelationRef {
            family: RelationFamily::SideEffect,
            side_effect_id: Some(se.clone()),
            side_effect_name: Some(se_names[se].clone()),
            symmetric: true,
        });
        adjacency.push(Adjacency::from_edges(n_drugs, n_drugs, true, pairs));
    }

    let drug_features = if mono_recs.is_empty() {
        None
    } else {
        let mut cols = Registry::new();
        let mut rows = vec![Vec::new(); n_drugs];
        let mut leaked = BTreeSet::new();
        for (d, f) in mono_recs {
            if retained.contains(f) {
                leaked.insert(f.to_string());
                continue;
            }
            rows[d].push(cols.intern(f));
        }
        for r in rows.iter_mut() {
            let before = r.len();
            r.sort_unstable();
            r.dedup();
            report.duplicates += before - r.len();
        }
        report.leaked_features = leaked.into_iter().collect();
        if cols.ids.is_empty() {
            None
        } else {
            Some(BinaryFeatures { names: cols.ids, rows })
        }
    };

    Ok((
        MultimodalGraph {
            drug_ids: drugs.ids,
            protein_ids: proteins.ids,
            relations,
            adjacency,
            drug_features,
            protein_features: None,
            drug_index: drugs.index,
            protein_index: proteins.index,
        },
        report,
    ))
}

impl MultimodalGraph {
    pub fn n_nodes(&self, kind: NodeKind) -> usize {
        match kind {
            NodeKind::Drug => self.drug_ids.len(),
            NodeKind::Protein => self.protein_ids.len(),
        }
    }

    pub fn n_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn relation(&self, id: RelationId) -> Result<&RelationRef> {
        self.relations
            .get(id.0)
            .ok_or_else(|| Error::Lookup(format!("relation #{} not in graph", id.0)))
    }

    pub fn adjacency(&self, id: RelationId) -> Result<&Adjacency> {
        self.adjacency
            .get(id.0)
            .ok_or_else(|| Error::Lookup(format!("relation #{} not in graph", id.0)))
    }

    pub fn relation_ids(&self) -> impl Iterator<Item = RelationId> {
        (0..self.relations.len()).map(RelationId)
    }

    pub fn side_effect_ids(&self) -> impl Iterator<Item = RelationId> + '_ {
        self.relation_ids()
            .filter(|r| self.relations[r.0].family == RelationFamily::SideEffect)
    }

    pub fn n_side_effects(&self) -> usize {
        self.relations.len().saturating_sub(2)
    }

    /// Position of a side-effect relation among side effects (`id - 2`).
    pub fn side_effect_slot(&self, id: RelationId) -> Option<usize> {
        match self.relations.get(id.0)?.family {
            RelationFamily::SideEffect => Some(id.0 - 2),
            _ => None,
        }
    }

    pub fn find_relation(&self, label: &str) -> Option<RelationId> {
        self.relations.iter().position(|r| r.label() == label).map(RelationId)
    }

    pub fn drug_index(&self, id: &str) -> Option<usize> {
        self.drug_index.get(id).copied()
    }

    pub fn protein_index(&self, id: &str) -> Option<usize> {
        self.protein_index.get(id).copied()
    }

    pub fn node_id(&self, node: NodeRef) -> &str {
        match node.kind {
            NodeKind::Drug => &self.drug_ids[node.index],
            NodeKind::Protein => &self.protein_ids[node.index],
        }
    }

    pub fn n_edges(&self, id: RelationId) -> usize {
        self.adjacency.get(id.0).map_or(0, |a| a.n_edges)
    }

    /// Neighbor set `N_r^i`; empty when the node kind cannot take part in `r`.
    pub fn neighbors(&self, node: NodeRef, relation: RelationId) -> Result<&[usize]> {
        let rel = self.relation(relation)?;
        if node.index >= self.n_nodes(node.kind) {
            return Err(Error::Lookup(format!(
                "{} node #{} out of range",
                node.kind.as_str(),
                node.index
            )));
        }
        let adj = &self.adjacency[relation.0];
        let (src, dst) = rel.endpoint_kinds();
        Ok(if node.kind == src {
            &adj.out[node.index]
        } else if node.kind == dst {
            &adj.inc[node.index]
        } else {
            &[]
        })
    }

    /// `|N_r^i|`.
    pub fn degree(&self, node: NodeRef, relation: RelationId) -> Result<usize> {
        Ok(self.neighbors(node, relation)?.len())
    }

    /// Whether `(i, j)` is an edge of `relation`, with `i` of the source kind.
    pub fn has_edge(&self, relation: RelationId, i: usize, j: usize) -> bool {
        self.adjacency
            .get(relation.0)
            .and_then(|a| a.out.get(i))
            .is_some_and(|l| l.binary_search(&j).is_ok())
    }

    /// Canonical edge list: `i < j` for symmetric relations, `(drug, protein)`
    /// for drug-target.
    pub fn edges(&self, relation: RelationId) -> Vec<(usize, usize)> {
        let symmetric = self.relations[relation.0].symmetric;
        let adj = &self.adjacency[relation.0];
        let mut edges = Vec::with_capacity(adj.n_edges);
        for (i, l) in adj.out.iter().enumerate() {
            for &j in l {
                if !symmetric || i < j {
                    edges.push((i, j));
                }
            }
        }
        edges
    }

    /// Same nodes, relations and features, with each relation's edges
    /// replaced by `edges[r]` (canonical orientation).
    pub fn with_edges(&self, edges: &[Vec<(usize, usize)>]) -> MultimodalGraph {
        let adjacency = self
            .relations
            .iter()
            .zip(edges)
            .map(|(rel, e)| {
                let (src, dst) = rel.endpoint_kinds();
                let set: BTreeSet<_> = e.iter().copied().collect();
                Adjacency::from_edges(self.n_nodes(src), self.n_nodes(dst), rel.symmetric, &set)
            })
            .collect();
        MultimodalGraph {
            adjacency,
            ..self.clone()
        }
    }

    /// Protein features are never supplied by the published files; this
    /// hook exists for graphs built in code.
    pub fn set_protein_features(&mut self, features: Option<BinaryFeatures>) {
        self.protein_features = features;
    }

    pub fn features(&self, kind: NodeKind) -> Option<&BinaryFeatures> {
        match kind {
            NodeKind::Drug => self.drug_features.as_ref(),
            NodeKind::Protein => self.protein_features.as_ref(),
        }
    }

    /// Drug -> sorted target protein list.
    pub fn targets_of(&self, drug: usize) -> &[usize] {
        &self.adjacency[DRUG_TARGET.0].out[drug]
    }
}
