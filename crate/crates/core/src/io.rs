//! Dataset ingestion in the published four-file CSV layout, and CSV
//! writers for every output table.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use crate::diffmath::Tensor;
use crate::encoder::NodeEmbeddings;
use crate::error::{Error, Result};
use crate::graph::{
    build_graph, BuildReport, ComboRecord, EdgeSplit, Fold, GraphInput, MonoRecord, MultimodalGraph, NodeKind, NodeRef,
    RelationFamily, DRUG_TARGET, PPI,
};
use crate::scalar::Scalar;

pub const PPI_COLUMNS: [&str; 2] = ["Gene1", "Gene2"];
pub const TARGET_COLUMNS: [&str; 2] = ["STITCH", "Gene"];
pub const COMBO_COLUMNS: [&str; 4] = ["STITCH1", "STITCH2", "Polypharmacy Side Effect", "Side Effect Name"];
pub const MONO_COLUMNS: [&str; 3] = ["STITCH", "Individual Side Effect", "Side Effect Name"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPaths {
    pub ppi: PathBuf,
    pub targets: PathBuf,
    pub combo: PathBuf,
    pub mono: PathBuf,
}

impl DataPaths {
    /// Conventional file names inside `dir`, as written by [`write_dataset`].
    pub fn in_dir(dir: &Path) -> Self {
        DataPaths {
            ppi: dir.join("ppi.csv"),
            targets: dir.join("targets.csv"),
            combo: dir.join("combo.csv"),
            mono: dir.join("mono.csv"),
        }
    }
}

/// Row accounting for one input file: `rows = kept + Σ dropped`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FileReport {
    pub file: String,
    pub rows: usize,
    pub kept: usize,
    pub blank_lines: usize,
    pub dropped: BTreeMap<String, usize>,
}

impl FileReport {
    fn drop(&mut self, reason: &str, n: usize) {
        if n > 0 {
            *self.dropped.entry(reason.to_string()).or_default() += n;
            self.kept -= n;
        }
    }

    pub fn n_dropped(&self) -> usize {
        self.dropped.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IngestReport {
    pub files: Vec<FileReport>,
    pub n_drugs: usize,
    pub n_proteins: usize,
    pub n_side_effects: usize,
    pub ppi_edges: usize,
    pub target_edges: usize,
    pub side_effect_edges: usize,
    pub dropped_relations: usize,
    /// Kept rows that repeat an earlier edge or feature.
    pub duplicates: usize,
    pub warnings: Vec<String>,
}

fn format_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        file: path.display().to_string(),
        message: message.into(),
    }
}

/// Rows of `path` projected onto `columns`, plus the file's accounting.
fn read_table(path: &Path, columns: &[&str]) -> Result<(Vec<Vec<String>>, FileReport)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut report = FileReport {
        file: path.display().to_string(),
        ..Default::default()
    };
    report.blank_lines = text.lines().skip(1).filter(|l| l.trim().is_empty()).count();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| format_error(path, e.to_string()))?.clone();
    if headers.iter().all(|h| h.is_empty()) {
        return Err(format_error(path, "missing header row"));
    }
    let index: Vec<usize> = columns
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h == *c)
                .ok_or_else(|| format_error(path, format!("missing column {c:?}")))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| format_error(path, e.to_string()))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        report.rows += 1;
        if index.iter().any(|&k| k >= rec.len()) {
            *report.dropped.entry("short row".into()).or_default() += 1;
            continue;
        }
        rows.push(index.iter().map(|&k| rec[k].to_string()).collect());
    }
    report.kept = rows.len();
    Ok((rows, report))
}

/// Parse the four files and build the graph.
pub fn ingest(paths: &DataPaths, min_relation_count: usize) -> Result<(MultimodalGraph, IngestReport)> {
    let (ppi_rows, mut ppi_rep) = read_table(&paths.ppi, &PPI_COLUMNS)?;
    let (tgt_rows, mut tgt_rep) = read_table(&paths.targets, &TARGET_COLUMNS)?;
    let (combo_rows, mut combo_rep) = read_table(&paths.combo, &COMBO_COLUMNS)?;
    let (mono_rows, mut mono_rep) = read_table(&paths.mono, &MONO_COLUMNS)?;

    let take = |rows: Vec<Vec<String>>| rows.into_iter().map(|mut r| (std::mem::take(&mut r[0]), std::mem::take(&mut r[1])));
    let input = GraphInput {
        ppi: take(ppi_rows).collect(),
        targets: take(tgt_rows).collect(),
        combos: combo_rows
            .into_iter()
            .map(|r| ComboRecord {
                drug_a: r[0].clone(),
                drug_b: r[1].clone(),
                side_effect_id: r[2].clone(),
                side_effect_name: r[3].clone(),
            })
            .collect(),
        mono: mono_rows
            .into_iter()
            .map(|r| MonoRecord {
                drug: r[0].clone(),
                feature_id: r[1].clone(),
                feature_name: r[2].clone(),
            })
            .collect(),
    };
    let (graph, build) = build_graph(&input, min_relation_count)?;
    let report = reconcile(
        &graph,
        &input,
        &build,
        [&mut ppi_rep, &mut tgt_rep, &mut combo_rep, &mut mono_rep],
    );
    Ok((graph, report))
}

fn reconcile(
    graph: &MultimodalGraph,
    input: &GraphInput,
    build: &BuildReport,
    files: [&mut FileReport; 4],
) -> IngestReport {
    let [ppi, tgt, combo, mono] = files;
    let mut rejected: BTreeMap<&str, HashSet<usize>> = BTreeMap::new();
    for e in &build.rejected {
        rejected.entry(e.source).or_default().insert(e.record);
        let rep = match e.source {
            "ppi" => &mut *ppi,
            "targets" => &mut *tgt,
            "combo" => &mut *combo,
            _ => &mut *mono,
        };
        rep.drop(&e.reason, 1);
    }
    let dropped_se: BTreeSet<&str> = build.dropped_relations.iter().map(|(s, _)| s.as_str()).collect();
    let combo_rejected = rejected.remove("combo").unwrap_or_default();
    let below = input
        .combos
        .iter()
        .enumerate()
        .filter(|(n, c)| !combo_rejected.contains(n) && dropped_se.contains(c.side_effect_id.trim()))
        .count();
    combo.drop("side effect below min_relation_count", below);
    let leaked: BTreeSet<&str> = build.leaked_features.iter().map(String::as_str).collect();
    let mono_rejected = rejected.remove("mono").unwrap_or_default();
    let leaks = input
        .mono
        .iter()
        .enumerate()
        .filter(|(n, m)| !mono_rejected.contains(n) && leaked.contains(m.feature_id.trim()))
        .count();
    mono.drop("feature names a retained side effect", leaks);

    let mut warnings = Vec::new();
    if graph.n_side_effects() == 0 {
        warnings.push("no side-effect relations retained".to_string());
    }
    IngestReport {
        files: vec![ppi.clone(), tgt.clone(), combo.clone(), mono.clone()],
        n_drugs: graph.n_nodes(NodeKind::Drug),
        n_proteins: graph.n_nodes(NodeKind::Protein),
        n_side_effects: graph.n_side_effects(),
        ppi_edges: graph.n_edges(PPI),
        target_edges: graph.n_edges(DRUG_TARGET),
        side_effect_edges: graph.side_effect_ids().map(|r| graph.n_edges(r)).sum(),
        dropped_relations: build.dropped_relations.len(),
        duplicates: build.duplicates,
        warnings,
    }
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| format_error(path, e.to_string())
}

/// Write `header` and `rows` as CSV.
pub fn write_table<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = writer(path)?;
    w.write_record(header).map_err(csv_error(path))?;
    for row in rows {
        w.write_record(row).map_err(csv_error(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write generated or parsed records as the four ingestion files.
pub fn write_dataset(dir: &Path, input: &GraphInput) -> Result<DataPaths> {
    let paths = DataPaths::in_dir(dir);
    write_table(&paths.ppi, &PPI_COLUMNS, input.ppi.iter().map(|(a, b)| [a, b]))?;
    write_table(&paths.targets, &TARGET_COLUMNS, input.targets.iter().map(|(a, b)| [a, b]))?;
    write_table(
        &paths.combo,
        &COMBO_COLUMNS,
        input
            .combos
            .iter()
            .map(|c| [&c.drug_a, &c.drug_b, &c.side_effect_id, &c.side_effect_name]),
    )?;
    write_table(
        &paths.mono,
        &MONO_COLUMNS,
        input.mono.iter().map(|m| [&m.drug, &m.feature_id, &m.feature_name]),
    )?;
    Ok(paths)
}

pub fn write_ingest_report(path: &Path, report: &IngestReport) -> Result<()> {
    let mut rows: Vec<[String; 2]> = Vec::new();
    for f in &report.files {
        let name = Path::new(&f.file)
            .file_name()
            .map_or(f.file.clone(), |n| n.to_string_lossy().into_owned());
        rows.push([format!("{name}.rows"), f.rows.to_string()]);
        rows.push([format!("{name}.kept"), f.kept.to_string()]);
        rows.push([format!("{name}.blank_lines"), f.blank_lines.to_string()]);
        for (reason, n) in &f.dropped {
            rows.push([format!("{name}.dropped.{reason}"), n.to_string()]);
        }
    }
    for (k, v) in [
        ("nodes.drug", report.n_drugs),
        ("nodes.protein", report.n_proteins),
        ("relations.side_effect", report.n_side_effects),
        ("relations.dropped", report.dropped_relations),
        ("edges.ppi", report.ppi_edges),
        ("edges.targets", report.target_edges),
        ("edges.side_effect", report.side_effect_edges),
        ("duplicates", report.duplicates),
    ] {
        rows.push([k.to_string(), v.to_string()]);
    }
    for w in &report.warnings {
        rows.push(["warning".to_string(), w.clone()]);
    }
    write_table(path, &["item", "value"], rows)
}

/// Node embeddings, drugs first, with header `node_kind,node_id,z_0,…`.
pub fn write_embeddings<T: Scalar>(path: &Path, graph: &MultimodalGraph, emb: &NodeEmbeddings<T>) -> Result<()> {
    let d = emb.dim();
    let mut header = vec!["node_kind".to_string(), "node_id".to_string()];
    header.extend((0..d).map(|k| format!("z_{k}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut rows = Vec::new();
    for kind in [NodeKind::Drug, NodeKind::Protein] {
        for i in 0..graph.n_nodes(kind) {
            let node = NodeRef { kind, index: i };
            let mut row = vec![kind.as_str().to_string(), graph.node_id(node).to_string()];
            row.extend(emb.get(node).iter().map(|v| v.as_f64().to_string()));
            rows.push(row);
        }
    }
    write_table(path, &header, rows)
}

/// One row per side effect: `relation_id,name,d_0,…` from rows of `vectors`
/// indexed by side-effect slot.
pub fn write_relation_vectors<T: Scalar>(path: &Path, graph: &MultimodalGraph, vectors: &Tensor<T>) -> Result<()> {
    let mut header = vec!["relation_id".to_string(), "name".to_string()];
    header.extend((0..vectors.cols()).map(|k| format!("d_{k}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut rows = Vec::new();
    for r in graph.side_effect_ids() {
        let rel = graph.relation(r)?;
        let slot = graph.side_effect_slot(r).expect("side effect");
        let mut row = vec![rel.label().to_string(), rel.side_effect_name.clone().unwrap_or_default()];
        row.extend(vectors.row(slot).iter().map(|v| v.as_f64().to_string()));
        rows.push(row);
    }
    write_table(path, &header, rows)
}

pub fn write_predictions(path: &Path, graph: &MultimodalGraph, preds: &[crate::decoder::Prediction]) -> Result<()> {
    let mut rows = Vec::with_capacity(preds.len());
    for (k, p) in preds.iter().enumerate() {
        let rel = graph.relation(p.relation)?;
        let (src, dst) = rel.endpoint_kinds();
        rows.push([
            (k + 1).to_string(),
            rel.label().to_string(),
            graph.node_id(NodeRef { kind: src, index: p.i }).to_string(),
            graph.node_id(NodeRef { kind: dst, index: p.j }).to_string(),
            p.prob.to_string(),
        ]);
    }
    write_table(path, &["rank", "relation_id", "drug_i", "drug_j", "prob"], rows)
}

pub fn write_training_log(path: &Path, epochs: &[crate::trainer::EpochRecord]) -> Result<()> {
    write_table(
        path,
        &["epoch", "train_loss", "val_loss", "monitored", "seconds"],
        epochs.iter().map(|e| {
            [
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.val_loss.to_string(),
                e.monitored.to_string(),
                format!("{:.3}", e.seconds),
            ]
        }),
    )
}

/// Every split edge as `relation_id,drug_i,drug_j,fold,label`; training
/// rows carry positives only since their negatives are resampled.
pub fn write_split_manifest(path: &Path, graph: &MultimodalGraph, split: &EdgeSplit) -> Result<()> {
    let mut rows = Vec::new();
    for r in graph.relation_ids() {
        let rel = graph.relation(r)?;
        let (src, dst) = rel.endpoint_kinds();
        let rs = split.relation(r);
        for fold in [Fold::Train, Fold::Val, Fold::Test] {
            for (pairs, label) in [(rs.positives(fold), "pos"), (rs.negatives(fold), "neg")] {
                for &(i, j) in pairs {
                    rows.push([
                        rel.label().to_string(),
                        graph.node_id(NodeRef { kind: src, index: i }).to_string(),
                        graph.node_id(NodeRef { kind: dst, index: j }).to_string(),
                        fold.as_str().to_string(),
                        label.to_string(),
                    ]);
                }
            }
        }
    }
    write_table(path, &["relation_id", "drug_i", "drug_j", "fold", "label"], rows)
}

/// True when the relation is one of the drug-drug side effects.
pub fn is_side_effect(graph: &MultimodalGraph, r: crate::graph::RelationId) -> bool {
    graph
        .relation(r)
        .is_ok_and(|rel| rel.family == RelationFamily::SideEffect)
}
