//! Command-line front end.
//!
//! Configuration is a JSON object (see [`RunConfig`]); flags override file
//! values. Every command prints the seed and the config digest before doing
//! anything else, and every failure ends the process with one line of the
//! form `E_CODE: message`.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{BaselineKind, Factorization};
use crate::datagen::{generate, SyntheticSpec};
use crate::decoder::{score_all_pairs, DecoderParams};
use crate::diffmath::{checkpoint, ParamStore};
use crate::eda::{self, CooccurrenceTable, PairSource, PermutationConfig, Verdict};
use crate::error::{Error, Result};
use crate::graph::{split_edges, EdgeSplit, Fold, MultimodalGraph, RelationId};
use crate::io::{self as dio, DataPaths};
use crate::metrics::evaluate_relations;
use crate::scalar::Scalar;
use crate::trainer::{train_with, GraphModel, LinkModel, Start, StopOn, TrainConfig};

pub const THREADS_ENV: &str = "POLYLINK_THREADS";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Main,
    Rescal,
    Dedicom,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Main => "main",
            ModelKind::Rescal => "rescal",
            ModelKind::Dedicom => "dedicom",
        }
    }
}

/// Floating-point width of all parameters; written as `64` or `32`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

impl TryFrom<u8> for Precision {
    type Error = String;

    fn try_from(bits: u8) -> std::result::Result<Self, String> {
        match bits {
            64 => Ok(Precision::F64),
            32 => Ok(Precision::F32),
            other => Err(format!("precision must be 64 or 32, got {other}")),
        }
    }
}

impl From<Precision> for u8 {
    fn from(p: Precision) -> u8 {
        match p {
            Precision::F64 => 64,
            Precision::F32 => 32,
        }
    }
}

/// Everything a command needs. Exactly one data source: file paths (a
/// directory of conventionally named files, individual paths, or both) or
/// a synthetic spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data_dir: Option<PathBuf>,
    pub ppi: Option<PathBuf>,
    pub targets: Option<PathBuf>,
    pub combo: Option<PathBuf>,
    pub mono: Option<PathBuf>,
    pub synthetic: Option<SyntheticSpec>,
    pub model: ModelKind,
    pub train: TrainConfig,
    /// Train, validation and test fractions per relation.
    pub split: (f64, f64, f64),
    pub min_relation_count: usize,
    pub precision: Precision,
    pub out: PathBuf,
    /// Defaults to `checkpoint.bin` inside `out`.
    pub checkpoint: Option<PathBuf>,
    pub fold: Fold,
    pub top_k: usize,
    pub n_permutations: usize,
    /// Most frequent side effects used as focus of the co-occurrence test.
    pub stats_focus: usize,
    /// Most frequent side effects each focus is tested against.
    pub stats_others: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: None,
            ppi: None,
            targets: None,
            combo: None,
            mono: None,
            synthetic: None,
            model: ModelKind::Main,
            train: TrainConfig::default(),
            split: (0.8, 0.1, 0.1),
            min_relation_count: 500,
            precision: Precision::F64,
            out: PathBuf::from("polylink-out"),
            checkpoint: None,
            fold: Fold::Test,
            top_k: 100,
            n_permutations: 1000,
            stats_focus: 10,
            stats_others: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Files(DataPaths),
    Synthetic(SyntheticSpec),
}

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            file: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.top_k == 0 {
            return Err(Error::Argument("top_k must be at least 1".into()));
        }
        if let Some(spec) = &self.synthetic {
            spec.validate()?;
        }
        Ok(())
    }

    pub fn data_source(&self) -> Result<DataSource> {
        let files = [&self.ppi, &self.targets, &self.combo, &self.mono];
        let any_file = self.data_dir.is_some() || files.iter().any(|f| f.is_some());
        match (any_file, &self.synthetic) {
            (true, Some(_)) => Err(Error::Argument("give either data files or a synthetic spec, not both".into())),
            (false, None) => Err(Error::Argument(
                "no data source: use --data-dir, the per-file flags or --synthetic".into(),
            )),
            (false, Some(spec)) => Ok(DataSource::Synthetic(spec.clone())),
            (true, None) => {
                let base = self.data_dir.as_deref().map(DataPaths::in_dir);
                let pick = |explicit: &Option<PathBuf>, conventional: Option<&PathBuf>, name: &str| {
                    explicit
                        .clone()
                        .or_else(|| conventional.cloned())
                        .ok_or_else(|| Error::Argument(format!("no path for the {name} file")))
                };
                Ok(DataSource::Files(DataPaths {
                    ppi: pick(&self.ppi, base.as_ref().map(|b| &b.ppi), "ppi")?,
                    targets: pick(&self.targets, base.as_ref().map(|b| &b.targets), "targets")?,
                    combo: pick(&self.combo, base.as_ref().map(|b| &b.combo), "combo")?,
                    mono: pick(&self.mono, base.as_ref().map(|b| &b.mono), "mono")?,
                }))
            }
        }
    }

    /// SHA-256 of the canonical JSON form (keys sorted, compact).
    pub fn digest(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        sha256_hex(&value.to_string())
    }

    /// Digest over the fields that determine trained parameters; stored in
    /// checkpoints so that later commands can refuse a mismatched config.
    pub fn training_digest(&self) -> String {
        let value = serde_json::json!({
            "data_dir": self.data_dir,
            "ppi": self.ppi,
            "targets": self.targets,
            "combo": self.combo,
            "mono": self.mono,
            "synthetic": self.synthetic,
            "model": self.model,
            "train": self.train,
            "split": self.split,
            "min_relation_count": self.min_relation_count,
            "precision": self.precision,
        });
        sha256_hex(&value.to_string())
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out.join(CHECKPOINT_FILE))
    }
}

/// Training settings suited to planted graphs: a larger step, stopping on
/// validation AUPRC, and best-epoch selection over the whole budget.
pub fn planted_train_config(seed: u64) -> TrainConfig {
    let base = TrainConfig::default();
    TrainConfig {
        lr: 0.01,
        stop_on: StopOn::ValAuprc,
        early_stop_window: base.max_epochs,
        seed,
        ..base
    }
}

#[derive(Debug, Parser)]
#[command(name = "polylink", version, about = "Polypharmacy side-effect link prediction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Parse the four input files and write the ingestion report.
    Ingest,
    /// Generate a planted dataset in the ingestion file format.
    Synth,
    /// Train a model and write a checkpoint, training log and split manifest.
    Train {
        /// Continue from the existing checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Per-relation metrics of a checkpoint on the chosen fold.
    Evaluate,
    /// Highest-scoring unseen side-effect triples.
    Predict,
    /// Target-overlap, co-occurrence and embedding-distance statistics.
    Stats,
    /// Node embeddings and side-effect diagonals of a main-model checkpoint.
    ExportEmbeddings,
}

fn parse_precision(s: &str) -> std::result::Result<Precision, String> {
    s.parse::<u8>().map_err(|e| e.to_string()).and_then(Precision::try_from)
}

fn parse_eval_fold(s: &str) -> std::result::Result<Fold, String> {
    match s {
        "val" => Ok(Fold::Val),
        "test" => Ok(Fold::Test),
        other => Err(format!("fold must be val or test, got {other:?}")),
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub model: Option<ModelKind>,
    #[arg(long, global = true, value_parser = parse_eval_fold)]
    pub fold: Option<Fold>,
    #[arg(long, global = true)]
    pub top_k: Option<usize>,
    #[arg(long, global = true)]
    pub min_relation_count: Option<usize>,
    #[arg(long, global = true, value_parser = parse_precision)]
    pub precision: Option<Precision>,
    /// Directory holding ppi.csv, targets.csv, combo.csv and mono.csv.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub ppi: Option<PathBuf>,
    #[arg(long, global = true)]
    pub targets: Option<PathBuf>,
    #[arg(long, global = true)]
    pub combo: Option<PathBuf>,
    #[arg(long, global = true)]
    pub mono: Option<PathBuf>,
    /// Use the synthetic spec from the config, or the default spec.
    #[arg(long, global = true)]
    pub synthetic: bool,
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    pub max_epochs: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
}

/// Config file (if any) with flags applied on top. For `synth` the seed
/// flag also seeds the generator.
pub fn resolve(command: Command, flags: &Flags) -> Result<RunConfig> {
    let mut cfg = match &flags.config {
        Some(path) => RunConfig::from_json_file(path)?,
        None => RunConfig::default(),
    };
    if flags.synthetic || (command == Command::Synth && cfg.synthetic.is_none()) {
        cfg.synthetic.get_or_insert_with(SyntheticSpec::default);
    }
    if let Some(seed) = flags.seed {
        cfg.train.seed = seed;
        if command == Command::Synth {
            if let Some(spec) = cfg.synthetic.as_mut() {
                spec.seed = seed;
            }
        }
    }
    macro_rules! set {
        ($($flag:ident => $field:expr),* $(,)?) => {
            $(if let Some(v) = &flags.$flag { $field = v.clone().into(); })*
        };
    }
    set!(
        out => cfg.out,
        model => cfg.model,
        fold => cfg.fold,
        top_k => cfg.top_k,
        min_relation_count => cfg.min_relation_count,
        precision => cfg.precision,
        data_dir => cfg.data_dir,
        ppi => cfg.ppi,
        targets => cfg.targets,
        combo => cfg.combo,
        mono => cfg.mono,
        checkpoint => cfg.checkpoint,
        max_epochs => cfg.train.max_epochs,
        lr => cfg.train.lr,
    );
    cfg.validate()?;
    Ok(cfg)
}

/// Size the global worker pool from `POLYLINK_THREADS`, if set.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Argument(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    // A pool built earlier in the same process keeps its size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn say(out: &mut dyn Write, line: std::fmt::Arguments<'_>) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_graph(cfg: &RunConfig) -> Result<MultimodalGraph> {
    match cfg.data_source()? {
        DataSource::Files(paths) => Ok(dio::ingest(&paths, cfg.min_relation_count)?.0),
        DataSource::Synthetic(spec) => Ok(generate(&spec)?.0),
    }
}

fn side_effects(graph: &MultimodalGraph) -> Result<Vec<RelationId>> {
    let se: Vec<RelationId> = graph.side_effect_ids().collect();
    if se.is_empty() {
        return Err(Error::Argument(
            "graph has no side-effect relations (is --min-relation-count too high?)".into(),
        ));
    }
    Ok(se)
}

fn build_model<T: Scalar>(cfg: &RunConfig, train_graph: &MultimodalGraph) -> Result<Box<dyn LinkModel<T>>>
where
    GraphModel<T>: LinkModel<T>,
{
    Ok(match cfg.model {
        ModelKind::Main => Box::new(GraphModel::<T>::new(train_graph, cfg.train.layer_spec())?),
        ModelKind::Rescal => Box::new(Factorization::new(BaselineKind::Rescal, train_graph, cfg.train.baseline_dim)?),
        ModelKind::Dedicom => Box::new(Factorization::new(BaselineKind::Dedicom, train_graph, cfg.train.baseline_dim)?),
    })
}

/// Checkpoint parameters and the epoch they come from, after checking that
/// they were trained under the same configuration.
fn load_checkpoint<T: Scalar>(cfg: &RunConfig) -> Result<(ParamStore<T>, usize)> {
    let path = cfg.checkpoint_path();
    let ck = checkpoint::read::<T>(&path)?;
    if ck.model != cfg.model.as_str() {
        return Err(Error::Checkpoint(format!(
            "{} holds model {} but the config asks for {}",
            path.display(),
            ck.model,
            cfg.model.as_str()
        )));
    }
    if ck.meta("config") != Some(cfg.training_digest().as_str()) {
        return Err(Error::Checkpoint(format!(
            "{} was trained under a different configuration",
            path.display()
        )));
    }
    let epoch = ck
        .meta("epoch")
        .and_then(|e| e.parse().ok())
        .ok_or_else(|| Error::Checkpoint("missing epoch".into()))?;
    Ok((ck.store, epoch))
}

struct Session {
    cfg: RunConfig,
    graph: MultimodalGraph,
    split: EdgeSplit,
    train_graph: MultimodalGraph,
}

impl Session {
    fn open(cfg: &RunConfig) -> Result<Self> {
        let graph = load_graph(cfg)?;
        side_effects(&graph)?;
        let split = split_edges(&graph, cfg.split, cfg.train.seed)?;
        let train_graph = split.training_graph(&graph);
        Ok(Session {
            cfg: cfg.clone(),
            graph,
            split,
            train_graph,
        })
    }
}

fn cmd_ingest(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let DataSource::Files(paths) = cfg.data_source()? else {
        return Err(Error::Argument("ingest reads data files; drop --synthetic".into()));
    };
    let (_, report) = dio::ingest(&paths, cfg.min_relation_count)?;
    ensure_dir(&cfg.out)?;
    let path = cfg.out.join("ingest_report.csv");
    dio::write_ingest_report(&path, &report)?;
    say(
        out,
        format_args!(
            "drugs {} proteins {} side_effects {} edges ppi {} targets {} side_effect {}",
            report.n_drugs,
            report.n_proteins,
            report.n_side_effects,
            report.ppi_edges,
            report.target_edges,
            report.side_effect_edges
        ),
    )?;
    for w in &report.warnings {
        say(out, format_args!("warning {w}"))?;
    }
    say(out, format_args!("wrote {}", path.display()))
}

fn cmd_synth(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let spec = cfg.synthetic.clone().unwrap_or_default();
    let (graph, truth) = generate(&spec)?;
    let data_dir = cfg.out.join("data");
    ensure_dir(&data_dir)?;
    dio::write_dataset(&data_dir, &truth.records)?;
    let data_dir = fs::canonicalize(&data_dir).map_err(|e| Error::io(&data_dir, e))?;
    let follow_up = RunConfig {
        data_dir: Some(data_dir.clone()),
        min_relation_count: 0,
        train: planted_train_config(cfg.train.seed),
        out: cfg.out.clone(),
        ..RunConfig::default()
    };
    let cfg_path = cfg.out.join("synth-config.json");
    let text = serde_json::to_string_pretty(&follow_up).expect("config serializes");
    fs::write(&cfg_path, text + "\n").map_err(|e| Error::io(&cfg_path, e))?;
    say(
        out,
        format_args!(
            "drugs {} proteins {} side_effects {}",
            graph.n_nodes(crate::NodeKind::Drug),
            graph.n_nodes(crate::NodeKind::Protein),
            graph.n_side_effects()
        ),
    )?;
    say(out, format_args!("wrote {}", data_dir.display()))?;
    say(out, format_args!("wrote {}", cfg_path.display()))
}

struct Typed<'a, T> {
    s: &'a Session,
    _scalar: std::marker::PhantomData<T>,
}

impl<'a, T: Scalar> Typed<'a, T>
where
    GraphModel<T>: LinkModel<T>,
{
    fn new(s: &'a Session) -> Self {
        Typed {
            s,
            _scalar: std::marker::PhantomData,
        }
    }

    fn train(&self, resume: bool, out: &mut dyn Write) -> Result<()> {
        let cfg = &self.s.cfg;
        let model = build_model::<T>(cfg, &self.s.train_graph)?;
        let start = if resume {
            let (store, epoch) = load_checkpoint::<T>(cfg)?;
            Start::Resume { store, epoch }
        } else {
            Start::Fresh
        };
        ensure_dir(&cfg.out)?;
        let outcome = train_with(model.as_ref(), &self.s.split, &cfg.train, start, &mut |e| {
            eprintln!(
                "epoch {} train_loss {:.6} val_loss {:.6} monitored {:.6}",
                e.epoch, e.train_loss, e.val_loss, e.monitored
            );
        })?;
        let st = &outcome.state;
        let meta = vec![
            ("epoch".to_string(), st.best_epoch.to_string()),
            ("last_epoch".to_string(), st.epochs.last().map_or(st.best_epoch, |e| e.epoch).to_string()),
            ("config".to_string(), cfg.training_digest()),
            ("precision".to_string(), u8::from(cfg.precision).to_string()),
        ];
        let ck = cfg.checkpoint_path();
        checkpoint::write(&ck, model.name(), &meta, &outcome.store)?;
        let log = cfg.out.join("training_log.csv");
        dio::write_training_log(&log, &st.epochs)?;
        let manifest = cfg.out.join("split.csv");
        dio::write_split_manifest(&manifest, &self.s.graph, &self.s.split)?;
        say(
            out,
            format_args!(
                "model {} best_epoch {} best_value {:.6} epochs {} stopped_early {} skipped_edges {}",
                model.name(),
                st.best_epoch,
                st.best_value,
                st.epochs.len(),
                st.stopped_early,
                st.skipped_edges
            ),
        )?;
        for p in [&ck, &log, &manifest] {
            say(out, format_args!("wrote {}", p.display()))?;
        }
        Ok(())
    }

    fn scorer(&self) -> Result<Box<dyn crate::decoder::EdgeScorer<T>>> {
        let (store, _) = load_checkpoint::<T>(&self.s.cfg)?;
        build_model::<T>(&self.s.cfg, &self.s.train_graph)?.scorer(&store)
    }

    fn evaluate(&self, out: &mut dyn Write) -> Result<()> {
        let cfg = &self.s.cfg;
        let scorer = self.scorer()?;
        let se = side_effects(&self.s.graph)?;
        let report = evaluate_relations(&self.s.graph, &self.s.split, scorer.as_ref(), cfg.fold, &se)?;
        ensure_dir(&cfg.out)?;
        let path = cfg.out.join(format!("eval_{}.csv", cfg.fold.as_str()));
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        report.write_csv(std::io::BufWriter::new(file))?;
        let m = report.macro_avg;
        say(
            out,
            format_args!(
                "fold {} relations {} undefined {} auroc {:.4} auprc {:.4} ap50 {:.4}",
                cfg.fold.as_str(),
                report.relations.len(),
                report.undefined.len(),
                m.auroc,
                m.auprc,
                m.ap50
            ),
        )?;
        say(out, format_args!("wrote {}", path.display()))
    }

    fn predict(&self, out: &mut dyn Write) -> Result<()> {
        let cfg = &self.s.cfg;
        let scorer = self.scorer()?;
        let se = side_effects(&self.s.graph)?;
        let graph = &self.s.graph;
        let preds = score_all_pairs(scorer.as_ref(), graph, &se, |r, i, j| graph.has_edge(r, i, j), cfg.top_k)?;
        ensure_dir(&cfg.out)?;
        let path = cfg.out.join("predictions.csv");
        dio::write_predictions(&path, graph, &preds)?;
        say(out, format_args!("predictions {}", preds.len()))?;
        say(out, format_args!("wrote {}", path.display()))
    }

    fn export_embeddings(&self, out: &mut dyn Write) -> Result<()> {
        let cfg = &self.s.cfg;
        if cfg.model != ModelKind::Main {
            return Err(Error::Argument(format!(
                "{} has no node embeddings; export needs the main model",
                cfg.model.as_str()
            )));
        }
        let (store, _) = load_checkpoint::<T>(cfg)?;
        let model = GraphModel::<T>::new(&self.s.train_graph, cfg.train.layer_spec())?;
        let emb = model.embeddings(&store)?;
        let params = DecoderParams::from_store(&store)?;
        ensure_dir(&cfg.out)?;
        let emb_path = cfg.out.join("embeddings.csv");
        let vec_path = cfg.out.join("relation_vectors.csv");
        dio::write_embeddings(&emb_path, &self.s.graph, &emb)?;
        dio::write_relation_vectors(&vec_path, &self.s.graph, &params.d)?;
        say(out, format_args!("wrote {}", emb_path.display()))?;
        say(out, format_args!("wrote {}", vec_path.display()))
    }

    /// Side-effect diagonals of an existing main-model checkpoint.
    fn relation_vectors(&self) -> Result<Option<Vec<Vec<f64>>>> {
        let cfg = &self.s.cfg;
        if cfg.model != ModelKind::Main || !cfg.checkpoint_path().exists() {
            return Ok(None);
        }
        let (store, _) = load_checkpoint::<T>(cfg)?;
        let d = DecoderParams::from_store(&store)?.d;
        Ok(Some(
            (0..d.rows())
                .map(|s| d.row(s).iter().map(|v| v.as_f64()).collect())
                .collect(),
        ))
    }
}

fn verdict_example(table: &CooccurrenceTable, rows: &[eda::PairVerdict], v: Verdict) -> String {
    rows.iter()
        .filter(|p| p.verdict == v)
        .min_by(|a, b| a.p_value.total_cmp(&b.p_value).then(a.relation.cmp(&b.relation)))
        .map_or(String::new(), |p| {
            table.slot(p.relation).map_or(String::new(), |s| table.labels[s].clone())
        })
}

fn cmd_stats<T: Scalar>(s: &Session, out: &mut dyn Write) -> Result<()>
where
    GraphModel<T>: LinkModel<T>,
{
    let cfg = &s.cfg;
    let graph = &s.graph;
    let seed = cfg.train.seed;
    ensure_dir(&cfg.out)?;

    let table = CooccurrenceTable::from_graph(graph)?;
    let order = table.by_frequency();
    let mut sources: Vec<(String, PairSource)> = vec![
        ("random_pairs".into(), PairSource::RandomPairs { count: None, seed }),
        ("combo_pairs".into(), PairSource::ComboPairs),
    ];
    for &slot in order.iter().take(3) {
        sources.push((
            format!("combo_pairs_with:{}", table.labels[slot]),
            PairSource::ComboPairsWith(table.relations[slot]),
        ));
    }
    let mut strata_rows = Vec::new();
    for (name, source) in &sources {
        let st = eda::jaccard_strata(graph, *source)?;
        strata_rows.push([
            name.clone(),
            st.n_pairs.to_string(),
            st.zero.to_string(),
            st.low.to_string(),
            st.high.to_string(),
        ]);
    }
    let jac_path = cfg.out.join("stats_jaccard.csv");
    dio::write_table(&jac_path, &["source", "n_pairs", "zero", "low", "high"], strata_rows)?;

    let combo = eda::jaccard_values(graph, PairSource::ComboPairs)?;
    let random = eda::jaccard_values(graph, PairSource::RandomPairs { count: None, seed })?;
    let ks = eda::ks_2sample(&combo, &random)?;
    let mut ks_rows = vec![[
        "jaccard_combo_vs_random".to_string(),
        ks.statistic.to_string(),
        ks.p_value.to_string(),
    ]];
    match Typed::<T>::new(s).relation_vectors()? {
        Some(vectors) if table.len() > 3 => {
            let d = eda::embedding_cooccurrence_distance(&vectors, &table, 3, seed)?;
            ks_rows.push([
                "relation_vectors_cooccurring_vs_random".into(),
                d.statistic.to_string(),
                d.p_value.to_string(),
            ]);
        }
        _ => say(out, format_args!("note no main-model checkpoint, embedding distance skipped"))?,
    }
    let ks_path = cfg.out.join("stats_ks.csv");
    dio::write_table(&ks_path, &["comparison", "statistic", "p_value"], ks_rows)?;

    let perm = PermutationConfig {
        n_permutations: cfg.n_permutations,
        seed,
        ..PermutationConfig::default()
    };
    let others: Vec<RelationId> = order.iter().take(cfg.stats_others).map(|&s| table.relations[s]).collect();
    let mut pair_rows = Vec::new();
    let mut summary_rows = Vec::new();
    for &f in order.iter().take(cfg.stats_focus) {
        let focus = table.relations[f];
        let verdicts = eda::cooccurrence_test(&table, focus, &others, perm)?;
        for p in &verdicts {
            pair_rows.push([
                table.labels[f].clone(),
                table.labels[table.slot(p.relation)?].clone(),
                p.observed.to_string(),
                p.expected.to_string(),
                p.p_value.to_string(),
                p.verdict.as_str().to_string(),
            ]);
        }
        let (over, under, none) = eda::verdict_shares(&verdicts);
        summary_rows.push([
            table.labels[f].clone(),
            verdicts.len().to_string(),
            over.to_string(),
            under.to_string(),
            none.to_string(),
            verdict_example(&table, &verdicts, Verdict::Over),
            verdict_example(&table, &verdicts, Verdict::Under),
        ]);
    }
    let pair_path = cfg.out.join("stats_cooccurrence.csv");
    dio::write_table(
        &pair_path,
        &["focus", "other", "observed", "expected", "p_value", "verdict"],
        pair_rows,
    )?;
    let sum_path = cfg.out.join("stats_cooccurrence_summary.csv");
    dio::write_table(
        &sum_path,
        &["focus", "n_tested", "over", "under", "insignificant", "example_over", "example_under"],
        summary_rows,
    )?;
    say(
        out,
        format_args!("jaccard ks statistic {:.4} p_value {:.3e}", ks.statistic, ks.p_value),
    )?;
    for p in [&jac_path, &ks_path, &pair_path, &sum_path] {
        say(out, format_args!("wrote {}", p.display()))?;
    }
    Ok(())
}

fn dispatch<T: Scalar>(command: Command, s: &Session, out: &mut dyn Write) -> Result<()>
where
    GraphModel<T>: LinkModel<T>,
{
    let t = Typed::<T>::new(s);
    match command {
        Command::Train { resume } => t.train(resume, out),
        Command::Evaluate => t.evaluate(out),
        Command::Predict => t.predict(out),
        Command::ExportEmbeddings => t.export_embeddings(out),
        Command::Stats => cmd_stats::<T>(s, out),
        Command::Ingest | Command::Synth => unreachable!("handled without a session"),
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = resolve(cli.command, &cli.flags)?;
    let seed = match (cli.command, &cfg.synthetic) {
        (Command::Synth, Some(spec)) => spec.seed,
        _ => cfg.train.seed,
    };
    say(out, format_args!("seed {seed} config {}", cfg.digest()))?;
    match cli.command {
        Command::Ingest => cmd_ingest(&cfg, out),
        Command::Synth => cmd_synth(&cfg, out),
        command => {
            let session = Session::open(&cfg)?;
            match cfg.precision {
                Precision::F64 => dispatch::<f64>(command, &session, out),
                Precision::F32 => dispatch::<f32>(command, &session, out),
            }
        }
    }
}

/// Run and map any error to its one-line report; returns the exit status.
pub fn main_with(cli: &Cli) -> i32 {
    let result = configure_threads().and_then(|()| run(cli, &mut std::io::stdout().lock()));
    match result {
        Ok(()) => 0,
        Err(e) => {
            let message = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("{}: {message}", e.code());
            1
        }
    }
}
