//! Project-directory orchestration: configuration, stage bookkeeping and the
//! stages that turn a corpus file into an atlas, predictions, reports and plots.
//!
//! A project directory has a fixed layout (`corpus/`, `extractions/`,
//! `embeddings/`, `clusters/`, `atlas/`, `predictions/`, `reports/`, `plots/`).
//! Each stage declares the artifacts it reads, and after a successful run it leaves
//! a stamp under `.sciatlas/stamps/` recording the config hash and the hashes of
//! its inputs and outputs. A rerun with unchanged config and inputs is skipped.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::atlas::{
    build_bipartite, cluster_counts, community_breakdown, degree_stats, export_graph, fit_lognormal,
    partition_investigation, AtlasError, BipartiteGraph, InvestigationPartition,
};
use crate::clustering::{build_cluster_model, ClusterModel, ClusterParams, ClusteringError, Projection2D};
use crate::corpus::{load_corpus, split_by_year, Community, Corpus, CorpusError, CorpusSplit, VenueMap};
use crate::embedding::{embed_aspects, RemoteEmbedder, hash_provider, EmbeddingError, EmbeddingProvider, Side, VectorTable};
use crate::eval::{
    count_novel_links, evaluate_run, metrics_tsv, text_gen_report, text_tsv, truth_from_links, Averaging,
    EmbeddingCosineScorer, EvalError, Partition, Rouge1Scorer, SubprocessScorer, TextScorer,
};
use crate::extraction::{
    batch_extract, BackendKind, BatchOptions, ExtractionError, ExtractionSet, GenClient, GenError, RemoteChatBackend,
    ResponseCache, DEFAULT_PROMPT_VERSION,
};
use crate::io::{sha256_hex, write_atomic, Provenance};
use crate::linkpred::{
    graph_run, imitation_run, katz_run, katz_scores, node2vec_run, rag_run, train_node2vec, Direction, KatzParams,
    LinkPredError, Node2VecParams, PredMethod, PredictionRun, RagRunParams, TrainView,
};
use crate::plot::{cluster_scatter_svg, degree_hist_svg, map_svg, MapCategory};

/// Bumped whenever a stage's output format or semantics change.
pub const STAGE_VERSION: u32 = 1;
/// Config file looked up in the project directory when none is given.
pub const CONFIG_FILE: &str = "sciatlas.toml";
pub const LOCK_FILE: &str = ".sciatlas.lock";
const STAMP_DIR: &str = ".sciatlas/stamps";

pub const PROJECT_DIRS: [&str; 8] =
    ["corpus", "extractions", "embeddings", "clusters", "atlas", "predictions", "reports", "plots"];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("`{stage}` needs {artifact}, which is missing; run `sciatlas {producer}` first")]
    MissingPrerequisite { stage: Stage, artifact: String, producer: Stage },
    #[error(
        "{stage} artifacts were built with config {found}, the current config hashes to {current}; \
         rerun with --force to rebuild"
    )]
    ConfigMismatch { stage: Stage, found: String, current: String },
    #[error("project is locked by {} (delete it if no other run is active)", .0.display())]
    Locked(PathBuf),
    #[error("{0}")]
    Data(String),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// 1 usage, 2 data, 3 backend.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_)
            | PipelineError::MissingPrerequisite { .. }
            | PipelineError::ConfigMismatch { .. }
            | PipelineError::Locked(_) => 1,
            PipelineError::Data(_) | PipelineError::Io { .. } => 2,
            PipelineError::Backend(_) => 3,
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

impl From<CorpusError> for PipelineError {
    fn from(e: CorpusError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<GenError> for PipelineError {
    fn from(e: GenError) -> Self {
        PipelineError::Backend(e.to_string())
    }
}

impl From<ExtractionError> for PipelineError {
    fn from(e: ExtractionError) -> Self {
        match e {
            ExtractionError::Generation { .. } | ExtractionError::BatchBelowThreshold { .. } => {
                PipelineError::Backend(e.to_string())
            }
            ExtractionError::UnknownPromptVersion(_) | ExtractionError::InvalidParallelism => {
                PipelineError::Config(e.to_string())
            }
            ExtractionError::Malformed(_) => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<EmbeddingError> for PipelineError {
    fn from(e: EmbeddingError) -> Self {
        match e {
            EmbeddingError::Transport(_) | EmbeddingError::MissingApiKey(_) | EmbeddingError::Aggregate(_) => {
                PipelineError::Backend(e.to_string())
            }
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<ClusteringError> for PipelineError {
    fn from(e: ClusteringError) -> Self {
        match e {
            ClusteringError::Generation(_) => PipelineError::Backend(e.to_string()),
            ClusteringError::InvalidParams(_) => PipelineError::Config(e.to_string()),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<AtlasError> for PipelineError {
    fn from(e: AtlasError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<LinkPredError> for PipelineError {
    fn from(e: LinkPredError) -> Self {
        match e {
            LinkPredError::Generation(g) => g.into(),
            LinkPredError::Embedding(m) => m.into(),
            LinkPredError::InvalidParams(_) => PipelineError::Config(e.to_string()),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for PipelineError {
    fn from(e: EvalError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenBackendChoice {
    #[default]
    Mock,
    Remote,
    /// Replay previously cached responses; a miss is a backend failure.
    Cache,
}

impl std::str::FromStr for GenBackendChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mock" => Ok(GenBackendChoice::Mock),
            "remote" => Ok(GenBackendChoice::Remote),
            "cache" => Ok(GenBackendChoice::Cache),
            _ => Err(format!("unknown backend {s:?} (expected mock, remote or cache)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedBackendChoice {
    #[default]
    Hash,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Source corpus (JSON lines) read by `ingest`.
    pub corpus: PathBuf,
    /// `venue<TAB>science|ai` map read by `ingest`.
    pub venues: PathBuf,
    /// Response and embedding caches for remote backends.
    pub cache: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig { corpus: "corpus.jsonl".into(), venues: "venues.tsv".into(), cache: ".cache".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub generation: GenBackendChoice,
    pub embedding: EmbedBackendChoice,
    pub chat_base_url: String,
    pub chat_model: String,
    pub chat_api_key_env: String,
    pub embed_base_url: String,
    pub embed_model: String,
    pub embed_dim: usize,
    pub embed_api_key_env: String,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            generation: GenBackendChoice::Mock,
            embedding: EmbedBackendChoice::Hash,
            chat_base_url: "https://api.openai.com/v1".into(),
            chat_model: String::new(),
            chat_api_key_env: "OPENAI_API_KEY".into(),
            embed_base_url: "https://api.openai.com/v1".into(),
            embed_model: String::new(),
            embed_dim: 0,
            embed_api_key_env: "OPENAI_API_KEY".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub prompt_version: String,
    pub min_success_fraction: f64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig { prompt_version: DEFAULT_PROMPT_VERSION.into(), min_success_fraction: 0.95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Publications up to and including this year train; later ones test.
    pub last_train_year: i32,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { last_train_year: 2022 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AtlasConfig {
    /// Links lighter than this are left out of the exported graph files.
    pub export_min_weight: usize,
    /// Fit the investigation regression through the origin.
    pub through_origin: bool,
}

impl Default for AtlasConfig {
    fn default() -> Self {
        AtlasConfig { export_min_weight: 1, through_origin: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkPredConfig {
    /// Prediction list length; raised to the largest evaluation K if smaller.
    pub k: usize,
    /// Retrieved exemplars per RAG query.
    pub n_examples: usize,
    pub katz: KatzParams,
    pub node2vec: Node2VecParams,
}

impl Default for LinkPredConfig {
    fn default() -> Self {
        LinkPredConfig { k: 10, n_examples: 5, katz: KatzParams::default(), node2vec: Node2VecParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalScorer {
    pub name: String,
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    pub averaging: Averaging,
    /// Add the embedding-cosine text metric next to ROUGE-1.
    pub cosine: bool,
    /// Extra text metrics computed by external programs.
    pub scorers: Vec<ExternalScorer>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { ks: vec![1, 3, 5, 10], averaging: Averaging::Macro, cosine: true, scorers: vec![] }
    }
}

/// Settings that affect speed only; excluded from the config hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeConfig {
    /// Worker threads, 0 for one per core.
    pub threads: usize,
    pub extraction_parallelism: usize,
    pub requests_per_second: f64,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig { threads: 0, extraction_parallelism: 8, requests_per_second: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    /// Seeds every stochastic stage: hash embeddings, layout and node2vec.
    pub seed: u64,
    pub paths: PathsConfig,
    pub backend: BackendConfig,
    pub extraction: ExtractionConfig,
    pub split: SplitConfig,
    pub clustering: ClusterParams,
    pub atlas: AtlasConfig,
    pub linkpred: LinkPredConfig,
    pub eval: EvalConfig,
    #[serde(skip_serializing)]
    pub runtime: RuntimeConfig,
}

impl ProjectConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_table(parse_table(text)?)
    }

    /// Read `path` (or start from defaults) and apply `section.key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|source| PipelineError::Io { path: p.to_path_buf(), source })?;
                parse_table(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Self::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let config: ProjectConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| PipelineError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return bad("eval.ks must be a non-empty list of positive integers");
        }
        if self.linkpred.k == 0 {
            return bad("linkpred.k must be positive");
        }
        if !(0.0..=1.0).contains(&self.extraction.min_success_fraction) {
            return bad("extraction.min_success_fraction must lie in [0, 1]");
        }
        if self.backend.embedding == EmbedBackendChoice::Remote
            && (self.backend.embed_model.is_empty() || self.backend.embed_dim == 0)
        {
            return bad("a remote embedding backend needs backend.embed_model and backend.embed_dim");
        }
        if self.backend.generation != GenBackendChoice::Mock && self.backend.chat_model.is_empty() {
            return bad("remote and cache generation backends need backend.chat_model");
        }
        Ok(())
    }

    /// Sorted-key JSON of every output-relevant setting.
    pub fn canonical_json(&self) -> String {
        serde_json::to_value(self).expect("config serializes").to_string()
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.canonical_json().as_bytes())
    }

    /// Length of every prediction list.
    pub fn prediction_k(&self) -> usize {
        self.linkpred.k.max(self.eval.ks.iter().copied().max().unwrap_or(0))
    }

    fn layout_params(&self) -> ClusterParams {
        let mut p = self.clustering;
        p.layout.seed = self.seed;
        p
    }
}

fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>().map_err(|e| PipelineError::Config(e.to_string()))
}

/// Set `a.b.c = value` in a TOML table. The value is parsed as TOML, falling back
/// to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| PipelineError::Config(format!("override {assignment:?} is not key=value")))?;
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(PipelineError::Config(format!("override key {key:?} is malformed")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| PipelineError::Config(format!("override {key:?}: {p} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Size the global worker pool. Deterministic runs use one thread. Later calls in
/// the same process are ignored.
pub fn configure_threads(deterministic: bool, threads: usize) {
    let n = if deterministic { 1 } else { threads };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if n > 0 {
        builder = builder.num_threads(n);
    }
    if builder.build_global().is_err() {
        log::debug!("global thread pool already configured");
    }
}

// ---------------------------------------------------------------------------
// Stages and artifacts

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Extract,
    Embed,
    Cluster,
    Atlas,
    Predict,
    Eval,
    Plot,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Extract,
        Stage::Embed,
        Stage::Cluster,
        Stage::Atlas,
        Stage::Predict,
        Stage::Eval,
        Stage::Plot,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Extract => "extract",
            Stage::Embed => "embed",
            Stage::Cluster => "cluster",
            Stage::Atlas => "atlas",
            Stage::Predict => "predict",
            Stage::Eval => "eval",
            Stage::Plot => "plot",
        }
    }

    fn provenance_tag(self) -> String {
        format!("{}/{STAGE_VERSION}", self.as_str())
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

const CORPUS_FILE: &str = "corpus/corpus.jsonl";
const VENUES_FILE: &str = "corpus/venues.tsv";
const EXTRACTIONS_FILE: &str = "extractions/extractions.jsonl";

const SIDES: [Side; 2] = [Side::Problem, Side::Method];

fn cluster_files(side: Side) -> [String; 6] {
    let s = side.as_str();
    [
        format!("clusters/{s}_assignments.tsv"),
        format!("clusters/{s}_labels.tsv"),
        format!("clusters/{s}_centroids.json"),
        format!("clusters/{s}_centroids.f32"),
        format!("clusters/{s}_coords.tsv"),
        format!("clusters/{s}_layout.json"),
    ]
}

fn embedding_files(name: &str) -> [String; 2] {
    [format!("embeddings/{name}.json"), format!("embeddings/{name}.f32")]
}

fn partition_file(side: Side) -> String {
    format!("atlas/{}_partition.tsv", side.as_str())
}

const PREDICTION_METHODS: [PredMethod; 5] =
    [PredMethod::Katz, PredMethod::Node2vec, PredMethod::LlmRag, PredMethod::LlmGraph, PredMethod::Imitation];

fn prediction_file(method: PredMethod, direction: Direction) -> String {
    format!("predictions/{method}_{direction}.jsonl")
}

/// Artifacts a stage reads, each with the stage that produces it, in pipeline order.
pub fn prerequisites(stage: Stage) -> Vec<(String, Stage)> {
    let corpus = || vec![(CORPUS_FILE.to_string(), Stage::Ingest), (VENUES_FILE.to_string(), Stage::Ingest)];
    let extractions = || vec![(EXTRACTIONS_FILE.to_string(), Stage::Extract)];
    let side_vectors = || {
        SIDES.iter().flat_map(|s| embedding_files(s.as_str())).map(|f| (f, Stage::Embed)).collect::<Vec<_>>()
    };
    let clusters = || SIDES.iter().flat_map(|&s| cluster_files(s)).map(|f| (f, Stage::Cluster)).collect::<Vec<_>>();
    let atlas = || SIDES.iter().map(|&s| (partition_file(s), Stage::Atlas)).collect::<Vec<_>>();
    let predictions = || {
        Direction::BOTH
            .iter()
            .flat_map(|&d| PREDICTION_METHODS.iter().map(move |&m| (prediction_file(m, d), Stage::Predict)))
            .collect::<Vec<_>>()
    };
    match stage {
        Stage::Ingest => vec![],
        Stage::Extract => corpus(),
        Stage::Embed => [corpus(), extractions()].concat(),
        Stage::Cluster => [extractions(), side_vectors()].concat(),
        Stage::Atlas => [corpus(), extractions(), clusters()].concat(),
        Stage::Predict => [corpus(), extractions(), side_vectors(), clusters()].concat(),
        Stage::Eval => [corpus(), extractions(), side_vectors(), clusters(), atlas(), predictions()].concat(),
        Stage::Plot => [corpus(), extractions(), clusters(), atlas()].concat(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Map,
    DegreeHist,
    ClusterScatter,
}

impl PlotKind {
    pub const ALL: [PlotKind; 3] = [PlotKind::Map, PlotKind::DegreeHist, PlotKind::ClusterScatter];

    pub fn as_str(self) -> &'static str {
        match self {
            PlotKind::Map => "map",
            PlotKind::DegreeHist => "degree_hist",
            PlotKind::ClusterScatter => "cluster_scatter",
        }
    }
}

impl std::str::FromStr for PlotKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.replace('-', "_"))
            .ok_or_else(|| format!("unknown plot kind {s:?} (expected map, degree_hist or cluster_scatter)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Stamp {
    stage: Stage,
    stage_version: u32,
    config_hash: String,
    seed: u64,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    Skipped,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Rebuild even when stamps match, and accept artifacts built under another config.
    pub force: bool,
}

struct LockGuard(PathBuf);

impl LockGuard {
    fn acquire(path: PathBuf) -> Result<Self> {
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(LockGuard(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(PipelineError::Locked(path)),
            Err(source) => Err(PipelineError::Io { path, source }),
        }
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Files written by one stage run, relative to the project root.
struct Outputs<'a> {
    root: &'a Path,
    files: Vec<String>,
}

impl Outputs<'_> {
    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        write_atomic(&path, bytes).map_err(|source| PipelineError::Io { path, source })?;
        self.files.push(rel.to_string());
        Ok(())
    }

    fn json(&mut self, rel: &str, value: &Value) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("json value serializes");
        bytes.push(b'\n');
        self.write(rel, &bytes)
    }

    /// Record files a module writer produced itself.
    fn extend(&mut self, rels: impl IntoIterator<Item = String>) {
        self.files.extend(rels);
    }
}

/// An open project directory. Holds the lock until dropped.
pub struct Project {
    root: PathBuf,
    base_dir: PathBuf,
    config: ProjectConfig,
    config_hash: String,
    options: RunOptions,
    gen: OnceLock<GenClient>,
    embed: OnceLock<EmbeddingProvider>,
    _lock: LockGuard,
}

impl Project {
    /// Open (creating if needed) `root`. Relative config paths resolve against `base_dir`.
    pub fn open(root: &Path, base_dir: &Path, config: ProjectConfig, options: RunOptions) -> Result<Self> {
        config.validate()?;
        for d in PROJECT_DIRS.iter().chain([&STAMP_DIR]) {
            let path = root.join(d);
            fs::create_dir_all(&path).map_err(|source| PipelineError::Io { path, source })?;
        }
        let lock = LockGuard::acquire(root.join(LOCK_FILE))?;
        let config_hash = config.hash();
        Ok(Project {
            root: root.to_path_buf(),
            base_dir: base_dir.to_path_buf(),
            config,
            config_hash,
            options,
            gen: OnceLock::new(),
            embed: OnceLock::new(),
            _lock: lock,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &ProjectConfig {
        &self.config
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn provenance(&self, stage: Stage) -> Provenance {
        Provenance { config_hash: self.config_hash.clone(), seed: self.config.seed, stage_version: stage.provenance_tag() }
    }

    fn read_text(&self, rel: &str) -> Result<String> {
        let path = self.root.join(rel);
        fs::read_to_string(&path).map_err(|source| PipelineError::Io { path, source })
    }

    fn gen_client(&self) -> Result<&GenClient> {
        if let Some(c) = self.gen.get() {
            return Ok(c);
        }
        let b = &self.config.backend;
        let cache_dir = self.resolve(&self.config.paths.cache).join("generation");
        let client = match b.generation {
            GenBackendChoice::Mock => GenClient::mock(),
            GenBackendChoice::Cache => GenClient::replay(&b.chat_model, cache_dir),
            GenBackendChoice::Remote => {
                let backend = RemoteChatBackend::from_env(&b.chat_base_url, &b.chat_model, &b.chat_api_key_env)?;
                GenClient::new(BackendKind::Remote, Arc::new(backend), ResponseCache::on_disk(cache_dir))
                    .with_rate_limit(self.config.runtime.requests_per_second)
            }
        };
        Ok(self.gen.get_or_init(|| client))
    }

    fn embedder(&self) -> Result<&EmbeddingProvider> {
        if let Some(p) = self.embed.get() {
            return Ok(p);
        }
        let b = &self.config.backend;
        let provider = match b.embedding {
            EmbedBackendChoice::Hash => hash_provider(self.config.seed),
            EmbedBackendChoice::Remote => {
                let backend = RemoteEmbedder::from_env(&b.embed_base_url, &b.embed_model, b.embed_dim, &b.embed_api_key_env)?;
                EmbeddingProvider::new(Arc::new(backend))
                    .with_cache_dir(self.resolve(&self.config.paths.cache).join("embeddings"))
            }
        };
        Ok(self.embed.get_or_init(|| provider))
    }

    fn check_prerequisites(&self, stage: Stage) -> Result<()> {
        for (artifact, producer) in prerequisites(stage) {
            if !self.root.join(&artifact).is_file() {
                return Err(PipelineError::MissingPrerequisite { stage, artifact, producer });
            }
        }
        Ok(())
    }

    fn hash_file(&self, path: &Path) -> Result<String> {
        let bytes = fs::read(path).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })?;
        Ok(sha256_hex(&bytes))
    }

    fn input_hashes(&self, stage: Stage) -> Result<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        if stage == Stage::Ingest {
            for (name, p) in [("source:corpus", &self.config.paths.corpus), ("source:venues", &self.config.paths.venues)] {
                out.insert(name.to_string(), self.hash_file(&self.resolve(p))?);
            }
        }
        for (artifact, _) in prerequisites(stage) {
            let h = self.hash_file(&self.root.join(&artifact))?;
            out.insert(artifact, h);
        }
        Ok(out)
    }

    fn stamp_path(&self, stage: Stage) -> PathBuf {
        self.root.join(STAMP_DIR).join(format!("{stage}.json"))
    }

    fn read_stamp(&self, stage: Stage) -> Option<Stamp> {
        let bytes = fs::read(self.stamp_path(stage)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    fn outputs_intact(&self, stamp: &Stamp) -> bool {
        stamp.outputs.iter().all(|(rel, h)| self.hash_file(&self.root.join(rel)).is_ok_and(|x| &x == h))
    }

    /// Run one stage unless its stamp shows the outputs are current.
    pub fn run(&self, stage: Stage) -> Result<StageOutcome> {
        self.check_prerequisites(stage)?;
        let inputs = self.input_hashes(stage)?;
        if let Some(old) = self.read_stamp(stage) {
            if old.config_hash != self.config_hash && !self.options.force {
                return Err(PipelineError::ConfigMismatch {
                    stage,
                    found: old.config_hash,
                    current: self.config_hash.clone(),
                });
            }
            if !self.options.force
                && old.stage_version == STAGE_VERSION
                && old.inputs == inputs
                && self.outputs_intact(&old)
            {
                info!("{stage}: up to date");
                return Ok(StageOutcome::Skipped);
            }
        }
        let _ = fs::remove_file(self.stamp_path(stage));
        let mut out = Outputs { root: &self.root, files: Vec::new() };
        match stage {
            Stage::Ingest => self.ingest(&mut out)?,
            Stage::Extract => self.extract(&mut out)?,
            Stage::Embed => self.embed(&mut out)?,
            Stage::Cluster => self.cluster(&mut out)?,
            Stage::Atlas => self.atlas(&mut out)?,
            Stage::Predict => self.predict(&mut out)?,
            Stage::Eval => self.eval(&mut out)?,
            Stage::Plot => self.plot(&mut out, &PlotKind::ALL)?,
        }
        let mut outputs = BTreeMap::new();
        for rel in out.files {
            let h = self.hash_file(&self.root.join(&rel))?;
            outputs.insert(rel, h);
        }
        let stamp = Stamp {
            stage,
            stage_version: STAGE_VERSION,
            config_hash: self.config_hash.clone(),
            seed: self.config.seed,
            inputs,
            outputs,
        };
        let path = self.stamp_path(stage);
        let bytes = serde_json::to_vec_pretty(&stamp).expect("stamp serializes");
        write_atomic(&path, &bytes).map_err(|source| PipelineError::Io { path, source })?;
        info!("{stage}: done ({} artifacts)", stamp.outputs.len());
        Ok(StageOutcome::Ran)
    }

    /// Every stage in order.
    pub fn run_all(&self) -> Result<Vec<(Stage, StageOutcome)>> {
        Stage::ALL.iter().map(|&s| self.run(s).map(|o| (s, o))).collect()
    }

    /// Render selected plot kinds outside stage bookkeeping. Returns the files written.
    pub fn render_plots(&self, kinds: &[PlotKind]) -> Result<Vec<PathBuf>> {
        self.check_prerequisites(Stage::Plot)?;
        let mut out = Outputs { root: &self.root, files: Vec::new() };
        self.plot(&mut out, kinds)?;
        Ok(out.files.iter().map(|f| self.root.join(f)).collect())
    }

    // -- loaders ----------------------------------------------------------

    fn load_corpus(&self) -> Result<Corpus> {
        let venues = VenueMap::load(&self.root.join(VENUES_FILE))?;
        Ok(load_corpus(&self.root.join(CORPUS_FILE), &venues)?.0)
    }

    fn load_split(&self, corpus: &Corpus) -> CorpusSplit {
        split_by_year(corpus, self.config.split.last_train_year)
    }

    fn load_extractions(&self) -> Result<ExtractionSet> {
        Ok(ExtractionSet::from_jsonl(&self.read_text(EXTRACTIONS_FILE)?)?)
    }

    fn load_vectors(&self, name: &str) -> Result<VectorTable> {
        Ok(VectorTable::read(&self.root.join("embeddings"), name)?)
    }

    fn load_models(&self) -> Result<(ClusterModel, ClusterModel)> {
        let dir = self.root.join("clusters");
        Ok((ClusterModel::read(&dir, Side::Problem)?, ClusterModel::read(&dir, Side::Method)?))
    }

    /// Investigation partitions from training-period cluster counts.
    fn training_partitions(
        &self,
        extractions: &ExtractionSet,
        models: &(ClusterModel, ClusterModel),
        split: &CorpusSplit,
    ) -> Result<(InvestigationPartition, InvestigationPartition)> {
        let fit = |side: Side, model: &ClusterModel| -> Result<InvestigationPartition> {
            let counts = cluster_counts(extractions, model, Some(&split.train));
            partition_investigation(side, &counts, self.config.atlas.through_origin)
                .map_err(|e| PipelineError::Data(format!("{side} investigation partition: {e}")))
        };
        Ok((fit(Side::Problem, &models.0)?, fit(Side::Method, &models.1)?))
    }

    // -- stages -----------------------------------------------------------

    fn ingest(&self, out: &mut Outputs) -> Result<()> {
        let prov = self.provenance(Stage::Ingest);
        let venues_path = self.resolve(&self.config.paths.venues);
        let venues_text =
            fs::read_to_string(&venues_path).map_err(|source| PipelineError::Io { path: venues_path.clone(), source })?;
        let venues = VenueMap::parse(&venues_text)?;
        let (corpus, report) = load_corpus(&self.resolve(&self.config.paths.corpus), &venues)?;
        if corpus.is_empty() {
            return Err(PipelineError::Data("corpus has no valid records".into()));
        }
        if !report.rejected.is_empty() {
            warn!("{} record(s) quarantined to corpus/rejected.tsv", report.rejected.len());
        }

        let mut v = prov.tsv_comment();
        v.push_str(&venues_text);
        if !v.ends_with('\n') {
            v.push('\n');
        }
        out.write(VENUES_FILE, v.as_bytes())?;
        out.write(CORPUS_FILE, &with_jsonl_provenance(&corpus.to_jsonl(), &prov))?;

        let mut r = prov.tsv_comment();
        r.push_str("line\tid\treason\n");
        r.push_str(&report.render());
        out.write("corpus/rejected.tsv", r.as_bytes())?;

        let split = self.load_split(&corpus);
        let communities: BTreeMap<&str, usize> =
            corpus.community_counts().into_iter().map(|(c, n)| (c.as_str(), n)).collect();
        out.json(
            "corpus/split.json",
            &json!({
                "provenance": prov,
                "records": corpus.len(),
                "rejected": report.rejected.len(),
                "communities": communities,
                "last_train_year": split.last_train_year,
                "train": split.train,
                "test": split.test,
            }),
        )
    }

    fn extract(&self, out: &mut Outputs) -> Result<()> {
        let prov = self.provenance(Stage::Extract);
        let corpus = self.load_corpus()?;
        let options = BatchOptions {
            parallelism: self.config.runtime.extraction_parallelism.max(1).min(rayon::current_num_threads()),
            prompt_version: self.config.extraction.prompt_version.clone(),
            min_success_fraction: self.config.extraction.min_success_fraction,
        };
        let (set, report) = batch_extract(&corpus, self.gen_client()?, &options)?;
        out.write(EXTRACTIONS_FILE, &set.to_jsonl(Some(&prov)))?;
        out.json("extractions/batch_report.json", &json!({ "provenance": prov, "report": report }))?;
        let stats = crate::corpus::corpus_stats(&corpus, &set)?;
        out.json("reports/corpus_stats.json", &json!({ "provenance": prov, "stats": stats }))
    }

    fn embed(&self, out: &mut Outputs) -> Result<()> {
        let prov = self.provenance(Stage::Embed);
        let extractions = self.load_extractions()?;
        let table = embed_aspects(&extractions, self.embedder()?)?;
        let dir = self.root.join("embeddings");
        for (name, t) in [("problem", &table.problem), ("method", &table.method), ("usage", &table.usage)] {
            t.write(&dir, name, Some(&prov))?;
            out.extend(embedding_files(name));
        }
        Ok(())
    }

    fn cluster(&self, out: &mut Outputs) -> Result<()> {
        let prov = self.provenance(Stage::Cluster);
        let extractions = self.load_extractions()?;
        let params = self.config.layout_params();
        let dir = self.root.join("clusters");
        for side in SIDES {
            let vectors = self.load_vectors(side.as_str())?;
            let (proj, model) = build_cluster_model(side, &vectors, &extractions, self.gen_client()?, &params)?;
            info!("{side}: {} clusters, {} noise points", model.clusters.len(), model.noise_count());
            model.write(&dir, Some(&prov))?;
            proj.write(&dir, side, Some(&prov))?;
            out.extend(cluster_files(side));
        }
        Ok(())
    }

    fn atlas(&self, out: &mut Outputs) -> Result<()> {
        let prov = self.provenance(Stage::Atlas);
        let corpus = self.load_corpus()?;
        let split = self.load_split(&corpus);
        let extractions = self.load_extractions()?;
        let models = self.load_models()?;
        let (pm, mm) = (&models.0, &models.1);

        let mut graphs = serde_json::Map::new();
        let mut full_graph = None;
        for (name, only) in [("full", None), ("train", Some(&split.train)), ("test", Some(&split.test))] {
            let (graph, report) = build_bipartite(&extractions, pm, mm, only);
            let dir = self.root.join("atlas").join(name);
            export_graph(&graph, self.config.atlas.export_min_weight, &dir, Some(&prov))?;
            out.extend(["nodes.tsv", "edges.tsv", "graph.graphml"].map(|f| format!("atlas/{name}/{f}")));
            graphs.insert(
                name.to_string(),
                json!({
                    "build": report,
                    "problem_nodes": graph.problem_nodes.len(),
                    "method_nodes": graph.method_nodes.len(),
                    "links": graph.links().len(),
                }),
            );
            if name == "full" {
                full_graph = Some(graph);
            }
        }
        let full = full_graph.expect("full graph built");

        let mut degrees = Vec::new();
        for side in SIDES {
            for weighted in [false, true] {
                let stats = degree_stats(&full, side, weighted);
                let values: Vec<f64> = stats.degrees.values().map(|&d| d as f64).collect();
                let fit = match fit_lognormal(&values) {
                    Ok(f) => serde_json::to_value(f).expect("fit serializes"),
                    Err(e) => json!({ "error": e.to_string() }),
                };
                degrees.push(json!({ "stats": stats, "lognormal": fit }));
            }
        }

        let mut breakdown: BTreeMap<&str, BTreeMap<&str, Value>> = BTreeMap::new();
        for ((community, side), ranked) in community_breakdown(&corpus, &extractions, pm, mm) {
            breakdown
                .entry(community.as_str())
                .or_default()
                .insert(side.as_str(), serde_json::to_value(ranked).expect("ranking serializes"));
        }

        let (pp, mp) = self.training_partitions(&extractions, &models, &split)?;
        for part in [&pp, &mp] {
            let mut t = prov.tsv_comment();
            t.push_str(&part.to_tsv());
            out.write(&partition_file(part.side), t.as_bytes())?;
        }
        let fits: Vec<Value> = [&pp, &mp]
            .iter()
            .map(|p| {
                json!({
                    "side": p.side,
                    "slope": p.slope,
                    "intercept": p.intercept,
                    "through_origin": p.through_origin,
                    "residual_df": p.residual_df,
                    "t_quantile": p.t_quantile,
                    "well": p.well(),
                    "under": p.under(),
                })
            })
            .collect();

        out.json(
            "atlas/summary.json",
            &json!({
                "provenance": prov,
                "graphs": graphs,
                "degrees": degrees,
                "community_breakdown": breakdown,
                "investigation": fits,
            }),
        )
    }

    fn predict(&self, out: &mut Outputs) -> Result<()> {
        let prov = self.provenance(Stage::Predict);
        let corpus = self.load_corpus()?;
        let split = self.load_split(&corpus);
        let extractions = self.load_extractions()?;
        let models = self.load_models()?;
        let problem_vectors = self.load_vectors("problem")?;
        let method_vectors = self.load_vectors("method")?;
        let (train_graph, _) = build_bipartite(&extractions, &models.0, &models.1, Some(&split.train));
        if train_graph.edges.is_empty() {
            return Err(PipelineError::Data(format!(
                "no AI4Science publications with clustered aspects up to {}; nothing to train on",
                split.last_train_year
            )));
        }
        let k = self.config.prediction_k();
        let lp = &self.config.linkpred;

        let katz = katz_scores(&train_graph, &lp.katz)?;
        let embeds = train_node2vec(&train_graph, &lp.node2vec, self.config.seed)?;
        let train_ids: BTreeSet<String> =
            extractions.ai4science().filter(|r| split.is_train(&r.pub_id)).map(|r| r.pub_id.clone()).collect();
        let view = TrainView {
            graph: &train_graph,
            extractions: &extractions,
            train_ids: &train_ids,
            problem_model: &models.0,
            method_model: &models.1,
            problem_vectors: &problem_vectors,
            method_vectors: &method_vectors,
        };
        let client = self.gen_client()?;
        let provider = self.embedder()?;
        let rag = RagRunParams { k, n_examples: lp.n_examples };

        for direction in Direction::BOTH {
            let source_model = view.model(direction.source_side());
            let queries: Vec<_> = extractions
                .ai4science()
                .filter(|r| split.is_test(&r.pub_id) && source_model.assignment(&r.pub_id).is_some())
                .collect();
            info!("{direction}: {} test queries", queries.len());
            let runs = [
                katz_run(&katz, &train_graph, direction, k)?,
                node2vec_run(&embeds, direction, k)?,
                rag_run(client, provider, &view, &queries, direction, rag)?,
                graph_run(client, provider, &view, direction, k)?,
                imitation_run(provider, &view, &queries, direction, k)?,
            ];
            for run in runs {
                run.validate()?;
                out.write(&prediction_file(run.method, direction), &run.to_jsonl(Some(&prov)))?;
            }
        }
        Ok(())
    }

    fn load_run(&self, method: PredMethod, direction: Direction) -> Result<PredictionRun> {
        let rel = prediction_file(method, direction);
        PredictionRun::from_jsonl(&self.read_text(&rel)?).map_err(|e| PipelineError::Data(format!("{rel}: {e}")))
    }

    fn eval(&self, out: &mut Outputs) -> Result<()> {
        let prov = self.provenance(Stage::Eval);
        let corpus = self.load_corpus()?;
        let split = self.load_split(&corpus);
        let extractions = self.load_extractions()?;
        let models = self.load_models()?;
        let (test_graph, _) = build_bipartite(&extractions, &models.0, &models.1, Some(&split.test));
        let (full_graph, _) = build_bipartite(&extractions, &models.0, &models.1, None);
        let (train_graph, _) = build_bipartite(&extractions, &models.0, &models.1, Some(&split.train));
        let references = [("train", train_graph.links()), ("all", full_graph.links())];
        let (pp, mp) = self.training_partitions(&extractions, &models, &split)?;
        let ks = &self.config.eval.ks;
        let provider = self.embedder()?;
        let external: Vec<SubprocessScorer> = self
            .config
            .eval
            .scorers
            .iter()
            .map(|s| SubprocessScorer { name: s.name.clone(), program: s.program.clone(), args: s.args.clone() })
            .collect();

        let mut metric_rows = Vec::new();
        let mut text_rows = Vec::new();
        let mut novel = String::from("direction\tmethod\treference\tk\tnovel_links\n");
        for direction in Direction::BOTH {
            let truth = truth_from_links(&test_graph.links(), direction);
            let part = if direction.source_side() == Side::Problem { &pp } else { &mp };
            let partitions = [(Partition::Well, part.well()), (Partition::Under, part.under())];
            let cosine = EmbeddingCosineScorer { provider, instruction: direction.target_side().instruction() };
            let mut scorers: Vec<&dyn TextScorer> = vec![&Rouge1Scorer];
            if self.config.eval.cosine {
                scorers.push(&cosine);
            }
            scorers.extend(external.iter().map(|s| s as &dyn TextScorer));

            for method in PREDICTION_METHODS {
                let run = self.load_run(method, direction)?;
                metric_rows.extend(evaluate_run(&run, &truth, ks, self.config.eval.averaging, &partitions)?);
                for (name, links) in &references {
                    for &k in ks {
                        let n = count_novel_links(&run, links, k);
                        novel.push_str(&format!("{direction}\t{method}\t{name}\t{k}\t{n}\n"));
                    }
                }
                if matches!(method, PredMethod::LlmRag | PredMethod::Imitation) {
                    match text_gen_report(&run, &extractions, &scorers, ks, &partitions) {
                        Ok(rows) => text_rows.extend(rows),
                        Err(EvalError::MissingTexts { method }) => warn!("{method} {direction}: no generated texts"),
                        Err(e) => return Err(e.into()),
                    }
                }
            }
        }
        let header = prov.tsv_comment();
        out.write("reports/metrics.tsv", format!("{header}{}", metrics_tsv(&metric_rows)).as_bytes())?;
        out.write("reports/text_generation.tsv", format!("{header}{}", text_tsv(&text_rows)).as_bytes())?;
        out.write("reports/novel_links.tsv", format!("{header}{novel}").as_bytes())
    }

    fn plot(&self, out: &mut Outputs, kinds: &[PlotKind]) -> Result<()> {
        let prov = self.provenance(Stage::Plot);
        let corpus = self.load_corpus()?;
        let split = self.load_split(&corpus);
        let extractions = self.load_extractions()?;
        let models = self.load_models()?;
        let svg = |s: String| with_svg_provenance(&s, &prov);

        if kinds.contains(&PlotKind::Map) {
            for side in SIDES {
                let proj = Projection2D::read(&self.root.join("clusters"), side)?;
                let points: Vec<([f64; 2], MapCategory)> = proj
                    .ids
                    .iter()
                    .zip(&proj.coords)
                    .map(|(id, &c)| (c, map_category(&corpus, &extractions, id)))
                    .collect();
                let title = format!("{} aspects", capitalized(side.as_str()));
                out.write(&format!("plots/map_{side}.svg"), svg(map_svg(&points, &title)).as_bytes())?;
            }
        }
        if kinds.contains(&PlotKind::DegreeHist) {
            let (graph, _) = build_bipartite(&extractions, &models.0, &models.1, None);
            for side in SIDES {
                let degrees = weighted_degrees(&graph, side);
                let fit = fit_lognormal(&degrees).ok();
                let title = format!("{} cluster degrees", capitalized(side.as_str()));
                out.write(
                    &format!("plots/degree_hist_{side}.svg"),
                    svg(degree_hist_svg(&degrees, fit.as_ref(), &title)).as_bytes(),
                )?;
            }
        }
        if kinds.contains(&PlotKind::ClusterScatter) {
            let (pp, mp) = self.training_partitions(&extractions, &models, &split)?;
            for part in [&pp, &mp] {
                let title = format!("{} clusters: size vs AI4Science", capitalized(part.side.as_str()));
                out.write(
                    &format!("plots/cluster_scatter_{}.svg", part.side),
                    svg(cluster_scatter_svg(part, &title)).as_bytes(),
                )?;
            }
        }
        Ok(())
    }
}

fn weighted_degrees(graph: &BipartiteGraph, side: Side) -> Vec<f64> {
    degree_stats(graph, side, true).degrees.values().map(|&d| d as f64).collect()
}

fn map_category(corpus: &Corpus, extractions: &ExtractionSet, id: &str) -> MapCategory {
    let Some(r) = extractions.get(id) else {
        return MapCategory::AiNonScience;
    };
    if r.is_ai4science() {
        return MapCategory::Ai4Science;
    }
    match (r.is_scientific, r.uses_ai) {
        (true, false) => MapCategory::ScienceNonAi,
        (false, true) => MapCategory::AiNonScience,
        _ => match corpus.get(id).map(|p| p.community) {
            Some(Community::Science) => MapCategory::ScienceNonAi,
            _ => MapCategory::AiNonScience,
        },
    }
}

fn capitalized(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

/// Add a `provenance` key to the JSON header on the first line.
fn with_jsonl_provenance(bytes: &[u8], prov: &Provenance) -> Vec<u8> {
    let text = std::str::from_utf8(bytes).expect("jsonl is utf-8");
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let mut header: serde_json::Map<String, Value> = serde_json::from_str(first).expect("jsonl header is an object");
    header.insert("provenance".into(), serde_json::to_value(prov).expect("provenance serializes"));
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    out.extend_from_slice(rest.as_bytes());
    out
}

/// Insert a provenance comment after the opening `<svg>` tag.
fn with_svg_provenance(svg: &str, prov: &Provenance) -> String {
    let (first, rest) = svg.split_once('\n').unwrap_or((svg, ""));
    format!(
        "{first}\n<!-- config_hash={} seed={} stage_version={} -->\n{rest}",
        prov.config_hash, prov.seed, prov.stage_version
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse_values_and_nest() {
        let mut t = toml::Table::new();
        apply_override(&mut t, "linkpred.katz.alpha=0.05").unwrap();
        apply_override(&mut t, "eval.ks=[1,2]").unwrap();
        apply_override(&mut t, "backend.chat_model=some-model").unwrap();
        let c = ProjectConfig::from_table(t).unwrap();
        assert_eq!(c.linkpred.katz.alpha, 0.05);
        assert_eq!(c.eval.ks, vec![1, 2]);
        assert_eq!(c.backend.chat_model, "some-model");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ProjectConfig::from_toml_str("[linkpred]\nkk = 3\n").is_err());
        assert!(ProjectConfig::from_toml_str("sed = 3\n").is_err());
    }

    #[test]
    fn hash_ignores_runtime_settings() {
        let a = ProjectConfig::default();
        let mut b = a.clone();
        b.runtime.threads = 7;
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let c = ProjectConfig::from_toml_str("[linkpred.node2vec]\ndim = 16\n").unwrap();
        assert_eq!(c.linkpred.node2vec.dim, 16);
        assert_eq!(c.linkpred.node2vec.walk_length, Node2VecParams::default().walk_length);
        assert_eq!(c.split.last_train_year, 2022);
    }

    #[test]
    fn jsonl_provenance_keeps_records() {
        let prov = Provenance { config_hash: "h".into(), seed: 3, stage_version: "x/1".into() };
        let out = with_jsonl_provenance(b"{\"schema\":\"s\",\"version\":1}\n{\"a\":1}\n", &prov);
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        let header: Value = serde_json::from_str(lines.next().unwrap()).unwrap();
        assert_eq!(header["provenance"]["seed"], 3);
        assert_eq!(header["schema"], "s");
        assert_eq!(lines.next(), Some("{\"a\":1}"));
    }

    #[test]
    fn prerequisites_name_producers_in_order() {
        let pre = prerequisites(Stage::Predict);
        let first_cluster = pre.iter().position(|(_, s)| *s == Stage::Cluster).unwrap();
        assert!(pre[..first_cluster].iter().all(|(_, s)| *s < Stage::Cluster));
        assert!(prerequisites(Stage::Ingest).is_empty());
    }
}
