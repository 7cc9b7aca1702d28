//! Command-line entry point. Every subcommand writes its artifacts and a
//! `manifest.json` into one output directory.
//!
//! Settings come from built-in defaults, then an optional TOML file
//! (`--config`), then flags.

use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{FactRag, FullContext, PassageStore, QaSystem, Rag};
use crate::data::conversation::{build_conversation, HopMode};
use crate::data::oracle::GroundTruthOracle;
use crate::data::{DataError, Dataset};
use crate::embed::{Embedder, HashEmbedder, HttpEmbedder};
use crate::eval::{self, ChangedRule, EvalError, EvalOptions};
use crate::kb::{KnowledgeBase, Timestamp};
use crate::lm::{HttpProvider, HttpProviderConfig, LmError, LmProvider, OracleProvider};
use crate::pipeline::{EraseConfig, EraseSystem, PipelineError};
use crate::world::WorldState;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("provider failure: {0}")]
    Provider(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Provider(_) => 2,
            _ => 1,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Lm(e) => e.into(),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<LmError> for CliError {
    fn from(e: LmError) -> Self {
        match e {
            LmError::ContextOverflow { .. } | LmError::InvalidRequest(_) => CliError::Invalid(e.to_string()),
            other => CliError::Provider(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Pipeline(p) => p.into(),
            EvalError::Io(io) => io.into(),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    News,
    #[default]
    Conversations,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    #[default]
    Erase,
    Rag,
    Factrag,
    Fullcontext,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    #[default]
    Oracle,
    Http,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedderKind {
    #[default]
    HashTest,
    Http,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    SingleHop,
    MultiHop,
}

impl From<Mode> for HopMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::SingleHop => HopMode::SingleHop,
            Mode::MultiHop => HopMode::MultiHop,
        }
    }
}

/// Fully resolved settings for `ingest`, `query` and `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub domain: Domain,
    pub system: SystemKind,
    pub provider: ProviderKind,
    pub embedder: EmbedderKind,
    pub mode: Mode,
    pub seeds: Vec<u64>,
    pub datasets: Vec<PathBuf>,
    /// Facts retrieved per document for editing; `0` means all.
    pub m: usize,
    pub theta: f64,
    pub true_only: bool,
    pub context_window: Option<usize>,
    pub script: Option<PathBuf>,
    pub changed_ever: bool,
    pub runs_dir: PathBuf,
    pub run_id: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            domain: Domain::default(),
            system: SystemKind::default(),
            provider: ProviderKind::default(),
            embedder: EmbedderKind::default(),
            mode: Mode::default(),
            seeds: Vec::new(),
            datasets: Vec::new(),
            m: 10,
            theta: 0.7,
            true_only: false,
            context_window: None,
            script: None,
            changed_ever: false,
            runs_dir: PathBuf::from("runs"),
            run_id: None,
        }
    }
}

impl RunConfig {
    pub fn context_window(&self) -> usize {
        self.context_window.unwrap_or(match self.domain {
            Domain::News => 4096,
            Domain::Conversations => 2048,
        })
    }

    pub fn erase_config(&self) -> EraseConfig {
        EraseConfig {
            m: if self.m == 0 { usize::MAX } else { self.m },
            theta: self.theta,
            true_only: self.true_only,
            ..EraseConfig::default()
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_m(s: &str) -> Result<usize, String> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(0);
    }
    s.parse::<usize>().map_err(|e| e.to_string())
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    #[arg(long, value_enum)]
    domain: Option<Domain>,
    #[arg(long, value_enum)]
    system: Option<SystemKind>,
    #[arg(long, value_enum)]
    provider: Option<ProviderKind>,
    #[arg(long, value_enum)]
    embedder: Option<EmbedderKind>,
    /// Conversation mode used when datasets are generated from seeds.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Generate one conversation per seed (comma-separated or repeated).
    #[arg(long = "seed", value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Dataset JSONL files (repeatable).
    #[arg(long = "dataset")]
    datasets: Vec<PathBuf>,
    /// Facts retrieved per document for editing, or `all`.
    #[arg(long, value_parser = parse_m)]
    m: Option<usize>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    true_only: bool,
    #[arg(long)]
    context_window: Option<usize>,
    /// JSONL of {"prompt","response"} pairs for the oracle provider.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Ask every question changed so far, not just since the last checkpoint.
    #[arg(long)]
    changed_ever: bool,
    #[arg(long)]
    runs_dir: Option<PathBuf>,
    #[arg(long)]
    run_id: Option<String>,
}

impl RunArgs {
    fn resolve(self, file: Option<&Path>) -> CliResult<RunConfig> {
        let mut c = match file {
            Some(p) => {
                let text = fs::read_to_string(p)?;
                toml::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = self.$f { c.$f = v; } )*};
        }
        set!(domain, system, provider, embedder, mode, m, theta);
        if self.context_window.is_some() {
            c.context_window = self.context_window;
        }
        if self.script.is_some() {
            c.script = self.script;
        }
        if let Some(d) = self.runs_dir {
            c.runs_dir = d;
        }
        if self.run_id.is_some() {
            c.run_id = self.run_id;
        }
        if !self.seeds.is_empty() {
            c.seeds = self.seeds;
        }
        if !self.datasets.is_empty() {
            c.datasets = self.datasets;
        }
        c.true_only |= self.true_only;
        c.changed_ever |= self.changed_ever;
        if c.seeds.is_empty() && c.datasets.is_empty() {
            return Err(CliError::Invalid("give at least one --seed or --dataset".into()));
        }
        if c.domain == Domain::News && !c.seeds.is_empty() {
            return Err(CliError::Invalid("news runs need --dataset files; seeds generate conversations".into()));
        }
        if !(c.theta > -1.0 && c.theta < 1.0) {
            return Err(CliError::Invalid(format!("theta {} outside (-1, 1)", c.theta)));
        }
        Ok(c)
    }
}

/// A dataset together with the conversation it was generated from, when
/// known.
struct Loaded {
    dataset: Dataset,
    seed_mode: Option<(u64, HopMode)>,
}

/// Recovers `(seed, mode)` from a generated conversation id.
fn parse_conversation_id(id: &str) -> Option<(u64, HopMode)> {
    let rest = id.strip_prefix("conv-")?;
    let (mode, seed) = rest.split_once('-')?;
    let mode = match mode {
        "single" => HopMode::SingleHop,
        "multi" => HopMode::MultiHop,
        _ => return None,
    };
    Some((seed.parse().ok()?, mode))
}

fn load_datasets(c: &RunConfig) -> CliResult<Vec<Loaded>> {
    let mut out = Vec::new();
    for &seed in &c.seeds {
        let mode = HopMode::from(c.mode);
        out.push(Loaded {
            dataset: build_conversation(seed, mode).dataset(),
            seed_mode: Some((seed, mode)),
        });
    }
    for p in &c.datasets {
        let dataset = Dataset::load(p).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?;
        let seed_mode = match c.domain {
            Domain::Conversations => parse_conversation_id(&dataset.id),
            Domain::News => None,
        };
        out.push(Loaded { dataset, seed_mode });
    }
    Ok(out)
}

fn read_script(path: &Path) -> CliResult<Vec<(String, String)>> {
    #[derive(Deserialize)]
    struct Pair {
        prompt: String,
        response: String,
    }
    let f = std::io::BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Pair = serde_json::from_str(&line)
            .map_err(|e| CliError::Invalid(format!("{} line {}: {e}", path.display(), n + 1)))?;
        out.push((p.prompt, p.response));
    }
    Ok(out)
}

fn build_provider(c: &RunConfig, loaded: &Loaded, run_dir: &Path) -> CliResult<Arc<dyn LmProvider>> {
    let cw = c.context_window();
    match c.provider {
        ProviderKind::Http => {
            let mut config = HttpProviderConfig::from_env(cw)?;
            config.trace_path = Some(run_dir.join("trace.jsonl"));
            Ok(Arc::new(HttpProvider::new(config)?))
        }
        ProviderKind::Oracle => {
            let script = match &c.script {
                Some(p) => read_script(p)?,
                None => Vec::new(),
            };
            let base = match loaded.seed_mode {
                Some((seed, mode)) => {
                    let conv = build_conversation(seed, mode);
                    if conv.dataset() != loaded.dataset {
                        return Err(CliError::Invalid(format!(
                            "dataset {} differs from the conversation its id names; use --script",
                            loaded.dataset.id
                        )));
                    }
                    GroundTruthOracle::new(&conv).provider(cw)
                }
                None if script.is_empty() => {
                    return Err(CliError::Invalid(format!(
                        "the oracle provider needs --script for dataset {}",
                        loaded.dataset.id
                    )))
                }
                None => OracleProvider::new(cw),
            };
            Ok(Arc::new(base.with_script(script)))
        }
    }
}

fn build_embedder(c: &RunConfig) -> CliResult<Arc<dyn Embedder>> {
    match c.embedder {
        EmbedderKind::HashTest => Ok(Arc::new(HashEmbedder::default())),
        EmbedderKind::Http => {
            let var = |k: &str| std::env::var(k).ok();
            let base = var("EMBED_API_BASE")
                .or_else(|| var("LM_API_BASE"))
                .ok_or_else(|| CliError::Invalid("EMBED_API_BASE is not set".into()))?;
            let model = var("EMBED_MODEL").unwrap_or_else(|| "text-embedding-3-small".into());
            let dim = var("EMBED_DIM")
                .map(|d| d.parse::<usize>())
                .transpose()
                .map_err(|e| CliError::Invalid(format!("EMBED_DIM: {e}")))?
                .unwrap_or(1536);
            Ok(Arc::new(HttpEmbedder::new(base, var("LM_API_KEY"), model, dim)))
        }
    }
}

enum Built {
    Erase(EraseSystem),
    FactRag(FactRag),
    Rag(Rag),
    Full(FullContext),
}

impl Built {
    fn new(c: &RunConfig, embedder: Arc<dyn Embedder>, provider: Arc<dyn LmProvider>) -> Self {
        match c.system {
            SystemKind::Erase => Built::Erase(EraseSystem::new(embedder, provider, c.erase_config())),
            SystemKind::Factrag => Built::FactRag(FactRag(EraseSystem::new(embedder, provider, c.erase_config()))),
            SystemKind::Rag => Built::Rag(Rag::new(embedder, provider)),
            SystemKind::Fullcontext => Built::Full(FullContext::new(provider)),
        }
    }

    fn qa(&mut self) -> &mut dyn QaSystem {
        match self {
            Built::Erase(s) => s,
            Built::FactRag(s) => s,
            Built::Rag(s) => s,
            Built::Full(s) => s,
        }
    }

    /// Writes the system's persistent state into `dir`.
    fn persist(&self, dir: &Path) -> CliResult<()> {
        fs::create_dir_all(dir)?;
        let erase = match self {
            Built::Erase(s) => Some(s),
            Built::FactRag(s) => Some(&s.0),
            Built::Rag(r) => {
                let mut f = std::io::BufWriter::new(fs::File::create(dir.join("passages.jsonl"))?);
                r.store.write_jsonl(&mut f)?;
                None
            }
            Built::Full(_) => None,
        };
        if let Some(s) = erase {
            s.kb().save(&dir.join("kb.jsonl")).map_err(|e| CliError::Invalid(e.to_string()))?;
            let f = std::io::BufWriter::new(fs::File::create(dir.join("mutations.jsonl"))?);
            s.write_mutations(f)?;
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "erase", version, about = "Knowledge-base editing for question answering over a changing world")]
struct Cli {
    /// TOML file with run settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Raise log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the initial world state for a seed.
    GenWorld {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write one conversation dataset per seed.
    GenDataset {
        #[arg(long, value_enum, default_value_t = Mode::SingleHop)]
        mode: Mode,
        #[arg(long = "seed", value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stream datasets through a system and save its state.
    Ingest(RunArgs),
    /// Answer one question against a saved run.
    Query(QueryArgs),
    /// Ingest with questions at checkpoints, then score and report.
    Eval(RunArgs),
    /// Rebuild report files from a run's records.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
    },
}

#[derive(Debug, Args)]
struct QueryArgs {
    #[arg(long)]
    run_dir: PathBuf,
    /// Which dataset of a multi-dataset run to use.
    #[arg(long)]
    dataset_id: Option<String>,
    #[arg(long)]
    question: String,
    #[arg(long)]
    ts: String,
    /// Comma-separated answer options.
    #[arg(long, value_delimiter = ',')]
    choices: Vec<String>,
    #[arg(long)]
    list: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetRef {
    id: String,
    sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    command: String,
    version: String,
    config_hash: String,
    config: serde_json::Value,
    datasets: Vec<DatasetRef>,
}

fn write_manifest(dir: &Path, command: &str, config: serde_json::Value, datasets: &[&Dataset]) -> CliResult<()> {
    let canonical = serde_json::to_string(&config).expect("config serializes");
    let m = Manifest {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: hex(&Sha256::digest(canonical.as_bytes())),
        config,
        datasets: datasets
            .iter()
            .map(|d| DatasetRef {
                id: d.id.clone(),
                sha256: hex(&Sha256::digest(d.to_jsonl_string().as_bytes())),
            })
            .collect(),
    };
    fs::create_dir_all(dir)?;
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n")?;
    Ok(())
}

fn run_dir(c: &RunConfig, command: &str) -> PathBuf {
    let id = c.run_id.clone().unwrap_or_else(|| {
        let system = serde_json::to_value(c.system).expect("enum serializes");
        format!("{command}-{}-{}", system.as_str().unwrap_or("run"), &c.hash()[..12])
    });
    c.runs_dir.join(id)
}

/// State directory for one dataset: the run directory itself when the run
/// has a single dataset, else a subdirectory named after the dataset.
fn state_dir(run_dir: &Path, n_datasets: usize, id: &str) -> PathBuf {
    if n_datasets == 1 {
        run_dir.to_path_buf()
    } else {
        run_dir.join(id)
    }
}

fn cmd_gen_world(seed: u64, out: &Path) -> CliResult<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("world.json"), WorldState::init(seed).to_json())?;
    write_manifest(out, "gen-world", serde_json::json!({ "seed": seed }), &[])?;
    println!("{}", out.join("world.json").display());
    Ok(())
}

fn cmd_gen_dataset(mode: Mode, seeds: &[u64], out: &Path) -> CliResult<()> {
    fs::create_dir_all(out)?;
    let datasets: Vec<Dataset> = seeds.iter().map(|&s| build_conversation(s, mode.into()).dataset()).collect();
    for d in &datasets {
        let path = out.join(format!("{}.jsonl", d.id));
        d.save(&path)?;
        println!("{}", path.display());
    }
    let refs: Vec<&Dataset> = datasets.iter().collect();
    write_manifest(out, "gen-dataset", serde_json::json!({ "mode": mode, "seeds": seeds }), &refs)
}

/// Shared driver for `ingest` and `eval`.
fn cmd_run(c: &RunConfig, command: &str) -> CliResult<PathBuf> {
    let dir = run_dir(c, command);
    fs::create_dir_all(&dir)?;
    let loaded = load_datasets(c)?;
    let embedder = build_embedder(c)?;
    let opts = EvalOptions {
        seed: c.seeds.first().copied().unwrap_or(0),
        rule: if c.changed_ever { ChangedRule::Ever } else { ChangedRule::SincePrevious },
    };
    let mut records = Vec::new();
    for l in &loaded {
        let provider = build_provider(c, l, &dir)?;
        let mut sys = Built::new(c, embedder.clone(), provider);
        if command == "eval" {
            let (rs, report) = eval::run_eval(sys.qa(), &l.dataset, &opts)?;
            log::info!("{}: {} records, {:?}", l.dataset.id, rs.len(), report.outcomes);
            records.extend(rs);
        } else {
            for d in &l.dataset.documents {
                let r = sys.qa().ingest(d)?;
                log::info!("{}: {:?}", d.id, r.outcomes);
            }
        }
        sys.persist(&state_dir(&dir, loaded.len(), &l.dataset.id))?;
        println!("{}: {} documents", l.dataset.id, l.dataset.documents.len());
    }
    if command == "eval" {
        let f = std::io::BufWriter::new(fs::File::create(dir.join("records.jsonl"))?);
        eval::write_records(&records, f)?;
        let report = eval::aggregate(&records);
        report.write_dir(&dir)?;
        print!("{}", report.to_csv());
    }
    let refs: Vec<&Dataset> = loaded.iter().map(|l| &l.dataset).collect();
    write_manifest(&dir, command, serde_json::to_value(c).expect("config serializes"), &refs)?;
    println!("{}", dir.display());
    Ok(dir)
}

fn cmd_report(dir: &Path) -> CliResult<()> {
    let f = std::io::BufReader::new(fs::File::open(dir.join("records.jsonl"))?);
    let records = eval::read_records(f)?;
    let report = eval::aggregate(&records);
    report.write_dir(dir)?;
    print!("{}", report.to_csv());
    Ok(())
}

fn cmd_query(q: QueryArgs) -> CliResult<()> {
    let text = fs::read_to_string(q.run_dir.join("manifest.json"))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Invalid(e.to_string()))?;
    let c: RunConfig = serde_json::from_value(manifest.config)
        .map_err(|e| CliError::Invalid(format!("manifest config: {e}")))?;
    let ts = Timestamp::parse(&q.ts).map_err(|e| CliError::Invalid(e.to_string()))?;
    let loaded = load_datasets(&c)?;
    let n = loaded.len();
    let l = match &q.dataset_id {
        Some(id) => loaded.iter().find(|l| &l.dataset.id == id),
        None if n == 1 => loaded.first(),
        None => None,
    }
    .ok_or_else(|| CliError::Invalid("choose a dataset with --dataset-id".into()))?;
    let dir = state_dir(&q.run_dir, n, &l.dataset.id);
    let embedder = build_embedder(&c)?;
    let provider = build_provider(&c, l, &q.run_dir)?;
    let invalid = |e: crate::kb::KbError| CliError::Invalid(e.to_string());
    let mut sys = match c.system {
        SystemKind::Erase | SystemKind::Factrag => {
            let kb = KnowledgeBase::load(&dir.join("kb.jsonl")).map_err(invalid)?;
            Built::Erase(EraseSystem::from_kb(kb, embedder, provider, c.erase_config())?)
        }
        SystemKind::Rag => {
            let f = std::io::BufReader::new(fs::File::open(dir.join("passages.jsonl"))?);
            let store = PassageStore::read_jsonl(f, embedder, c.context_window())?;
            Built::Rag(Rag::with_store(store, provider))
        }
        SystemKind::Fullcontext => {
            let mut s = FullContext::new(provider);
            for d in l.dataset.documents.iter().filter(|d| d.ts <= ts) {
                s.ingest(d)?;
            }
            Built::Full(s)
        }
    };
    let pred = sys.qa().answer(&q.question, &ts, &q.choices, q.list)?;
    let out = serde_json::json!({
        "answer": pred.answer,
        "statements": pred.statements,
        "completion": pred.completion,
    });
    println!("{out}");
    Ok(())
}

/// Parses `argv` (including the program name) and runs the command.
/// Returns the process exit code: 0 on success, 1 on usage or validation
/// errors, 2 when the language-model provider fails.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let config = cli.config.as_deref();
    let result = match cli.command {
        Command::GenWorld { seed, out } => cmd_gen_world(seed, &out),
        Command::GenDataset { mode, seeds, out } => cmd_gen_dataset(mode, &seeds, &out),
        Command::Ingest(a) => a.resolve(config).and_then(|c| cmd_run(&c, "ingest").map(drop)),
        Command::Eval(a) => a.resolve(config).and_then(|c| cmd_run(&c, "eval").map(drop)),
        Command::Query(q) => cmd_query(q),
        Command::Report { run_dir } => cmd_report(&run_dir),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversation_ids_roundtrip() {
        assert_eq!(parse_conversation_id("conv-single-7"), Some((7, HopMode::SingleHop)));
        assert_eq!(parse_conversation_id("conv-multi-12"), Some((12, HopMode::MultiHop)));
        assert_eq!(parse_conversation_id("news-2023"), None);
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "system = \"rag\"\nm = 3\nseeds = [1, 2]\n").unwrap();
        let args = RunArgs {
            m: Some(5),
            ..Default::default()
        };
        let c = args.resolve(Some(&path)).unwrap();
        assert_eq!((c.system, c.m, c.seeds.clone()), (SystemKind::Rag, 5, vec![1, 2]));
        assert_eq!(c.context_window(), 2048);
        assert_eq!(c.hash(), c.clone().hash());
        fs::write(&path, "bogus = 1\n").unwrap();
        assert!(RunArgs::default().resolve(Some(&path)).is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["erase", "eval", "--no-such-flag"]), 1);
        assert_eq!(run(["erase", "--help"]), 0);
        assert_eq!(run(["erase", "eval"]), 1);
    }
}
