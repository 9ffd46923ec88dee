//! Command-line front end. [`run`] returns the process exit code: 0 on
//! success, 1 for usage or validation errors, 2 for IO or backend failures.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use crisis_scope_core::evaluate::{
    average_metrics, claim_recall, event_level_summary, report_similarity, run_lolo, run_loeo,
    ClassifierEvaluator, EvalError, FoldRow,
};
use crisis_scope_core::models::{fit_classifier, ModelError};
use crisis_scope_core::summarize::{Segment, SummaryMode};
use crisis_scope_core::{CategoryId, EventCollection, Message, Query};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{save_classifier, CheckpointError};
use crate::config::{ConfigError, PipelineConfig};
use crate::io::{
    fold_rows_csv, load_claims, load_corpus, load_query, load_report, read_json, to_jsonl, write_json,
    IoError,
};
use crate::session::{Provenance, Session, SessionError};
use crate::starter::starter_queries;

#[derive(Debug, Parser)]
#[command(name = "crisis-scope", version, about = "Cross-lingual crisis message retrieval and summarization")]
pub struct Cli {
    /// Pipeline config (JSON). Defaults to $CRISIS_SCOPE_CONFIG, then ./crisis-scope.json.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Protocol {
    Lolo,
    Loeo,
    Claims,
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Regular,
    Diversified,
}

impl From<ModeArg> for SummaryMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Regular => SummaryMode::Regular,
            ModeArg::Diversified => SummaryMode::Diversified,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate JSONL message files and write them back in canonical form.
    Ingest {
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Train the informative-message classifier and save a checkpoint.
    TrainClassifier {
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
    },
    /// Score messages with a classifier checkpoint.
    Classify {
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        event: Option<String>,
    },
    /// Rank an event's messages against a query.
    Rank {
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        event: String,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
    },
    /// Summarize the top-ranked messages of an event for a query.
    Summarize {
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        event: String,
        #[arg(long, value_enum, default_value = "regular")]
        mode: ModeArg,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
    },
    /// Cross-validation harnesses and summary metrics.
    Evaluate {
        #[arg(long, value_enum)]
        protocol: Protocol,
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
        /// Claim annotations `{summary_id: [claims]}` (claims protocol).
        #[arg(long)]
        claims: Option<PathBuf>,
        /// Summary JSON files written by `summarize` (report protocol).
        #[arg(long = "summary")]
        summaries: Vec<PathBuf>,
        /// Event whose reference report is compared (report protocol).
        #[arg(long)]
        event: Option<String>,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
    },
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn validation(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }

    fn backend(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        if e.is_validation() {
            CliError::validation(e.to_string())
        } else {
            CliError::backend(e.to_string())
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Read { .. } => CliError::backend(e.to_string()),
            _ => CliError::validation(e.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Io(io) => io.into(),
            CheckpointError::BackendMismatch { .. } => CliError::backend(e.to_string()),
            other => CliError::validation(other.to_string()),
        }
    }
}

impl From<SessionError> for CliError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Io(io) => io.into(),
            SessionError::Config(c) => c.into(),
            SessionError::Checkpoint(c) => c.into(),
            SessionError::Unavailable(_) | SessionError::Backend(_) => CliError::backend(e.to_string()),
            SessionError::NotFound(_) | SessionError::Invalid(_) => CliError::validation(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        SessionError::from(e).into()
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Encoder(_) => CliError::backend(e.to_string()),
            other => CliError::validation(other.to_string()),
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn load_config(cli: &Cli, inputs: &[PathBuf]) -> Result<PipelineConfig, CliError> {
    let mut config = PipelineConfig::locate(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if !inputs.is_empty() {
        config.data.messages = inputs.to_vec();
    }
    config.validate()?;
    Ok(config)
}

fn emit<T: Serialize>(out: Option<&Path>, value: &T) -> Result<(), CliError> {
    match out {
        Some(p) => Ok(write_json(p, value)?),
        None => {
            let mut text = serde_json::to_string_pretty(value).expect("serializable");
            text.push('\n');
            stdout(&text)
        }
    }
}

/// A closed pipe on stdout is not an error.
fn stdout(text: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::backend(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn emit_text(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::backend(format!("{}: {e}", p.display()))),
        None => stdout(text),
    }
}

/// Session whose ranker for `query.category` is trained with `query`
/// unless a checkpoint is configured.
fn session_for_query(config: PipelineConfig, query: &Query) -> Result<Session, CliError> {
    let collections = load_corpus(&config.data.messages)?;
    let mut queries = vec![("cli".to_string(), query.clone())];
    queries.extend(starter_queries());
    Ok(Session::with_rankers(
        config,
        collections,
        BTreeMap::new(),
        queries,
        &[query.category],
    )?)
}

#[derive(Serialize)]
struct IngestReport {
    events: Vec<IngestEvent>,
}

#[derive(Serialize)]
struct IngestEvent {
    event_id: String,
    messages: usize,
    informative: usize,
    languages: Vec<String>,
}

#[derive(Serialize)]
struct ClassifyRow<'a> {
    id: &'a str,
    event_id: &'a str,
    score: f64,
    informative: bool,
}

#[derive(Serialize)]
struct RankOutput<'a> {
    #[serde(flatten)]
    provenance: Provenance,
    category: CategoryId,
    event_id: &'a str,
    candidates: Vec<crisis_scope_core::models::RankedCandidate>,
}

/// Summary JSON as written by `summarize`.
#[derive(Debug, Serialize, Deserialize)]
pub struct SummaryFile {
    #[serde(default, skip_deserializing)]
    pub seed: u64,
    #[serde(default, skip_deserializing)]
    pub encoder: String,
    #[serde(default, skip_deserializing)]
    pub generator: String,
    pub category: CategoryId,
    pub event_id: String,
    pub mode: SummaryMode,
    pub full_text: String,
    pub segments: Vec<Segment>,
}

#[derive(Serialize)]
struct HarnessOutput<'a> {
    #[serde(flatten)]
    provenance: Provenance,
    protocol: &'a str,
    rows: &'a [FoldRow],
    average: Option<crisis_scope_core::evaluate::ClassificationMetrics>,
}

fn json_mirror(out: &Path) -> PathBuf {
    out.with_extension("json")
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Ingest { inputs } => {
            let collections = load_corpus(inputs)?;
            let all: Vec<Message> = collections
                .iter()
                .flat_map(|c| c.messages().iter().cloned())
                .collect();
            let report = IngestReport {
                events: collections
                    .iter()
                    .map(|c| IngestEvent {
                        event_id: c.event_id().to_string(),
                        messages: c.len(),
                        informative: c.informative_count(),
                        languages: c.languages().iter().cloned().collect(),
                    })
                    .collect(),
            };
            match out {
                Some(p) => {
                    emit_text(Some(p), &to_jsonl(&all))?;
                    eprintln!("{}", serde_json::to_string(&report).expect("serializable"));
                }
                None => emit(None, &report)?,
            }
            Ok(())
        }
        Command::TrainClassifier { inputs } => {
            let out = out.ok_or_else(|| CliError::validation("train-classifier needs --out"))?;
            let config = load_config(&cli, inputs)?;
            let no_rankers = PipelineConfig {
                train_missing_rankers: false,
                data: crate::config::DataPaths {
                    classifier: None,
                    rankers: BTreeMap::new(),
                    ..config.data.clone()
                },
                ..config.clone()
            };
            let session = Session::load(no_rankers)?;
            let all: Vec<Message> = session
                .collections()
                .iter()
                .flat_map(|c| c.messages().iter().cloned())
                .collect();
            let model = fit_classifier(&all, &session.featurizer(), &config.model, config.seed)?;
            save_classifier(out, &model, &config.model)?;
            let last = model.history.epochs.last().map(|e| e.train_loss);
            eprintln!(
                "trained on {} labelled messages, {} epochs, final loss {:?}",
                all.iter().filter(|m| m.informative.is_some()).count(),
                model.history.epochs.len(),
                last
            );
            Ok(())
        }
        Command::Classify {
            inputs,
            checkpoint,
            event,
        } => {
            let mut config = load_config(&cli, inputs)?;
            if let Some(p) = checkpoint {
                config.data.classifier = Some(p.clone());
            }
            if config.data.classifier.is_none() {
                return Err(CliError::validation("classify needs --checkpoint or data.classifier"));
            }
            config.train_missing_rankers = false;
            let session = Session::load(config)?;
            let events: Vec<&EventCollection> = match event {
                Some(id) => vec![session.event(id)?],
                None => session.collections().iter().collect(),
            };
            let mut lines = String::new();
            for c in events {
                for (id, score) in session.classify(c.event_id())? {
                    let row = ClassifyRow {
                        id: &id,
                        event_id: c.event_id(),
                        score,
                        informative: score > 0.5,
                    };
                    lines.push_str(&serde_json::to_string(&row).expect("serializable"));
                    lines.push('\n');
                }
            }
            emit_text(out, &lines)
        }
        Command::Rank {
            query,
            event,
            k,
            inputs,
        } => {
            let config = load_config(&cli, inputs)?;
            let query = load_query(query)?;
            let session = session_for_query(config, &query)?;
            let candidates = session.rank(&query, event, *k)?;
            emit(
                out,
                &RankOutput {
                    provenance: session.provenance(),
                    category: query.category,
                    event_id: event,
                    candidates,
                },
            )
        }
        Command::Summarize {
            query,
            event,
            mode,
            budget,
            k,
            inputs,
        } => {
            let config = load_config(&cli, inputs)?;
            let query = load_query(query)?;
            let session = session_for_query(config, &query)?;
            let summary = session.summarize(&query, event, Some((*mode).into()), *budget, *k)?;
            let p = session.provenance();
            emit(
                out,
                &SummaryFile {
                    seed: p.seed,
                    encoder: p.encoder,
                    generator: p.generator,
                    category: query.category,
                    event_id: event.clone(),
                    mode: summary.mode,
                    full_text: summary.full_text,
                    segments: summary.segments,
                },
            )
        }
        Command::Evaluate {
            protocol,
            inputs,
            claims,
            summaries,
            event,
        } => evaluate(&cli, *protocol, inputs, claims.as_deref(), summaries, event.as_deref()),
        Command::Serve { addr, inputs } => {
            let config = load_config(&cli, inputs)?;
            let session = Arc::new(Session::load(config)?);
            if let Some(p) = out {
                emit(Some(p), &session.provenance())?;
            }
            let runtime = tokio::runtime::Runtime::new()
                .map_err(|e| CliError::backend(e.to_string()))?;
            runtime
                .block_on(crate::http::serve(session, *addr))
                .map_err(|e| CliError::backend(e.to_string()))
        }
    }
}

fn evaluate(
    cli: &Cli,
    protocol: Protocol,
    inputs: &[PathBuf],
    claims: Option<&Path>,
    summaries: &[PathBuf],
    event: Option<&str>,
) -> Result<(), CliError> {
    let out = cli.out.as_deref();
    match protocol {
        Protocol::Lolo | Protocol::Loeo => {
            let mut config = load_config(cli, inputs)?;
            config.train_missing_rankers = false;
            config.data.classifier = None;
            config.data.rankers.clear();
            let session = Session::load(config.clone())?;
            let evaluator = ClassifierEvaluator {
                featurizer: session.featurizer(),
                config: config.model.clone(),
                seed: config.seed,
            };
            let (name, rows) = if protocol == Protocol::Lolo {
                ("lolo", run_lolo(session.collections(), &evaluator)?)
            } else {
                ("loeo", run_loeo(session.collections(), &evaluator)?)
            };
            for r in rows.iter().filter(|r| r.error.is_some()) {
                tracing::warn!(event = %r.event, language = ?r.language, error = ?r.error, "fold failed");
            }
            let average = average_metrics(rows.iter().filter_map(|r| r.metrics.as_ref()));
            let mirror = HarnessOutput {
                provenance: session.provenance(),
                protocol: name,
                rows: &rows,
                average,
            };
            emit_text(out, &fold_rows_csv(&rows))?;
            if let Some(p) = out {
                write_json(&json_mirror(p), &mirror)?;
            }
            Ok(())
        }
        Protocol::Claims => {
            let path = claims.ok_or_else(|| CliError::validation("claims protocol needs --claims"))?;
            let sets = load_claims(path)?;
            let mut recall = BTreeMap::new();
            for s in &sets {
                recall.insert(s.summary_id.clone(), claim_recall(s, &sets)?);
            }
            emit(out, &recall)
        }
        Protocol::Report => {
            let event = event.ok_or_else(|| CliError::validation("report protocol needs --event"))?;
            if summaries.is_empty() {
                return Err(CliError::validation("report protocol needs at least one --summary"));
            }
            let config = PipelineConfig::locate(cli.config.as_deref())?;
            let dir = config
                .data
                .reports
                .clone()
                .ok_or_else(|| CliError::validation("data.reports is not configured"))?;
            let mut by_category = BTreeMap::new();
            for p in summaries {
                let s: SummaryFile = read_json(p)?;
                if s.event_id != event {
                    return Err(CliError::validation(format!(
                        "{} summarizes event `{}`, not `{event}`",
                        p.display(),
                        s.event_id
                    )));
                }
                by_category.insert(s.category, s.full_text);
            }
            let reference = load_report(&dir, event)?;
            let text = event_level_summary(&by_category)?;
            let encoder = config.encoder.build();
            let sim = report_similarity(&text, &reference.text, &*encoder)?;
            emit(out, &sim)
        }
    }
}
