//! Subcommand definitions and their implementations. Every command writes
//! its report to the supplied writer so it can be driven from tests.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use insureqa_core::config::KgSourceSetting;
use insureqa_core::eval::{
    self, build_report, check_expectations, consistent_denominators, record_judgment, render_report,
    ErrorCategory, MismatchKind, ReportFormat, FAILURE_CATEGORIES,
};
use insureqa_core::ingest::{load_bundle, ChunkParams};
use insureqa_core::kg::{FactOptions, KgSource};
use insureqa_core::llm::{ReplayBackend, ReplayFixture};
use insureqa_core::pipeline::{mode_name, parse_mode, ALL_MODES};
use insureqa_core::synth::{self, SynthOptions};
use insureqa_core::{AppConfig, BackendKind, Corpus, Judgment, Percent, QaMode, TranscriptRecord};

use crate::service::{self, AppState};

#[derive(Debug, Parser)]
#[command(name = "insureqa", version, about = "Question answering over insurance rulebooks")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct GlobalOpts {
    /// TOML configuration file.
    #[arg(long, global = true, env = "INSUREQA_CONFIG")]
    pub config: Option<PathBuf>,
    /// Corpus directory (documents, chunks and index).
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// LLM backend: remote, replay or echo.
    #[arg(long, global = true)]
    pub backend: Option<BackendKind>,
    /// Replay fixture (`hash<TAB>base64 answer` lines).
    #[arg(long, global = true)]
    pub llm_fixture: Option<PathBuf>,
    /// Knowledge-graph fixture (`label<TAB>uri<TAB>abstract` lines).
    #[arg(long, global = true)]
    pub kg_fixture: Option<PathBuf>,
    /// Where facts come from: fixture, endpoint or none.
    #[arg(long, global = true)]
    pub kg_source: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Chunk and index rulebook bundles into a corpus directory.
    Ingest(IngestArgs),
    /// Rebuild or query a corpus index
    #[command(subcommand)]
    Index(IndexCommand),
    /// Link entities and look up knowledge-graph facts
    #[command(subcommand)]
    Kg(KgCommand),
    /// Answer one question.
    Ask(AskArgs),
    /// Answer every question of a JSONL file and write a transcript.
    AskBatch(AskBatchArgs),
    /// Generate, deduplicate and review synthetic QA pairs
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Run, judge and report evaluations
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Build replay fixtures
    #[command(subcommand)]
    Llm(LlmCommand),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(required = true)]
    pub bundles: Vec<PathBuf>,
    #[arg(long)]
    pub max_chars: Option<usize>,
    #[arg(long)]
    pub overlap: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    /// Rebuild the vector index of a corpus directory.
    Build { corpus_dir: PathBuf },
    /// Show the top-k chunks for a query.
    Query {
        corpus_dir: PathBuf,
        #[arg(long)]
        q: String,
        #[arg(short, default_value_t = 3)]
        k: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum KgCommand {
    /// Extract mentions from a question and link them to entities.
    Link {
        #[arg(long)]
        q: String,
    },
    /// Fetch facts for an entity label.
    Facts {
        #[arg(long)]
        entity: String,
        #[arg(long)]
        source: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct AskArgs {
    #[arg(long)]
    pub q: String,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(short)]
    pub k: Option<usize>,
    /// Print the exact prompt sent to the model.
    #[arg(long)]
    pub show_prompt: bool,
    /// Print the full result as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct AskBatchArgs {
    pub questions: PathBuf,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(short)]
    pub k: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Generate question-answer pairs from every chunk of a corpus.
    Generate {
        corpus_dir: Option<PathBuf>,
        #[arg(long)]
        per_chunk: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Drop near-duplicate questions.
    Dedup {
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a tab-separated sheet for human review.
    ExportReview {
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply an edited review sheet; optionally emit the accepted pairs as a gold dataset.
    ImportReview {
        pairs: PathBuf,
        #[arg(long)]
        review: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Answer every gold question under each mode.
    Run {
        dataset: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "agnostic,rulebook,rulebook_kg")]
        modes: Vec<String>,
        #[arg(short)]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Record judgments interactively, or import a judgment file.
    Judge {
        transcript: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "judge")]
        judge_id: String,
        /// Validate and append an existing judgment file instead of prompting.
        #[arg(long)]
        import: Option<PathBuf>,
    },
    /// Accuracy per mode and subset, deltas and error shares.
    Report {
        judgments: PathBuf,
        #[arg(long, default_value = "text")]
        format: ReportFormat,
        /// Claimed accuracies to reconcile, as `mode=percent`.
        #[arg(long = "expect", value_parser = parse_expectation)]
        expect: Vec<(QaMode, Percent)>,
    },
    /// Denominators for which all the given percentages are attainable.
    Denominators {
        #[arg(long, value_delimiter = ',', required = true)]
        percents: Vec<Percent>,
        #[arg(long, default_value_t = 1)]
        min: u64,
        #[arg(long, default_value_t = 200)]
        max: u64,
    },
}

#[derive(Debug, Subcommand)]
pub enum LlmCommand {
    /// Build a replay fixture from recorded answers, keyed by the prompt each
    /// question produces against the current corpus and knowledge graph.
    Record {
        #[arg(long)]
        answers: PathBuf,
        #[arg(short)]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Listen address; defaults to the configured loopback bind
    #[arg(long)]
    pub bind: Option<String>,
}

fn parse_expectation(s: &str) -> Result<(QaMode, Percent), String> {
    let (mode, value) = s.split_once('=').ok_or("expected mode=percent")?;
    let mode = parse_mode(mode).ok_or_else(|| format!("unknown mode '{mode}'"))?;
    Ok((mode, value.parse().map_err(|e: eval::EvalError| e.to_string())?))
}

fn mode_arg(mode: Option<&str>, cfg: &AppConfig) -> Result<QaMode> {
    match mode {
        Some(m) => parse_mode(m).ok_or_else(|| anyhow!("unknown mode '{m}' (expected agnostic, rulebook or rulebook_kg)")),
        None => Ok(cfg.default_mode()?),
    }
}

fn parse_kg_source(s: &str) -> Result<KgSourceSetting> {
    Ok(match s {
        "fixture" => KgSourceSetting::Fixture,
        "endpoint" => KgSourceSetting::Endpoint,
        "none" => KgSourceSetting::None,
        other => bail!("unknown KG source '{other}' (expected fixture, endpoint or none)"),
    })
}

/// Config file, then environment, then command-line flags.
pub fn load_config(global: &GlobalOpts) -> Result<AppConfig> {
    let mut cfg = AppConfig::load(global.config.as_deref())?;
    if let Some(dir) = &global.corpus {
        cfg.corpus.dir = dir.clone();
    }
    if let Some(backend) = global.backend {
        cfg.llm.backend = backend;
    }
    if let Some(path) = &global.llm_fixture {
        cfg.llm.fixture = Some(path.clone());
    }
    if let Some(path) = &global.kg_fixture {
        cfg.kg.fixture = Some(path.clone());
    }
    if let Some(source) = &global.kg_source {
        cfg.kg.source = parse_kg_source(source)?;
    }
    Ok(cfg)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let mut cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Ingest(args) => ingest(&cfg, args, out),
        Command::Index(cmd) => index(&mut cfg, cmd, out),
        Command::Kg(cmd) => kg(&cfg, cmd, out),
        Command::Ask(args) => ask(&cfg, args, out),
        Command::AskBatch(args) => ask_batch(&cfg, args, out),
        Command::Synth(cmd) => synth_cmd(&mut cfg, cmd, out),
        Command::Eval(cmd) => eval_cmd(&cfg, cmd, &mut std::io::stdin().lock(), out),
        Command::Llm(cmd) => llm(&cfg, cmd, out),
        Command::Serve(args) => serve(&mut cfg, args),
    }
}

fn ingest(cfg: &AppConfig, args: IngestArgs, out: &mut dyn Write) -> Result<()> {
    let mut corpus = Corpus::open(&args.out, cfg.embedder())?;
    let base = if corpus.chunks().is_empty() { cfg.chunk_params()? } else { corpus.chunk_params() };
    let params = ChunkParams {
        max_chars: args.max_chars.unwrap_or(base.max_chars),
        overlap_chars: args.overlap.unwrap_or(base.overlap_chars),
        ..base
    };
    params.validate()?;
    if corpus.chunks().is_empty() {
        corpus = Corpus::new(cfg.embedder(), params);
    }
    // Parse everything first so a bad bundle leaves the corpus untouched.
    let docs = args
        .bundles
        .iter()
        .map(|p| load_bundle(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    for doc in &docs {
        let summary = corpus.ingest_with(doc, params)?;
        writeln!(
            out,
            "{}\t{} chunks\t{} tables\t{}",
            summary.doc_id, summary.chunk_count, summary.tables, summary.title
        )?;
    }
    corpus.save(&args.out)?;
    let stats = corpus.stats();
    writeln!(out, "corpus: {} documents, {} chunks, {} tables", stats.documents, stats.chunks, stats.tables)?;
    Ok(())
}

fn index(cfg: &mut AppConfig, cmd: IndexCommand, out: &mut dyn Write) -> Result<()> {
    match cmd {
        IndexCommand::Build { corpus_dir } => {
            let mut corpus = Corpus::open(&corpus_dir, cfg.embedder())?;
            corpus.reindex()?;
            corpus.save(&corpus_dir)?;
            writeln!(out, "indexed {} of {} chunks", corpus.index().len(), corpus.chunks().len())?;
        }
        IndexCommand::Query { corpus_dir, q, k } => {
            let corpus = Corpus::open(&corpus_dir, cfg.embedder())?;
            for hit in corpus.search(&q, k)? {
                writeln!(out, "{:.6}\t{}\t{}", hit.score, hit.chunk_id, first_line(&hit.text))?;
            }
        }
    }
    Ok(())
}

fn first_line(text: &str) -> String {
    let line = text.lines().next().unwrap_or("");
    match line.char_indices().nth(100) {
        Some((i, _)) => format!("{}...", &line[..i]),
        None => line.to_string(),
    }
}

fn kg(cfg: &AppConfig, cmd: KgCommand, out: &mut dyn Write) -> Result<()> {
    match cmd {
        KgCommand::Link { q } => {
            let engine = cfg.build_engine()?;
            let kb = engine
                .knowledge()
                .ok_or_else(|| anyhow!("no knowledge graph configured (use --kg-fixture)"))?;
            for mention in engine.extractor().extract(&q) {
                match kb.labels.link(&mention)? {
                    Some(entity) => writeln!(out, "{}\t{}\t{:.3}\t{}", mention.surface, entity.label, entity.match_score, entity.uri)?,
                    None => writeln!(out, "{}\t-", mention.surface)?,
                }
            }
        }
        KgCommand::Facts { entity, source } => {
            let mut cfg = cfg.clone();
            if let Some(s) = source {
                cfg.kg.source = parse_kg_source(&s)?;
            }
            let kb = cfg
                .knowledge()?
                .ok_or_else(|| anyhow!("no knowledge graph configured (use --kg-fixture)"))?;
            let linked = kb
                .labels
                .link_text(&entity)?
                .ok_or_else(|| anyhow!("no entity matches '{entity}'"))?;
            let options = FactOptions { ..cfg.kg.facts.clone() };
            let facts = kb.source.fetch_facts(&linked.0, &options)?;
            if matches!(kb.source, KgSource::Fixture(_)) && facts.is_empty() {
                writeln!(out, "no facts for {}", linked.0.uri)?;
            }
            for f in facts {
                writeln!(out, "{}", f.render())?;
            }
        }
    }
    Ok(())
}

fn ask(cfg: &AppConfig, args: AskArgs, out: &mut dyn Write) -> Result<()> {
    let engine = cfg.build_engine()?;
    let mode = mode_arg(args.mode.as_deref(), cfg)?;
    let k = args.k.unwrap_or(cfg.service.default_k);
    let result = engine
        .answer_question(&args.q, mode, k)
        .map_err(|e| anyhow!("{} stage failed: {e}", e.stage()))?;
    if args.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&result)?)?;
        return Ok(());
    }
    if args.show_prompt {
        writeln!(out, "--- prompt {}\n{}\n---", result.prompt_hash, result.prompt_echo)?;
    }
    writeln!(out, "{}", result.answer)?;
    for hit in &result.hits {
        writeln!(out, "  context {:.4} {}", hit.score, hit.chunk_id)?;
    }
    for fact in &result.facts {
        writeln!(out, "  fact {}", fact.render())?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct QuestionLine {
    question: String,
    #[serde(default)]
    pair_id: Option<String>,
}

fn read_questions(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let q: QuestionLine =
            serde_json::from_str(line).with_context(|| format!("{} line {}", path.display(), i + 1))?;
        out.push((q.pair_id.unwrap_or_else(|| format!("q{}", out.len() + 1)), q.question));
    }
    Ok(out)
}

fn ask_batch(cfg: &AppConfig, args: AskBatchArgs, out: &mut dyn Write) -> Result<()> {
    let engine = cfg.build_engine()?;
    let mode = mode_arg(args.mode.as_deref(), cfg)?;
    let k = args.k.unwrap_or(cfg.service.default_k);
    let questions = read_questions(&args.questions)?;
    let texts: Vec<String> = questions.iter().map(|(_, q)| q.clone()).collect();
    let results = engine.batch_ask(&texts, mode, k);
    let records: Vec<TranscriptRecord> = questions
        .iter()
        .zip(&results)
        .map(|((id, q), r)| TranscriptRecord::from_result(id, q, mode, r))
        .collect();
    eval::save_transcript(&records, &args.out)?;
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    writeln!(out, "{} answered, {} failed -> {}", records.len() - failed, failed, args.out.display())?;
    Ok(())
}

fn synth_cmd(cfg: &mut AppConfig, cmd: SynthCommand, out: &mut dyn Write) -> Result<()> {
    match cmd {
        SynthCommand::Generate {
            corpus_dir,
            per_chunk,
            out: path,
        } => {
            if let Some(dir) = corpus_dir {
                cfg.corpus.dir = dir;
            }
            let engine = cfg.build_engine()?;
            let options = SynthOptions {
                per_chunk: per_chunk.unwrap_or(cfg.synth.per_chunk),
                ..cfg.synth.clone()
            };
            let output = synth::generate_pairs(&engine, &options);
            synth::save_pairs(&output.pairs, &path)?;
            for f in &output.failures {
                writeln!(out, "failed {}#{} at {}: {}", f.chunk_id, f.ordinal, f.stage, f.message)?;
            }
            writeln!(
                out,
                "{} pairs from {} chunks ({} failures) -> {}",
                output.pairs.len(),
                engine.corpus().chunks().len(),
                output.failures.len(),
                path.display()
            )?;
        }
        SynthCommand::Dedup { pairs, out: path } => {
            let before = synth::load_pairs(&pairs)?;
            let n = before.len();
            let kept = synth::dedup(before);
            synth::save_pairs(&kept, &path)?;
            writeln!(out, "kept {} of {} pairs", kept.len(), n)?;
        }
        SynthCommand::ExportReview { pairs, out: path } => {
            let pairs = synth::load_pairs(&pairs)?;
            synth::export_review(&pairs, &path)?;
            writeln!(out, "{} pairs -> {}", pairs.len(), path.display())?;
        }
        SynthCommand::ImportReview {
            pairs,
            review,
            out: path,
            dataset,
        } => {
            let pairs = synth::import_review(&review, synth::load_pairs(&pairs)?)?;
            synth::save_pairs(&pairs, &path)?;
            let count = |s| pairs.iter().filter(|p| p.status == s).count();
            writeln!(
                out,
                "accepted {}, rejected {}, pending {}",
                count(synth::ReviewStatus::Accepted),
                count(synth::ReviewStatus::Rejected),
                count(synth::ReviewStatus::PendingReview)
            )?;
            if let Some(dataset) = dataset {
                let corpus = cfg.open_corpus()?;
                let gold = synth::accepted_gold_pairs(&pairs, &corpus);
                eval::save_dataset(&gold, &dataset)?;
                writeln!(out, "{} gold pairs -> {}", gold.len(), dataset.display())?;
            }
        }
    }
    Ok(())
}

fn prompt_line(input: &mut dyn BufRead, out: &mut dyn Write, question: &str) -> Result<String> {
    write!(out, "{question} ")?;
    out.flush()?;
    let mut line = String::new();
    if input.read_line(&mut line)? == 0 {
        bail!("input ended before judging finished");
    }
    Ok(line.trim().to_string())
}

fn ask_yes_no(input: &mut dyn BufRead, out: &mut dyn Write, question: &str) -> Result<bool> {
    loop {
        match prompt_line(input, out, &format!("{question} [y/n]"))?.to_lowercase().as_str() {
            "y" | "yes" => return Ok(true),
            "n" | "no" => return Ok(false),
            _ => writeln!(out, "please answer y or n")?,
        }
    }
}

fn judge_interactively(
    record: &TranscriptRecord,
    judge_id: &str,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
) -> Result<Judgment> {
    writeln!(out, "\n[{} / {}] {}", record.pair_id, mode_name(record.mode), record.question)?;
    match (&record.answer, &record.error) {
        (Some(a), _) => writeln!(out, "answer: {a}")?,
        (None, Some(e)) => writeln!(out, "no answer ({} failed: {})", e.stage, e.message)?,
        (None, None) => writeln!(out, "no answer")?,
    }
    let answerable = ask_yes_no(input, out, "answerable?")?;
    let complete = ask_yes_no(input, out, "complete?")?;
    let category = if answerable && complete {
        ErrorCategory::None
    } else {
        let allowed: Vec<ErrorCategory> = FAILURE_CATEGORIES
            .into_iter()
            .filter(|&c| !(c == ErrorCategory::WrongContext && record.mode == QaMode::Agnostic))
            .collect();
        let names: Vec<&str> = allowed.iter().map(|c| c.as_str()).collect();
        loop {
            let answer = prompt_line(input, out, &format!("error category [{}]?", names.join("/")))?;
            match ErrorCategory::parse(&answer).filter(|c| allowed.contains(c)) {
                Some(c) => break c,
                None => writeln!(out, "unknown category")?,
            }
        }
    };
    Judgment::new(record, answerable, complete, category, judge_id).map_err(|m| anyhow!(m))
}

pub fn eval_cmd(cfg: &AppConfig, cmd: EvalCommand, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<()> {
    match cmd {
        EvalCommand::Run {
            dataset,
            modes,
            k,
            out: path,
        } => {
            let modes = modes
                .iter()
                .map(|m| parse_mode(m).ok_or_else(|| anyhow!("unknown mode '{m}'")))
                .collect::<Result<Vec<_>>>()?;
            let dataset = eval::load_dataset(&dataset)?;
            let engine = cfg.build_engine()?;
            let records = eval::run_eval(&engine, &dataset, &modes, k.unwrap_or(cfg.service.default_k));
            eval::save_transcript(&records, &path)?;
            let failed = records.iter().filter(|r| r.error.is_some()).count();
            writeln!(out, "{} records ({} failed) -> {}", records.len(), failed, path.display())?;
        }
        EvalCommand::Judge {
            transcript,
            out: path,
            judge_id,
            import,
        } => {
            let records = eval::load_transcript(&transcript)?;
            let judged = match import {
                Some(file) => {
                    let known: HashMap<(String, QaMode), ()> =
                        records.iter().map(|r| ((r.pair_id.clone(), r.mode), ())).collect();
                    let judgments = eval::load_judgments(&file)?;
                    if let Some(j) = judgments.iter().find(|j| !known.contains_key(&(j.pair_id.clone(), j.mode))) {
                        bail!("judgment for {}/{} has no transcript record", j.pair_id, mode_name(j.mode));
                    }
                    judgments
                }
                None => records
                    .iter()
                    .map(|r| judge_interactively(r, &judge_id, input, out))
                    .collect::<Result<Vec<_>>>()?,
            };
            for j in &judged {
                record_judgment(&path, j)?;
            }
            writeln!(out, "{} judgments -> {}", judged.len(), path.display())?;
        }
        EvalCommand::Report {
            judgments,
            format,
            expect,
        } => {
            let report = build_report(&eval::load_judgments(&judgments)?)?;
            write!(out, "{}", render_report(&report, format))?;
            let mismatches = check_expectations(&report, &expect)?;
            for m in &mismatches {
                writeln!(out, "{m}")?;
            }
            if mismatches.iter().any(|m| m.kind == MismatchKind::Value) {
                bail!("{} claimed accuracies disagree with the judgments", mismatches.len());
            }
        }
        EvalCommand::Denominators { percents, min, max } => {
            let found = consistent_denominators(&percents, min..=max);
            let listed: Vec<String> = found.iter().map(u64::to_string).collect();
            writeln!(out, "{}", if listed.is_empty() { "none".to_string() } else { listed.join(" ") })?;
        }
    }
    Ok(())
}

#[derive(Deserialize, Serialize)]
struct RecordedAnswer {
    question: String,
    mode: QaMode,
    answer: String,
}

fn llm(cfg: &AppConfig, cmd: LlmCommand, out: &mut dyn Write) -> Result<()> {
    let LlmCommand::Record { answers, k, out: path } = cmd;
    let engine = cfg.build_engine()?;
    let k = k.unwrap_or(cfg.service.default_k);
    let text = fs::read_to_string(&answers).with_context(|| format!("reading {}", answers.display()))?;
    let backend = ReplayBackend::new(ReplayFixture::open(&path)?);
    let mut recorded = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let a: RecordedAnswer =
            serde_json::from_str(line).with_context(|| format!("{} line {}", answers.display(), i + 1))?;
        let prepared = engine
            .prepare(&a.question, a.mode, k)
            .map_err(|e| anyhow!("line {}: {} stage failed: {e}", i + 1, e.stage()))?;
        let request = engine.request_for(&prepared.bundle.rendered);
        backend.record(&request, &a.answer)?;
        writeln!(out, "{}\t{}\t{}", request.prompt_hash(), mode_name(a.mode), a.question)?;
        recorded += 1;
    }
    writeln!(out, "{} answers recorded, fixture holds {} -> {}", recorded, backend.fixture_len(), path.display())?;
    Ok(())
}

fn serve(cfg: &mut AppConfig, args: ServeArgs) -> Result<()> {
    if let Some(bind) = args.bind {
        cfg.service.bind = bind;
    }
    let state = Arc::new(AppState::from_config(cfg)?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&cfg.service.bind)
            .await
            .with_context(|| format!("binding {}", cfg.service.bind))?;
        tracing::info!(addr = %listener.local_addr()?, modes = ?ALL_MODES.map(mode_name), "listening");
        service::serve(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}
