mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use insureqa_cli::commands::{eval_cmd, EvalCommand};
use insureqa_core::eval::{load_judgments, ErrorCategory};
use insureqa_core::{AppConfig, QaMode};

use common::{fixtures, rulebook_paths};

fn insureqa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_insureqa"))
        .args(args)
        .env_remove("INSUREQA_CONFIG")
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
    corpus: PathBuf,
    kg: PathBuf,
    replay: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let corpus = root.join("corpus");
        let mut args = vec!["ingest".to_string()];
        args.extend(rulebook_paths().iter().map(|p| p.display().to_string()));
        args.extend(["--out".to_string(), corpus.display().to_string()]);
        let out = ok(insureqa(&args.iter().map(String::as_str).collect::<Vec<_>>()));
        assert!(out.contains("corpus: 8 documents, 10 chunks, 2 tables"), "{out}");
        Self {
            _dir: dir,
            corpus,
            kg: fixtures().join("kg/dbpedia_sample.tsv"),
            replay: fixtures().join("sample_qa/replay.tsv"),
            root,
        }
    }

    fn run(&self, backend: &str, args: &[&str]) -> Output {
        let mut full = vec![
            "--corpus",
            s(&self.corpus),
            "--kg-fixture",
            s(&self.kg),
            "--llm-fixture",
            s(&self.replay),
            "--backend",
            backend,
        ];
        full.extend_from_slice(args);
        insureqa(&full)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

#[test]
fn ingest_rejects_duplicates_and_keeps_the_corpus() {
    let ws = Workspace::new();
    let out = insureqa(&["ingest", s(&rulebook_paths()[0]), "--out", s(&ws.corpus)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("already"));
    let out = ok(insureqa(&["index", "build", s(&ws.corpus)]));
    assert_eq!(out.trim(), "indexed 10 of 10 chunks");
}

#[test]
fn index_query_ranks_the_matching_article_first() {
    let ws = Workspace::new();
    let out = ok(insureqa(&["index", "query", s(&ws.corpus), "--q", "bone marrow donor benefit", "-k", "2"]));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].contains("bone-marrow#0"), "{out}");
}

#[test]
fn kg_commands_work_offline() {
    let ws = Workspace::new();
    let out = ok(ws.run("echo", &["kg", "link", "--q", "He was hospitalized for a week due to diabetes."]));
    assert!(out.contains("http://dbpedia.org/resource/Diabetes"), "{out}");
    let out = ok(ws.run("echo", &["kg", "facts", "--entity", "lifestyle disease", "--source", "fixture"]));
    assert!(out.starts_with("lifestyle disease | abstract |"));
    assert!(out.contains("type II diabetes"));
}

#[test]
fn ask_replays_and_shows_the_prompt() {
    let ws = Workspace::new();
    let out = ok(ws.run(
        "replay",
        &["ask", "--q", "How much is the radiation treatment benefit payment?", "--mode", "rulebook", "-k", "3", "--show-prompt"],
    ));
    assert!(out.contains("base on the context: 'Article 4 (Radiation Treatment Benefits)"));
    assert!(out.contains("The radiation treatment benefit payment is (Daily hospitalization amount) x 10"));

    let out = ws.run("replay", &["ask", "--q", "Unrecorded question?", "--mode", "agnostic"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("llm stage failed"));
}

#[test]
fn ask_batch_writes_a_transcript_in_input_order() {
    let ws = Workspace::new();
    let questions = ws.path("questions.jsonl");
    std::fs::write(
        &questions,
        "{\"question\": \"What is the maximum amount of advanced medical care benefits?\"}\n\
         {\"question\": \"Unrecorded?\", \"pair_id\": \"u1\"}\n",
    )
    .unwrap();
    let transcript = ws.path("transcript.jsonl");
    let out = ok(ws.run(
        "replay",
        &["ask-batch", s(&questions), "--mode", "rulebook", "--out", s(&transcript)],
    ));
    assert!(out.starts_with("1 answered, 1 failed"));
    let records = insureqa_core::eval::load_transcript(&transcript).unwrap();
    assert_eq!(records[0].pair_id, "q1");
    assert_eq!(records[0].answer.as_deref(), Some("The maximum amount of advanced medical care benefits is 20 million yen."));
    assert_eq!(records[1].pair_id, "u1");
    assert_eq!(records[1].error.as_ref().unwrap().stage.to_string(), "llm");
}

#[test]
fn synth_round_trip_through_review() {
    let ws = Workspace::new();
    let pairs = ws.path("pairs.jsonl");
    let out = ok(ws.run("echo", &["synth", "generate", s(&ws.corpus), "--out", s(&pairs)]));
    assert!(out.contains("10 pairs from 10 chunks (0 failures)"), "{out}");
    let deduped = ws.path("deduped.jsonl");
    let out = ok(ws.run("echo", &["synth", "dedup", s(&pairs), "--out", s(&deduped)]));
    assert!(out.starts_with("kept "));
    let review = ws.path("review.tsv");
    ok(ws.run("echo", &["synth", "export-review", s(&deduped), "--out", s(&review)]));

    // A reviewer accepts the first pair and rejects the second.
    let sheet = std::fs::read_to_string(&review).unwrap();
    let mut lines: Vec<String> = sheet.lines().map(String::from).collect();
    lines[1] = lines[1].replacen("\tpending_review\t", "\taccepted\t", 1);
    lines[2] = lines[2].replacen("\tpending_review\t", "\trejected\t", 1);
    std::fs::write(&review, lines.join("\n") + "\n").unwrap();

    let reviewed = ws.path("reviewed.jsonl");
    let gold = ws.path("gold.jsonl");
    let out = ok(ws.run(
        "echo",
        &["synth", "import-review", s(&deduped), "--review", s(&review), "--out", s(&reviewed), "--dataset", s(&gold)],
    ));
    assert!(out.contains("accepted 1, rejected 1"), "{out}");
    assert_eq!(insureqa_core::eval::load_dataset(&gold).unwrap().len(), 1);
}

#[test]
fn eval_run_judge_and_report() {
    let ws = Workspace::new();
    let transcript = ws.path("transcript.jsonl");
    ok(ws.run(
        "replay",
        &["eval", "run", s(&fixtures().join("sample_qa/dataset.jsonl")), "--out", s(&transcript)],
    ));

    // One judgment per record: only the agnostic answers fail.
    let records = insureqa_core::eval::load_transcript(&transcript).unwrap();
    let mut rows = String::new();
    for r in &records {
        let correct = r.mode != QaMode::Agnostic;
        let category = if correct { ErrorCategory::None } else { ErrorCategory::Other };
        let j = insureqa_core::Judgment::new(r, correct, correct, category, "expert").unwrap();
        rows.push_str(&serde_json::to_string(&j).unwrap());
        rows.push('\n');
    }
    let import = ws.path("import.jsonl");
    std::fs::write(&import, rows).unwrap();
    let judgments = ws.path("judgments.jsonl");
    ok(ws.run(
        "replay",
        &["eval", "judge", s(&transcript), "--import", s(&import), "--out", s(&judgments)],
    ));
    assert_eq!(load_judgments(&judgments).unwrap().len(), 12);

    let out = ok(ws.run("replay", &["eval", "report", s(&judgments), "--format", "csv"]));
    assert!(out.contains("agnostic"), "{out}");
    let out = ok(ws.run("replay", &["eval", "report", s(&judgments), "--expect", "rulebook=100.00"]));
    assert!(!out.contains("mismatch"));
    let bad = ws.run("replay", &["eval", "report", s(&judgments), "--expect", "rulebook=50.00"]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stdout).contains("value mismatch"));
}

#[test]
fn interactive_judging_reads_answers_from_input() {
    let ws = Workspace::new();
    let transcript = ws.path("transcript.jsonl");
    ok(ws.run(
        "replay",
        &["eval", "run", s(&fixtures().join("sample_qa/dataset.jsonl")), "--modes", "agnostic", "--out", s(&transcript)],
    ));
    let judgments = ws.path("judgments.jsonl");
    // Four records: a wrong_context reply for agnostic is refused and re-asked.
    let input = "n\ny\nwrong_context\nambiguity\ny\ny\nmaybe\ny\nn\nother\ny\ny\n";
    let mut output = Vec::new();
    eval_cmd(
        &AppConfig::default(),
        EvalCommand::Judge {
            transcript,
            out: judgments.clone(),
            judge_id: "j1".into(),
            import: None,
        },
        &mut input.as_bytes(),
        &mut output,
    )
    .unwrap();
    let text = String::from_utf8(output).unwrap();
    assert!(text.contains("unknown category"));
    assert!(text.contains("please answer y or n"));
    let rows = load_judgments(&judgments).unwrap();
    let categories: Vec<ErrorCategory> = rows.iter().map(|j| j.error_category).collect();
    assert_eq!(
        categories,
        [ErrorCategory::Ambiguity, ErrorCategory::None, ErrorCategory::Other, ErrorCategory::None]
    );
    assert!(rows.iter().all(|j| j.judge_id == "j1"));
}

#[test]
fn denominators_reproduce_the_consistency_check() {
    let out = ok(insureqa(&["eval", "denominators", "--percents", "9.62", "--min", "100", "--max", "110"]));
    assert_eq!(out.trim(), "104");
}

#[test]
fn llm_record_builds_a_fixture_matching_the_committed_one() {
    let ws = Workspace::new();
    let fixture = ws.path("replay.tsv");
    let out = ok(ws.run(
        "echo",
        &["llm", "record", "--answers", s(&fixtures().join("sample_qa/answers.jsonl")), "--out", s(&fixture)],
    ));
    assert!(out.contains("12 answers recorded"));
    assert_eq!(
        std::fs::read_to_string(&fixture).unwrap(),
        std::fs::read_to_string(fixtures().join("sample_qa/replay.tsv")).unwrap()
    );
}
