use std::path::{Path, PathBuf};
use std::sync::Arc;

use insureqa_core::config::AppConfig;
use insureqa_core::ingest::load_bundle;
use insureqa_core::kg::KgFixture;
use insureqa_core::llm::EchoBackend;
use insureqa_core::pipeline::{KnowledgeBase, PipelineConfig, QaEngine, QaMode};
use insureqa_core::retrieval::{HashedTrigramEmbedder, DEFAULT_DIM};
use insureqa_core::{ChunkKind, ChunkParams, Corpus};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn fixture_corpus() -> Corpus {
    let mut corpus = Corpus::new(Arc::new(HashedTrigramEmbedder::new(DEFAULT_DIM)), ChunkParams::default());
    let mut paths: Vec<PathBuf> = std::fs::read_dir(fixtures().join("rulebooks"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    for p in paths {
        corpus.ingest(&load_bundle(&p).unwrap()).unwrap();
    }
    corpus
}

#[test]
fn tables_become_their_own_retrievable_chunks() {
    let corpus = fixture_corpus();
    let tables: Vec<_> = corpus.chunks().iter().filter(|c| c.kind == ChunkKind::Table).collect();
    assert_eq!(tables.len(), 2);
    let womens = tables.iter().find(|c| c.doc_id == "womens-specific").unwrap();
    assert!(womens.text.starts_with("TABLE: Women's Specific Insurance\n"));
    assert!(womens.text.contains(
        "Women's Specific Insurance | row=Breast Reconstruction Benefits | column=Details of benefits | value=Breast reconstruction surgery for the breast"
    ));
    let hits = corpus.search("breast reconstruction benefits details", 1).unwrap();
    assert_eq!(hits[0].chunk_id, womens.chunk_id);
}

#[test]
fn diabetes_question_pulls_the_lifestyle_disease_fact() {
    let fixture = KgFixture::load(fixtures().join("kg/dbpedia_sample.tsv")).unwrap();
    let engine = QaEngine::new(
        fixture_corpus(),
        Some(KnowledgeBase::from_fixture(fixture)),
        Arc::new(EchoBackend),
        PipelineConfig::default(),
    );
    let question = "He was hospitalized for a week due to lifestyle disease. How much is his benefit?";
    let result = engine.answer_question(question, QaMode::RulebookKg, 3).unwrap();
    assert_eq!(result.answer, question);
    assert!(result.hits.iter().any(|h| h.chunk_id.starts_with("lifestyle#")));
    assert!(result
        .facts
        .iter()
        .any(|f| f.subject_label == "lifestyle disease" && f.object_text.contains("type II diabetes")));
    let external = result.prompt_echo.split("---External information: ").nth(1).unwrap();
    assert!(external.contains("lifestyle disease | abstract | Lifestyle diseases"), "{external}");
}

#[test]
fn corpus_survives_a_save_and_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixture_corpus();
    corpus.save(dir.path()).unwrap();
    let reopened = Corpus::open(dir.path(), Arc::new(HashedTrigramEmbedder::new(DEFAULT_DIM))).unwrap();
    assert_eq!(reopened.stats(), corpus.stats());
    let q = "maximum amount of advanced medical care benefits";
    assert_eq!(reopened.search(q, 3).unwrap(), corpus.search(q, 3).unwrap());
}

#[test]
fn config_file_and_environment_build_an_engine() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_dir = dir.path().join("corpus");
    fixture_corpus().save(&corpus_dir).unwrap();
    let toml = format!(
        "[corpus]\ndir = {:?}\n\n[kg]\nsource = \"fixture\"\nfixture = {:?}\n\n[llm]\nbackend = \"echo\"\n\n[service]\ndefault_mode = \"rulebook\"\n",
        corpus_dir,
        fixtures().join("kg/dbpedia_sample.tsv")
    );
    let mut cfg = AppConfig::from_toml(&toml, Path::new("insureqa.toml")).unwrap();
    let env = [("INSUREQA_DEFAULT_K".to_string(), "2".to_string())].into_iter().collect();
    cfg.apply_env(&env).unwrap();
    assert_eq!(cfg.default_mode().unwrap(), QaMode::Rulebook);
    let engine = cfg.build_engine().unwrap();
    assert_eq!(engine.corpus().chunks().len(), 10);
    let r = engine
        .answer_question("Can I claim a second bone marrow donor benefit?", QaMode::Rulebook, cfg.service.default_k)
        .unwrap();
    assert_eq!(r.hits.len(), 2);
    assert_eq!(r.hits[0].chunk_id, "bone-marrow#0");

    assert!(AppConfig::from_toml("[corpus]\nunknown = 1\n", Path::new("bad.toml")).is_err());
}
