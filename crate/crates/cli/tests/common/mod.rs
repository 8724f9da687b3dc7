#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread::JoinHandle;

use insureqa_cli::service::{self, AppState, ServiceOptions};
use insureqa_core::ingest::load_bundle;
use insureqa_core::{AppConfig, BackendKind, Corpus, QaEngine};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn rulebook_paths() -> Vec<PathBuf> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(fixtures().join("rulebooks"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "bundle"))
        .collect();
    paths.sort();
    paths
}

/// Configuration over the fixture corpus in `corpus_dir`, the fixture KG and
/// the given backend.
pub fn fixture_config(corpus_dir: &Path, backend: BackendKind) -> AppConfig {
    let mut cfg = AppConfig::default();
    cfg.corpus.dir = corpus_dir.to_path_buf();
    cfg.kg.fixture = Some(fixtures().join("kg/dbpedia_sample.tsv"));
    cfg.llm.backend = backend;
    cfg.llm.fixture = Some(fixtures().join("sample_qa/replay.tsv"));
    cfg
}

/// Ingests every fixture rulebook into `corpus_dir`.
pub fn build_fixture_corpus(cfg: &AppConfig) -> Corpus {
    let mut corpus = Corpus::new(cfg.embedder(), cfg.chunk_params().unwrap());
    for path in rulebook_paths() {
        corpus.ingest(&load_bundle(&path).unwrap()).unwrap();
    }
    corpus.save(&cfg.corpus.dir).unwrap();
    corpus
}

pub fn fixture_engine(dir: &Path, backend: BackendKind) -> (AppConfig, QaEngine) {
    let cfg = fixture_config(dir, backend);
    build_fixture_corpus(&cfg);
    let engine = cfg.build_engine().unwrap();
    (cfg, engine)
}

pub struct RunningService {
    pub base: String,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl RunningService {
    pub fn start(engine: QaEngine, options: ServiceOptions) -> Self {
        let state = Arc::new(AppState::new(engine, options));
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                service::serve(listener, state, async {
                    let _ = stop_rx.await;
                })
                .await
                .unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap();
        Self {
            base: format!("http://{addr}"),
            shutdown: Some(stop_tx),
            thread: Some(thread),
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }
}

impl Drop for RunningService {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
