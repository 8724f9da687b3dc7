//! Configuration file (TOML) with environment overrides, and construction
//! of the engine it describes.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError};
use crate::ingest::ChunkParams;
use crate::kg::{FactOptions, KgError, KgFixture, KgSource, LabelIndex, SparqlClient, SparqlConfig};
use crate::llm::{BackendKind, EchoBackend, LlmBackend, LlmError, RemoteBackend, RemoteConfig, ReplayBackend, ReplayFixture};
use crate::pipeline::{parse_mode, KnowledgeBase, PipelineConfig, QaEngine, QaMode};
use crate::retrieval::{Embedder, HashedTrigramEmbedder};
use crate::synth::SynthOptions;

pub const ENV_PREFIX: &str = "INSUREQA_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid setting {key}: {message}")]
    Invalid { key: String, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSettings {
    pub dir: PathBuf,
    pub dim: usize,
    pub max_chars: usize,
    pub overlap_chars: usize,
}

impl Default for CorpusSettings {
    fn default() -> Self {
        let params = ChunkParams::default();
        Self {
            dir: PathBuf::from("corpus"),
            dim: crate::retrieval::DEFAULT_DIM,
            max_chars: params.max_chars,
            overlap_chars: params.overlap_chars,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KgSourceSetting {
    Fixture,
    Endpoint,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KgSettings {
    pub source: KgSourceSetting,
    /// `label<TAB>uri<TAB>abstract` rows; labels and facts in one file.
    pub fixture: Option<PathBuf>,
    /// `label<TAB>uri` rows used for linking when facts come from the endpoint.
    pub labels: Option<PathBuf>,
    pub endpoint: String,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    pub max_facts: usize,
    #[serde(flatten)]
    pub facts: FactOptions,
}

impl Default for KgSettings {
    fn default() -> Self {
        Self {
            source: KgSourceSetting::Fixture,
            fixture: None,
            labels: None,
            endpoint: crate::kg::sparql::DEFAULT_ENDPOINT.into(),
            timeout_secs: 10,
            max_in_flight: 4,
            max_facts: crate::kg::DEFAULT_MAX_FACTS,
            facts: FactOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSettings {
    pub backend: BackendKind,
    pub fixture: Option<PathBuf>,
    pub endpoint: String,
    pub api_key: String,
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
}

impl Default for LlmSettings {
    fn default() -> Self {
        let remote = RemoteConfig::default();
        Self {
            backend: BackendKind::Replay,
            fixture: None,
            endpoint: remote.endpoint,
            api_key: String::new(),
            model_id: crate::llm::DEFAULT_MODEL_ID.into(),
            temperature: 0.0,
            max_output_tokens: 512,
            timeout_secs: remote.timeout.as_secs(),
            max_retries: remote.max_retries,
            backoff_ms: remote.backoff_base.as_millis() as u64,
            max_in_flight: remote.max_in_flight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSettings {
    pub bind: String,
    pub default_mode: String,
    pub default_k: usize,
    pub request_timeout_secs: u64,
    pub max_concurrent: usize,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            default_mode: "rulebook_kg".into(),
            default_k: crate::pipeline::DEFAULT_K,
            request_timeout_secs: 30,
            max_concurrent: 16,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub corpus: CorpusSettings,
    pub kg: KgSettings,
    pub llm: LlmSettings,
    pub service: ServiceSettings,
    pub max_prompt_tokens: Option<usize>,
    pub synth: SynthOptions,
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        message: message.into(),
    }
}

fn parse_env<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| invalid(key, e.to_string()))
}

impl AppConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Reads `path` if given (a missing explicit path is an error), then
    /// applies `INSUREQA_*` variables from the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                Self::from_toml(&text, p)?
            }
            None => Self::default(),
        };
        let env: HashMap<String, String> = std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        cfg.apply_env(&env)?;
        Ok(cfg)
    }

    /// Overrides from variables such as `INSUREQA_LLM_API_KEY`.
    pub fn apply_env(&mut self, env: &HashMap<String, String>) -> Result<(), ConfigError> {
        for (key, value) in env {
            let Some(name) = key.strip_prefix(ENV_PREFIX) else { continue };
            match name {
                "CORPUS_DIR" => self.corpus.dir = PathBuf::from(value),
                "KG_SOURCE" => {
                    self.kg.source = match value.as_str() {
                        "fixture" => KgSourceSetting::Fixture,
                        "endpoint" => KgSourceSetting::Endpoint,
                        "none" => KgSourceSetting::None,
                        other => return Err(invalid(key, format!("unknown KG source '{other}'"))),
                    }
                }
                "KG_FIXTURE" => self.kg.fixture = Some(PathBuf::from(value)),
                "KG_LABELS" => self.kg.labels = Some(PathBuf::from(value)),
                "KG_ENDPOINT" => self.kg.endpoint = value.clone(),
                "LLM_BACKEND" => self.llm.backend = parse_env(key, value)?,
                "LLM_FIXTURE" => self.llm.fixture = Some(PathBuf::from(value)),
                "LLM_ENDPOINT" => self.llm.endpoint = value.clone(),
                "LLM_API_KEY" => self.llm.api_key = value.clone(),
                "LLM_MODEL" => self.llm.model_id = value.clone(),
                "LLM_TEMPERATURE" => self.llm.temperature = parse_env(key, value)?,
                "BIND" => self.service.bind = value.clone(),
                "DEFAULT_MODE" => self.service.default_mode = value.clone(),
                "DEFAULT_K" => self.service.default_k = parse_env(key, value)?,
                "REQUEST_TIMEOUT_SECS" => self.service.request_timeout_secs = parse_env(key, value)?,
                _ => tracing::warn!(variable = %key, "ignoring unknown configuration variable"),
            }
        }
        Ok(())
    }

    pub fn default_mode(&self) -> Result<QaMode, ConfigError> {
        parse_mode(&self.service.default_mode)
            .ok_or_else(|| invalid("service.default_mode", format!("unknown mode '{}'", self.service.default_mode)))
    }

    pub fn chunk_params(&self) -> Result<ChunkParams, ConfigError> {
        let params = ChunkParams::new(self.corpus.max_chars, self.corpus.overlap_chars);
        params.validate().map_err(|e| invalid("corpus", e.to_string()))?;
        Ok(params)
    }

    pub fn embedder(&self) -> Arc<dyn Embedder> {
        Arc::new(HashedTrigramEmbedder::new(self.corpus.dim))
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            k: self.service.default_k,
            max_prompt_tokens: self.max_prompt_tokens.unwrap_or(crate::prompt::DEFAULT_MAX_PROMPT_TOKENS),
            max_facts: self.kg.max_facts,
            facts: self.kg.facts.clone(),
            model_id: self.llm.model_id.clone(),
            temperature: self.llm.temperature,
            max_output_tokens: self.llm.max_output_tokens,
        }
    }

    pub fn open_corpus(&self) -> Result<Corpus, ConfigError> {
        let mut corpus = Corpus::open(&self.corpus.dir, self.embedder())?;
        if corpus.chunks().is_empty() {
            corpus = Corpus::new(self.embedder(), self.chunk_params()?);
        }
        Ok(corpus)
    }

    pub fn knowledge(&self) -> Result<Option<KnowledgeBase>, ConfigError> {
        match self.kg.source {
            KgSourceSetting::None => Ok(None),
            KgSourceSetting::Fixture => match &self.kg.fixture {
                Some(path) => Ok(Some(KnowledgeBase::from_fixture(KgFixture::load(path)?))),
                None => Ok(None),
            },
            KgSourceSetting::Endpoint => {
                let labels = match &self.kg.labels {
                    Some(path) => LabelIndex::load(path)?,
                    None => match &self.kg.fixture {
                        Some(path) => KgFixture::load(path)?.label_index(),
                        None => LabelIndex::default(),
                    },
                };
                let client = SparqlClient::new(SparqlConfig {
                    endpoint: self.kg.endpoint.clone(),
                    timeout: Duration::from_secs(self.kg.timeout_secs),
                    max_in_flight: self.kg.max_in_flight,
                    ..SparqlConfig::default()
                })?;
                Ok(Some(KnowledgeBase {
                    labels,
                    source: KgSource::Endpoint(client),
                }))
            }
        }
    }

    pub fn backend(&self) -> Result<Arc<dyn LlmBackend>, ConfigError> {
        Ok(match self.llm.backend {
            BackendKind::Echo => Arc::new(EchoBackend),
            BackendKind::Replay => {
                let fixture = match &self.llm.fixture {
                    Some(path) => ReplayFixture::open(path)?,
                    None => ReplayFixture::new(),
                };
                Arc::new(ReplayBackend::new(fixture))
            }
            BackendKind::Remote => Arc::new(RemoteBackend::new(self.remote_config())?),
        })
    }

    pub fn remote_config(&self) -> RemoteConfig {
        RemoteConfig {
            endpoint: self.llm.endpoint.clone(),
            api_key: self.llm.api_key.clone(),
            timeout: Duration::from_secs(self.llm.timeout_secs),
            max_retries: self.llm.max_retries,
            backoff_base: Duration::from_millis(self.llm.backoff_ms),
            max_in_flight: self.llm.max_in_flight,
        }
    }

    pub fn build_engine(&self) -> Result<QaEngine, ConfigError> {
        Ok(QaEngine::new(
            self.open_corpus()?,
            self.knowledge()?,
            self.backend()?,
            self.pipeline_config(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_env_layers() {
        let mut cfg = AppConfig::from_toml(
            r#"
            [corpus]
            dir = "data/corpus"
            [llm]
            backend = "echo"
            model_id = "text-davinci-003"
            [kg]
            source = "none"
            predicates = ["abstract", "comment"]
            [service]
            default_k = 5
            "#,
            Path::new("insureqa.toml"),
        )
        .unwrap();
        assert_eq!(cfg.llm.backend, BackendKind::Echo);
        assert_eq!(cfg.kg.facts.predicates, vec!["abstract", "comment"]);
        assert_eq!(cfg.pipeline_config().k, 5);
        let env = HashMap::from([
            ("INSUREQA_LLM_BACKEND".to_string(), "remote".to_string()),
            ("INSUREQA_LLM_API_KEY".to_string(), "sk-test".to_string()),
            ("INSUREQA_DEFAULT_K".to_string(), "2".to_string()),
        ]);
        cfg.apply_env(&env).unwrap();
        assert_eq!(cfg.llm.backend, BackendKind::Remote);
        assert_eq!(cfg.remote_config().api_key, "sk-test");
        assert_eq!(cfg.service.default_k, 2);
        assert_eq!(cfg.default_mode().unwrap(), QaMode::RulebookKg);
    }

    #[test]
    fn bad_settings_are_reported() {
        assert!(AppConfig::from_toml("[llm]\nbackend = \"gpt\"\n", Path::new("c.toml")).is_err());
        assert!(AppConfig::from_toml("[nope]\n", Path::new("c.toml")).is_err());
        let mut cfg = AppConfig::default();
        let env = HashMap::from([("INSUREQA_DEFAULT_K".to_string(), "many".to_string())]);
        assert!(cfg.apply_env(&env).is_err());
        cfg.service.default_mode = "gpt".into();
        assert!(cfg.default_mode().is_err());
    }

    #[test]
    fn engine_from_empty_corpus_dir() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = AppConfig::default();
        cfg.corpus.dir = dir.path().to_path_buf();
        cfg.llm.backend = BackendKind::Echo;
        cfg.kg.source = KgSourceSetting::None;
        let engine = cfg.build_engine().unwrap();
        assert!(engine.corpus().chunks().is_empty());
        assert!(engine.answer_question("Is there a refund?", QaMode::Agnostic, 3).is_ok());
    }
}
