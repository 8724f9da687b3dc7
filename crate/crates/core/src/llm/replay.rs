use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;

use super::{BackendKind, LlmBackend, LlmError, LlmRequest, LlmResponse, PromptHash};

/// Recorded responses keyed by prompt hash. On disk:
/// `<16 hex digit hash><TAB><base64 response>` per line, sorted by hash.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplayFixture {
    entries: BTreeMap<PromptHash, String>,
    path: Option<PathBuf>,
}

impl ReplayFixture {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, LlmError> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: &str| LlmError::FixtureParse {
                line: i + 1,
                message: message.into(),
            };
            let (hash, b64) = line.split_once('\t').ok_or_else(|| bad("expected hash<TAB>base64"))?;
            let hash = PromptHash::parse(hash).ok_or_else(|| bad("hash must be 16 hex digits"))?;
            let bytes = STANDARD.decode(b64.trim()).map_err(|_| bad("invalid base64"))?;
            let text = String::from_utf8(bytes).map_err(|_| bad("response is not UTF-8"))?;
            entries.insert(hash, text);
        }
        Ok(Self { entries, path: None })
    }

    /// Loads a fixture bound to `path`; a missing file yields an empty
    /// fixture that will be created on the first recording.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let mut fixture = match fs::read_to_string(path) {
            Ok(text) => Self::parse(&text)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Self::new(),
            Err(e) => return Err(LlmError::FixtureParse { line: 0, message: e.to_string() }),
        };
        fixture.path = Some(path.to_path_buf());
        Ok(fixture)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, hash: PromptHash) -> Option<&str> {
        self.entries.get(&hash).map(String::as_str)
    }

    pub fn insert(&mut self, hash: PromptHash, text: impl Into<String>) {
        self.entries.insert(hash, text.into());
    }

    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|(h, t)| format!("{h}\t{}\n", STANDARD.encode(t.as_bytes())))
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LlmError> {
        fs::write(path, self.render()).map_err(|e| LlmError::FixtureWrite(e.to_string()))
    }

    fn persist(&self) -> Result<(), LlmError> {
        match &self.path {
            Some(path) => self.save(path),
            None => Ok(()),
        }
    }
}

/// Stores `response_text` for the request's prompt, replacing any previous
/// recording of the same prompt, and writes the fixture back to its file.
pub fn record_fixture(
    request: &LlmRequest,
    response_text: &str,
    fixture: &mut ReplayFixture,
) -> Result<(), LlmError> {
    fixture.insert(request.prompt_hash(), response_text);
    fixture.persist()
}

#[derive(Debug, Default)]
pub struct ReplayBackend {
    fixture: RwLock<ReplayFixture>,
}

impl ReplayBackend {
    pub fn new(fixture: ReplayFixture) -> Self {
        Self {
            fixture: RwLock::new(fixture),
        }
    }

    pub fn record(&self, request: &LlmRequest, response_text: &str) -> Result<(), LlmError> {
        let mut fixture = self.fixture.write().unwrap_or_else(|e| e.into_inner());
        record_fixture(request, response_text, &mut fixture)
    }

    pub fn fixture_len(&self) -> usize {
        self.fixture.read().unwrap_or_else(|e| e.into_inner()).len()
    }
}

impl LlmBackend for ReplayBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Replay
    }

    fn complete_validated(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let hash = request.prompt_hash();
        let fixture = self.fixture.read().unwrap_or_else(|e| e.into_inner());
        let text = fixture.get(hash).ok_or(LlmError::ReplayMiss(hash))?;
        Ok(LlmResponse {
            text: text.to_string(),
            prompt_hash: hash,
            backend: BackendKind::Replay,
            latency_ms: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::complete;
    use std::collections::HashSet;

    const RADIATION: &str = "The radiation treatment benefit payment is (Daily hospitalization amount) x 10";

    #[test]
    fn replays_recorded_text() {
        let req = LlmRequest::new("Answer the question in a short and concise way: 'How much is the radiation treatment benefit payment?'");
        let backend = ReplayBackend::default();
        backend.record(&req, RADIATION).unwrap();
        let a = complete(&req, &backend).unwrap();
        let b = complete(&req, &backend).unwrap();
        assert_eq!(a.text, RADIATION);
        assert_eq!(a, b);
        assert_eq!(a.prompt_hash, PromptHash::of(&req.prompt));
    }

    #[test]
    fn unknown_prompt_misses() {
        let backend = ReplayBackend::default();
        assert!(matches!(
            complete(&LlmRequest::new("never recorded"), &backend),
            Err(LlmError::ReplayMiss(_))
        ));
    }

    #[test]
    fn file_lines_equal_distinct_prompts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("replay.tsv");
        let mut fixture = ReplayFixture::open(&path).unwrap();
        let prompts = ["p1", "p2", "p1", "p3", "p2", "p2"];
        for (i, p) in prompts.iter().enumerate() {
            record_fixture(&LlmRequest::new(*p), &format!("answer {i}\nwith newline"), &mut fixture).unwrap();
        }
        let distinct: HashSet<_> = prompts.iter().map(|p| PromptHash::of(p)).collect();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), distinct.len());
        let back = ReplayFixture::open(&path).unwrap();
        assert_eq!(back.get(PromptHash::of("p2")), Some("answer 5\nwith newline"));
    }

    #[test]
    fn unwritable_fixture_reports_write_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut fixture = ReplayFixture::open(dir.path().join("missing").join("replay.tsv")).unwrap();
        assert!(matches!(
            record_fixture(&LlmRequest::new("p"), "a", &mut fixture),
            Err(LlmError::FixtureWrite(_))
        ));
    }

    #[test]
    fn malformed_fixture_lines() {
        assert!(ReplayFixture::parse("nothex\tYQ==\n").is_err());
        assert!(ReplayFixture::parse("af63dc4c8601ec8c\t***\n").is_err());
        assert!(ReplayFixture::parse("af63dc4c8601ec8c YQ==\n").is_err());
    }
}
