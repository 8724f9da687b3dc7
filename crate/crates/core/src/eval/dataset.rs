use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;

/// One gold question-answer pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldPair {
    pub pair_id: String,
    pub question: String,
    pub gold_answer: String,
    #[serde(default)]
    pub requires_table: bool,
    #[serde(default)]
    pub requires_external: bool,
    #[serde(default)]
    pub tags: Vec<String>,
}

impl GoldPair {
    pub fn validate(&self) -> Result<(), String> {
        if self.pair_id.trim().is_empty() {
            return Err("pair_id is empty".into());
        }
        if self.question.trim().is_empty() {
            return Err(format!("pair '{}' has an empty question", self.pair_id));
        }
        if self.gold_answer.trim().is_empty() {
            return Err(format!("pair '{}' has an empty gold_answer", self.pair_id));
        }
        Ok(())
    }
}

/// Parses a JSONL dataset, rejecting invalid rows and repeated ids.
pub fn parse_dataset(text: &str) -> Result<Vec<GoldPair>, EvalError> {
    let mut seen = HashSet::new();
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| EvalError::Dataset { line: i + 1, message };
        let pair: GoldPair = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        pair.validate().map_err(bad)?;
        if !seen.insert(pair.pair_id.clone()) {
            return Err(bad(format!("duplicate pair_id '{}'", pair.pair_id)));
        }
        pairs.push(pair);
    }
    Ok(pairs)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<GoldPair>, EvalError> {
    parse_dataset(&fs::read_to_string(path)?)
}

pub fn render_dataset(pairs: &[GoldPair]) -> String {
    pairs
        .iter()
        .map(|p| serde_json::to_string(p).expect("gold pair serializes") + "\n")
        .collect()
}

pub fn save_dataset(pairs: &[GoldPair], path: impl AsRef<Path>) -> Result<(), EvalError> {
    fs::write(path, render_dataset(pairs))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_default_false() {
        let pairs = parse_dataset(
            r#"{"pair_id":"s1","question":"Is there a refund for cancellation?","gold_answer":"No."}"#,
        )
        .unwrap();
        assert!(!pairs[0].requires_table && !pairs[0].requires_external);
        assert!(pairs[0].tags.is_empty());
        assert_eq!(parse_dataset(&render_dataset(&pairs)).unwrap(), pairs);
    }

    #[test]
    fn rejects_duplicates_and_empty_fields() {
        let row = r#"{"pair_id":"a","question":"q?","gold_answer":"a"}"#;
        assert!(matches!(
            parse_dataset(&format!("{row}\n{row}\n")),
            Err(EvalError::Dataset { line: 2, .. })
        ));
        assert!(parse_dataset(r#"{"pair_id":"a","question":" ","gold_answer":"a"}"#).is_err());
        assert!(parse_dataset(r#"{"pair_id":"a","question":"q","gold_answer":""}"#).is_err());
    }
}
