use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EvalError, TranscriptRecord};
use crate::pipeline::{mode_name, QaMode};

/// Judge id whose verdict overrides the individual judges.
pub const FINAL_JUDGE: &str = "final";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    Ambiguity,
    ComplexQuestion,
    WrongContext,
    Other,
    None,
}

pub const FAILURE_CATEGORIES: [ErrorCategory; 4] = [
    ErrorCategory::Ambiguity,
    ErrorCategory::ComplexQuestion,
    ErrorCategory::WrongContext,
    ErrorCategory::Other,
];

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Ambiguity => "ambiguity",
            ErrorCategory::ComplexQuestion => "complex_question",
            ErrorCategory::WrongContext => "wrong_context",
            ErrorCategory::Other => "other",
            ErrorCategory::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        FAILURE_CATEGORIES
            .into_iter()
            .chain([ErrorCategory::None])
            .find(|c| c.as_str() == s.trim())
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A human verdict on one transcript record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub pair_id: String,
    pub mode: QaMode,
    pub answerable: bool,
    pub complete: bool,
    pub correct: bool,
    pub error_category: ErrorCategory,
    pub judge_id: String,
    #[serde(default)]
    pub requires_table: bool,
    #[serde(default)]
    pub requires_external: bool,
}

impl Judgment {
    /// Builds a judgment with `correct` derived from the two indicators.
    pub fn new(
        record: &TranscriptRecord,
        answerable: bool,
        complete: bool,
        error_category: ErrorCategory,
        judge_id: &str,
    ) -> Result<Self, String> {
        let j = Self {
            pair_id: record.pair_id.clone(),
            mode: record.mode,
            answerable,
            complete,
            correct: answerable && complete,
            error_category,
            judge_id: judge_id.to_string(),
            requires_table: record.requires_table,
            requires_external: record.requires_external,
        };
        j.validate()?;
        Ok(j)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.correct != (self.answerable && self.complete) {
            return Err(format!(
                "{}/{}: correct must equal answerable AND complete",
                self.pair_id,
                mode_name(self.mode)
            ));
        }
        if self.correct != (self.error_category == ErrorCategory::None) {
            return Err(format!(
                "{}/{}: error_category must be none exactly when the answer is correct",
                self.pair_id,
                mode_name(self.mode)
            ));
        }
        if self.error_category == ErrorCategory::WrongContext && self.mode == QaMode::Agnostic {
            return Err(format!("{}: wrong_context is not possible without retrieved context", self.pair_id));
        }
        if self.judge_id.trim().is_empty() {
            return Err(format!("{}/{}: judge_id is empty", self.pair_id, mode_name(self.mode)));
        }
        Ok(())
    }
}

/// Parses a judgment file, rejecting any inconsistent row.
pub fn parse_judgments(text: &str) -> Result<Vec<Judgment>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| EvalError::Judgment { line: i + 1, message };
        let j: Judgment = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        j.validate().map_err(bad)?;
        out.push(j);
    }
    Ok(out)
}

pub fn load_judgments(path: impl AsRef<Path>) -> Result<Vec<Judgment>, EvalError> {
    parse_judgments(&fs::read_to_string(path)?)
}

pub fn render_judgments(judgments: &[Judgment]) -> String {
    judgments
        .iter()
        .map(|j| serde_json::to_string(j).expect("judgment serializes") + "\n")
        .collect()
}

/// Appends one validated judgment to a judgment file.
pub fn record_judgment(path: impl AsRef<Path>, judgment: &Judgment) -> Result<(), EvalError> {
    judgment
        .validate()
        .map_err(|message| EvalError::Judgment { line: 0, message })?;
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(render_judgments(std::slice::from_ref(judgment)).as_bytes())?;
    Ok(())
}

/// The verdict that counts for one (pair, mode).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub pair_id: String,
    pub mode: QaMode,
    pub correct: bool,
    pub error_category: ErrorCategory,
    pub requires_table: bool,
    pub requires_external: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Resolution {
    pub verdicts: Vec<Verdict>,
    /// Items where judges disagree and no final verdict exists.
    pub unresolved: Vec<(String, QaMode)>,
    /// Items with at least two individual judges, and how many of those
    /// had all judges agree on correctness.
    pub agreement: (usize, usize),
}

/// Resolves per-judge rows: a `final` verdict wins; otherwise unanimous
/// judges decide; otherwise the item is unresolved.
pub fn resolve(judgments: &[Judgment]) -> Resolution {
    let mut groups: BTreeMap<(String, QaMode), Vec<&Judgment>> = BTreeMap::new();
    for j in judgments {
        groups.entry((j.pair_id.clone(), j.mode)).or_default().push(j);
    }
    let mut res = Resolution::default();
    for ((pair_id, mode), group) in groups {
        let individual: Vec<&&Judgment> = group.iter().filter(|j| j.judge_id != FINAL_JUDGE).collect();
        let unanimous = individual.windows(2).all(|w| w[0].correct == w[1].correct);
        if individual.len() >= 2 {
            res.agreement.1 += 1;
            if unanimous {
                res.agreement.0 += 1;
            }
        }
        let decided = group
            .iter()
            .rev()
            .find(|j| j.judge_id == FINAL_JUDGE)
            .copied()
            .or_else(|| (unanimous && !individual.is_empty()).then(|| *individual[0]));
        let Some(j) = decided else {
            res.unresolved.push((pair_id, mode));
            continue;
        };
        let category = if j.correct {
            ErrorCategory::None
        } else {
            // Judges may agree on "incorrect" yet differ on why; take the most common category, ties by order.
            let mut counts: BTreeMap<ErrorCategory, usize> = BTreeMap::new();
            if j.judge_id == FINAL_JUDGE {
                counts.insert(j.error_category, 1);
            } else {
                for i in &individual {
                    *counts.entry(i.error_category).or_default() += 1;
                }
            }
            counts
                .into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|(c, _)| c)
                .unwrap_or(j.error_category)
        };
        res.verdicts.push(Verdict {
            pair_id,
            mode,
            correct: j.correct,
            error_category: category,
            requires_table: group.iter().any(|g| g.requires_table),
            requires_external: group.iter().any(|g| g.requires_external),
        });
    }
    res
}

#[cfg(test)]
mod tests {
    use super::*;

    fn j(pair: &str, mode: QaMode, correct: bool, category: ErrorCategory, judge: &str) -> Judgment {
        Judgment {
            pair_id: pair.into(),
            mode,
            answerable: correct,
            complete: correct,
            correct,
            error_category: category,
            judge_id: judge.into(),
            requires_table: false,
            requires_external: false,
        }
    }

    #[test]
    fn inconsistent_rows_are_rejected() {
        let mut bad = j("p", QaMode::Rulebook, true, ErrorCategory::None, "a");
        bad.complete = false;
        assert!(bad.validate().is_err());
        assert!(j("p", QaMode::Rulebook, true, ErrorCategory::Other, "a").validate().is_err());
        assert!(j("p", QaMode::Rulebook, false, ErrorCategory::None, "a").validate().is_err());
        assert!(j("p", QaMode::Agnostic, false, ErrorCategory::WrongContext, "a").validate().is_err());
        assert!(j("p", QaMode::Rulebook, false, ErrorCategory::WrongContext, "a").validate().is_ok());
        let line = serde_json::to_string(&bad).unwrap();
        assert!(matches!(parse_judgments(&line), Err(EvalError::Judgment { line: 1, .. })));
    }

    #[test]
    fn final_verdict_overrides_and_agreement_is_counted() {
        let rows = vec![
            j("p1", QaMode::Rulebook, true, ErrorCategory::None, "a"),
            j("p1", QaMode::Rulebook, true, ErrorCategory::None, "b"),
            j("p2", QaMode::Rulebook, true, ErrorCategory::None, "a"),
            j("p2", QaMode::Rulebook, false, ErrorCategory::Ambiguity, "b"),
            j("p2", QaMode::Rulebook, false, ErrorCategory::Ambiguity, FINAL_JUDGE),
            j("p3", QaMode::Rulebook, true, ErrorCategory::None, "a"),
            j("p3", QaMode::Rulebook, false, ErrorCategory::Other, "b"),
        ];
        let res = resolve(&rows);
        assert_eq!(res.agreement, (1, 3));
        assert_eq!(res.unresolved, vec![("p3".to_string(), QaMode::Rulebook)]);
        assert_eq!(res.verdicts.len(), 2);
        assert!(!res.verdicts[1].correct);
        assert_eq!(res.verdicts[1].error_category, ErrorCategory::Ambiguity);
    }

    #[test]
    fn record_appends_validated_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("judgments.jsonl");
        record_judgment(&path, &j("p1", QaMode::Agnostic, true, ErrorCategory::None, "a")).unwrap();
        record_judgment(&path, &j("p1", QaMode::Rulebook, false, ErrorCategory::WrongContext, "a")).unwrap();
        assert!(record_judgment(&path, &j("p1", QaMode::Agnostic, false, ErrorCategory::None, "a")).is_err());
        assert_eq!(load_judgments(&path).unwrap().len(), 2);
    }
}
