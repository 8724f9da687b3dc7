use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::judge::{resolve, ErrorCategory, Judgment, Verdict, FAILURE_CATEGORIES};
use super::EvalError;
use crate::pipeline::{mode_name, QaMode, ALL_MODES};

/// A percentage held as integer hundredths, so 83.13% is `Percent(8313)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Percent(pub i64);

impl Percent {
    /// `100 * correct / total`, rounded half-up to two decimals.
    pub fn from_ratio(correct: u64, total: u64) -> Result<Self, EvalError> {
        if total == 0 {
            return Err(EvalError::EmptySelection);
        }
        if correct > total {
            return Err(EvalError::InvalidCount { correct, total });
        }
        let (c, n) = (u128::from(correct), u128::from(total));
        Ok(Self(((20_000 * c + n) / (2 * n)) as i64))
    }

    pub fn hundredths(self) -> i64 {
        self.0
    }

    /// Percentage-point difference `self - other`.
    pub fn minus(self, other: Percent) -> Percent {
        Percent(self.0 - other.0)
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl FromStr for Percent {
    type Err = EvalError;

    /// Accepts up to two decimals, with an optional sign and `%`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || EvalError::BadPercent(s.to_string());
        let t = s.trim().trim_end_matches('%');
        let (neg, t) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t),
        };
        let (int, frac) = t.split_once('.').unwrap_or((t, ""));
        if int.is_empty() || frac.len() > 2 || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let int: i64 = int.parse().map_err(|_| bad())?;
        let frac: i64 = format!("{frac:0<2}").parse().map_err(|_| bad())?;
        let v = int.checked_mul(100).and_then(|v| v.checked_add(frac)).ok_or_else(bad)?;
        Ok(Percent(if neg { -v } else { v }))
    }
}

impl Serialize for Percent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Percent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Percentage-point difference between two accuracies.
pub fn compute_delta(a: Percent, b: Percent) -> Percent {
    a.minus(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: u64,
    pub total: u64,
    pub percent: Percent,
}

impl Accuracy {
    pub fn new(correct: u64, total: u64) -> Result<Self, EvalError> {
        Ok(Self {
            correct,
            total,
            percent: Percent::from_ratio(correct, total)?,
        })
    }
}

impl fmt::Display for Accuracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}% ({}/{})", self.percent, self.correct, self.total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    Table,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub mode: QaMode,
    pub subset: Option<Subset>,
}

impl Selection {
    fn matches(&self, v: &Verdict) -> bool {
        v.mode == self.mode
            && match self.subset {
                None => true,
                Some(Subset::Table) => v.requires_table,
                Some(Subset::External) => v.requires_external,
            }
    }
}

pub fn compute_accuracy(verdicts: &[Verdict], selection: Selection) -> Result<Accuracy, EvalError> {
    let selected: Vec<_> = verdicts.iter().filter(|v| selection.matches(v)).collect();
    let correct = selected.iter().filter(|v| v.correct).count();
    Accuracy::new(correct as u64, selected.len() as u64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryShare {
    pub category: ErrorCategory,
    pub count: u64,
    pub percent: Percent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorDistribution {
    pub failures: u64,
    pub categories: Vec<CategoryShare>,
}

/// Share of each failure category among the incorrect answers of `mode`.
pub fn error_distribution(verdicts: &[Verdict], mode: QaMode) -> Result<ErrorDistribution, EvalError> {
    let failed: Vec<_> = verdicts.iter().filter(|v| v.mode == mode && !v.correct).collect();
    distribution_from_counts(
        &FAILURE_CATEGORIES
            .iter()
            .map(|&c| (c, failed.iter().filter(|v| v.error_category == c).count() as u64))
            .collect::<Vec<_>>(),
    )
}

pub fn distribution_from_counts(counts: &[(ErrorCategory, u64)]) -> Result<ErrorDistribution, EvalError> {
    let failures: u64 = counts.iter().map(|(_, n)| n).sum();
    if failures == 0 {
        return Err(EvalError::NoFailures);
    }
    let categories = counts
        .iter()
        .map(|&(category, count)| {
            Ok(CategoryShare {
                category,
                count,
                percent: Percent::from_ratio(count, failures)?,
            })
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(ErrorDistribution { failures, categories })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode: QaMode,
    pub accuracy: Accuracy,
    pub table: Option<Accuracy>,
    pub external: Option<Accuracy>,
    pub errors: Option<ErrorDistribution>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delta {
    pub from: QaMode,
    pub to: QaMode,
    pub points: Percent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub modes: Vec<ModeReport>,
    pub deltas: Vec<Delta>,
    /// Items judged by two or more judges, and how many had all agree.
    pub agreement: Option<Accuracy>,
    pub unresolved: usize,
}

impl Report {
    pub fn mode(&self, mode: QaMode) -> Option<&ModeReport> {
        self.modes.iter().find(|m| m.mode == mode)
    }

    /// Accuracy of `a` minus accuracy of `b`, in percentage points.
    pub fn delta(&self, a: QaMode, b: QaMode) -> Result<Percent, EvalError> {
        let get = |m: QaMode| {
            self.mode(m)
                .map(|r| r.accuracy.percent)
                .ok_or(EvalError::MissingMode(mode_name(m)))
        };
        Ok(compute_delta(get(a)?, get(b)?))
    }
}

/// Aggregates a judgment file. Pure: same judgments, same report.
pub fn build_report(judgments: &[Judgment]) -> Result<Report, EvalError> {
    let resolution = resolve(judgments);
    let verdicts = &resolution.verdicts;
    let mut modes = Vec::new();
    for mode in ALL_MODES {
        let Ok(accuracy) = compute_accuracy(verdicts, Selection { mode, subset: None }) else {
            continue;
        };
        let subset = |s| compute_accuracy(verdicts, Selection { mode, subset: Some(s) }).ok();
        modes.push(ModeReport {
            mode,
            accuracy,
            table: subset(Subset::Table),
            external: subset(Subset::External),
            errors: error_distribution(verdicts, mode).ok(),
        });
    }
    if modes.is_empty() {
        return Err(EvalError::EmptySelection);
    }
    let mut deltas = Vec::new();
    for (i, a) in modes.iter().enumerate() {
        for b in &modes[..i] {
            deltas.push(Delta {
                from: b.mode,
                to: a.mode,
                points: compute_delta(a.accuracy.percent, b.accuracy.percent),
            });
        }
    }
    let (agreeing, items) = resolution.agreement;
    Ok(Report {
        modes,
        deltas,
        agreement: (items > 0).then(|| Accuracy::new(agreeing as u64, items as u64)).transpose()?,
        unresolved: resolution.unresolved.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MismatchKind {
    /// Within a tenth of a point of the exact ratio: a different rounding.
    Rounding,
    Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub label: String,
    pub expected: Percent,
    pub computed: Accuracy,
    pub kind: MismatchKind,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            MismatchKind::Rounding => "rounding mismatch",
            MismatchKind::Value => "value mismatch",
        };
        write!(
            f,
            "{}: expected {}% but {}/{} = {}% ({kind})",
            self.label, self.expected, self.computed.correct, self.computed.total, self.computed.percent
        )
    }
}

/// Compares a claimed percentage with the one the counts produce.
pub fn reconcile(label: &str, expected: Percent, computed: Accuracy) -> Option<Mismatch> {
    if expected == computed.percent {
        return None;
    }
    // |expected - 100c/n| < 0.1 points, in hundredths: |e*n - 10000c| < 10n.
    let diff = (i128::from(expected.0) * i128::from(computed.total) - 10_000 * i128::from(computed.correct)).abs();
    let kind = if diff < 10 * i128::from(computed.total) {
        MismatchKind::Rounding
    } else {
        MismatchKind::Value
    };
    Some(Mismatch {
        label: label.to_string(),
        expected,
        computed,
        kind,
    })
}

/// Checks claimed per-mode accuracies against a report.
pub fn check_expectations(report: &Report, expected: &[(QaMode, Percent)]) -> Result<Vec<Mismatch>, EvalError> {
    expected
        .iter()
        .map(|&(mode, value)| {
            let m = report.mode(mode).ok_or(EvalError::MissingMode(mode_name(mode)))?;
            Ok(reconcile(mode_name(mode), value, m.accuracy))
        })
        .filter_map(Result::transpose)
        .collect()
}

/// Whether `percent` is `100*c/n` rounded half-up for some integer `c`.
pub fn attainable(percent: Percent, total: u64) -> bool {
    (0..=total).any(|c| Percent::from_ratio(c, total).is_ok_and(|p| p == percent))
}

/// Every denominator in `range` for which all `percents` are attainable.
pub fn consistent_denominators(percents: &[Percent], range: std::ops::RangeInclusive<u64>) -> Vec<u64> {
    range
        .filter(|&n| n > 0 && percents.iter().all(|&p| attainable(p, n)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format '{other}' (expected text or csv)")),
        }
    }
}

fn opt(a: &Option<Accuracy>) -> String {
    a.map_or_else(|| "n/a".to_string(), |a| a.to_string())
}

pub fn render_report(report: &Report, format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => render_text(report),
        ReportFormat::Csv => render_csv(report),
    }
}

fn render_text(report: &Report) -> String {
    let mut out = String::from("accuracy by mode\n");
    for m in &report.modes {
        out.push_str(&format!(
            "  {:<12} {}  tables: {}  external: {}\n",
            mode_name(m.mode),
            m.accuracy,
            opt(&m.table),
            opt(&m.external)
        ));
    }
    if !report.deltas.is_empty() {
        out.push_str("deltas (points)\n");
        for d in &report.deltas {
            out.push_str(&format!("  {} - {}: {}\n", mode_name(d.to), mode_name(d.from), d.points));
        }
    }
    for m in &report.modes {
        if let Some(dist) = &m.errors {
            out.push_str(&format!("errors for {} ({} incorrect)\n", mode_name(m.mode), dist.failures));
            for c in &dist.categories {
                out.push_str(&format!("  {:<16} {}% ({}/{})\n", c.category, c.percent, c.count, dist.failures));
            }
        }
    }
    if let Some(a) = &report.agreement {
        out.push_str(&format!("judge agreement: {a}\n"));
    }
    if report.unresolved > 0 {
        out.push_str(&format!("unresolved items: {}\n", report.unresolved));
    }
    out
}

fn render_csv(report: &Report) -> String {
    let mut out = String::from("section,mode,key,correct,total,percent\n");
    let acc = |out: &mut String, mode: QaMode, key: &str, a: &Accuracy| {
        out.push_str(&format!("accuracy,{},{key},{},{},{}\n", mode_name(mode), a.correct, a.total, a.percent));
    };
    for m in &report.modes {
        acc(&mut out, m.mode, "all", &m.accuracy);
        if let Some(a) = &m.table {
            acc(&mut out, m.mode, "table", a);
        }
        if let Some(a) = &m.external {
            acc(&mut out, m.mode, "external", a);
        }
    }
    for d in &report.deltas {
        out.push_str(&format!("delta,{},{},,,{}\n", mode_name(d.to), mode_name(d.from), d.points));
    }
    for m in &report.modes {
        if let Some(dist) = &m.errors {
            for c in &dist.categories {
                out.push_str(&format!(
                    "error,{},{},{},{},{}\n",
                    mode_name(m.mode),
                    c.category,
                    c.count,
                    dist.failures,
                    c.percent
                ));
            }
        }
    }
    if let Some(a) = &report.agreement {
        out.push_str(&format!("agreement,,judges,{},{},{}\n", a.correct, a.total, a.percent));
    }
    out
}
