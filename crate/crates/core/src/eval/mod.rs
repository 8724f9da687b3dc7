//! Gold datasets, transcript runs over every mode, human judgments and the
//! accuracy reports built from them.

mod dataset;
mod judge;
mod report;
mod run;

use thiserror::Error;

pub use dataset::{load_dataset, parse_dataset, render_dataset, save_dataset, GoldPair};
pub use judge::{
    load_judgments, parse_judgments, record_judgment, render_judgments, resolve, ErrorCategory, Judgment,
    Resolution, Verdict, FAILURE_CATEGORIES, FINAL_JUDGE,
};
pub use report::{
    attainable, build_report, check_expectations, compute_accuracy, compute_delta, consistent_denominators,
    distribution_from_counts, error_distribution, reconcile, render_report, Accuracy, CategoryShare, Delta,
    ErrorDistribution, Mismatch, MismatchKind, ModeReport, Percent, Report, ReportFormat, Selection, Subset,
};
pub use run::{
    load_transcript, parse_transcript, render_transcript, run_eval, save_transcript, HitRef, StageFailure,
    TranscriptRecord,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset line {line}: {message}")]
    Dataset { line: usize, message: String },
    #[error("transcript line {line}: {message}")]
    Transcript { line: usize, message: String },
    #[error("judgment line {line}: {message}")]
    Judgment { line: usize, message: String },
    #[error("no judgments match the selection")]
    EmptySelection,
    #[error("no incorrect answers to distribute")]
    NoFailures,
    #[error("mode {0} is not in the report")]
    MissingMode(&'static str),
    #[error("{correct} correct out of {total} is impossible")]
    InvalidCount { correct: u64, total: u64 },
    #[error("'{0}' is not a percentage with at most two decimals")]
    BadPercent(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
