//! Inter-rater agreement statistics.
//!
//! Percentage of disagreement, per-item k-score, Fleiss' kappa and the
//! outcome-pattern breakdown with optional soft-label filtering. Every
//! statistic is generic over [`Scalar`](crate::Scalar) so the same code runs
//! in `f64` and in exact rationals.

mod matrix;
mod metrics;
mod patterns;
mod report;

pub use matrix::{label_counts, LabelIdx, RatingMatrix};
pub use metrics::{
    fleiss_kappa, k_score, k_score_row, kappa_from, percentage_of_disagreement,
    weighted_disagreement, FleissKappa,
};
pub use patterns::{
    classify_pattern, outcome_space_size, pattern_histogram, soft_filter, PatternOutcome,
    PatternSignature, SoftFiltered,
};
pub use report::{
    agreement_report, build_matrix, AgreementOptions, AgreementReport, AttributeAgreement,
    AttributeOptions, AnnotatorExports, DatasetAgreement, PatternRow,
    resolve_soft,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AgreementError {
    #[error("a rating matrix needs at least 2 raters, got {0}")]
    TooFewRaters(usize),
    #[error("label alphabet size {0} is out of range")]
    BadAlphabet(usize),
    #[error("label `{0}` is not in the alphabet")]
    UnknownLabel(String),
    #[error("row has {found} ratings, expected {expected}")]
    Arity { expected: usize, found: usize },
}
