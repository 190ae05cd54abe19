//! Intrinsic ranking, end-to-end and reasoning-quality metrics. Percentages
//! are in `[0, 100]`; metrics undefined on empty input are `None`.

pub mod execution;
pub mod matching;
pub mod quality;
pub mod ranking;

pub use execution::{
    execution_accuracy_report, prediction_correct, ExecutionAccuracy, TierAccuracy,
};
pub use matching::{
    decompose, exact_match, exact_match_accuracy, partial_match, ClauseComponents, PartialMatch,
};
pub use quality::{
    aggregate_quality, embedding_diversity, one_minus_ttr, repeated_ngrams, repetition_ratio,
    segment_sentences, sentence_entropy, trace_quality, ReasoningQualityReport, SentenceEmbedder,
    TfidfEmbedder, TraceQuality,
};
pub use ranking::{
    failure_rate, hit_at_1, intrinsic_report, macro_f1, mrr, pairwise_accuracy, IntrinsicReport,
    LabeledBatch, LabeledScore, DEFAULT_F1_THRESHOLD,
};

use serde::{Deserialize, Serialize};

/// End-to-end generation quality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndToEndReport<R = f64> {
    pub execution: ExecutionAccuracy<R>,
    pub exact_match: Option<R>,
    pub partial: PartialMatch<R>,
    /// Examples for which no candidate was eligible.
    pub no_choice: usize,
}
