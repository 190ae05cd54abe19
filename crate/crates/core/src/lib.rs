//! Generator–discriminator re-ranking for text-to-SQL.
//!
//! A generator samples candidate queries for a question; a discriminator
//! scores each candidate, either from the `Yes`/`No` next-token
//! probabilities of a plain model or from the log-probabilities of the final
//! `{"correct": ...}` verdict a reasoning model emits after thinking. The
//! planner returns the best-scoring (optionally executable) candidate, and
//! the harness measures ranking quality, execution accuracy and the
//! repetitiveness of reasoning traces.
//!
//! Scoring and metric code is generic over [`scalar::Real`]; the aliases
//! below fix the pipeline's scalar to `f64`.

pub mod dataset;
pub mod discriminator;
pub mod generator;
pub mod harness;
pub mod llm_backend;
pub mod metrics;
pub mod planner;
pub mod prompts;
pub mod scalar;
pub mod sql_exec;

pub use scalar::Real;

pub type Score = discriminator::DiscriminationScore<f64>;
pub type Parse = discriminator::ReasoningParse<f64>;
pub type Ranked = planner::RankedBatch<f64>;
pub type Labeled = metrics::LabeledScore<f64>;
pub type Intrinsic = metrics::IntrinsicReport<f64>;
pub type EndToEnd = metrics::EndToEndReport<f64>;
pub type Quality = metrics::ReasoningQualityReport<f64>;
