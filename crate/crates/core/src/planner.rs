//! Re-ranking: score each sampled candidate, optionally keep only the
//! executable ones, and return the best.

use std::cmp::Ordering;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{DbSchema, TaskExample};
use crate::discriminator::{
    discriminate, Discrimination, DiscriminationScore, DiscriminatorConfig,
};
use crate::generator::{
    generate_candidates, CandidateBatch, CandidateSql, GenerationParams, ModelKind,
};
use crate::llm_backend::{BackendError, LlmBackend};
use crate::scalar::Real;
use crate::sql_exec::{is_executable, ExecLimits};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanConfig {
    #[serde(default)]
    pub executability_check: bool,
    #[serde(default)]
    pub discriminator: DiscriminatorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry<R = f64> {
    /// Position in the generated batch.
    pub original_index: usize,
    pub candidate: CandidateSql,
    pub score: DiscriminationScore<R>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub executable: Option<bool>,
    pub eligible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedBatch<R = f64> {
    pub example_id: String,
    /// Score-descending; ties keep generation order.
    pub entries: Vec<RankedEntry<R>>,
    pub chosen_index: Option<usize>,
}

impl<R: Real> RankedBatch<R> {
    pub fn chosen(&self) -> Option<&RankedEntry<R>> {
        self.chosen_index.map(|i| &self.entries[i])
    }

    pub fn chosen_sql(&self) -> Option<&str> {
        self.chosen().and_then(|e| e.candidate.sql())
    }
}

fn descending<R: Real>(a: &R, b: &R) -> Ordering {
    b.partial_cmp(a).unwrap_or(Ordering::Equal)
}

/// Sorts candidates by score and picks the highest-scoring eligible one.
/// `executable` is attached to entries when provided.
pub fn rerank<R: Real>(
    batch: &CandidateBatch,
    scores: &[DiscriminationScore<R>],
    eligibility: &[bool],
    executable: Option<&[bool]>,
) -> RankedBatch<R> {
    assert_eq!(
        batch.candidates.len(),
        scores.len(),
        "scores misaligned with batch"
    );
    assert_eq!(
        batch.candidates.len(),
        eligibility.len(),
        "eligibility misaligned with batch"
    );
    let mut entries: Vec<RankedEntry<R>> = batch
        .candidates
        .iter()
        .enumerate()
        .map(|(i, c)| RankedEntry {
            original_index: i,
            candidate: c.clone(),
            score: scores[i],
            executable: executable.map(|e| e[i]),
            eligible: eligibility[i],
        })
        .collect();
    entries.sort_by(|a, b| descending(&a.score.value, &b.score.value));
    let chosen_index = entries.iter().position(|e| e.eligible);
    RankedBatch {
        example_id: batch.example_id.clone(),
        entries,
        chosen_index,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutcome {
    pub final_sql: Option<String>,
    pub batch: RankedBatch,
    /// One per candidate, in generation order.
    pub discriminations: Vec<Discrimination>,
    pub discriminator_calls: usize,
}

/// Scores an already generated batch under `config`.
pub fn plan_batch(
    backend: &dyn LlmBackend,
    question: &str,
    batch: &CandidateBatch,
    schema: &DbSchema,
    db_path: &Path,
    config: &PlanConfig,
    limits: &ExecLimits,
) -> Result<PlanOutcome, BackendError> {
    let executable: Option<Vec<bool>> = config.executability_check.then(|| {
        batch
            .candidates
            .par_iter()
            .map(|c| is_executable(db_path, c.sql(), limits))
            .collect()
    });
    let eligibility: Vec<bool> = match &executable {
        Some(flags) => flags.clone(),
        // A candidate without extracted SQL has nothing to return.
        None => batch.candidates.iter().map(|c| c.extraction_ok).collect(),
    };
    let discriminations = batch
        .candidates
        .par_iter()
        .zip(eligibility.par_iter())
        .map(|(c, &eligible)| {
            if eligible {
                discriminate(backend, question, c, Some(schema), &config.discriminator)
            } else {
                Ok(Discrimination::skipped())
            }
        })
        .collect::<Result<Vec<_>, BackendError>>()?;
    let scores: Vec<DiscriminationScore> = discriminations.iter().map(|d| d.score).collect();
    let ranked = rerank(batch, &scores, &eligibility, executable.as_deref());
    Ok(PlanOutcome {
        final_sql: ranked.chosen_sql().map(str::to_string),
        discriminator_calls: discriminations.iter().filter(|d| d.called).count(),
        batch: ranked,
        discriminations,
    })
}

/// Generates candidates for one example and re-ranks them.
#[allow(clippy::too_many_arguments)]
pub fn plan_example(
    backend: &dyn LlmBackend,
    example: &TaskExample,
    schema: &DbSchema,
    db_path: &Path,
    config: &PlanConfig,
    generator_kind: ModelKind,
    gen_params: &GenerationParams,
    limits: &ExecLimits,
) -> Result<PlanOutcome, BackendError> {
    let batch = generate_candidates(backend, example, schema, generator_kind, gen_params);
    plan_batch(
        backend,
        &example.question,
        &batch,
        schema,
        db_path,
        config,
        limits,
    )
}
