//! The five experiment modes.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    cell, open_embedder, snapshot, to_values, unix_now, ExperimentConfig, HarnessError,
    ReportTable, RunOutput, RunRecord,
};
use crate::dataset::{compare_ids, sample_balanced, Dataset, Difficulty, TaskExample};
use crate::discriminator::Discrimination;
use crate::generator::{build_generation_prompt, generate_candidates, CandidateBatch, ModelKind};
use crate::llm_backend::LlmBackend;
use crate::metrics::matching::{component_counts, ComponentCounts};
use crate::metrics::{
    aggregate_quality, exact_match, exact_match_accuracy, execution_accuracy_report,
    intrinsic_report, partial_match, prediction_correct, trace_quality, LabeledBatch,
    SentenceEmbedder, TraceQuality,
};
use crate::planner::{plan_batch, plan_example, PlanConfig};
use crate::sql_exec::{execute, label_outcomes, OracleLabel};
use crate::{EndToEnd, Intrinsic, Quality, Ranked, Score};

const INTRINSIC_COLUMNS: [&str; 10] = [
    "pw_acc",
    "f1",
    "hit_at_1",
    "mrr",
    "fail_rate",
    "repetition_ratio",
    "one_minus_ttr",
    "repeated_ngrams",
    "entropy",
    "diversity",
];

fn pool(config: &ExperimentConfig) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(config.max_in_flight)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))
}

/// The evaluation examples: a balanced per-tier sample when configured,
/// otherwise every example. Sorted by id.
pub fn select_examples(
    config: &ExperimentConfig,
    dataset: &Dataset,
) -> Result<Vec<TaskExample>, HarnessError> {
    let mut examples = match config.sample_per_tier {
        Some(n) => sample_balanced(&dataset.examples, n, config.seed)?,
        None => dataset.examples.clone(),
    };
    examples.sort_by(|a, b| compare_ids(&a.id, &b.id));
    Ok(examples)
}

/// Reads a candidate artifact: one `CandidateBatch` per line.
pub fn load_candidates(path: &Path) -> Result<Vec<CandidateBatch>, HarnessError> {
    if !path.is_file() {
        return Err(HarnessError::MissingCandidates(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let mut batches = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let batch: CandidateBatch =
            serde_json::from_str(line).map_err(|e| HarnessError::Records {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        batches.push(batch);
    }
    if batches.is_empty() {
        return Err(HarnessError::EmptyCandidates(path.to_path_buf()));
    }
    batches.sort_by(|a, b| compare_ids(&a.example_id, &b.example_id));
    if let Some(w) = batches
        .windows(2)
        .find(|w| w[0].example_id == w[1].example_id)
    {
        return Err(HarnessError::Records {
            path: path.to_path_buf(),
            line: 0,
            message: format!("duplicate example id {}", w[0].example_id),
        });
    }
    Ok(batches)
}

fn quality_cells(q: Option<&Quality>) -> [String; 5] {
    let get = |f: fn(&Quality) -> Option<f64>| cell(q.and_then(f));
    [
        get(|q| q.repetition_ratio),
        get(|q| q.one_minus_ttr),
        get(|q| q.repeated_ngrams),
        get(|q| q.entropy),
        get(|q| q.diversity),
    ]
}

fn intrinsic_cells(r: &Intrinsic, q: Option<&Quality>) -> Vec<String> {
    let mut row = vec![
        cell(r.pw_acc),
        cell(r.macro_f1),
        cell(r.hit_at_1),
        cell(r.mrr),
        cell(r.fail_rate),
    ];
    row.extend(quality_cells(q));
    row
}

fn quality_of(
    traces: &[&str],
    embedder: &dyn SentenceEmbedder<f64>,
) -> (Vec<TraceQuality>, Option<Quality>) {
    if traces.is_empty() {
        return (Vec::new(), None);
    }
    let per_trace: Vec<TraceQuality> = traces
        .par_iter()
        .map(|t| trace_quality(t, embedder))
        .collect();
    let report = aggregate_quality(&per_trace);
    (per_trace, Some(report))
}

fn reasoning_traces(discriminations: &[Discrimination]) -> impl Iterator<Item = &str> {
    discriminations
        .iter()
        .filter(|d| d.called)
        .filter_map(|d| d.parse.as_ref().map(|p| p.reasoning_text.as_str()))
}

// ---------------------------------------------------------------- generate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRunReport {
    pub mode: String,
    pub generator: ModelKind,
    pub examples: usize,
    pub candidates: usize,
    pub extraction_failures: usize,
    pub extraction_failure_rate: Option<f64>,
}

/// Samples candidates for every selected example. The records form the
/// candidate artifact consumed by `intrinsic` and `sweep`.
pub fn run_generate(
    config: &ExperimentConfig,
    backend: &dyn LlmBackend,
) -> Result<RunOutput<GenerateRunReport>, HarnessError> {
    let started = unix_now();
    let dataset = Dataset::open(&config.dataset)?;
    let examples = select_examples(config, &dataset)?;
    let batches: Vec<CandidateBatch> = pool(config)?.install(|| {
        examples
            .par_iter()
            .map(|e| {
                generate_candidates(
                    backend,
                    e,
                    dataset.schema(e),
                    config.generator,
                    &config.gen_params,
                )
            })
            .collect()
    });
    let candidates: usize = batches.iter().map(|b| b.candidates.len()).sum();
    let failures = batches
        .iter()
        .flat_map(|b| &b.candidates)
        .filter(|c| !c.extraction_ok)
        .count();
    let report = GenerateRunReport {
        mode: "generate".into(),
        generator: config.generator,
        examples: batches.len(),
        candidates,
        extraction_failures: failures,
        extraction_failure_rate: crate::scalar::percent(failures, candidates),
    };
    let mut table = ReportTable::new(&[
        "generator",
        "examples",
        "candidates",
        "extraction_failure_rate",
    ]);
    table.rows.push(vec![
        config.generator.as_str().into(),
        report.examples.to_string(),
        report.candidates.to_string(),
        cell(report.extraction_failure_rate),
    ]);
    Ok(RunOutput {
        record: RunRecord {
            snapshot: snapshot(config, started),
            records: to_values(&batches),
            report: serde_json::to_value(&report).expect("report serializes"),
            table,
        },
        report,
    })
}

// --------------------------------------------------------------- intrinsic

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicRecord {
    pub example_id: String,
    pub db_id: String,
    pub difficulty: Difficulty,
    pub gold_sql: String,
    /// Oracle labels in generation order.
    pub oracle: Vec<OracleLabel>,
    pub ranked: Ranked,
    /// One per candidate in generation order.
    pub discriminations: Vec<Discrimination>,
    pub discriminator_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicRunReport {
    pub mode: String,
    pub configuration: String,
    pub max_new_tokens: u32,
    pub examples: usize,
    pub candidates: usize,
    pub oracle_correct: usize,
    pub discriminator_calls: usize,
    pub intrinsic: Intrinsic,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<Quality>,
}

struct Labeled<'a> {
    example: &'a TaskExample,
    batch: &'a CandidateBatch,
    oracle: Vec<OracleLabel>,
}

fn label_candidates<'a>(
    config: &ExperimentConfig,
    dataset: &'a Dataset,
    batches: &'a [CandidateBatch],
) -> Result<Vec<Labeled<'a>>, HarnessError> {
    batches
        .par_iter()
        .map(|batch| {
            let example = dataset.find(&batch.example_id).ok_or_else(|| {
                HarnessError::Config(format!(
                    "candidate example {} not in dataset",
                    batch.example_id
                ))
            })?;
            let db = dataset.db_path(example);
            let gold = execute(&db, &example.gold_sql, &config.exec_limits);
            if !gold.is_ok() {
                log::warn!("gold query of example {} does not execute", example.id);
            }
            let oracle = batch
                .candidates
                .iter()
                .map(|c| match c.sql() {
                    Some(sql) => label_outcomes(
                        &execute(&db, sql, &config.exec_limits),
                        &gold,
                        &config.oracle,
                    ),
                    None => OracleLabel {
                        correct: false,
                        overlap: 0.0,
                    },
                })
                .collect();
            Ok(Labeled {
                example,
                batch,
                oracle,
            })
        })
        .collect()
}

fn intrinsic_pass(
    config: &ExperimentConfig,
    plan: &PlanConfig,
    dataset: &Dataset,
    labeled: &[Labeled],
    backend: &dyn LlmBackend,
    embedder: &dyn SentenceEmbedder<f64>,
) -> Result<(IntrinsicRunReport, Vec<IntrinsicRecord>), HarnessError> {
    let records = labeled
        .par_iter()
        .map(|l| {
            let outcome = plan_batch(
                backend,
                &l.example.question,
                l.batch,
                dataset.schema(l.example),
                &dataset.db_path(l.example),
                plan,
                &config.exec_limits,
            )?;
            Ok(IntrinsicRecord {
                example_id: l.example.id.clone(),
                db_id: l.example.db_id.clone(),
                difficulty: l.example.difficulty,
                gold_sql: l.example.gold_sql.clone(),
                oracle: l.oracle.clone(),
                ranked: outcome.batch,
                discriminations: outcome.discriminations,
                discriminator_calls: outcome.discriminator_calls,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;

    let labeled_batches: Vec<LabeledBatch> = records
        .iter()
        .map(|r| {
            let flags: Vec<bool> = r.oracle.iter().map(|o| o.correct).collect();
            LabeledBatch::from_ranked(&r.ranked, &flags)
        })
        .collect();
    let called: Vec<Score> = records
        .iter()
        .flat_map(|r| {
            r.discriminations
                .iter()
                .filter(|d| d.called)
                .map(|d| d.score)
        })
        .collect();
    let intrinsic = intrinsic_report(&labeled_batches, &called, config.f1_threshold);
    let traces: Vec<&str> = records
        .iter()
        .flat_map(|r| reasoning_traces(&r.discriminations))
        .collect();
    let quality = match plan.discriminator.kind {
        ModelKind::Reasoning => quality_of(&traces, embedder).1,
        ModelKind::NonReasoning => None,
    };
    let report = IntrinsicRunReport {
        mode: "intrinsic".into(),
        configuration: config.label(),
        max_new_tokens: plan.discriminator.max_new_tokens,
        examples: records.len(),
        candidates: records.iter().map(|r| r.oracle.len()).sum(),
        oracle_correct: records
            .iter()
            .flat_map(|r| &r.oracle)
            .filter(|o| o.correct)
            .count(),
        discriminator_calls: records.iter().map(|r| r.discriminator_calls).sum(),
        intrinsic,
        quality,
    };
    Ok((report, records))
}

fn intrinsic_inputs(
    config: &ExperimentConfig,
) -> Result<(Dataset, Vec<CandidateBatch>), HarnessError> {
    let path = config
        .candidates_path
        .as_deref()
        .ok_or_else(|| HarnessError::Config("`candidates_path` is required".into()))?;
    let batches = load_candidates(path)?;
    let dataset = Dataset::open(&config.dataset)?;
    Ok((dataset, batches))
}

/// Oracle-labels pre-generated candidates and scores them with the
/// configured discriminator.
pub fn run_intrinsic(
    config: &ExperimentConfig,
    backend: &dyn LlmBackend,
) -> Result<RunOutput<IntrinsicRunReport>, HarnessError> {
    let started = unix_now();
    let (dataset, batches) = intrinsic_inputs(config)?;
    let embedder = open_embedder(config);
    let (report, records) = pool(config)?.install(|| {
        let labeled = label_candidates(config, &dataset, &batches)?;
        intrinsic_pass(
            config,
            &config.plan,
            &dataset,
            &labeled,
            backend,
            embedder.as_ref(),
        )
    })?;
    let mut header = vec!["configuration"];
    header.extend(INTRINSIC_COLUMNS);
    let mut table = ReportTable::new(&header);
    let mut row = vec![report.configuration.clone()];
    row.extend(intrinsic_cells(&report.intrinsic, report.quality.as_ref()));
    table.rows.push(row);
    Ok(RunOutput {
        record: RunRecord {
            snapshot: snapshot(config, started),
            records: to_values(&records),
            report: serde_json::to_value(&report).expect("report serializes"),
            table,
        },
        report,
    })
}

// ------------------------------------------------------------------- sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub max_new_tokens: u32,
    pub discriminator_calls: usize,
    pub intrinsic: Intrinsic,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<Quality>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRunReport {
    pub mode: String,
    pub configuration: String,
    pub examples: usize,
    pub candidates: usize,
    pub oracle_correct: usize,
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SweepRecordRun {
    max_new_tokens: u32,
    record: IntrinsicRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SweepRecord {
    example_id: String,
    runs: Vec<SweepRecordRun>,
}

/// Repeats the intrinsic evaluation once per discriminator token budget.
pub fn run_budget_sweep(
    config: &ExperimentConfig,
    backend: &dyn LlmBackend,
) -> Result<RunOutput<SweepRunReport>, HarnessError> {
    let started = unix_now();
    if config.budgets.is_empty() {
        return Err(HarnessError::Config(
            "sweep needs a non-empty budget list".into(),
        ));
    }
    let (dataset, batches) = intrinsic_inputs(config)?;
    let embedder = open_embedder(config);
    let passes = pool(config)?.install(|| {
        let labeled = label_candidates(config, &dataset, &batches)?;
        config
            .budgets
            .iter()
            .map(|&budget| {
                let mut plan = config.plan.clone();
                plan.discriminator.max_new_tokens = budget;
                intrinsic_pass(
                    config,
                    &plan,
                    &dataset,
                    &labeled,
                    backend,
                    embedder.as_ref(),
                )
            })
            .collect::<Result<Vec<_>, HarnessError>>()
    })?;

    let first = &passes[0].0;
    let report = SweepRunReport {
        mode: "sweep".into(),
        configuration: config.label(),
        examples: first.examples,
        candidates: first.candidates,
        oracle_correct: first.oracle_correct,
        rows: passes
            .iter()
            .map(|(r, _)| SweepRow {
                max_new_tokens: r.max_new_tokens,
                discriminator_calls: r.discriminator_calls,
                intrinsic: r.intrinsic,
                quality: r.quality,
            })
            .collect(),
    };
    let records: Vec<SweepRecord> = (0..first.examples)
        .map(|i| SweepRecord {
            example_id: passes[0].1[i].example_id.clone(),
            runs: passes
                .iter()
                .map(|(r, recs)| SweepRecordRun {
                    max_new_tokens: r.max_new_tokens,
                    record: recs[i].clone(),
                })
                .collect(),
        })
        .collect();

    let mut header = vec!["max_new_tokens"];
    header.extend(INTRINSIC_COLUMNS);
    let mut table = ReportTable::new(&header);
    for row in &report.rows {
        let mut cells = vec![row.max_new_tokens.to_string()];
        cells.extend(intrinsic_cells(&row.intrinsic, row.quality.as_ref()));
        table.rows.push(cells);
    }
    Ok(RunOutput {
        record: RunRecord {
            snapshot: snapshot(config, started),
            records: to_values(&records),
            report: serde_json::to_value(&report).expect("report serializes"),
            table,
        },
        report,
    })
}

// --------------------------------------------------------------------- e2e

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndToEndRecord {
    pub example_id: String,
    pub db_id: String,
    pub difficulty: Difficulty,
    pub gold_sql: String,
    pub generation_prompt: String,
    pub final_sql: Option<String>,
    pub execution_correct: bool,
    pub exact_match: bool,
    pub components: ComponentCounts,
    pub ranked: Ranked,
    pub discriminations: Vec<Discrimination>,
    pub discriminator_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndToEndRunReport {
    pub mode: String,
    pub configuration: String,
    pub examples: usize,
    pub discriminator_calls: usize,
    pub end_to_end: EndToEnd,
}

/// Generates, re-ranks and executes a query for every selected example.
pub fn run_end_to_end(
    config: &ExperimentConfig,
    backend: &dyn LlmBackend,
) -> Result<RunOutput<EndToEndRunReport>, HarnessError> {
    let started = unix_now();
    let dataset = Dataset::open(&config.dataset)?;
    let examples = select_examples(config, &dataset)?;
    let records = pool(config)?.install(|| {
        examples
            .par_iter()
            .map(|e| {
                let schema = dataset.schema(e);
                let db = dataset.db_path(e);
                let outcome = plan_example(
                    backend,
                    e,
                    schema,
                    &db,
                    &config.plan,
                    config.generator,
                    &config.gen_params,
                    &config.exec_limits,
                )?;
                let final_sql = outcome.final_sql;
                Ok(EndToEndRecord {
                    example_id: e.id.clone(),
                    db_id: e.db_id.clone(),
                    difficulty: e.difficulty,
                    gold_sql: e.gold_sql.clone(),
                    generation_prompt: build_generation_prompt(e, schema, config.generator),
                    execution_correct: prediction_correct(
                        &db,
                        final_sql.as_deref(),
                        &e.gold_sql,
                        &config.exec_limits,
                    ),
                    exact_match: final_sql
                        .as_deref()
                        .is_some_and(|p| exact_match(p, &e.gold_sql)),
                    components: component_counts(final_sql.as_deref(), &e.gold_sql),
                    final_sql,
                    ranked: outcome.batch,
                    discriminations: outcome.discriminations,
                    discriminator_calls: outcome.discriminator_calls,
                })
            })
            .collect::<Result<Vec<_>, HarnessError>>()
    })?;

    let flags: Vec<(Difficulty, bool)> = records
        .iter()
        .map(|r| (r.difficulty, r.execution_correct))
        .collect();
    let preds: Vec<Option<&str>> = records.iter().map(|r| r.final_sql.as_deref()).collect();
    let golds: Vec<&str> = records.iter().map(|r| r.gold_sql.as_str()).collect();
    let end_to_end = EndToEnd {
        execution: execution_accuracy_report(&flags),
        exact_match: exact_match_accuracy(&preds, &golds),
        partial: partial_match(&preds, &golds),
        no_choice: records.iter().filter(|r| r.final_sql.is_none()).count(),
    };
    let report = EndToEndRunReport {
        mode: "e2e".into(),
        configuration: config.label(),
        examples: records.len(),
        discriminator_calls: records.iter().map(|r| r.discriminator_calls).sum(),
        end_to_end,
    };

    let mut table = ReportTable::new(&[
        "configuration",
        "easy",
        "medium",
        "hard",
        "extra",
        "all",
        "exact_match",
        "partial_acc",
        "partial_recall",
        "partial_f1",
    ]);
    let e = &report.end_to_end;
    let mut row = vec![report.configuration.clone()];
    row.extend(
        Difficulty::ALL
            .iter()
            .map(|&t| cell(e.execution.tier(t).accuracy)),
    );
    row.push(cell(e.execution.overall));
    row.push(cell(e.exact_match));
    row.extend([e.partial.acc, e.partial.recall, e.partial.f1].map(|v| cell(Some(v))));
    table.rows.push(row);
    Ok(RunOutput {
        record: RunRecord {
            snapshot: snapshot(config, started),
            records: to_values(&records),
            report: serde_json::to_value(&report).expect("report serializes"),
            table,
        },
        report,
    })
}

// ----------------------------------------------------------------- quality

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityRow {
    /// `all`, or the token budget for sweep records.
    pub group: String,
    pub quality: Quality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityRunReport {
    pub mode: String,
    pub rows: Vec<QualityRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct QualityRecord {
    example_id: String,
    groups: Vec<(String, Vec<TraceQuality>)>,
}

fn traces_in(record: &Value) -> Vec<String> {
    record
        .get("discriminations")
        .and_then(Value::as_array)
        .map(|ds| {
            ds.iter()
                .filter(|d| d.get("called").and_then(Value::as_bool).unwrap_or(false))
                .filter_map(|d| d.pointer("/parse/reasoning_text").and_then(Value::as_str))
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default()
}

/// Per-group traces of one record line: sweep records contribute one group
/// per budget, other records a single `all` group.
fn grouped_traces(line: &Value) -> Vec<(String, Vec<String>)> {
    match line.get("runs").and_then(Value::as_array) {
        Some(runs) => runs
            .iter()
            .map(|r| {
                let budget = r.get("max_new_tokens").and_then(Value::as_u64).unwrap_or(0);
                let traces = r.get("record").map(traces_in).unwrap_or_default();
                (budget.to_string(), traces)
            })
            .collect(),
        None => vec![("all".to_string(), traces_in(line))],
    }
}

/// Reasoning-quality metrics over the traces stored in an earlier run's
/// `records.jsonl`.
pub fn run_quality(config: &ExperimentConfig) -> Result<RunOutput<QualityRunReport>, HarnessError> {
    let started = unix_now();
    let path = config
        .records_path
        .as_deref()
        .ok_or_else(|| HarnessError::Config("`records_path` is required".into()))?;
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let mut lines = Vec::new();
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let v: Value = serde_json::from_str(line).map_err(|e| HarnessError::Records {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let id = v
            .get("example_id")
            .and_then(Value::as_str)
            .ok_or_else(|| HarnessError::Records {
                path: path.to_path_buf(),
                line: i + 1,
                message: "record without `example_id`".into(),
            })?
            .to_string();
        lines.push((id, grouped_traces(&v)));
    }
    lines.sort_by(|a, b| compare_ids(&a.0, &b.0));
    let embedder = open_embedder(config);

    let records: Vec<QualityRecord> = pool(config)?.install(|| {
        lines
            .par_iter()
            .map(|(id, groups)| QualityRecord {
                example_id: id.clone(),
                groups: groups
                    .iter()
                    .map(|(g, traces)| {
                        let refs: Vec<&str> = traces.iter().map(String::as_str).collect();
                        (g.clone(), quality_of(&refs, embedder.as_ref()).0)
                    })
                    .collect(),
            })
            .collect()
    });

    let mut group_names: Vec<String> = Vec::new();
    for r in &records {
        for (g, _) in &r.groups {
            if !group_names.contains(g) {
                group_names.push(g.clone());
            }
        }
    }
    let rows: Vec<QualityRow> = group_names
        .iter()
        .map(|g| {
            let per_trace: Vec<TraceQuality> = records
                .iter()
                .flat_map(|r| r.groups.iter().filter(|(name, _)| name == g))
                .flat_map(|(_, q)| q.iter().copied())
                .collect();
            QualityRow {
                group: g.clone(),
                quality: aggregate_quality(&per_trace),
            }
        })
        .collect();
    let report = QualityRunReport {
        mode: "quality".into(),
        rows,
    };
    let mut table = ReportTable::new(&[
        "group",
        "traces",
        "repetition_ratio",
        "one_minus_ttr",
        "repeated_ngrams",
        "entropy",
        "diversity",
    ]);
    for row in &report.rows {
        let mut cells = vec![row.group.clone(), row.quality.traces.to_string()];
        cells.extend(quality_cells(Some(&row.quality)));
        table.rows.push(cells);
    }
    Ok(RunOutput {
        record: RunRecord {
            snapshot: snapshot(config, started),
            records: to_values(&records),
            report: serde_json::to_value(&report).expect("report serializes"),
            table,
        },
        report,
    })
}
