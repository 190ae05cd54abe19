//! Experiment orchestration and run persistence.
//!
//! Every run writes a directory with a closed set of files:
//!
//! * `config.snapshot` — resolved configuration, prompt templates, harness
//!   version and wall-clock timestamps (JSON; loadable as a config);
//! * `records.jsonl` — one line per example, sorted by example id;
//! * `report.json` — aggregate metrics;
//! * `report.csv` — the same metrics as a flat table.
//!
//! A run that fails while writing leaves an `INVALID` marker instead.
//! `report.json` and `records.jsonl` contain no timestamps or paths, so
//! mock-backend runs reproduce them byte for byte.

mod config;
mod modes;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use thiserror::Error;

pub use config::{BackendSpec, ConfigSnapshot, EmbedderConfig, ExperimentConfig, Mode};
pub use modes::{
    load_candidates, run_budget_sweep, run_end_to_end, run_generate, run_intrinsic, run_quality,
    select_examples, EndToEndRecord, EndToEndRunReport, GenerateRunReport, IntrinsicRecord,
    IntrinsicRunReport, QualityRow, QualityRunReport, SweepRow, SweepRunReport,
};

use crate::dataset::DatasetError;
use crate::llm_backend::{BackendError, HttpBackend, HttpEmbedder, LlmBackend, MockBackend};
use crate::metrics::{SentenceEmbedder, TfidfEmbedder};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("backend error: {0}")]
    Backend(#[from] BackendError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Records {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("candidate file not found: {0}")]
    MissingCandidates(PathBuf),
    #[error("candidate file has no records: {0}")]
    EmptyCandidates(PathBuf),
    #[error("failed to write run directory {path}: {message}")]
    Persist { path: PathBuf, message: String },
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub const INVALID_MARKER: &str = "INVALID";
pub const RUN_FILES: [&str; 4] = [
    "config.snapshot",
    "records.jsonl",
    "report.json",
    "report.csv",
];

/// A flat report table.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ReportTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ReportTable {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Two-decimal cell; empty when undefined.
pub(crate) fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_default()
}

/// Everything persisted for one run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub snapshot: ConfigSnapshot,
    /// One JSON document per example, already in id order.
    pub records: Vec<serde_json::Value>,
    pub report: serde_json::Value,
    pub table: ReportTable,
}

/// A typed report together with its persistable record.
#[derive(Debug, Clone)]
pub struct RunOutput<T> {
    pub report: T,
    pub record: RunRecord,
}

pub(crate) fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

pub(crate) fn snapshot(config: &ExperimentConfig, started_at_unix: u64) -> ConfigSnapshot {
    ConfigSnapshot {
        harness_version: env!("CARGO_PKG_VERSION").to_string(),
        template_version: crate::prompts::TEMPLATE_VERSION.to_string(),
        templates: crate::prompts::snapshot(),
        config: config.clone(),
        started_at_unix,
        finished_at_unix: unix_now(),
    }
}

pub(crate) fn to_values<T: Serialize>(items: &[T]) -> Vec<serde_json::Value> {
    items
        .iter()
        .map(|i| serde_json::to_value(i).expect("records serialize"))
        .collect()
}

fn pretty<T: Serialize>(value: &T) -> Result<String, String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    s.push('\n');
    Ok(s)
}

fn write_run_files(record: &RunRecord, dir: &Path) -> Result<(), String> {
    let write = |name: &str, body: String| {
        fs::write(dir.join(name), body).map_err(|e| format!("{name}: {e}"))
    };
    write("config.snapshot", pretty(&record.snapshot)?)?;
    let mut lines = String::new();
    for r in &record.records {
        lines.push_str(&serde_json::to_string(r).map_err(|e| e.to_string())?);
        lines.push('\n');
    }
    write("records.jsonl", lines)?;
    write("report.json", pretty(&record.report)?)?;
    write(
        "report.csv",
        record.table.to_csv().map_err(|e| e.to_string())?,
    )?;
    Ok(())
}

/// Writes the run directory. On failure the directory is marked with an
/// `INVALID` file holding the error.
pub fn persist_run(record: &RunRecord, output_dir: &Path) -> Result<PathBuf, HarnessError> {
    let fail = |message: String| {
        let _ = fs::write(output_dir.join(INVALID_MARKER), format!("{message}\n"));
        HarnessError::Persist {
            path: output_dir.to_path_buf(),
            message,
        }
    };
    fs::create_dir_all(output_dir).map_err(|e| HarnessError::Persist {
        path: output_dir.to_path_buf(),
        message: e.to_string(),
    })?;
    // Mark first so an interrupted write is never mistaken for a complete run.
    fs::write(output_dir.join(INVALID_MARKER), "write in progress\n")
        .map_err(|e| fail(e.to_string()))?;
    write_run_files(record, output_dir).map_err(fail)?;
    fs::remove_file(output_dir.join(INVALID_MARKER)).map_err(|e| fail(e.to_string()))?;
    Ok(output_dir.to_path_buf())
}

pub fn open_backend(config: &ExperimentConfig) -> Result<Box<dyn LlmBackend>, HarnessError> {
    Ok(match config.backend_spec()? {
        BackendSpec::Mock(path) => Box::new(MockBackend::from_file(&path)?),
        BackendSpec::Http(url) => Box::new(HttpBackend::new(&url, config.model.clone())),
    })
}

pub fn open_embedder(config: &ExperimentConfig) -> Box<dyn SentenceEmbedder<f64>> {
    match &config.embedder {
        EmbedderConfig::Tfidf => Box::new(TfidfEmbedder),
        EmbedderConfig::Http { url, model } => Box::new(HttpEmbedder::new(url, model.clone())),
    }
}

/// Runs the configured mode against its backend and persists the result.
/// Returns the run directory and the aggregate report.
pub fn run(config: &ExperimentConfig) -> Result<(PathBuf, serde_json::Value), HarnessError> {
    config.validate()?;
    let record = match config.mode {
        Mode::Quality => run_quality(config)?.record,
        mode => {
            let backend = open_backend(config)?;
            log::info!("{} run against {}", mode.as_str(), backend.describe());
            match mode {
                Mode::Generate => run_generate(config, backend.as_ref())?.record,
                Mode::Intrinsic => run_intrinsic(config, backend.as_ref())?.record,
                Mode::E2e => run_end_to_end(config, backend.as_ref())?.record,
                Mode::Sweep => run_budget_sweep(config, backend.as_ref())?.record,
                Mode::Quality => unreachable!(),
            }
        }
    };
    let dir = persist_run(&record, &config.output_dir)?;
    Ok((dir, record.report))
}
