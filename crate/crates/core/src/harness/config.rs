//! Experiment configuration, loaded from TOML or JSON.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::dataset::DatasetPaths;
use crate::generator::{GenerationParams, ModelKind};
use crate::metrics::DEFAULT_F1_THRESHOLD;
use crate::planner::PlanConfig;
use crate::sql_exec::{ExecLimits, OracleConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Generate,
    Intrinsic,
    E2e,
    Sweep,
    Quality,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Generate => "generate",
            Mode::Intrinsic => "intrinsic",
            Mode::E2e => "e2e",
            Mode::Sweep => "sweep",
            Mode::Quality => "quality",
        }
    }
}

/// Sentence embedder used for the diversity metric.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderConfig {
    #[default]
    Tfidf,
    Http {
        url: String,
        model: String,
    },
}

/// Where completions come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Mock(PathBuf),
    Http(String),
}

impl BackendSpec {
    /// `mock:<path>` or an endpoint URL.
    pub fn parse(descriptor: &str) -> Result<Self, HarnessError> {
        if let Some(path) = descriptor.strip_prefix("mock:") {
            if path.is_empty() {
                return Err(HarnessError::Config(
                    "mock backend needs a fixture path".into(),
                ));
            }
            Ok(BackendSpec::Mock(PathBuf::from(path)))
        } else if descriptor.starts_with("http://") || descriptor.starts_with("https://") {
            Ok(BackendSpec::Http(descriptor.to_string()))
        } else {
            Err(HarnessError::Config(format!(
                "backend must be `mock:<path>` or an http(s) URL, got `{descriptor}`"
            )))
        }
    }

    pub fn describe(&self) -> String {
        match self {
            BackendSpec::Mock(p) => format!("mock:{}", p.display()),
            BackendSpec::Http(u) => u.clone(),
        }
    }
}

fn default_model() -> String {
    "default".into()
}

fn default_seed() -> u64 {
    0
}

fn default_in_flight() -> usize {
    4
}

fn default_threshold() -> f64 {
    DEFAULT_F1_THRESHOLD
}

fn default_generator() -> ModelKind {
    ModelKind::NonReasoning
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub dataset: DatasetPaths,
    /// `mock:<path>` or an endpoint URL.
    pub backend: String,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_generator")]
    pub generator: ModelKind,
    #[serde(default)]
    pub gen_params: GenerationParams,
    #[serde(default)]
    pub plan: PlanConfig,
    /// Discriminator budgets for `sweep`.
    #[serde(default)]
    pub budgets: Vec<u32>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Draw this many examples per difficulty tier; all examples when absent.
    #[serde(default)]
    pub sample_per_tier: Option<usize>,
    /// Candidate artifact read by `intrinsic` and `sweep`.
    #[serde(default)]
    pub candidates_path: Option<PathBuf>,
    /// Run records read by `quality`.
    #[serde(default)]
    pub records_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub exec_limits: ExecLimits,
    #[serde(default = "default_threshold")]
    pub f1_threshold: f64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub embedder: EmbedderConfig,
}

/// Snapshot written next to a run; loading one replays the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub harness_version: String,
    pub template_version: String,
    pub templates: std::collections::BTreeMap<String, String>,
    pub config: ExperimentConfig,
    #[serde(default)]
    pub started_at_unix: u64,
    #[serde(default)]
    pub finished_at_unix: u64,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl ExperimentConfig {
    /// Reads a `.toml` or `.json` config, or a `config.snapshot` of an
    /// earlier run. Relative paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let is_toml = path.extension().is_some_and(|e| e == "toml");
        let mut config: ExperimentConfig = if is_toml {
            toml::from_str(&text)
                .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?
        } else {
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
            let inner = match value.get("config") {
                Some(c) if value.get("harness_version").is_some() => c.clone(),
                _ => value,
            };
            serde_json::from_value(inner)
                .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.dataset.examples);
        resolve(base, &mut self.dataset.tables);
        resolve(base, &mut self.dataset.db_root);
        if let Some(d) = &mut self.dataset.difficulty {
            resolve(base, d);
        }
        for p in [&mut self.candidates_path, &mut self.records_path]
            .into_iter()
            .flatten()
        {
            resolve(base, p);
        }
        resolve(base, &mut self.output_dir);
        if let Some(path) = self.backend.strip_prefix("mock:") {
            let mut p = PathBuf::from(path);
            resolve(base, &mut p);
            self.backend = format!("mock:{}", p.display());
        }
    }

    pub fn backend_spec(&self) -> Result<BackendSpec, HarnessError> {
        BackendSpec::parse(&self.backend)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        self.plan
            .discriminator
            .validate()
            .map_err(HarnessError::Config)?;
        if self.mode == Mode::Sweep {
            if self.budgets.is_empty() {
                return bad("sweep needs a non-empty budget list".into());
            }
            if self.budgets.windows(2).any(|w| w[0] >= w[1]) {
                return bad("sweep budgets must be strictly increasing".into());
            }
            if self.budgets[0] == 0 {
                return bad("budgets must be positive".into());
            }
        }
        if matches!(self.mode, Mode::Intrinsic | Mode::Sweep) && self.candidates_path.is_none() {
            return bad(format!(
                "{} mode needs `candidates_path`",
                self.mode.as_str()
            ));
        }
        if self.mode == Mode::Quality && self.records_path.is_none() {
            return bad("quality mode needs `records_path`".into());
        }
        if self.gen_params.n_samples == 0 {
            return bad("gen_params.n_samples must be >= 1".into());
        }
        if self.oracle.k == 0 {
            return bad("oracle.k must be >= 1".into());
        }
        if !(self.oracle.threshold > 0.0 && self.oracle.threshold <= 1.0) {
            return bad("oracle.threshold must lie in (0, 1]".into());
        }
        if !(self.f1_threshold > 0.0 && self.f1_threshold < 1.0) {
            return bad("f1_threshold must lie in (0, 1)".into());
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be >= 1".into());
        }
        self.backend_spec().map(|_| ())
    }

    /// Short label for report rows, e.g. `reasoning/naive/soft/no-schema`.
    pub fn label(&self) -> String {
        let d = &self.plan.discriminator;
        format!(
            "{}/{}/{}/{}",
            d.kind.as_str(),
            if self.plan.executability_check {
                "exec-check"
            } else {
                "naive"
            },
            d.scoring.as_str(),
            if d.schema_in_prompt {
                "schema"
            } else {
                "no-schema"
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOML: &str = r#"
mode = "sweep"
backend = "mock:fixtures/mock.jsonl"
output_dir = "runs/out"
budgets = [256, 512]
candidates_path = "cands.jsonl"

[dataset]
examples = "dev.json"
tables = "tables.json"
db_root = "database"

[plan]
executability_check = true

[plan.discriminator]
kind = "reasoning"
scoring = "binary"
"#;

    #[test]
    fn loads_toml_with_defaults_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        fs::write(&path, TOML).unwrap();
        let c = ExperimentConfig::load(&path).unwrap();
        assert_eq!(c.mode, Mode::Sweep);
        assert_eq!(c.dataset.examples, dir.path().join("dev.json"));
        assert_eq!(
            c.backend,
            format!("mock:{}", dir.path().join("fixtures/mock.jsonl").display())
        );
        assert_eq!(c.gen_params.n_samples, 5);
        assert_eq!(c.plan.discriminator.max_new_tokens, 512);
        assert_eq!(
            c.oracle,
            OracleConfig {
                k: 5,
                threshold: 1.0
            }
        );
        assert_eq!(c.max_in_flight, 4);
        assert_eq!(c.label(), "reasoning/exec-check/binary/no-schema");
        c.validate().unwrap();
    }

    #[test]
    fn validation_rules() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        fs::write(&path, TOML).unwrap();
        let base = ExperimentConfig::load(&path).unwrap();

        let mut c = base.clone();
        c.budgets = vec![512, 256];
        assert!(c.validate().is_err());
        c.budgets.clear();
        assert!(c.validate().is_err());

        let mut c = base.clone();
        c.plan.discriminator.kind = ModelKind::NonReasoning;
        assert!(c.validate().is_err());

        let mut c = base.clone();
        c.backend = "ftp://x".into();
        assert!(c.validate().is_err());

        let mut c = base;
        c.candidates_path = None;
        assert!(c.validate().is_err());
    }

    #[test]
    fn backend_descriptors() {
        assert_eq!(
            BackendSpec::parse("mock:a.json").unwrap(),
            BackendSpec::Mock("a.json".into())
        );
        assert_eq!(
            BackendSpec::parse("http://localhost:8000/v1").unwrap(),
            BackendSpec::Http("http://localhost:8000/v1".into())
        );
        assert!(BackendSpec::parse("mock:").is_err());
    }
}
