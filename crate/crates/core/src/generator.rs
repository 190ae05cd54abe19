//! Candidate generation: prompt construction, sampling and SQL extraction.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dataset::{format_schema_context, DbSchema, TaskExample};
use crate::llm_backend::{CompletionRequest, LlmBackend};
use crate::prompts::Template;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Reasoning,
    NonReasoning,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Reasoning => "reasoning",
            ModelKind::NonReasoning => "non_reasoning",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSql {
    pub raw_output: String,
    pub extracted_sql: Option<String>,
    pub extraction_ok: bool,
}

impl CandidateSql {
    pub fn from_output(raw_output: impl Into<String>, kind: ModelKind) -> Self {
        let raw_output = raw_output.into();
        let (extracted_sql, extraction_ok) = extract_sql(&raw_output, kind);
        Self {
            raw_output,
            extracted_sql,
            extraction_ok,
        }
    }

    /// Candidate whose backend call failed.
    pub fn failed() -> Self {
        Self {
            raw_output: String::new(),
            extracted_sql: None,
            extraction_ok: false,
        }
    }

    /// The SQL text when extraction succeeded.
    pub fn sql(&self) -> Option<&str> {
        self.extracted_sql.as_deref().filter(|_| self.extraction_ok)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateBatch {
    pub example_id: String,
    pub candidates: Vec<CandidateSql>,
}

/// Sampling settings for the generator role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub n_samples: u32,
    pub temperature: f64,
    /// New-token budget for non-reasoning generators.
    pub max_new_tokens: u32,
    /// New-token budget for reasoning generators, which must finish
    /// thinking before they answer.
    pub reasoning_max_new_tokens: u32,
    pub stop_sequences: Vec<String>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            n_samples: 5,
            temperature: 0.2,
            max_new_tokens: 300,
            reasoning_max_new_tokens: 1024,
            stop_sequences: Vec::new(),
        }
    }
}

impl GenerationParams {
    /// Single-sample generation without re-ranking.
    pub fn greedy() -> Self {
        Self {
            n_samples: 1,
            ..Self::default()
        }
    }

    pub fn budget_for(&self, kind: ModelKind) -> u32 {
        match kind {
            ModelKind::Reasoning => self.reasoning_max_new_tokens,
            ModelKind::NonReasoning => self.max_new_tokens,
        }
    }

    pub fn request(&self, prompt: String, kind: ModelKind) -> CompletionRequest {
        CompletionRequest {
            prompt,
            max_new_tokens: self.budget_for(kind),
            temperature: self.temperature,
            n_samples: self.n_samples,
            stop_sequences: self.stop_sequences.clone(),
        }
    }
}

pub fn build_generation_prompt(
    example: &TaskExample,
    schema: &DbSchema,
    kind: ModelKind,
) -> String {
    let schema_text = format_schema_context(schema);
    match kind {
        ModelKind::NonReasoning => Template::GenerateNonReasoning.render(&[
            ("db_id", &example.db_id),
            ("schema", &schema_text),
            ("question", &example.question),
        ]),
        ModelKind::Reasoning => Template::GenerateReasoning
            .render(&[("schema", &schema_text), ("question", &example.question)]),
    }
}

pub fn generate_candidates(
    backend: &dyn LlmBackend,
    example: &TaskExample,
    schema: &DbSchema,
    kind: ModelKind,
    params: &GenerationParams,
) -> CandidateBatch {
    let request = params.request(build_generation_prompt(example, schema, kind), kind);
    let mut completions = backend.complete(&request);
    completions.resize_with(request.n_samples as usize, || {
        crate::llm_backend::Completion::backend_error("missing sample")
    });
    let candidates = completions
        .into_iter()
        .map(|c| {
            if c.is_error() {
                CandidateSql::failed()
            } else {
                CandidateSql::from_output(c.text, kind)
            }
        })
        .collect();
    CandidateBatch {
        example_id: example.id.clone(),
        candidates,
    }
}

const THINK_CLOSE: &str = "</think>";
const FENCE: &str = "```";

/// True when `sql` begins with the SELECT keyword (case-insensitive).
pub fn starts_with_select(sql: &str) -> bool {
    let t = sql.trim_start();
    t.len() >= 6
        && t[..6].eq_ignore_ascii_case("select")
        && !t[6..]
            .chars()
            .next()
            .is_some_and(|c| c.is_alphanumeric() || c == '_')
}

fn mentions_select(text: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bselect\b").unwrap())
        .is_match(text)
}

fn blank_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\n[ \t\r]*\n").unwrap())
}

/// Byte offset just past the first `;` outside quoted text.
pub(crate) fn statement_end(text: &str) -> Option<usize> {
    let mut quote: Option<char> = None;
    for (i, c) in text.char_indices() {
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) => {}
            None if matches!(c, '\'' | '"' | '`') => quote = Some(c),
            None if c == ';' => return Some(i + 1),
            None => {}
        }
    }
    None
}

/// Drops blank lines, keeps the first statement, trims.
fn finish_statement(text: &str) -> Option<String> {
    let joined = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .collect::<Vec<_>>()
        .join("\n");
    let cut = statement_end(&joined).unwrap_or(joined.len());
    let sql = joined[..cut].trim();
    (!sql.is_empty()).then(|| sql.to_string())
}

/// Content of the last complete fenced code block in `text`.
fn last_fenced_block(text: &str) -> Option<&str> {
    let mut last = None;
    let mut rest = text;
    let mut base = 0;
    while let Some(open) = rest.find(FENCE) {
        let after_open = open + FENCE.len();
        // The info string (e.g. `sql`) runs to the end of the opening line.
        let body_start = match rest[after_open..].find('\n') {
            Some(nl) => after_open + nl + 1,
            None => break,
        };
        let Some(close) = rest[body_start..].find(FENCE) else {
            break;
        };
        last = Some(&text[base + body_start..base + body_start + close]);
        let consumed = body_start + close + FENCE.len();
        base += consumed;
        rest = &rest[consumed..];
    }
    last
}

/// Last line-initial SELECT statement. Statements end at `;` or a blank line;
/// within one statement the first line-initial SELECT starts it, so nested
/// subqueries on their own lines stay inside their parent.
fn last_line_initial_select(text: &str) -> Option<String> {
    let mut found = None;
    for block in blank_line().split(text) {
        let mut rest = block;
        while !rest.trim().is_empty() {
            let end = statement_end(rest).unwrap_or(rest.len());
            let segment = &rest[..end];
            let mut offset = 0;
            for line in segment.split_inclusive('\n') {
                if starts_with_select(line) {
                    found = finish_statement(&segment[offset..]);
                    break;
                }
                offset += line.len();
            }
            rest = &rest[end..];
        }
    }
    found
}

/// Extracts the SQL answer from a raw generation.
///
/// Reasoning outputs: the last fenced code block after `</think>` (the whole
/// text when no closing tag is present), else the last line-initial SELECT
/// statement there. Non-reasoning outputs: the leading text up to the first
/// `;` (inclusive) or blank line. Returns the SQL (if any) and whether it
/// starts with SELECT.
pub fn extract_sql(raw_output: &str, kind: ModelKind) -> (Option<String>, bool) {
    if !mentions_select(raw_output) {
        return (None, false);
    }
    let sql = match kind {
        ModelKind::Reasoning => {
            let answer = match raw_output.rfind(THINK_CLOSE) {
                Some(i) => &raw_output[i + THINK_CLOSE.len()..],
                None => raw_output,
            };
            match last_fenced_block(answer) {
                Some(block) => finish_statement(block),
                None => last_line_initial_select(answer),
            }
        }
        ModelKind::NonReasoning => {
            let mut text = raw_output.trim_start();
            if text.starts_with(FENCE) {
                text = text.find('\n').map_or("", |nl| &text[nl + 1..]);
            }
            let blank = blank_line().find(text).map(|m| m.start());
            let semi = statement_end(text);
            let end = match (semi, blank) {
                (Some(s), Some(b)) => s.min(b),
                (Some(s), None) => s,
                (None, Some(b)) => b,
                (None, None) => text.len(),
            };
            finish_statement(&text[..end].replace(FENCE, ""))
        }
    };
    let ok = sql.as_deref().is_some_and(starts_with_select);
    (sql, ok)
}
