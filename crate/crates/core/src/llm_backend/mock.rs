//! Fixture-replaying backend.
//!
//! A fixture file is a JSON array (or JSON lines) of records:
//!
//! ```json
//! {"match": {"exact_prompt_sha256": "<hex>"} | {"regex": "<pattern>"},
//!  "response_text": "...",
//!  "token_texts": ["..."], "token_logprobs": [-0.1],
//!  "token_top_logprobs": [[[" true", -0.02], [" false", -4.0]]],
//!  "finish_reason": "stop" | "length",
//!  "verdict_logprobs": {"true": -0.02, "false": -4.0},
//!  "next_token_logprobs": {"Yes": -0.1, "No": -2.4}}
//! ```
//!
//! Only `match` and `response_text` are required. Without `token_texts` the
//! response is split by [`tokenize_text`] with log-probability 0.
//! `verdict_logprobs` annotates every `true`/`false` token with the given
//! log-probabilities and the alternative as its top-k entry.
//!
//! Lookup uses exact prompt hashes first, then regex rules in file order.
//! When several records match, sample `i` of a request replays match
//! `i % matches`. Replies never depend on call history.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{
    prompt_sha256, BackendError, ChoiceLogprobs, Completion, CompletionRequest, FinishReason,
    LlmBackend, TokenLogprob,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureMatch {
    ExactPromptSha256(String),
    Regex(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRecord {
    #[serde(rename = "match")]
    pub matcher: FixtureMatch,
    pub response_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_texts: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_top_logprobs: Option<Vec<Vec<(String, f64)>>>,
    #[serde(default)]
    pub finish_reason: FinishReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict_logprobs: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_token_logprobs: Option<BTreeMap<String, f64>>,
}

impl FixtureRecord {
    pub fn regex(pattern: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            matcher: FixtureMatch::Regex(pattern.into()),
            response_text: response.into(),
            token_texts: None,
            token_logprobs: None,
            token_top_logprobs: None,
            finish_reason: FinishReason::Stop,
            verdict_logprobs: None,
            next_token_logprobs: None,
        }
    }

    pub fn exact(prompt: &str, response: impl Into<String>) -> Self {
        Self {
            matcher: FixtureMatch::ExactPromptSha256(prompt_sha256(prompt)),
            ..Self::regex("", response)
        }
    }

    pub fn with_verdict_logprobs(mut self, lp_true: f64, lp_false: f64) -> Self {
        self.verdict_logprobs = Some(BTreeMap::from([
            ("true".to_string(), lp_true),
            ("false".to_string(), lp_false),
        ]));
        self
    }

    pub fn with_next_token_logprobs(mut self, pairs: &[(&str, f64)]) -> Self {
        self.next_token_logprobs = Some(pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect());
        self
    }

    fn tokens(&self) -> Result<Vec<TokenLogprob>, BackendError> {
        let texts = match &self.token_texts {
            Some(t) => t.clone(),
            None => tokenize_text(&self.response_text),
        };
        if texts.concat() != self.response_text {
            return Err(BackendError::Fixture(
                "token_texts do not concatenate to response_text".into(),
            ));
        }
        let logprobs = match &self.token_logprobs {
            Some(lp) if lp.len() != texts.len() => {
                return Err(BackendError::Fixture(format!(
                    "{} token_logprobs for {} tokens",
                    lp.len(),
                    texts.len()
                )))
            }
            Some(lp) => lp.clone(),
            None => vec![0.0; texts.len()],
        };
        if let Some(bad) = logprobs.iter().find(|lp| lp.is_nan() || **lp > 0.0) {
            return Err(BackendError::Fixture(format!("positive logprob {bad}")));
        }
        let mut tops = match &self.token_top_logprobs {
            Some(t) if t.len() != texts.len() => {
                return Err(BackendError::Fixture(
                    "token_top_logprobs length differs from token count".into(),
                ))
            }
            Some(t) => t.clone(),
            None => vec![Vec::new(); texts.len()],
        };
        let mut logprobs = logprobs;
        if let Some(verdicts) = &self.verdict_logprobs {
            for (i, text) in texts.iter().enumerate() {
                let word = normalize_literal(text);
                if let Some(&lp) = verdicts.get(&word) {
                    logprobs[i] = lp;
                    let lead: String = text.chars().take_while(|c| c.is_whitespace()).collect();
                    let mut alts: Vec<(String, f64)> = verdicts
                        .iter()
                        .map(|(k, v)| (format!("{lead}{k}"), *v))
                        .collect();
                    alts.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                    tops[i] = alts;
                }
            }
        }
        Ok(texts
            .into_iter()
            .zip(logprobs)
            .zip(tops)
            .map(|((text, logprob), top)| TokenLogprob { text, logprob, top })
            .collect())
    }
}

fn normalize_literal(token: &str) -> String {
    token
        .trim()
        .trim_matches(|c| c == '"' || c == '\'')
        .to_ascii_lowercase()
}

/// Deterministic stand-in tokenizer: each token is optional leading
/// whitespace followed by a word or a single punctuation character; trailing
/// whitespace forms its own token. Concatenating the tokens gives back the
/// input exactly.
pub fn tokenize_text(text: &str) -> Vec<String> {
    use std::sync::OnceLock;
    static TOKEN: OnceLock<Regex> = OnceLock::new();
    let re = TOKEN.get_or_init(|| Regex::new(r"\s*(?:\w+|[^\w\s])|\s+").unwrap());
    re.find_iter(text).map(|m| m.as_str().to_string()).collect()
}

#[derive(Debug)]
struct CompiledRecord {
    record: FixtureRecord,
    regex: Option<Regex>,
    tokens: Vec<TokenLogprob>,
}

/// Deterministic fixture-replaying backend.
#[derive(Debug)]
pub struct MockBackend {
    source: String,
    records: Vec<CompiledRecord>,
}

impl MockBackend {
    pub fn new(records: Vec<FixtureRecord>) -> Result<Self, BackendError> {
        Self::with_source("inline", records)
    }

    fn with_source(source: &str, records: Vec<FixtureRecord>) -> Result<Self, BackendError> {
        let records = records
            .into_iter()
            .enumerate()
            .map(|(i, record)| {
                let regex = match &record.matcher {
                    FixtureMatch::Regex(p) => Some(
                        Regex::new(p)
                            .map_err(|e| BackendError::Fixture(format!("record {i}: {e}")))?,
                    ),
                    FixtureMatch::ExactPromptSha256(_) => None,
                };
                let tokens = record
                    .tokens()
                    .map_err(|e| BackendError::Fixture(format!("record {i}: {e}")))?;
                Ok(CompiledRecord {
                    record,
                    regex,
                    tokens,
                })
            })
            .collect::<Result<Vec<_>, BackendError>>()?;
        Ok(Self {
            source: source.to_string(),
            records,
        })
    }

    /// Loads a fixture file (JSON array or JSON lines).
    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text = fs::read_to_string(path)
            .map_err(|e| BackendError::Fixture(format!("{}: {e}", path.display())))?;
        let records = parse_fixture_text(&text)
            .map_err(|e| BackendError::Fixture(format!("{}: {e}", path.display())))?;
        Self::with_source(&path.display().to_string(), records)
    }

    pub fn source_path(&self) -> PathBuf {
        PathBuf::from(&self.source)
    }

    fn matches<'a>(&'a self, prompt: &str) -> Vec<&'a CompiledRecord> {
        let hash = prompt_sha256(prompt);
        let exact: Vec<_> = self
            .records
            .iter()
            .filter(
                |r| matches!(&r.record.matcher, FixtureMatch::ExactPromptSha256(h) if *h == hash),
            )
            .collect();
        if !exact.is_empty() {
            return exact;
        }
        self.records
            .iter()
            .filter(|r| r.regex.as_ref().is_some_and(|re| re.is_match(prompt)))
            .collect()
    }

    fn replay(record: &CompiledRecord, request: &CompletionRequest) -> Completion {
        let mut tokens = record.tokens.clone();
        let mut finish = record.record.finish_reason;

        // Cut at the earliest stop sequence, excluding the stop text itself.
        let full: String = tokens.iter().map(|t| t.text.as_str()).collect();
        let cut = request
            .stop_sequences
            .iter()
            .filter(|s| !s.is_empty())
            .filter_map(|s| full.find(s.as_str()))
            .min();
        if let Some(cut) = cut {
            let mut kept = Vec::new();
            let mut offset = 0;
            for mut t in tokens {
                if offset >= cut {
                    break;
                }
                let end = offset + t.text.len();
                if end > cut {
                    t.text.truncate(cut - offset);
                }
                offset = end;
                kept.push(t);
            }
            tokens = kept;
            finish = FinishReason::Stop;
        }

        let budget = request.max_new_tokens as usize;
        if tokens.len() > budget {
            tokens.truncate(budget);
            finish = FinishReason::Length;
        }
        Completion {
            text: tokens.iter().map(|t| t.text.as_str()).collect(),
            tokens,
            finish_reason: finish,
            error: None,
        }
    }
}

pub(crate) fn parse_fixture_text(text: &str) -> Result<Vec<FixtureRecord>, String> {
    if text.trim_start().starts_with('[') {
        serde_json::from_str(text).map_err(|e| e.to_string())
    } else {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", n + 1)))
            .collect()
    }
}

impl LlmBackend for MockBackend {
    fn complete(&self, request: &CompletionRequest) -> Vec<Completion> {
        let n = request.n_samples.max(1) as usize;
        if let Err(e) = request.validate() {
            return vec![Completion::backend_error(e.to_string()); n];
        }
        let matches = self.matches(&request.prompt);
        if matches.is_empty() {
            let err = BackendError::NoFixture(prompt_sha256(&request.prompt));
            return vec![Completion::backend_error(err.to_string()); n];
        }
        (0..n)
            .map(|i| Self::replay(matches[i % matches.len()], request))
            .collect()
    }

    fn choice_logprobs(
        &self,
        prompt: &str,
        candidates: &[&str],
    ) -> Result<ChoiceLogprobs, BackendError> {
        let record = self
            .matches(prompt)
            .into_iter()
            .find_map(|r| r.record.next_token_logprobs.as_ref())
            .ok_or_else(|| BackendError::NoFixture(prompt_sha256(prompt)))?;
        Ok(ChoiceLogprobs::from_lookup(candidates, |c| {
            record.get(c).copied()
        }))
    }

    fn describe(&self) -> String {
        format!("mock:{}", self.source)
    }
}
