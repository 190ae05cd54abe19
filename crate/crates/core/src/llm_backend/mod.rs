//! Completion backend boundary.
//!
//! Models sit behind [`LlmBackend`]: either an OpenAI-compatible completions
//! server ([`HttpBackend`]) or a fixture-replaying [`MockBackend`]. Both report
//! per-token log-probabilities and the top alternatives at each position,
//! which is what the discriminator needs for soft scoring.

mod http;
mod mock;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use http::{HttpBackend, HttpEmbedder, API_KEY_ENV};
pub use mock::{tokenize_text, FixtureMatch, FixtureRecord, MockBackend};

/// Log-probability assigned to a candidate the backend did not report.
pub const FLOOR_LOGPROB: f64 = -100.0;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum BackendError {
    #[error("backend cannot report log-probabilities: {0}; use the mock backend or a server that returns `logprobs`")]
    Capability(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed backend reply: {0}")]
    Malformed(String),
    #[error("no fixture matches prompt (sha256 {0})")]
    NoFixture(String),
    #[error("fixture error: {0}")]
    Fixture(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl BackendError {
    /// Capability errors are configuration mistakes and abort a run; the
    /// rest are per-call failures.
    pub fn is_capability(&self) -> bool {
        matches!(self, BackendError::Capability(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_new_tokens: u32,
    pub temperature: f64,
    pub n_samples: u32,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>, max_new_tokens: u32) -> Self {
        Self {
            prompt: prompt.into(),
            max_new_tokens,
            temperature: 0.0,
            n_samples: 1,
            stop_sequences: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_new_tokens < 1 {
            return Err(BackendError::InvalidRequest(
                "max_new_tokens must be >= 1".into(),
            ));
        }
        if self.n_samples < 1 {
            return Err(BackendError::InvalidRequest(
                "n_samples must be >= 1".into(),
            ));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(BackendError::InvalidRequest(
                "temperature must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    #[default]
    Stop,
    Length,
    BackendError,
}

/// One generated token with its log-probability and the backend's top
/// alternatives at the same position (possibly empty).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub text: String,
    pub logprob: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub top: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub tokens: Vec<TokenLogprob>,
    pub finish_reason: FinishReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Completion {
    pub fn backend_error(message: impl Into<String>) -> Self {
        Self {
            text: String::new(),
            tokens: Vec::new(),
            finish_reason: FinishReason::BackendError,
            error: Some(message.into()),
        }
    }

    pub fn is_error(&self) -> bool {
        self.finish_reason == FinishReason::BackendError
    }
}

/// Next-token log-probabilities of a fixed set of candidate strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceLogprobs {
    pub candidates: BTreeMap<String, f64>,
}

impl ChoiceLogprobs {
    /// Builds the map for `candidates`, flooring any the lookup cannot find.
    pub fn from_lookup(candidates: &[&str], lookup: impl Fn(&str) -> Option<f64>) -> Self {
        Self {
            candidates: candidates
                .iter()
                .map(|c| (c.to_string(), lookup(c).unwrap_or(FLOOR_LOGPROB)))
                .collect(),
        }
    }

    pub fn get(&self, candidate: &str) -> f64 {
        self.candidates
            .get(candidate)
            .copied()
            .unwrap_or(FLOOR_LOGPROB)
    }
}

/// A completion server. Implementations must be callable from several
/// worker threads at once.
pub trait LlmBackend: Send + Sync {
    /// Samples `request.n_samples` completions. Failures are reported as
    /// completions with [`FinishReason::BackendError`], never as panics.
    fn complete(&self, request: &CompletionRequest) -> Vec<Completion>;

    /// Log-probability of each candidate as the next token after `prompt`.
    /// Multi-token candidates are scored by their first token.
    fn choice_logprobs(
        &self,
        prompt: &str,
        candidates: &[&str],
    ) -> Result<ChoiceLogprobs, BackendError>;

    /// Short human-readable description, recorded in run metadata.
    fn describe(&self) -> String;
}

impl<B: LlmBackend + ?Sized> LlmBackend for std::sync::Arc<B> {
    fn complete(&self, request: &CompletionRequest) -> Vec<Completion> {
        (**self).complete(request)
    }

    fn choice_logprobs(
        &self,
        prompt: &str,
        candidates: &[&str],
    ) -> Result<ChoiceLogprobs, BackendError> {
        (**self).choice_logprobs(prompt, candidates)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

/// Hex sha256 of a prompt, the exact-match fixture key.
pub fn prompt_sha256(prompt: &str) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_validation() {
        assert!(CompletionRequest::new("p", 1).validate().is_ok());
        assert!(CompletionRequest::new("p", 0).validate().is_err());
        let mut r = CompletionRequest::new("p", 5);
        r.n_samples = 0;
        assert!(r.validate().is_err());
        r.n_samples = 1;
        r.temperature = -0.1;
        assert!(r.validate().is_err());
    }

    #[test]
    fn floor_for_unknown_choice() {
        let c = ChoiceLogprobs::from_lookup(&["Yes", "No"], |s| (s == "Yes").then_some(-0.2));
        assert_eq!(c.get("Yes"), -0.2);
        assert_eq!(c.get("No"), FLOOR_LOGPROB);
    }
}
