//! OpenAI-compatible completions client.

use std::time::Duration;

use serde_json::{json, Value};
use ureq::Agent;

use super::{
    BackendError, ChoiceLogprobs, Completion, CompletionRequest, FinishReason, LlmBackend,
    TokenLogprob,
};
use crate::metrics::quality::{EmbedError, SentenceEmbedder};

/// Environment variable holding the bearer token for live endpoints.
pub const API_KEY_ENV: &str = "SQLRANK_API_KEY";

fn endpoint(base: &str, path: &str) -> String {
    let base = base.trim_end_matches('/');
    if base.ends_with(path) {
        base.to_string()
    } else {
        format!("{base}/{path}")
    }
}

fn agent(timeout: Duration) -> Agent {
    Agent::config_builder()
        .timeout_global(Some(timeout))
        .build()
        .into()
}

fn post_json(agent: &Agent, url: &str, body: &Value) -> Result<Value, BackendError> {
    let mut req = agent.post(url);
    if let Ok(key) = std::env::var(API_KEY_ENV) {
        if !key.is_empty() {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
    }
    let mut resp = req
        .send_json(body)
        .map_err(|e| BackendError::Transport(e.to_string()))?;
    resp.body_mut()
        .read_json::<Value>()
        .map_err(|e| BackendError::Malformed(e.to_string()))
}

/// Client for a `/completions` endpoint that supports `logprobs`.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    url: String,
    model: String,
    top_logprobs: u32,
    agent: Agent,
}

impl HttpBackend {
    pub fn new(base_url: &str, model: impl Into<String>) -> Self {
        Self {
            url: endpoint(base_url, "completions"),
            model: model.into(),
            top_logprobs: 5,
            agent: agent(Duration::from_secs(300)),
        }
    }

    pub fn with_top_logprobs(mut self, k: u32) -> Self {
        self.top_logprobs = k.max(1);
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.agent = agent(timeout);
        self
    }

    fn request_body(&self, request: &CompletionRequest) -> Value {
        let mut body = json!({
            "model": self.model,
            "prompt": request.prompt,
            "max_tokens": request.max_new_tokens,
            "temperature": request.temperature,
            "n": request.n_samples,
            "logprobs": self.top_logprobs,
        });
        if !request.stop_sequences.is_empty() {
            body["stop"] = json!(request.stop_sequences);
        }
        body
    }
}

/// Parses one `choices[i]` entry of a completions reply.
pub(crate) fn parse_choice(choice: &Value) -> Result<Completion, BackendError> {
    let text = choice
        .get("text")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Malformed("choice without `text`".into()))?;
    let finish_reason = match choice.get("finish_reason").and_then(Value::as_str) {
        Some("length") => FinishReason::Length,
        _ => FinishReason::Stop,
    };
    let logprobs = choice
        .get("logprobs")
        .filter(|v| !v.is_null())
        .ok_or_else(|| BackendError::Capability("reply carries no `logprobs`".into()))?;
    let tokens = logprobs
        .get("tokens")
        .and_then(Value::as_array)
        .ok_or_else(|| BackendError::Malformed("`logprobs.tokens` missing".into()))?;
    let lps = logprobs
        .get("token_logprobs")
        .and_then(Value::as_array)
        .ok_or_else(|| BackendError::Malformed("`logprobs.token_logprobs` missing".into()))?;
    if tokens.len() != lps.len() {
        return Err(BackendError::Malformed(
            "tokens and token_logprobs differ in length".into(),
        ));
    }
    let tops = logprobs.get("top_logprobs").and_then(Value::as_array);
    let tokens = tokens
        .iter()
        .zip(lps)
        .enumerate()
        .map(|(i, (tok, lp))| {
            let text = tok
                .as_str()
                .ok_or_else(|| BackendError::Malformed(format!("token {i} not a string")))?;
            // Some servers send null for the first token's logprob.
            let logprob = lp.as_f64().unwrap_or(0.0).min(0.0);
            let mut top: Vec<(String, f64)> = tops
                .and_then(|t| t.get(i))
                .and_then(Value::as_object)
                .map(|m| {
                    m.iter()
                        .filter_map(|(k, v)| v.as_f64().map(|lp| (k.clone(), lp.min(0.0))))
                        .collect()
                })
                .unwrap_or_default();
            top.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            Ok(TokenLogprob {
                text: text.to_string(),
                logprob,
                top,
            })
        })
        .collect::<Result<Vec<_>, BackendError>>()?;
    Ok(Completion {
        text: text.to_string(),
        tokens,
        finish_reason,
        error: None,
    })
}

/// Parses a full completions reply into `n` completions ordered by `index`.
pub(crate) fn parse_completions_reply(reply: &Value, n: usize) -> Vec<Completion> {
    let Some(choices) = reply.get("choices").and_then(Value::as_array) else {
        return vec![Completion::backend_error("reply without `choices`"); n];
    };
    let mut indexed: Vec<(u64, Completion)> = choices
        .iter()
        .enumerate()
        .map(|(pos, c)| {
            let idx = c.get("index").and_then(Value::as_u64).unwrap_or(pos as u64);
            let completion =
                parse_choice(c).unwrap_or_else(|e| Completion::backend_error(e.to_string()));
            (idx, completion)
        })
        .collect();
    indexed.sort_by_key(|(i, _)| *i);
    let mut out: Vec<Completion> = indexed.into_iter().map(|(_, c)| c).take(n).collect();
    while out.len() < n {
        out.push(Completion::backend_error(
            "backend returned fewer choices than requested",
        ));
    }
    out
}

impl LlmBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Vec<Completion> {
        let n = request.n_samples.max(1) as usize;
        if let Err(e) = request.validate() {
            return vec![Completion::backend_error(e.to_string()); n];
        }
        match post_json(&self.agent, &self.url, &self.request_body(request)) {
            Ok(reply) => parse_completions_reply(&reply, n),
            Err(e) => vec![Completion::backend_error(e.to_string()); n],
        }
    }

    fn choice_logprobs(
        &self,
        prompt: &str,
        candidates: &[&str],
    ) -> Result<ChoiceLogprobs, BackendError> {
        if candidates.is_empty() {
            return Err(BackendError::InvalidRequest("no candidates".into()));
        }
        let request = CompletionRequest::new(prompt, 1);
        let reply = post_json(&self.agent, &self.url, &self.request_body(&request))?;
        let choice = reply
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or_else(|| BackendError::Malformed("reply without choices".into()))?;
        let completion = parse_choice(choice)?;
        let first = completion
            .tokens
            .first()
            .ok_or_else(|| BackendError::Malformed("empty token list".into()))?;
        if first.top.is_empty() {
            return Err(BackendError::Capability(
                "reply carries no `top_logprobs`".into(),
            ));
        }
        Ok(ChoiceLogprobs::from_lookup(candidates, |c| {
            first
                .top
                .iter()
                .filter(|(tok, _)| tok.trim() == c)
                .map(|(_, lp)| *lp)
                .reduce(f64::max)
        }))
    }

    fn describe(&self) -> String {
        format!("{} (model {})", self.url, self.model)
    }
}

/// Client for an OpenAI-compatible `/embeddings` endpoint.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    url: String,
    model: String,
    agent: Agent,
}

impl HttpEmbedder {
    pub fn new(base_url: &str, model: impl Into<String>) -> Self {
        Self {
            url: endpoint(base_url, "embeddings"),
            model: model.into(),
            agent: agent(Duration::from_secs(120)),
        }
    }
}

impl SentenceEmbedder<f64> for HttpEmbedder {
    fn embed(&self, sentences: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let body = json!({"model": self.model, "input": sentences});
        let reply =
            post_json(&self.agent, &self.url, &body).map_err(|e| EmbedError(e.to_string()))?;
        let data = reply
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| EmbedError("reply without `data`".into()))?;
        let mut rows: Vec<(u64, Vec<f64>)> = data
            .iter()
            .enumerate()
            .map(|(pos, d)| {
                let idx = d.get("index").and_then(Value::as_u64).unwrap_or(pos as u64);
                let v = d
                    .get("embedding")
                    .and_then(Value::as_array)
                    .ok_or_else(|| EmbedError("entry without `embedding`".into()))?
                    .iter()
                    .map(|x| {
                        x.as_f64()
                            .ok_or_else(|| EmbedError("non-numeric embedding".into()))
                    })
                    .collect::<Result<Vec<f64>, _>>()?;
                Ok((idx, v))
            })
            .collect::<Result<_, EmbedError>>()?;
        rows.sort_by_key(|(i, _)| *i);
        if rows.len() != sentences.len() {
            return Err(EmbedError(
                "embedding count differs from input count".into(),
            ));
        }
        Ok(rows.into_iter().map(|(_, v)| v).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_joining() {
        assert_eq!(
            endpoint("http://h/v1", "completions"),
            "http://h/v1/completions"
        );
        assert_eq!(
            endpoint("http://h/v1/", "completions"),
            "http://h/v1/completions"
        );
        assert_eq!(
            endpoint("http://h/v1/completions", "completions"),
            "http://h/v1/completions"
        );
    }

    #[test]
    fn parses_reply_in_index_order() {
        let reply = json!({"choices": [
            {"index": 1, "text": "b", "finish_reason": "length",
             "logprobs": {"tokens": ["b"], "token_logprobs": [-0.5], "top_logprobs": [{"b": -0.5, "c": -1.0}]}},
            {"index": 0, "text": "a", "finish_reason": "stop",
             "logprobs": {"tokens": ["a"], "token_logprobs": [-0.1], "top_logprobs": [null]}}
        ]});
        let out = parse_completions_reply(&reply, 3);
        assert_eq!(out[0].text, "a");
        assert_eq!(out[1].finish_reason, FinishReason::Length);
        assert_eq!(
            out[1].tokens[0].top,
            vec![("b".into(), -0.5), ("c".into(), -1.0)]
        );
        assert!(out[2].is_error());
    }

    #[test]
    fn reply_without_logprobs_is_capability_error() {
        let choice = json!({"text": "x", "finish_reason": "stop"});
        assert!(parse_choice(&choice).unwrap_err().is_capability());
    }

    #[test]
    fn unreachable_endpoint_yields_backend_error() {
        let backend =
            HttpBackend::new("http://127.0.0.1:9/v1", "m").with_timeout(Duration::from_secs(2));
        let mut req = CompletionRequest::new("p", 5);
        req.n_samples = 2;
        let out = backend.complete(&req);
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|c| c.is_error() && c.text.is_empty()));
        assert!(matches!(
            backend.choice_logprobs("p", &["Yes"]),
            Err(BackendError::Transport(_))
        ));
    }
}
