//! Candidate scoring.
//!
//! Non-reasoning models are scored by the next-token probability of `Yes`
//! against `No`. Reasoning models think first and finish with a
//! `{"correct": true|false}` object; the soft score is read from the
//! log-probabilities of that value token and its alternative. Anything
//! unparseable scores [`DiscriminationScore::FALLBACK`].

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dataset::{format_schema_context, DbSchema};
use crate::generator::{CandidateSql, ModelKind};
use crate::llm_backend::{
    BackendError, Completion, CompletionRequest, FinishReason, LlmBackend, TokenLogprob,
    FLOOR_LOGPROB,
};
use crate::prompts::Template;
use crate::scalar::{two_way_softmax, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scoring {
    Soft,
    Binary,
}

impl Scoring {
    pub fn as_str(self) -> &'static str {
        match self {
            Scoring::Soft => "soft",
            Scoring::Binary => "binary",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub kind: ModelKind,
    #[serde(default = "default_scoring")]
    pub scoring: Scoring,
    #[serde(default)]
    pub schema_in_prompt: bool,
    #[serde(default = "default_disc_budget")]
    pub max_new_tokens: u32,
    #[serde(default)]
    pub temperature: f64,
}

fn default_scoring() -> Scoring {
    Scoring::Soft
}

fn default_disc_budget() -> u32 {
    512
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Reasoning,
            scoring: Scoring::Soft,
            schema_in_prompt: false,
            max_new_tokens: default_disc_budget(),
            temperature: 0.0,
        }
    }
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.scoring == Scoring::Binary && self.kind != ModelKind::Reasoning {
            return Err("binary scoring requires a reasoning discriminator".into());
        }
        if self.max_new_tokens < 1 {
            return Err("discriminator max_new_tokens must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    True,
    False,
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningParse<R = f64> {
    pub verdict: Verdict,
    pub true_logprob: Option<R>,
    pub false_logprob: Option<R>,
    pub reasoning_text: String,
    pub truncated: bool,
}

impl<R> ReasoningParse<R> {
    pub fn missing(reasoning_text: String, truncated: bool) -> Self {
        Self {
            verdict: Verdict::Missing,
            true_logprob: None,
            false_logprob: None,
            reasoning_text,
            truncated,
        }
    }
}

/// A score in `[0, 1]`, or the `-0.5` sentinel with `failed` set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationScore<R = f64> {
    pub value: R,
    pub failed: bool,
}

impl<R: Real> DiscriminationScore<R> {
    pub const FALLBACK: f64 = -0.5;

    /// Wraps a probability; `None` if outside `[0, 1]` or NaN.
    pub fn new(value: R) -> Option<Self> {
        (value >= R::zero() && value <= R::one()).then_some(Self {
            value,
            failed: false,
        })
    }

    pub fn fallback() -> Self {
        Self {
            value: R::lit(Self::FALLBACK),
            failed: true,
        }
    }

    fn probability(value: R) -> Self {
        Self::new(value).unwrap_or_else(Self::fallback)
    }
}

pub fn build_discrimination_prompt(
    question: &str,
    sql: &str,
    schema: Option<&DbSchema>,
    kind: ModelKind,
) -> String {
    match (kind, schema) {
        (ModelKind::NonReasoning, _) => {
            Template::DiscriminateNonReasoning.render(&[("question", question), ("sql", sql)])
        }
        (ModelKind::Reasoning, None) => {
            Template::DiscriminateReasoning.render(&[("question", question), ("sql", sql)])
        }
        (ModelKind::Reasoning, Some(schema)) => {
            let schema_text = format_schema_context(schema);
            Template::DiscriminateReasoningSchema.render(&[
                ("schema", &schema_text),
                ("question", question),
                ("sql", sql),
            ])
        }
    }
}

/// `P(Yes)` from a two-way softmax over the `Yes`/`No` next-token
/// log-probabilities. Per-call backend failures give the fallback score;
/// capability errors are returned.
pub fn score_nonreasoning(
    backend: &dyn LlmBackend,
    prompt: &str,
) -> Result<DiscriminationScore, BackendError> {
    match backend.choice_logprobs(prompt, &["Yes", "No"]) {
        Ok(lp) => Ok(yes_probability(lp.get("Yes"), lp.get("No"))),
        Err(e) if e.is_capability() => Err(e),
        Err(_) => Ok(DiscriminationScore::fallback()),
    }
}

pub fn yes_probability<R: Real>(lp_yes: R, lp_no: R) -> DiscriminationScore<R> {
    DiscriminationScore::probability(two_way_softmax(lp_yes, lp_no))
}

fn final_answer_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"(?i)\{\s*"correct"\s*:\s*("?)(true|false)("?)\s*\}"#).unwrap())
}

/// Lowercased alphabetic core of a token: `' "true}'` -> `true`.
fn literal_core(token: &str) -> String {
    token
        .trim_matches(|c: char| !c.is_alphabetic())
        .to_ascii_lowercase()
}

/// Index of the token covering byte `offset` of the concatenated text.
fn token_at(tokens: &[TokenLogprob], offset: usize) -> Option<usize> {
    let mut start = 0;
    for (i, t) in tokens.iter().enumerate() {
        let end = start + t.text.len();
        if offset >= start && offset < end {
            return Some(i);
        }
        start = end;
    }
    None
}

/// Finds the final `{"correct": true|false}` object and reads the value
/// token's log-probability together with its alternative's from the
/// backend's top-k list at the same position (floored when absent).
pub fn parse_reasoning_output(completion: &Completion) -> ReasoningParse<f64> {
    let text = &completion.text;
    let truncated = completion.finish_reason == FinishReason::Length;
    let thought = match text.find("</think>") {
        Some(i) => &text[..i],
        None => text.as_str(),
    };
    // The prompt opens the thinking block; some servers echo the tag.
    let reasoning_text = match thought.trim_start().strip_prefix("<think>") {
        Some(rest) => rest.to_string(),
        None => thought.to_string(),
    };

    let Some(caps) = final_answer_pattern().captures_iter(text).last() else {
        return ReasoningParse::missing(reasoning_text, truncated);
    };
    // Reject mismatched quoting such as `"true` or `true"`.
    if caps[1].len() != caps[3].len() {
        return ReasoningParse::missing(reasoning_text, truncated);
    }
    let value = caps.get(2).expect("group 2 always participates");
    let emitted_true = value.as_str().eq_ignore_ascii_case("true");
    let (emitted, alternative) = if emitted_true {
        ("true", "false")
    } else {
        ("false", "true")
    };

    let aligned = completion
        .tokens
        .iter()
        .map(|t| t.text.as_str())
        .collect::<String>()
        == *text;
    // Tokens that do not re-spell the text: fall back to the last token that
    // could start the emitted literal.
    let index = if aligned {
        token_at(&completion.tokens, value.start())
    } else {
        None
    }
    .or_else(|| {
        completion.tokens.iter().rposition(|t| {
            let core = literal_core(&t.text);
            !core.is_empty() && emitted.starts_with(&core)
        })
    });

    let (emitted_lp, alternative_lp) = match index.map(|i| &completion.tokens[i]) {
        Some(token) => {
            let alt = token
                .top
                .iter()
                .filter(|(t, _)| {
                    let core = literal_core(t);
                    !core.is_empty() && alternative.starts_with(&core)
                })
                .map(|(_, lp)| *lp)
                .reduce(f64::max)
                .unwrap_or(FLOOR_LOGPROB);
            (token.logprob, alt)
        }
        // No token information: certainty in the emitted value.
        None => (0.0, FLOOR_LOGPROB),
    };

    let (true_lp, false_lp) = if emitted_true {
        (emitted_lp, alternative_lp)
    } else {
        (alternative_lp, emitted_lp)
    };
    ReasoningParse {
        verdict: if emitted_true {
            Verdict::True
        } else {
            Verdict::False
        },
        true_logprob: Some(true_lp),
        false_logprob: Some(false_lp),
        reasoning_text,
        truncated,
    }
}

/// `P(correct)`: the softmax probability `rho` of the emitted value over the
/// `true`/`false` pair, taken as `rho` for `true` and `1 - rho` for `false`.
/// Both cases reduce to the softmax weight of `true`.
pub fn soft_score_from_parse<R: Real>(parse: &ReasoningParse<R>) -> DiscriminationScore<R> {
    match (parse.verdict, parse.true_logprob, parse.false_logprob) {
        (Verdict::True, Some(t), Some(f)) => {
            DiscriminationScore::probability(two_way_softmax(t, f))
        }
        (Verdict::False, Some(t), Some(f)) => {
            let rho_false = two_way_softmax(f, t);
            DiscriminationScore::probability(R::one() - rho_false)
        }
        _ => DiscriminationScore::fallback(),
    }
}

pub fn binary_score_from_parse<R: Real>(parse: &ReasoningParse<R>) -> DiscriminationScore<R> {
    match parse.verdict {
        Verdict::True => DiscriminationScore::probability(R::one()),
        Verdict::False => DiscriminationScore::probability(R::zero()),
        Verdict::Missing => DiscriminationScore::fallback(),
    }
}

/// Everything produced by one discrimination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discrimination {
    pub score: DiscriminationScore,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse: Option<ReasoningParse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_output: Option<String>,
    /// Whether the backend was consulted.
    pub called: bool,
}

impl Discrimination {
    /// Fallback score without a backend call.
    pub fn skipped() -> Self {
        Self {
            score: DiscriminationScore::fallback(),
            parse: None,
            prompt: None,
            raw_output: None,
            called: false,
        }
    }
}

/// Scores one candidate. Candidates whose extraction failed get the fallback
/// score without backend traffic. Only capability errors are returned.
pub fn discriminate(
    backend: &dyn LlmBackend,
    question: &str,
    candidate: &CandidateSql,
    schema: Option<&DbSchema>,
    config: &DiscriminatorConfig,
) -> Result<Discrimination, BackendError> {
    let Some(sql) = candidate.sql() else {
        return Ok(Discrimination::skipped());
    };
    let schema = schema.filter(|_| config.schema_in_prompt);
    let prompt = build_discrimination_prompt(question, sql, schema, config.kind);
    match config.kind {
        ModelKind::NonReasoning => {
            let score = score_nonreasoning(backend, &prompt)?;
            Ok(Discrimination {
                score,
                parse: None,
                prompt: Some(prompt),
                raw_output: None,
                called: true,
            })
        }
        ModelKind::Reasoning => {
            let mut request = CompletionRequest::new(prompt.clone(), config.max_new_tokens);
            request.temperature = config.temperature;
            let completion = backend
                .complete(&request)
                .into_iter()
                .next()
                .unwrap_or_else(|| Completion::backend_error("no completion returned"));
            if completion.is_error() {
                return Ok(Discrimination {
                    score: DiscriminationScore::fallback(),
                    parse: None,
                    prompt: Some(prompt),
                    raw_output: completion.error,
                    called: true,
                });
            }
            let parse = parse_reasoning_output(&completion);
            let score = match config.scoring {
                Scoring::Soft => soft_score_from_parse(&parse),
                Scoring::Binary => binary_score_from_parse(&parse),
            };
            Ok(Discrimination {
                score,
                parse: Some(parse),
                prompt: Some(prompt),
                raw_output: Some(completion.text),
                called: true,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::TableSchema;
    use crate::llm_backend::{tokenize_text, FixtureRecord, MockBackend};
    use proptest::prelude::*;

    const QUESTION: &str = "What are all distinct countries where singers above age 20 are from?";
    const SQL: &str = "SELECT DISTINCT country FROM singer WHERE age > 20;";

    const FENCED_VERDICT_OUTPUT: &str = "The question wants distinct countries of singers older than 20.\n\nThe query is SELECT DISTINCT country FROM singer WHERE age > 20; which filters on age and projects country without duplicates.\n\nNothing else is asked for, so it matches.\n</think>\n\n```json\n{\n \"correct\" : true\n}\n```";

    fn completion(text: &str, finish: FinishReason) -> Completion {
        Completion {
            text: text.to_string(),
            tokens: tokenize_text(text)
                .into_iter()
                .map(|t| TokenLogprob {
                    text: t,
                    logprob: 0.0,
                    top: vec![],
                })
                .collect(),
            finish_reason: finish,
            error: None,
        }
    }

    fn parse_with(verdict: Verdict, t: f64, f: f64) -> ReasoningParse {
        ReasoningParse {
            verdict,
            true_logprob: Some(t),
            false_logprob: Some(f),
            reasoning_text: String::new(),
            truncated: false,
        }
    }

    fn singer_schema() -> DbSchema {
        DbSchema::new(
            "concert_singer",
            vec![TableSchema {
                name: "singer".into(),
                columns: vec![
                    "singer_id".into(),
                    "name".into(),
                    "country".into(),
                    "age".into(),
                ],
            }],
        )
        .unwrap()
    }

    #[test]
    fn prompt_layouts() {
        let p = build_discrimination_prompt(QUESTION, SQL, None, ModelKind::NonReasoning);
        assert_eq!(p, format!("[INST] Answer the following Yes/No question: Is the SQL correct given the utterance?\n\n-- Utterance: {QUESTION}\n-- SQL:\n{SQL}\n-- Answer: [/INST]"));

        let p = build_discrimination_prompt(QUESTION, SQL, None, ModelKind::Reasoning);
        assert!(p.contains("Provide final answer in JSON format with the key 'correct'"));
        assert!(p.contains(&format!(
            "### Question:\n{QUESTION}\n### SQL query:\n{SQL}\n"
        )));
        assert!(p.ends_with("<think>\n"));
        assert!(!p.contains("### Schema:"));

        let schema = singer_schema();
        let p = build_discrimination_prompt(QUESTION, SQL, Some(&schema), ModelKind::Reasoning);
        assert!(p.contains("Use the Schema for this."));
        assert!(p.contains(
            "### Schema:\n-- Table singer: singer_id, name, country, age\n### Question:"
        ));
        assert!(p.contains("### SQL query:"));
    }

    #[test]
    fn parses_fenced_json_answer() {
        let parse = parse_reasoning_output(&completion(FENCED_VERDICT_OUTPUT, FinishReason::Stop));
        assert_eq!(parse.verdict, Verdict::True);
        assert!(!parse.truncated);
        assert!(parse.reasoning_text.ends_with("so it matches.\n"));
        // No top-k info in this completion: alternative floored.
        assert_eq!(parse.true_logprob, Some(0.0));
        assert_eq!(parse.false_logprob, Some(FLOOR_LOGPROB));
    }

    #[test]
    fn truncated_mid_thought_is_missing() {
        let parse =
            parse_reasoning_output(&completion("First, check the join", FinishReason::Length));
        assert_eq!(parse.verdict, Verdict::Missing);
        assert!(parse.truncated);
        assert_eq!(parse.true_logprob, None);
    }

    #[test]
    fn non_boolean_value_is_missing() {
        for text in [
            r#"</think> {"correct": "maybe"}"#,
            r#"{"correct": "true}"#,
            r#"{"verdict": true}"#,
        ] {
            let parse = parse_reasoning_output(&completion(text, FinishReason::Stop));
            assert_eq!(parse.verdict, Verdict::Missing, "{text}");
            assert!(soft_score_from_parse(&parse).failed);
        }
    }

    #[test]
    fn grammar_variants_and_last_object_wins() {
        let cases = [
            (r#"{"correct":true}"#, Verdict::True),
            (r#"{ "CORRECT" :  False }"#, Verdict::False),
            (r#"{"correct": "false"}"#, Verdict::False),
            ("```json\n{\n  \"correct\": TRUE\n}\n```", Verdict::True),
            (
                r#"draft {"correct": true} final {"correct": false}"#,
                Verdict::False,
            ),
            (
                r#"{"correct": true} then {"correct": "maybe"}"#,
                Verdict::True,
            ),
        ];
        for (text, verdict) in cases {
            assert_eq!(
                parse_reasoning_output(&completion(text, FinishReason::Stop)).verdict,
                verdict,
                "{text}"
            );
        }
    }

    #[test]
    fn reads_value_and_alternative_logprobs() {
        let mock = MockBackend::new(vec![FixtureRecord::regex(
            ".*",
            "ok</think>\n{\"correct\": false}",
        )
        .with_verdict_logprobs(-2.0, -0.2)])
        .unwrap();
        let c = &mock.complete(&CompletionRequest::new("p", 100))[0];
        let parse = parse_reasoning_output(c);
        assert_eq!(parse.verdict, Verdict::False);
        assert_eq!(parse.false_logprob, Some(-0.2));
        assert_eq!(parse.true_logprob, Some(-2.0));
        let s = soft_score_from_parse(&parse);
        let expected = (-2.0f64).exp() / ((-2.0f64).exp() + (-0.2f64).exp());
        assert!((s.value - expected).abs() < 1e-12);
    }

    #[test]
    fn soft_score_hand_values() {
        assert_eq!(
            soft_score_from_parse(&parse_with(Verdict::True, -1.0, -1.0)).value,
            0.5
        );
        let s = soft_score_from_parse(&parse_with(Verdict::True, -0.05, -3.0));
        assert!((s.value - 0.9503).abs() < 5e-5);
        let missing = soft_score_from_parse(&ReasoningParse::<f64>::missing(String::new(), false));
        assert_eq!((missing.value, missing.failed), (-0.5, true));
    }

    #[test]
    fn binary_scores() {
        assert_eq!(
            binary_score_from_parse(&parse_with(Verdict::True, -3.0, -0.1)).value,
            1.0
        );
        assert_eq!(
            binary_score_from_parse(&parse_with(Verdict::False, -3.0, -0.1)).value,
            0.0
        );
        let m = binary_score_from_parse(&ReasoningParse::<f64>::missing(String::new(), true));
        assert_eq!((m.value, m.failed), (-0.5, true));
    }

    #[test]
    fn nonreasoning_yes_probability() {
        assert_eq!(yes_probability(-0.7, -0.7).value, 0.5);
        assert!((yes_probability(-0.1f64, -2.4).value - 0.9089).abs() < 5e-5);
        let mock = MockBackend::new(vec![]).unwrap();
        let s = score_nonreasoning(&mock, "p").unwrap();
        assert_eq!((s.value, s.failed), (-0.5, true));
    }

    #[test]
    fn discriminate_routes_by_config() {
        let schema = singer_schema();
        let candidate = CandidateSql::from_output(SQL, ModelKind::NonReasoning);
        let mock = MockBackend::new(vec![
            FixtureRecord::regex("Yes/No", "")
                .with_next_token_logprobs(&[("Yes", -0.1), ("No", -2.4)]),
            FixtureRecord::regex(
                "JSON format",
                "fine</think>\n```json\n{\"correct\": true}\n```",
            )
            .with_verdict_logprobs(-0.02, -4.0),
        ])
        .unwrap();

        let soft = DiscriminatorConfig::default();
        let d = discriminate(&mock, QUESTION, &candidate, Some(&schema), &soft).unwrap();
        assert!((d.score.value - 0.9817).abs() < 5e-5);
        assert_eq!(d.parse.as_ref().unwrap().verdict, Verdict::True);
        assert!(!d.prompt.unwrap().contains("### Schema:"));

        let with_schema = DiscriminatorConfig {
            schema_in_prompt: true,
            ..soft.clone()
        };
        let d = discriminate(&mock, QUESTION, &candidate, Some(&schema), &with_schema).unwrap();
        assert!(d.prompt.unwrap().contains("### Schema:"));

        let nr = DiscriminatorConfig {
            kind: ModelKind::NonReasoning,
            ..soft.clone()
        };
        let d = discriminate(&mock, QUESTION, &candidate, None, &nr).unwrap();
        assert!((d.score.value - 0.9089).abs() < 5e-5);
        assert!(d.parse.is_none());

        let bad = CandidateSql::from_output("no query here", ModelKind::NonReasoning);
        let d = discriminate(&mock, QUESTION, &bad, None, &soft).unwrap();
        assert!(!d.called);
        assert!(d.score.failed);
    }

    #[test]
    fn binary_false_fixture() {
        let mock = MockBackend::new(vec![FixtureRecord::regex(
            ".*",
            "</think>{\"correct\": false}",
        )])
        .unwrap();
        let cfg = DiscriminatorConfig {
            scoring: Scoring::Binary,
            ..Default::default()
        };
        let candidate = CandidateSql::from_output(SQL, ModelKind::NonReasoning);
        let d = discriminate(&mock, QUESTION, &candidate, None, &cfg).unwrap();
        assert_eq!(d.score.value, 0.0);
        assert!(!d.score.failed);
    }

    #[test]
    fn binary_requires_reasoning() {
        let cfg = DiscriminatorConfig {
            kind: ModelKind::NonReasoning,
            scoring: Scoring::Binary,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert!(DiscriminatorConfig::default().validate().is_ok());
    }

    #[test]
    fn f32_scores() {
        let p: ReasoningParse<f32> = ReasoningParse {
            verdict: Verdict::True,
            true_logprob: Some(-0.02),
            false_logprob: Some(-4.0),
            reasoning_text: String::new(),
            truncated: false,
        };
        assert!((soft_score_from_parse(&p).value - 0.9817).abs() < 1e-4);
        assert_eq!(DiscriminationScore::<f32>::fallback().value, -0.5);
    }

    proptest! {
        #[test]
        fn soft_score_domain_and_monotonicity(t in -50.0f64..0.0, f in -50.0f64..0.0, bump in 0.01f64..5.0) {
            let s = soft_score_from_parse(&parse_with(Verdict::True, t, f));
            prop_assert!(!s.failed && (0.0..=1.0).contains(&s.value));
            let higher = soft_score_from_parse(&parse_with(Verdict::True, (t + bump).min(0.0), f));
            if t + bump <= 0.0 && s.value < 1.0 && s.value > 0.0 {
                prop_assert!(higher.value > s.value || higher.value == 1.0);
            }
        }
    }
}
