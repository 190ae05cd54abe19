//! Repetition and diversity measures for reasoning traces.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{order_independent_mean, Real};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("embedding failed: {0}")]
pub struct EmbedError(pub String);

/// Maps sentences to vectors for [`embedding_diversity`].
pub trait SentenceEmbedder<R>: Send + Sync {
    fn embed(&self, sentences: &[String]) -> Result<Vec<Vec<R>>, EmbedError>;
}

fn sentence_end() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[.!?]+(?:\s+|$)").unwrap())
}

fn token_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\w+|[^\w\s]").unwrap())
}

fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splits on line breaks and on terminal punctuation followed by whitespace
/// or the end of a line. Sentences are lowercased with whitespace collapsed.
pub fn segment_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        let mut start = 0;
        for m in sentence_end().find_iter(line) {
            let end = m.start() + m.as_str().trim_end().len();
            out.push(&line[start..end]);
            start = m.end();
        }
        out.push(&line[start..]);
    }
    out.into_iter()
        .map(|s| normalize_whitespace(&s.to_lowercase()))
        .filter(|s| !s.is_empty())
        .collect()
}

/// Lowercased word and punctuation tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    token_pattern()
        .find_iter(text)
        .map(|m| m.as_str().to_lowercase())
        .collect()
}

/// `100 * (1 - distinct / total)`, 0 for an empty sequence.
fn redundancy<R: Real>(distinct: usize, total: usize) -> R {
    if total == 0 {
        return R::zero();
    }
    R::hundred() * R::from_count(total - distinct) / R::from_count(total)
}

pub fn repetition_ratio<R: Real>(sentences: &[String]) -> R {
    let distinct: HashSet<&String> = sentences.iter().collect();
    redundancy(distinct.len(), sentences.len())
}

pub fn one_minus_ttr<R: Real>(tokens: &[String]) -> R {
    let distinct: HashSet<&String> = tokens.iter().collect();
    redundancy(distinct.len(), tokens.len())
}

pub fn repeated_ngrams<R: Real>(tokens: &[String], n: usize) -> R {
    assert!(n >= 1, "n-gram order must be positive");
    if tokens.len() < n {
        return R::zero();
    }
    let grams: Vec<&[String]> = tokens.windows(n).collect();
    let distinct: HashSet<&[String]> = grams.iter().copied().collect();
    redundancy(distinct.len(), grams.len())
}

/// Shannon entropy in bits of the sentence frequency distribution,
/// evaluated as `log2 N - (1/N) sum c log2 c` so that all-distinct input
/// gives exactly `log2 N`.
pub fn sentence_entropy<R: Real>(sentences: &[String]) -> R {
    if sentences.is_empty() {
        return R::zero();
    }
    let mut counts: HashMap<&String, usize> = HashMap::new();
    for s in sentences {
        *counts.entry(s).or_default() += 1;
    }
    let n = R::from_count(sentences.len());
    let mut weighted: Vec<R> = counts
        .values()
        .filter(|&&c| c > 1)
        .map(|&c| {
            let c = R::from_count(c);
            c * c.log2()
        })
        .collect();
    weighted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = n.log2() - weighted.into_iter().fold(R::zero(), |a, b| a + b) / n;
    h.max(R::zero())
}

fn cosine<R: Real>(a: &[R], b: &[R]) -> R {
    let dot = a.iter().zip(b).fold(R::zero(), |s, (x, y)| s + *x * *y);
    let na = a.iter().fold(R::zero(), |s, x| s + *x * *x).sqrt();
    let nb = b.iter().fold(R::zero(), |s, x| s + *x * *x).sqrt();
    if na == R::zero() || nb == R::zero() {
        // Two empty vectors are treated as identical, one empty as unrelated.
        return if na == nb { R::one() } else { R::zero() };
    }
    // Rounding can push identical directions past 1.
    (dot / (na * nb)).max(-R::one()).min(R::one())
}

/// `100 * (1 - mean pairwise cosine similarity)` over all unordered pairs.
/// Needs at least two sentences; embedder failures are logged and give
/// `None`.
pub fn embedding_diversity<R: Real>(
    sentences: &[String],
    embedder: &dyn SentenceEmbedder<R>,
) -> Option<R> {
    if sentences.len() < 2 {
        return None;
    }
    let vectors = match embedder.embed(sentences) {
        Ok(v) if v.len() == sentences.len() => v,
        Ok(_) => {
            log::warn!("embedder returned a wrong number of vectors");
            return None;
        }
        Err(e) => {
            log::warn!("{e}");
            return None;
        }
    };
    let mut sims = Vec::with_capacity(vectors.len() * (vectors.len() - 1) / 2);
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            sims.push(cosine(&vectors[i], &vectors[j]));
        }
    }
    order_independent_mean(&sims).map(|m| R::hundred() * (R::one() - m))
}

/// TF-IDF vectors fitted on the sentences being embedded, with smoothed
/// IDF `ln((1 + n) / (1 + df)) + 1` and L2-normalized rows. Deterministic
/// and model-free.
#[derive(Debug, Clone, Copy, Default)]
pub struct TfidfEmbedder;

impl<R: Real> SentenceEmbedder<R> for TfidfEmbedder {
    fn embed(&self, sentences: &[String]) -> Result<Vec<Vec<R>>, EmbedError> {
        let docs: Vec<Vec<String>> = sentences.iter().map(|s| tokenize(s)).collect();
        let vocab: BTreeMap<&str, usize> = docs
            .iter()
            .flatten()
            .map(String::as_str)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, t)| (t, i))
            .collect();
        let mut df = vec![0usize; vocab.len()];
        for d in &docs {
            for t in d.iter().map(|t| vocab[t.as_str()]).collect::<BTreeSet<_>>() {
                df[t] += 1;
            }
        }
        let n = R::from_count(docs.len());
        let idf: Vec<R> = df
            .iter()
            .map(|&d| ((R::one() + n) / (R::one() + R::from_count(d))).ln() + R::one())
            .collect();
        Ok(docs
            .iter()
            .map(|d| {
                let mut v = vec![R::zero(); vocab.len()];
                for t in d {
                    let i = vocab[t.as_str()];
                    v[i] = v[i] + idf[i];
                }
                let norm = v.iter().fold(R::zero(), |s, x| s + *x * *x).sqrt();
                if norm > R::zero() {
                    v.iter_mut().for_each(|x| *x = *x / norm);
                }
                v
            })
            .collect())
    }
}

/// Quality measures of one trace.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TraceQuality<R = f64> {
    pub repetition_ratio: R,
    pub one_minus_ttr: R,
    pub repeated_ngrams: R,
    pub entropy: R,
    pub diversity: Option<R>,
}

pub const NGRAM_ORDER: usize = 3;

pub fn trace_quality<R: Real>(text: &str, embedder: &dyn SentenceEmbedder<R>) -> TraceQuality<R> {
    let sentences = segment_sentences(text);
    let tokens = tokenize(text);
    TraceQuality {
        repetition_ratio: repetition_ratio(&sentences),
        one_minus_ttr: one_minus_ttr(&tokens),
        repeated_ngrams: repeated_ngrams(&tokens, NGRAM_ORDER),
        entropy: sentence_entropy(&sentences),
        diversity: embedding_diversity(&sentences, embedder),
    }
}

/// Unweighted means over traces; diversity averages the traces where it is
/// defined.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReasoningQualityReport<R = f64> {
    pub traces: usize,
    pub repetition_ratio: Option<R>,
    pub one_minus_ttr: Option<R>,
    pub repeated_ngrams: Option<R>,
    pub entropy: Option<R>,
    pub diversity: Option<R>,
}

pub fn aggregate_quality<R: Real>(traces: &[TraceQuality<R>]) -> ReasoningQualityReport<R> {
    let mean = |f: fn(&TraceQuality<R>) -> R| {
        order_independent_mean(&traces.iter().map(f).collect::<Vec<_>>())
    };
    ReasoningQualityReport {
        traces: traces.len(),
        repetition_ratio: mean(|t| t.repetition_ratio),
        one_minus_ttr: mean(|t| t.one_minus_ttr),
        repeated_ngrams: mean(|t| t.repeated_ngrams),
        entropy: mean(|t| t.entropy),
        diversity: order_independent_mean(
            &traces
                .iter()
                .filter_map(|t| t.diversity)
                .collect::<Vec<_>>(),
        ),
    }
}
