//! Intrinsic discrimination metrics over oracle-labeled candidate batches.

use serde::{Deserialize, Serialize};

use crate::discriminator::DiscriminationScore;
use crate::planner::RankedBatch;
use crate::scalar::{order_independent_mean, percent, Real};

/// Binarization threshold for soft scores in [`macro_f1`].
pub const DEFAULT_F1_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore<R = f64> {
    pub score: DiscriminationScore<R>,
    pub oracle_correct: bool,
}

/// One candidate set in ranked order, with the planner's choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledBatch<R = f64> {
    pub entries: Vec<LabeledScore<R>>,
    pub chosen_index: Option<usize>,
}

impl<R: Real> LabeledBatch<R> {
    /// Pairs a ranked batch with oracle labels given in generation order.
    pub fn from_ranked(batch: &RankedBatch<R>, labels_by_original: &[bool]) -> Self {
        Self {
            entries: batch
                .entries
                .iter()
                .map(|e| LabeledScore {
                    score: e.score,
                    oracle_correct: labels_by_original[e.original_index],
                })
                .collect(),
            chosen_index: batch.chosen_index,
        }
    }

    /// Every (correct, incorrect) score pair within the batch.
    pub fn pairs(&self) -> Vec<(R, R)> {
        let correct = self.entries.iter().filter(|e| e.oracle_correct);
        correct
            .flat_map(|c| {
                self.entries
                    .iter()
                    .filter(|e| !e.oracle_correct)
                    .map(move |i| (c.score.value, i.score.value))
            })
            .collect()
    }
}

/// Percent of pairs whose correct candidate scores strictly higher.
pub fn pairwise_accuracy<R: Real>(pairs: &[(R, R)]) -> Option<R> {
    let wins = pairs.iter().filter(|(c, i)| c > i).count();
    percent(wins, pairs.len())
}

fn f1<R: Real>(tp: usize, fp: usize, fn_: usize) -> R {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        R::zero()
    } else {
        R::from_count(2 * tp) / R::from_count(denom)
    }
}

/// Macro-averaged F1 over the correct/incorrect classes, predicting correct
/// when a score reaches `threshold`. Fallback scores predict incorrect.
pub fn macro_f1<R: Real>(labeled: &[LabeledScore<R>], threshold: R) -> Option<R> {
    if labeled.is_empty() {
        return None;
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for l in labeled {
        let predicted = !l.score.failed && l.score.value >= threshold;
        match (predicted, l.oracle_correct) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let f_correct: R = f1(tp, fp, fn_);
    let f_incorrect: R = f1(tn, fn_, fp);
    Some(R::hundred() * (f_correct + f_incorrect) / R::lit(2.0))
}

/// Percent of batches whose chosen entry is correct; no choice is a miss.
pub fn hit_at_1<R: Real>(batches: &[LabeledBatch<R>]) -> Option<R> {
    let hits = batches
        .iter()
        .filter(|b| b.chosen_index.is_some_and(|i| b.entries[i].oracle_correct))
        .count();
    percent(hits, batches.len())
}

/// Mean reciprocal rank of the best-ranked correct entry, 0 for batches
/// without one.
pub fn mrr<R: Real>(batches: &[LabeledBatch<R>]) -> Option<R> {
    let reciprocal: Vec<R> = batches
        .iter()
        .map(|b| match b.entries.iter().position(|e| e.oracle_correct) {
            Some(i) => R::one() / R::from_count(i + 1),
            None => R::zero(),
        })
        .collect();
    order_independent_mean(&reciprocal).map(|m| m * R::hundred())
}

/// Percent of scores that are the parse-failure fallback.
pub fn failure_rate<R: Real>(scores: &[DiscriminationScore<R>]) -> Option<R> {
    percent(scores.iter().filter(|s| s.failed).count(), scores.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IntrinsicReport<R = f64> {
    pub pw_acc: Option<R>,
    pub macro_f1: Option<R>,
    pub hit_at_1: Option<R>,
    pub mrr: Option<R>,
    pub fail_rate: Option<R>,
}

/// All intrinsic metrics. `called_scores` are the scores that came from a
/// discriminator call; candidates skipped without a call do not count
/// towards the failure rate.
pub fn intrinsic_report<R: Real>(
    batches: &[LabeledBatch<R>],
    called_scores: &[DiscriminationScore<R>],
    threshold: R,
) -> IntrinsicReport<R> {
    let pairs: Vec<(R, R)> = batches.iter().flat_map(|b| b.pairs()).collect();
    let labeled: Vec<LabeledScore<R>> = batches.iter().flat_map(|b| b.entries.clone()).collect();
    IntrinsicReport {
        pw_acc: pairwise_accuracy(&pairs),
        macro_f1: macro_f1(&labeled, threshold),
        hit_at_1: hit_at_1(batches),
        mrr: mrr(batches),
        fail_rate: failure_rate(called_scores),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ls(v: f64, correct: bool) -> LabeledScore {
        LabeledScore {
            score: DiscriminationScore::new(v).unwrap_or_else(DiscriminationScore::fallback),
            oracle_correct: correct,
        }
    }

    fn lb(entries: &[(f64, bool)], chosen: Option<usize>) -> LabeledBatch {
        LabeledBatch {
            entries: entries.iter().map(|&(v, c)| ls(v, c)).collect(),
            chosen_index: chosen,
        }
    }

    #[test]
    fn pairwise_examples() {
        assert_eq!(pairwise_accuracy(&[(0.8, 0.3), (0.2, 0.5)]), Some(50.0));
        assert_eq!(pairwise_accuracy(&[(0.4, 0.4), (0.1, 0.1)]), Some(0.0));
        assert_eq!(pairwise_accuracy::<f64>(&[]), None);
    }

    #[test]
    fn macro_f1_examples() {
        let perfect = [ls(0.9, true), ls(0.1, false)];
        assert_eq!(macro_f1(&perfect, 0.5), Some(100.0));
        let all_yes = [ls(0.9, true), ls(0.9, false), ls(0.6, true), ls(0.7, false)];
        assert!((macro_f1(&all_yes, 0.5).unwrap() - 100.0 / 3.0).abs() < 1e-9);
        assert_eq!(macro_f1::<f64>(&[], 0.5), None);
        // Fallback predicts incorrect even below a negative threshold.
        assert_eq!(macro_f1(&[ls(-0.5, false)], -1.0), Some(50.0));
    }

    #[test]
    fn hit_and_mrr_examples() {
        let batches = vec![
            lb(&[(0.9, true), (0.1, false)], Some(0)),
            lb(&[(0.9, true)], Some(0)),
            lb(&[(0.8, false), (0.7, true)], Some(0)),
            lb(&[(0.9, true), (0.8, false)], Some(0)),
        ];
        assert_eq!(hit_at_1(&batches), Some(75.0));
        assert_eq!(
            mrr(&[lb(&[(0.8, false), (0.7, true)], Some(0))]),
            Some(50.0)
        );
        assert_eq!(mrr(&[lb(&[(0.8, false)], Some(0))]), Some(0.0));
        let empty = vec![lb(&[], None), lb(&[], None)];
        assert_eq!(hit_at_1(&empty), Some(0.0));
    }

    #[test]
    fn failure_rate_examples() {
        let s = |v: f64| DiscriminationScore::new(v).unwrap_or_else(DiscriminationScore::fallback);
        assert_eq!(failure_rate(&[s(0.2), s(0.8)]), Some(0.0));
        assert_eq!(failure_rate(&[s(-0.5), s(-0.5)]), Some(100.0));
    }
}
