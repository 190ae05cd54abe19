//! Execution accuracy per difficulty tier.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Difficulty;
use crate::scalar::{percent, Real};
use crate::sql_exec::{compare_execution, execute, gold_has_order_by, ExecLimits};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierAccuracy<R = f64> {
    pub tier: Difficulty,
    pub count: usize,
    pub correct: usize,
    pub accuracy: Option<R>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionAccuracy<R = f64> {
    /// Always one entry per tier, easiest first.
    pub tiers: Vec<TierAccuracy<R>>,
    pub count: usize,
    pub correct: usize,
    pub overall: Option<R>,
}

impl<R: Real> ExecutionAccuracy<R> {
    pub fn tier(&self, tier: Difficulty) -> &TierAccuracy<R> {
        self.tiers
            .iter()
            .find(|t| t.tier == tier)
            .expect("all tiers present")
    }
}

/// Whether a prediction's result matches the gold result. An absent
/// prediction is incorrect.
pub fn prediction_correct(
    db_path: &Path,
    final_sql: Option<&str>,
    gold_sql: &str,
    limits: &ExecLimits,
) -> bool {
    let Some(sql) = final_sql else {
        return false;
    };
    let pred = execute(db_path, sql, limits);
    if !pred.is_ok() {
        return false;
    }
    let gold = execute(db_path, gold_sql, limits);
    compare_execution(&pred, &gold, gold_has_order_by(gold_sql))
}

/// Aggregates per-example correctness flags by tier. The overall accuracy
/// is the example-weighted mean of the tier accuracies.
pub fn execution_accuracy_report<R: Real>(results: &[(Difficulty, bool)]) -> ExecutionAccuracy<R> {
    let tiers = Difficulty::ALL
        .iter()
        .map(|&tier| {
            let count = results.iter().filter(|(t, _)| *t == tier).count();
            let correct = results.iter().filter(|(t, ok)| *t == tier && *ok).count();
            TierAccuracy {
                tier,
                count,
                correct,
                accuracy: percent(correct, count),
            }
        })
        .collect();
    let correct = results.iter().filter(|(_, ok)| *ok).count();
    ExecutionAccuracy {
        tiers,
        count: results.len(),
        correct,
        overall: percent(correct, results.len()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Difficulty::*;

    #[test]
    fn tier_and_overall() {
        let r: ExecutionAccuracy = execution_accuracy_report(&[
            (Easy, true),
            (Easy, false),
            (Medium, true),
            (Hard, false),
            (Extra, true),
        ]);
        assert_eq!(r.tier(Easy).accuracy, Some(50.0));
        assert_eq!(r.tier(Medium).accuracy, Some(100.0));
        assert_eq!(r.tier(Hard).accuracy, Some(0.0));
        assert_eq!(r.overall, Some(60.0));
        let weighted: f64 = r
            .tiers
            .iter()
            .filter_map(|t| t.accuracy.map(|a| a * t.count as f64))
            .sum::<f64>()
            / r.count as f64;
        assert!((weighted - 60.0).abs() < 1e-12);
        let empty: ExecutionAccuracy = execution_accuracy_report(&[]);
        assert_eq!(empty.overall, None);
        assert_eq!(empty.tiers.len(), 4);
    }
}
