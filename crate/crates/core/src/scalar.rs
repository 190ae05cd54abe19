//! Scalar abstraction shared by the scoring and metric code.
//!
//! Scores, percentages and information measures are computed generically over
//! [`Real`], so the same code runs in `f32` for compact storage and in `f64`
//! for reporting. The pipeline itself uses `f64` (see the aliases at the crate
//! root).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar usable by every generic routine in this crate.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts a constant. Panics only if `value` is not representable,
    /// which cannot happen for the finite constants used in this crate.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("finite literal is representable")
    }

    fn from_count(count: usize) -> Self {
        Self::from_usize(count).expect("count is representable")
    }

    fn hundred() -> Self {
        Self::lit(100.0)
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + Sum
        + Default
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

/// Probability of the first option under a softmax over two logits
/// (or log-probabilities; the shared normaliser cancels).
///
/// Evaluated as a logistic of the difference so that
/// `two_way_softmax(a, b) + two_way_softmax(b, a) == 1` up to rounding.
pub fn two_way_softmax<R: Real>(first: R, second: R) -> R {
    let diff = first - second;
    if diff.is_nan() {
        // Both sides -inf or both +inf: no information to separate them.
        return R::lit(0.5);
    }
    if diff >= R::zero() {
        R::one() / (R::one() + (-diff).exp())
    } else {
        let e = diff.exp();
        e / (R::one() + e)
    }
}

/// `100 * numerator / denominator`, or `None` for an empty denominator.
pub fn percent<R: Real>(numerator: usize, denominator: usize) -> Option<R> {
    if denominator == 0 {
        return None;
    }
    Some(R::hundred() * R::from_count(numerator) / R::from_count(denominator))
}

/// Neumaier-compensated sum.
pub fn compensated_sum<R: Real, I: IntoIterator<Item = R>>(values: I) -> R {
    let mut sum = R::zero();
    let mut carry = R::zero();
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry = carry + ((sum - t) + v);
        } else {
            carry = carry + ((v - t) + sum);
        }
        sum = t;
    }
    sum + carry
}

/// Mean that does not depend on the order of `values`: the values are sorted
/// before a compensated summation. Returns `None` for an empty input.
pub fn order_independent_mean<R: Real>(values: &[R]) -> Option<R> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Some(compensated_sum(sorted) / R::from_count(values.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_matches_direct_formula() {
        let (a, b) = (-0.1_f64, -2.4_f64);
        let direct = a.exp() / (a.exp() + b.exp());
        assert!((two_way_softmax(a, b) - direct).abs() < 1e-15);
        assert!((two_way_softmax(a, b) - 0.9089).abs() < 5e-5);
    }

    #[test]
    fn softmax_extremes_stay_finite() {
        assert_eq!(two_way_softmax(0.0_f64, -1e6), 1.0);
        assert_eq!(two_way_softmax(-1e6_f64, 0.0), 0.0);
        assert_eq!(two_way_softmax(f64::NEG_INFINITY, f64::NEG_INFINITY), 0.5);
    }

    #[test]
    fn f32_path() {
        let p: f32 = two_way_softmax(-0.05, -3.0);
        assert!((p - 0.9503).abs() < 1e-4);
        assert_eq!(percent::<f32>(1, 4), Some(25.0));
    }

    #[test]
    fn mean_is_order_independent() {
        let a = [0.1, 1e16, -1e16, 0.3, 0.2];
        let mut b = a;
        b.reverse();
        assert_eq!(order_independent_mean(&a), order_independent_mean(&b));
        assert_eq!(order_independent_mean::<f64>(&[]), None);
    }
}
