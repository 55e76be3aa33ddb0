//! Tie-aware ROC AUC.

use super::rank::midranks;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Mann-Whitney AUC: P(score_pos > score_neg) + 1/2 P(equal), via midranks.
pub fn auc_score<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<T> {
    if scores.len() != labels.len() {
        return Err(Error::input("scores and labels differ in length"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::input("AUC needs both label classes"));
    }
    let (ranks, _) = midranks(scores);
    let rank_sum = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(&r, _)| r)
        .sum::<T>();
    let (p, q) = (T::of_usize(n_pos), T::of_usize(n_neg));
    Ok((rank_sum - p * (p + T::one()) * T::half()) / (p * q))
}
