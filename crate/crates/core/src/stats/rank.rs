//! Wilcoxon rank-sum test with midranks and normal approximation.

use std::cmp::Ordering;

use statrs::function::erf::erfc;

use super::{MethodId, TestResult};
use crate::scalar::Scalar;
use crate::table::ContingencyTable;

/// Midranks of `values` (1-based) and the tie term sum(t^3 - t) over tie groups.
pub fn midranks<T: Scalar>(values: &[T]) -> (Vec<T>, T) {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![T::zero(); n];
    let mut ties = T::zero();
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j share ranks i+1..=j
        let rank = T::of_usize(i + j + 1) * T::half();
        for &idx in &order[i..j] {
            ranks[idx] = rank;
        }
        let t = T::of_usize(j - i);
        ties += t * t * t - t;
        i = j;
    }
    (ranks, ties)
}

/// z and two-sided p from a rank sum `w` of group 1.
fn rank_sum_result<T: Scalar>(w: T, n1: usize, n2: usize, ties: T) -> TestResult<T> {
    let (n1t, n2t) = (T::of_usize(n1), T::of_usize(n2));
    let n = n1t + n2t;
    let expected = n1t * (n + T::one()) * T::half();
    let var = n1t * n2t / T::of(12.0) * (n + T::one() - ties / (n * (n - T::one())));
    if !(var > T::zero()) {
        return TestResult::failed(MethodId::Wilcoxon, T::nan(), "all values tied");
    }
    let diff = w - expected;
    let corrected = if diff.abs() <= T::half() {
        T::zero()
    } else {
        diff - T::half() * diff.signum()
    };
    let z = corrected / var.sqrt();
    let p = erfc(z.abs().as_f64() / std::f64::consts::SQRT_2).min(1.0);
    TestResult::ok(MethodId::Wilcoxon, z, T::of(p)).with_diag("rank_sum", w)
}

/// Two-sided rank-sum test of `y1` against `y2`; the statistic is the
/// continuity-corrected z (positive when `y1` tends to be larger).
pub fn wilcoxon_rank_sum<T: Scalar>(y1: &[T], y2: &[T]) -> TestResult<T> {
    if y1.is_empty() || y2.is_empty() {
        return TestResult::failed(MethodId::Wilcoxon, T::nan(), "empty group");
    }
    let pooled: Vec<T> = y1.iter().chain(y2).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let w = ranks[..y1.len()].iter().copied().sum::<T>();
    rank_sum_result(w, y1.len(), y2.len(), ties)
}

/// Same test on ordered categories given as a 2 x K table (row 0 is `y1`).
pub fn wilcoxon_rank_sum_table<T: Scalar>(counts: &ContingencyTable) -> TestResult<T> {
    let n1 = counts.row_sum(0) as usize;
    let n2 = counts.row_sum(1) as usize;
    if n1 == 0 || n2 == 0 {
        return TestResult::failed(MethodId::Wilcoxon, T::nan(), "empty group");
    }
    let mut below = 0u64;
    let mut w = T::zero();
    let mut ties = T::zero();
    for k in 0..counts.categories() {
        let c = counts.col_sum(k);
        let midrank = T::of(below as f64) + T::of((c + 1) as f64) * T::half();
        w += T::of(counts.row(0)[k] as f64) * midrank;
        let t = T::of(c as f64);
        ties += t * t * t - t;
        below += c;
    }
    rank_sum_result(w, n1, n2, ties)
}
