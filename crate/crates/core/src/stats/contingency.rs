//! Pearson chi-square and Monte Carlo Fisher tests on 2 x K tables.

use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{MethodId, TestResult};
use crate::rng::seeded;
use crate::scalar::Scalar;
use crate::table::ContingencyTable;

/// Pearson statistic against margin-based expected counts, no continuity
/// correction. All-zero columns are dropped before testing.
pub fn chi_square_test<T: Scalar>(counts: &ContingencyTable) -> TestResult<T> {
    let cols = counts.nonzero_columns();
    let dropped = counts.categories() - cols.len();
    let t = counts.select_columns(&cols);
    if cols.len() < 2 || t.row_sum(0) == 0 || t.row_sum(1) == 0 {
        return TestResult::failed(MethodId::Chisq, T::nan(), "degenerate table")
            .with_diag("dropped_columns", dropped);
    }
    let total = T::of(t.total() as f64);
    let mut stat = T::zero();
    let mut low_expected = 0usize;
    for g in 0..2 {
        let row = T::of(t.row_sum(g) as f64);
        for (k, &obs) in t.row(g).iter().enumerate() {
            let expected = row * T::of(t.col_sum(k) as f64) / total;
            if expected < T::of(5.0) {
                low_expected += 1;
            }
            let diff = T::of(obs as f64) - expected;
            stat += diff * diff / expected;
        }
    }
    let df = (cols.len() - 1) as f64;
    let p = ChiSquared::new(df)
        .expect("df >= 1")
        .sf(stat.as_f64().max(0.0));
    TestResult::ok(MethodId::Chisq, stat, T::of(p.clamp(0.0, 1.0)))
        .with_diag("df", df)
        .with_diag("dropped_columns", dropped)
        .with_diag("expected_below_5", low_expected)
}

pub(crate) fn log_factorials(n: usize) -> Vec<f64> {
    let mut lf = Vec::with_capacity(n + 1);
    lf.push(0.0);
    for i in 1..=n {
        lf.push(lf[i - 1] + (i as f64).ln());
    }
    lf
}

/// Sum over columns of ln C(col_k, x_k); the table's log-probability up to a
/// margin-only constant.
fn table_score(lf: &[f64], col_sums: &[u64], first_row: &[u64]) -> f64 {
    col_sums
        .iter()
        .zip(first_row)
        .map(|(&c, &x)| lf[c as usize] - lf[x as usize] - lf[(c - x) as usize])
        .sum()
}

/// One hypergeometric draw (successes among `draws` taken from `pop` items,
/// `succ` of them successes) by inversion, searching outward from the mode.
fn hypergeometric<R: Rng + ?Sized>(
    lf: &[f64],
    pop: u64,
    succ: u64,
    draws: u64,
    rng: &mut R,
) -> u64 {
    let fail = pop - succ;
    let lo = draws.saturating_sub(fail);
    let hi = draws.min(succ);
    if lo == hi {
        return lo;
    }
    let mode =
        (((draws + 1) as f64 * (succ + 1) as f64 / (pop + 2) as f64).floor() as u64).clamp(lo, hi);
    let ln_pmf = |x: u64| {
        let (x, s, f, d, n) = (
            x as usize,
            succ as usize,
            fail as usize,
            draws as usize,
            pop as usize,
        );
        lf[s] - lf[x] - lf[s - x] + lf[f] - lf[d - x] - lf[f + x - d] - (lf[n] - lf[d] - lf[n - d])
    };
    let p_mode = ln_pmf(mode).exp();
    let mut u: f64 = rng.random();
    if u <= p_mode {
        return mode;
    }
    u -= p_mode;
    // ratio p(x+1)/p(x) = (succ-x)(draws-x) / ((x+1)(fail-draws+x+1))
    let (mut down, mut p_down) = (mode, p_mode);
    let (mut up, mut p_up) = (mode, p_mode);
    loop {
        let mut moved = false;
        if down > lo {
            let x = down - 1;
            p_down *= ((x + 1) as f64 * (fail + x + 1 - draws) as f64)
                / ((succ - x) as f64 * (draws - x) as f64);
            down = x;
            moved = true;
            if u <= p_down {
                return down;
            }
            u -= p_down;
        }
        if up < hi {
            let x = up;
            p_up *= ((succ - x) as f64 * (draws - x) as f64)
                / ((x + 1) as f64 * (fail + x + 1 - draws) as f64);
            up = x + 1;
            moved = true;
            if u <= p_up {
                return up;
            }
            u -= p_up;
        }
        if !moved {
            // rounding left a sliver of mass unassigned
            return mode;
        }
    }
}

/// Monte Carlo Fisher test conditional on both margins.
///
/// Tables are drawn from the multivariate hypergeometric law of the first row
/// given the margins, which is the law induced by permuting group labels over
/// the pooled outcomes. p = (1 + #{score <= observed}) / (B + 1).
pub fn fisher_exact_mc<T: Scalar>(counts: &ContingencyTable, b: usize, seed: u64) -> TestResult<T> {
    let cols = counts.nonzero_columns();
    let t = counts.select_columns(&cols);
    let r1 = t.row_sum(0);
    if cols.len() < 2 || r1 == 0 || t.row_sum(1) == 0 {
        // the margins admit exactly one table
        return TestResult::ok(MethodId::FisherMc, T::zero(), T::one())
            .with_diag("unique_table", true);
    }
    let n = t.total();
    let col_sums: Vec<u64> = (0..cols.len()).map(|k| t.col_sum(k)).collect();
    let lf = log_factorials(n as usize);
    let observed = table_score(&lf, &col_sums, t.row(0));
    let threshold = observed + 1e-7 * observed.abs().max(1.0);

    let mut rng = seeded(seed);
    let mut row = vec![0u64; cols.len()];
    let mut hits = 0usize;
    for _ in 0..b {
        let mut remaining_pop = n;
        let mut remaining_draws = r1;
        let last = cols.len() - 1;
        for k in 0..last {
            let x = if remaining_draws == 0 {
                0
            } else if remaining_draws == remaining_pop {
                col_sums[k]
            } else {
                hypergeometric(&lf, remaining_pop, col_sums[k], remaining_draws, &mut rng)
            };
            row[k] = x;
            remaining_pop -= col_sums[k];
            remaining_draws -= x;
        }
        row[last] = remaining_draws;
        if table_score(&lf, &col_sums, &row) <= threshold {
            hits += 1;
        }
    }
    let p = (1 + hits) as f64 / (b + 1) as f64;
    TestResult::ok(MethodId::FisherMc, T::of(-observed), T::of(p)).with_diag("replicates", b)
}
