//! Two-arm trial with an ordinal outcome.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::table::ContingencyTable;

/// Published proportions may not sum to one because of rounding; sums within
/// this distance of one are rescaled.
pub const SUM_TOLERANCE: f64 = 0.03;

/// Rescales a probability tuple to sum to one.
pub fn normalize_probabilities(p: &[f64]) -> Result<Vec<f64>> {
    if p.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::input(format!(
            "probabilities must be finite and >= 0: {p:?}"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::input(format!(
            "probabilities sum to {sum}, more than {SUM_TOLERANCE} away from 1"
        )));
    }
    Ok(p.iter().map(|v| v / sum).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalTwoArmConfig {
    pub n_obs: usize,
    pub pi1: Vec<f64>,
    pub pi2: Vec<f64>,
}

impl OrdinalTwoArmConfig {
    pub fn new(n_obs: usize, pi1: &[f64], pi2: &[f64]) -> Result<Self> {
        if n_obs < 2 || !n_obs.is_multiple_of(2) {
            return Err(Error::input(format!(
                "n_obs must be even and >= 2, got {n_obs}"
            )));
        }
        if pi1.len() != pi2.len() {
            return Err(Error::input("pi1 and pi2 differ in length"));
        }
        if pi1.len() < 2 {
            return Err(Error::input("need at least two categories"));
        }
        Ok(Self {
            n_obs,
            pi1: normalize_probabilities(pi1)?,
            pi2: normalize_probabilities(pi2)?,
        })
    }

    pub fn categories(&self) -> usize {
        self.pi1.len()
    }

    pub fn per_group(&self) -> usize {
        self.n_obs / 2
    }
}

/// Individual-level ordinal data: categories `y` in 1..=K, groups `x` in {1,2}.
#[derive(Debug, Clone, PartialEq)]
pub struct OrdinalSample {
    pub y: Vec<usize>,
    pub x: Vec<u8>,
    pub k: usize,
}

impl OrdinalSample {
    pub fn table(&self) -> ContingencyTable {
        ContingencyTable::from_observations(&self.y, &self.x, self.k)
            .expect("sampler emits in-range categories")
    }
}

fn draw_category<R: Rng + ?Sized>(cumulative: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    // last category absorbs floating round-off in the cumulative sum
    cumulative
        .iter()
        .position(|&c| u < c)
        .unwrap_or(cumulative.len() - 1)
        + 1
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    p.iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

/// Draws n_obs/2 individuals per group from Multinomial(1, pi_g).
pub fn sample_ordinal<R: Rng + ?Sized>(config: &OrdinalTwoArmConfig, rng: &mut R) -> OrdinalSample {
    let m = config.per_group();
    let mut y = Vec::with_capacity(config.n_obs);
    let mut x = Vec::with_capacity(config.n_obs);
    for (g, pi) in [(1u8, &config.pi1), (2u8, &config.pi2)] {
        let cum = cumulative(pi);
        for _ in 0..m {
            y.push(draw_category(&cum, rng));
            x.push(g);
        }
    }
    OrdinalSample {
        y,
        x,
        k: config.categories(),
    }
}

/// Same distribution as [`sample_ordinal`], tabulated directly.
pub fn sample_ordinal_table<R: Rng + ?Sized>(
    config: &OrdinalTwoArmConfig,
    rng: &mut R,
) -> ContingencyTable {
    let k = config.categories();
    let m = config.per_group();
    let mut rows = [vec![0u64; k], vec![0u64; k]];
    for (row, pi) in rows.iter_mut().zip([&config.pi1, &config.pi2]) {
        let cum = cumulative(pi);
        for _ in 0..m {
            row[draw_category(&cum, rng) - 1] += 1;
        }
    }
    let [a, b] = rows;
    ContingencyTable::new(a, b).expect("rows share K")
}

/// Maximum-likelihood category proportions per group.
pub fn estimate_ordinal_probs<T: Scalar>(counts: &ContingencyTable) -> Result<(Vec<T>, Vec<T>)> {
    let est = |g: usize| -> Result<Vec<T>> {
        let total = counts.row_sum(g);
        if total == 0 {
            return Err(Error::input(format!("group {} has no observations", g + 1)));
        }
        let total = T::of(total as f64);
        Ok(counts
            .row(g)
            .iter()
            .map(|&c| T::of(c as f64) / total)
            .collect())
    };
    Ok((est(0)?, est(1)?))
}

/// P(Y1 > Y2) + P(Y1 = Y2) / 2 together with its deviation from one half.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeEffect<T> {
    pub value: T,
    pub deviation: T,
}

pub fn relative_effect<T: Scalar>(pi1: &[T], pi2: &[T]) -> Result<RelativeEffect<T>> {
    if pi1.len() != pi2.len() {
        return Err(Error::input("probability tuples differ in length"));
    }
    if pi1 == pi2 {
        // exact by symmetry; the running sum can be off by an ulp
        return Ok(RelativeEffect {
            value: T::half(),
            deviation: T::zero(),
        });
    }
    let mut below2 = T::zero(); // P(Y2 < k) accumulated while scanning k
    let mut value = T::zero();
    for (p1, p2) in pi1.iter().zip(pi2) {
        value += *p1 * (below2 + T::half() * *p2);
        below2 += *p2;
    }
    Ok(RelativeEffect {
        value,
        deviation: (value - T::half()).abs(),
    })
}
