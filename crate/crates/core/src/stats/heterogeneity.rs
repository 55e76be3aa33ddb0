//! Between-study variance estimators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tau2Method {
    /// DerSimonian-Laird moment estimator.
    Dl,
    /// Sidik-Jonkman two-step estimator.
    Sj,
}

pub fn tau2_estimate<T: Scalar>(effects: &[T], variances: &[T], method: Tau2Method) -> Result<T> {
    let k = effects.len();
    if k != variances.len() {
        return Err(Error::input("effects and variances differ in length"));
    }
    if k < 2 {
        return Err(Error::input("need at least two studies"));
    }
    if variances.iter().any(|&v| !(v > T::zero())) {
        return Err(Error::input("study variances must be positive"));
    }
    let df = T::of_usize(k - 1);
    Ok(match method {
        Tau2Method::Dl => {
            let w: Vec<T> = variances.iter().map(|&v| v.recip()).collect();
            let sw = w.iter().copied().sum::<T>();
            let sw2 = w.iter().map(|&x| x * x).sum::<T>();
            let mean = weighted_mean(effects, &w);
            let q = weighted_ss(effects, &w, mean);
            let c = sw - sw2 / sw;
            ((q - df) / c).max(T::zero())
        }
        Tau2Method::Sj => {
            let kt = T::of_usize(k);
            let ybar = effects.iter().copied().sum::<T>() / kt;
            let tau0 = effects.iter().map(|&y| (y - ybar) * (y - ybar)).sum::<T>() / kt;
            if tau0 == T::zero() {
                return Ok(T::zero());
            }
            let w: Vec<T> = variances
                .iter()
                .map(|&v| (v / tau0 + T::one()).recip())
                .collect();
            let mean = weighted_mean(effects, &w);
            weighted_ss(effects, &w, mean) / df
        }
    })
}

fn weighted_mean<T: Scalar>(y: &[T], w: &[T]) -> T {
    y.iter().zip(w).map(|(&y, &w)| w * y).sum::<T>() / w.iter().copied().sum::<T>()
}

fn weighted_ss<T: Scalar>(y: &[T], w: &[T], center: T) -> T {
    y.iter()
        .zip(w)
        .map(|(&y, &w)| w * (y - center) * (y - center))
        .sum::<T>()
}
