//! Rejection-rate power with Monte Carlo standard error.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerEstimate<T> {
    pub power: T,
    pub mcse: T,
    pub n_used: usize,
    pub n_failed: usize,
}

impl<T: Scalar> PowerEstimate<T> {
    pub fn failure_rate(&self) -> T {
        T::of_usize(self.n_failed) / T::of_usize(self.n_used + self.n_failed)
    }
}

/// MCSE of a proportion: sqrt(p (1 - p) / n).
pub fn proportion_mcse<T: Scalar>(p: T, n: usize) -> T {
    (p * (T::one() - p) / T::of_usize(n)).sqrt()
}

/// Power over non-failed repetitions; `None` entries are failures.
pub fn power_and_mcse<T: Scalar>(p_values: &[Option<T>], alpha: T) -> Result<PowerEstimate<T>> {
    if p_values.is_empty() {
        return Err(Error::input("no repetitions"));
    }
    let used: Vec<T> = p_values.iter().flatten().copied().collect();
    if used.is_empty() {
        return Err(Error::AllFailed(p_values.len()));
    }
    let rejections = used.iter().filter(|&&p| p <= alpha).count();
    let power = T::of_usize(rejections) / T::of_usize(used.len());
    Ok(PowerEstimate {
        power,
        mcse: proportion_mcse(power, used.len()),
        n_used: used.len(),
        n_failed: p_values.len() - used.len(),
    })
}
