//! Two-level random-effects meta-analysis of standardized mean differences.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaAnalysisConfig {
    pub n_study: usize,
    pub theta: f64,
    pub tau2: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub mu1: Vec<f64>,
    pub sigma2: f64,
}

impl MetaAnalysisConfig {
    pub fn new(
        n_study: usize,
        theta: f64,
        tau2: f64,
        u_min: f64,
        u_max: f64,
        mu1: Vec<f64>,
        sigma2: f64,
    ) -> Result<Self> {
        if n_study == 0 {
            return Err(Error::input("n_study must be positive"));
        }
        if !(tau2 >= 0.0) {
            return Err(Error::input(format!("tau2 must be >= 0, got {tau2}")));
        }
        if !(sigma2 > 0.0) {
            return Err(Error::input(format!("sigma2 must be > 0, got {sigma2}")));
        }
        if !(u_min >= 4.0 && u_min <= u_max) {
            return Err(Error::input(format!(
                "study sizes need 4 <= u_min <= u_max, got [{u_min}, {u_max}]"
            )));
        }
        if mu1.len() != n_study {
            return Err(Error::input(format!(
                "mu1 has {} entries for {n_study} studies",
                mu1.len()
            )));
        }
        Ok(Self {
            n_study,
            theta,
            tau2,
            u_min,
            u_max,
            mu1,
            sigma2,
        })
    }
}

/// Per-study effect estimate and its sampling variance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetaSample {
    pub g: Vec<f64>,
    pub var: Vec<f64>,
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HedgesG<T> {
    pub g: T,
    pub var: T,
}

/// Small-sample correction J(m) = 1 - 3 / (4m - 1).
pub fn small_sample_correction<T: Scalar>(m: T) -> T {
    T::one() - T::of(3.0) / (T::of(4.0) * m - T::one())
}

fn mean_var<T: Scalar>(xs: &[T]) -> (T, T) {
    let n = T::of_usize(xs.len());
    let mean = xs.iter().copied().sum::<T>() / n;
    let ss = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>();
    (mean, ss / (n - T::one()))
}

/// Bias-corrected standardized mean difference (group 2 minus group 1).
pub fn hedges_g<T: Scalar>(y1: &[T], y2: &[T]) -> Result<HedgesG<T>> {
    if y1.len() < 2 || y2.len() < 2 {
        return Err(Error::input("each group needs at least two observations"));
    }
    let (m1, v1) = mean_var(y1);
    let (m2, v2) = mean_var(y2);
    let n1 = T::of_usize(y1.len());
    let n2 = T::of_usize(y2.len());
    let df = n1 + n2 - T::of(2.0);
    let pooled = (((n1 - T::one()) * v1 + (n2 - T::one()) * v2) / df).sqrt();
    if pooled <= T::zero() {
        return Err(Error::input("pooled standard deviation is zero"));
    }
    let d = (m2 - m1) / pooled;
    let j = small_sample_correction(df);
    let var_d = (n1 + n2) / (n1 * n2) + d * d / (T::of(2.0) * df);
    Ok(HedgesG {
        g: j * d,
        var: j * j * var_d,
    })
}

/// Study size from Unif(u_min, u_max), rounded to the nearest even integer, at least 4.
pub fn draw_study_size<R: Rng + ?Sized>(u_min: f64, u_max: f64, rng: &mut R) -> usize {
    let raw = if u_max > u_min {
        Uniform::new_inclusive(u_min, u_max)
            .expect("u_min <= u_max")
            .sample(rng)
    } else {
        u_min
    };
    let even = 2.0 * (raw / 2.0).round();
    (even as usize).max(4)
}

pub fn sample_meta<R: Rng + ?Sized>(config: &MetaAnalysisConfig, rng: &mut R) -> MetaSample {
    let sd = config.sigma2.sqrt();
    let effect = Normal::new(config.theta, config.tau2.sqrt()).expect("tau2 >= 0");
    let mut out = MetaSample::default();
    for i in 0..config.n_study {
        let theta_i = effect.sample(rng);
        let size = draw_study_size(config.u_min, config.u_max, rng);
        let half = size / 2;
        let g1 = Normal::new(config.mu1[i], sd).expect("sd > 0");
        let g2 = Normal::new(config.mu1[i] + theta_i, sd).expect("sd > 0");
        let y1: Vec<f64> = (0..half).map(|_| g1.sample(rng)).collect();
        let y2: Vec<f64> = (0..half).map(|_| g2.sample(rng)).collect();
        let h = hedges_g(&y1, &y2).expect("continuous draws have positive variance");
        out.g.push(h.g);
        out.var.push(h.var);
        out.sizes.push(size);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn identical_means_give_zero() {
        let y1 = [1.0, 2.0, 3.0, 4.0];
        let y2 = [4.0, 3.0, 2.0, 1.0];
        assert_eq!(hedges_g(&y1, &y2).unwrap().g, 0.0);
    }

    #[test]
    fn correction_factor_closed_form() {
        // two groups of 10 with unit pooled SD and mean difference 1
        let base: Vec<f64> = (0..10)
            .map(|i| if i % 2 == 0 { -1.0 } else { 1.0 })
            .collect();
        let (_, v) = mean_var(&base);
        let s = v.sqrt();
        let y1: Vec<f64> = base.iter().map(|x| x / s).collect();
        let y2: Vec<f64> = y1.iter().map(|x| x + 1.0).collect();
        let h = hedges_g(&y1, &y2).unwrap();
        let j18 = 1.0 - 3.0 / (4.0 * 18.0 - 1.0);
        assert!((h.g - j18).abs() < 1e-12);
        let var = j18 * j18 * (20.0 / 100.0 + 1.0 / 36.0);
        assert!((h.var - var).abs() < 1e-12);
    }

    #[test]
    fn null_meta_centered_at_zero() {
        let cfg = MetaAnalysisConfig::new(200, 0.0, 0.0, 20.0, 60.0, vec![0.0; 200], 1.0).unwrap();
        let s = sample_meta(&cfg, &mut seeded(7));
        assert_eq!(s.g.len(), 200);
        let mean = s.g.iter().sum::<f64>() / 200.0;
        assert!(mean.abs() < 0.1);
        assert!(s
            .sizes
            .iter()
            .all(|&n| n % 2 == 0 && (20..=60).contains(&n)));
    }

    #[test]
    fn study_sizes_even_and_at_least_four() {
        let mut rng = seeded(8);
        for _ in 0..1000 {
            let n = draw_study_size(4.0, 9.0, &mut rng);
            assert!(n >= 4 && n.is_multiple_of(2) && n <= 10);
        }
    }

    #[test]
    fn config_validation() {
        assert!(MetaAnalysisConfig::new(2, 0.0, -0.1, 10.0, 20.0, vec![0.0; 2], 1.0).is_err());
        assert!(MetaAnalysisConfig::new(2, 0.0, 0.1, 2.0, 20.0, vec![0.0; 2], 1.0).is_err());
        assert!(MetaAnalysisConfig::new(2, 0.0, 0.1, 30.0, 20.0, vec![0.0; 2], 1.0).is_err());
        assert!(MetaAnalysisConfig::new(2, 0.0, 0.1, 10.0, 20.0, vec![0.0; 3], 1.0).is_err());
        assert!(MetaAnalysisConfig::new(2, 0.0, 0.1, 10.0, 20.0, vec![0.0; 2], 0.0).is_err());
    }
}
