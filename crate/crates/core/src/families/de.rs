//! Negative-binomial RNA-Seq counts with differentially expressed genes.

use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeConfig {
    pub n_obs: usize,
    pub genes: usize,
    pub p_de: f64,
    pub p_up: f64,
    pub min_fc: f64,
    pub lambda_fc: f64,
    pub mu: Vec<f64>,
    pub phi: Vec<f64>,
}

impl DeConfig {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_obs: usize,
        p_de: f64,
        p_up: f64,
        min_fc: f64,
        lambda_fc: f64,
        mu: Vec<f64>,
        phi: Vec<f64>,
    ) -> Result<Self> {
        if n_obs < 2 || !n_obs.is_multiple_of(2) {
            return Err(Error::input(format!(
                "n_obs must be even and >= 2, got {n_obs}"
            )));
        }
        if !(0.0..=1.0).contains(&p_de) || !(0.0..=1.0).contains(&p_up) {
            return Err(Error::input("p_DE and p_up must lie in [0, 1]"));
        }
        if !(min_fc > 1.0) {
            return Err(Error::input(format!("minFC must exceed 1, got {min_fc}")));
        }
        if !(lambda_fc > 0.0) {
            return Err(Error::input(format!(
                "lambda_FC must be positive, got {lambda_fc}"
            )));
        }
        if mu.len() != phi.len() {
            return Err(Error::input("mu and phi differ in length"));
        }
        if mu
            .iter()
            .chain(&phi)
            .any(|v| !(*v >= 0.0) || !v.is_finite())
        {
            return Err(Error::input(
                "means and dispersions must be finite and >= 0",
            ));
        }
        Ok(Self {
            n_obs,
            genes: mu.len(),
            p_de,
            p_up,
            min_fc,
            lambda_fc,
            mu,
            phi,
        })
    }

    pub fn n_de(&self) -> usize {
        (self.p_de * self.genes as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldChanges {
    pub fc: Vec<f64>,
    pub de: Vec<bool>,
    pub up: Vec<bool>,
}

/// (minFC + randFC) for upregulated genes, its reciprocal for downregulated ones.
pub fn fold_change(min_fc: f64, rand_fc: f64, upregulated: bool) -> f64 {
    let fc = min_fc + rand_fc;
    if upregulated {
        fc
    } else {
        1.0 / fc
    }
}

pub fn assign_fold_changes<R: Rng + ?Sized>(config: &DeConfig, rng: &mut R) -> FoldChanges {
    let g = config.genes;
    let n_de = config.n_de();
    let n_up = (config.p_up * n_de as f64).round() as usize;
    let mut out = FoldChanges {
        fc: vec![1.0; g],
        de: vec![false; g],
        up: vec![false; g],
    };
    let rand_fc = Exp::new(config.lambda_fc).expect("lambda_FC > 0");
    // sampled order is uniform, so the first n_up picks are a uniform subset
    for (rank, gene) in index::sample(rng, g, n_de).into_iter().enumerate() {
        let up = rank < n_up;
        out.de[gene] = true;
        out.up[gene] = up;
        out.fc[gene] = fold_change(config.min_fc, rand_fc.sample(rng), up);
    }
    out
}

/// Gene-major count matrix: `counts[gene * n_samples + sample]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    pub n_samples: usize,
    pub n_genes: usize,
    pub counts: Vec<u64>,
    /// Group label per sample, 1 or 2.
    pub groups: Vec<u8>,
}

impl CountMatrix {
    pub fn gene(&self, g: usize) -> &[u64] {
        &self.counts[g * self.n_samples..(g + 1) * self.n_samples]
    }
}

/// NB draw with mean `m` and variance m + phi m^2 via the gamma-Poisson mixture.
pub fn draw_negative_binomial<R: Rng + ?Sized>(m: f64, phi: f64, rng: &mut R) -> u64 {
    assert!(m >= 0.0, "negative NB mean {m}");
    if m == 0.0 {
        return 0;
    }
    let lambda = if phi > 0.0 {
        Gamma::new(1.0 / phi, m * phi)
            .expect("positive shape and scale")
            .sample(rng)
    } else {
        m
    };
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("positive rate").sample(rng) as u64
}

/// Group 1 (first n/2 samples) draws NB(mu FC, phi), group 2 draws NB(mu, phi).
pub fn sample_counts<R: Rng + ?Sized>(config: &DeConfig, fc: &[f64], rng: &mut R) -> CountMatrix {
    assert_eq!(fc.len(), config.genes, "fold-change vector length");
    let n = config.n_obs;
    let half = n / 2;
    let mut counts = Vec::with_capacity(n * config.genes);
    for ((&mu, &phi), &f) in config.mu.iter().zip(&config.phi).zip(fc).take(config.genes) {
        for s in 0..n {
            let m = if s < half { mu * f } else { mu };
            counts.push(draw_negative_binomial(m, phi, rng));
        }
    }
    CountMatrix {
        n_samples: n,
        n_genes: config.genes,
        counts,
        groups: (0..n).map(|s| if s < half { 1 } else { 2 }).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct ExpressionRow {
    #[allow(dead_code)]
    gene_id: String,
    mean: f64,
    dispersion: f64,
}

/// Per-gene mean/dispersion estimates of one real dataset, after filtering
/// out low-expression genes.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionTable {
    pub mean: Vec<f64>,
    pub dispersion: Vec<f64>,
    pub median_dispersion: f64,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl ExpressionTable {
    /// Reads a `gene_id,mean,dispersion` CSV and keeps genes with mean above `mean_floor`.
    pub fn load(path: &Path, mean_floor: f64) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::input(format!("{}: {other:?}", path.display())),
        })?;
        let mut mean = Vec::new();
        let mut dispersion = Vec::new();
        for row in rdr.deserialize() {
            let row: ExpressionRow = row?;
            if row.mean > mean_floor {
                mean.push(row.mean);
                dispersion.push(row.dispersion);
            }
        }
        if mean.is_empty() {
            return Err(Error::InsufficientRows {
                available: 0,
                required: 1,
            });
        }
        let median_dispersion = median(&dispersion);
        Ok(Self {
            mean,
            dispersion,
            median_dispersion,
        })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Uniform draw of `genes` rows without replacement.
    pub fn draw<R: Rng + ?Sized>(&self, genes: usize, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
        if genes > self.len() {
            return Err(Error::InsufficientRows {
                available: self.len(),
                required: genes,
            });
        }
        let picks = index::sample(rng, self.len(), genes);
        Ok(picks
            .into_iter()
            .map(|i| (self.mean[i], self.dispersion[i]))
            .unzip())
    }
}

/// Filtered mean/dispersion vectors of length `genes` and the median
/// dispersion of the filtered file.
pub fn load_expression_params<R: Rng + ?Sized>(
    path: &Path,
    genes: usize,
    mean_floor: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let table = ExpressionTable::load(path, mean_floor)?;
    let (mu, phi) = table.draw(genes, rng)?;
    Ok((mu, phi, table.median_dispersion))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn cfg(genes: usize, p_de: f64, p_up: f64) -> DeConfig {
        DeConfig::new(6, p_de, p_up, 1.5, 1.0, vec![10.0; genes], vec![0.1; genes]).unwrap()
    }

    #[test]
    fn no_de_genes() {
        let fc = assign_fold_changes(&cfg(100, 0.0, 0.5), &mut seeded(1));
        assert!(fc.fc.iter().all(|&f| f == 1.0));
        assert!(fc.de.iter().all(|&d| !d));
    }

    #[test]
    fn fold_change_formula() {
        assert!((fold_change(1.5, 0.3, true) - 1.8).abs() < 1e-15);
        assert!((fold_change(1.5, 0.3, false) - 1.0 / 1.8).abs() < 1e-15);
    }

    #[test]
    fn de_counts_are_exact() {
        let c = cfg(10_000, 0.3, 0.5);
        let fc = assign_fold_changes(&c, &mut seeded(2));
        assert_eq!(fc.de.iter().filter(|&&d| d).count(), 3000);
        assert_eq!(fc.up.iter().filter(|&&u| u).count(), 1500);
        for g in 0..c.genes {
            assert_eq!(fc.fc[g] > 1.0, fc.up[g]);
            if fc.de[g] && !fc.up[g] {
                assert!(fc.fc[g] < 1.0);
                assert!((fc.fc[g] * (1.0 / fc.fc[g]) - 1.0).abs() < 1e-15);
            }
            if !fc.de[g] {
                assert_eq!(fc.fc[g], 1.0);
            }
        }
    }

    #[test]
    fn sample_counts_shape() {
        let c = cfg(50, 0.1, 0.5);
        let fc = assign_fold_changes(&c, &mut seeded(3));
        let m = sample_counts(&c, &fc.fc, &mut seeded(4));
        assert_eq!(m.counts.len(), 300);
        assert_eq!(m.groups, vec![1, 1, 1, 2, 2, 2]);
        assert_eq!(m.gene(49).len(), 6);
    }

    fn moments(m: f64, phi: f64, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = seeded(seed);
        let xs: Vec<f64> = (0..n)
            .map(|_| draw_negative_binomial(m, phi, &mut rng) as f64)
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (mean, var)
    }

    #[test]
    fn poisson_limit() {
        let (mean, var) = moments(5.0, 0.0, 10_000, 5);
        assert!((mean - 5.0).abs() < 0.1);
        assert!((var / 5.0 - 1.0).abs() < 0.1);
    }

    #[test]
    fn nb_variance_identity() {
        let (mean, var) = moments(100.0, 0.25, 100_000, 6);
        assert!((mean / 100.0 - 1.0).abs() < 0.02);
        assert!((var / 2600.0 - 1.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn group_one_mean_scaled_by_fc() {
        let c = DeConfig::new(20_000, 1.0, 1.0, 1.5, 1.0, vec![50.0], vec![0.1]).unwrap();
        let m = sample_counts(&c, &[2.0], &mut seeded(7));
        let g = m.gene(0);
        let mean1 = g[..10_000].iter().sum::<u64>() as f64 / 10_000.0;
        let mean2 = g[10_000..].iter().sum::<u64>() as f64 / 10_000.0;
        assert!((mean1 / 100.0 - 1.0).abs() < 0.02);
        assert!((mean2 / 50.0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn expression_loading_filters_and_draws() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(
            &path,
            "gene_id,mean,dispersion\ng1,5,9.0\ng2,20,0.1\ng3,30,0.3\ng4,40,0.2\n",
        )
        .unwrap();
        let t = ExpressionTable::load(&path, 10.0).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.median_dispersion, 0.2);
        let (mu, phi, med) = load_expression_params(&path, 2, 10.0, &mut seeded(1)).unwrap();
        assert_eq!((mu.len(), phi.len(), med), (2, 2, 0.2));
        assert!(mu.iter().all(|&m| m >= 10.0));
        assert!(matches!(
            load_expression_params(&path, 4, 10.0, &mut seeded(1)),
            Err(Error::InsufficientRows {
                available: 3,
                required: 4
            })
        ));
        assert!(ExpressionTable::load(&path, 1e9).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(DeConfig::new(5, 0.1, 0.5, 1.5, 1.0, vec![1.0], vec![0.1]).is_err());
        assert!(DeConfig::new(6, 1.1, 0.5, 1.5, 1.0, vec![1.0], vec![0.1]).is_err());
        assert!(DeConfig::new(6, 0.1, 0.5, 1.0, 1.0, vec![1.0], vec![0.1]).is_err());
        assert!(DeConfig::new(6, 0.1, 0.5, 1.5, 1.0, vec![1.0, 2.0], vec![0.1]).is_err());
        assert!(DeConfig::new(6, 0.1, 0.5, 1.5, 1.0, vec![-1.0], vec![0.1]).is_err());
    }
}
