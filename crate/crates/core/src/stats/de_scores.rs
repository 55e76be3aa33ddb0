//! Per-gene differential-expression scores; larger means more evidence.

use serde::{Deserialize, Serialize};

use super::rank::wilcoxon_rank_sum;
use crate::error::{Error, Result};
use crate::families::CountMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeScoreMethod {
    /// |pooled-variance t| on log2(count + 1).
    LogT,
    /// |z| of the rank-sum test on raw counts.
    RankSum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneScores<T> {
    pub scores: Vec<T>,
    /// Genes scored 0 because the statistic was undefined.
    pub zero_variance: usize,
}

fn log_t<T: Scalar>(a: &[T], b: &[T]) -> Option<T> {
    let (na, nb) = (T::of_usize(a.len()), T::of_usize(b.len()));
    let ma = a.iter().copied().sum::<T>() / na;
    let mb = b.iter().copied().sum::<T>() / nb;
    let ss = a.iter().map(|&v| (v - ma) * (v - ma)).sum::<T>()
        + b.iter().map(|&v| (v - mb) * (v - mb)).sum::<T>();
    let df = na + nb - T::of(2.0);
    let se = (ss / df * (na.recip() + nb.recip())).sqrt();
    (se > T::zero()).then(|| ((ma - mb) / se).abs())
}

pub fn de_gene_scores<T: Scalar>(
    counts: &CountMatrix,
    method: DeScoreMethod,
) -> Result<GeneScores<T>> {
    let n1 = counts.groups.iter().filter(|&&g| g == 1).count();
    let n2 = counts.groups.iter().filter(|&&g| g == 2).count();
    if n1 == 0 || n2 == 0 || n1 + n2 != counts.n_samples {
        return Err(Error::input("both groups need samples labelled 1 or 2"));
    }
    if method == DeScoreMethod::LogT && n1 + n2 < 3 {
        return Err(Error::input("log-t needs at least three samples"));
    }
    let mut out = GeneScores {
        scores: Vec::with_capacity(counts.n_genes),
        zero_variance: 0,
    };
    let mut a = Vec::with_capacity(n1);
    let mut b = Vec::with_capacity(n2);
    for gene in 0..counts.n_genes {
        a.clear();
        b.clear();
        for (&c, &g) in counts.gene(gene).iter().zip(&counts.groups) {
            let v = match method {
                DeScoreMethod::LogT => T::of(c as f64 + 1.0).log2(),
                DeScoreMethod::RankSum => T::of(c as f64),
            };
            if g == 1 {
                a.push(v)
            } else {
                b.push(v)
            }
        }
        let score = match method {
            DeScoreMethod::LogT => log_t(&a, &b),
            DeScoreMethod::RankSum => {
                let r = wilcoxon_rank_sum(&a, &b);
                (!r.is_failure()).then(|| r.statistic.abs())
            }
        };
        out.scores.push(score.unwrap_or_else(|| {
            out.zero_variance += 1;
            T::zero()
        }));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{draw_negative_binomial, sample_counts, DeConfig};
    use crate::rng::seeded;

    fn matrix(genes: &[Vec<u64>], groups: Vec<u8>) -> CountMatrix {
        CountMatrix {
            n_samples: groups.len(),
            n_genes: genes.len(),
            counts: genes.concat(),
            groups,
        }
    }

    #[test]
    fn constant_gene_scores_zero() {
        let m = matrix(&[vec![4, 4, 4, 4], vec![1, 2, 8, 9]], vec![1, 1, 2, 2]);
        let s = de_gene_scores::<f64>(&m, DeScoreMethod::LogT).unwrap();
        assert_eq!(s.scores[0], 0.0);
        assert_eq!(s.zero_variance, 1);
        assert!(s.scores[1] > 0.0);
        let r = de_gene_scores::<f64>(&m, DeScoreMethod::RankSum).unwrap();
        assert_eq!(r.scores[0], 0.0);
    }

    #[test]
    fn identical_columns_across_groups() {
        let m = matrix(&[vec![3, 7, 3, 7]], vec![1, 1, 2, 2]);
        assert_eq!(
            de_gene_scores::<f64>(&m, DeScoreMethod::LogT)
                .unwrap()
                .scores[0],
            0.0
        );
    }

    #[test]
    fn strong_gene_ranks_top() {
        let n = 20;
        let groups: Vec<u8> = (0..n).map(|i| if i < n / 2 { 1 } else { 2 }).collect();
        let cfg = DeConfig::new(n, 0.0, 0.5, 1.5, 3.0, vec![100.0; 2000], vec![0.1; 2000]).unwrap();
        let mut rng = seeded(5);
        let mut m = sample_counts(&cfg, &vec![1.0; 2000], &mut rng);
        // replace gene 0 with means 10 vs 1000
        for (i, g) in groups.iter().enumerate() {
            let mu = if *g == 1 { 10.0 } else { 1000.0 };
            m.counts[i] = draw_negative_binomial(mu, 0.05, &mut rng);
        }
        for method in [DeScoreMethod::LogT, DeScoreMethod::RankSum] {
            let s = de_gene_scores::<f64>(&m, method).unwrap().scores;
            let above = s.iter().filter(|&&v| v > s[0]).count();
            assert!(above < 20, "{method:?}: {above} genes above");
        }
    }

    /// Null scores against a label-permuted reference: both are draws from
    /// the same null distribution.
    #[test]
    fn null_scores_match_permuted_reference() {
        let cfg = DeConfig::new(20, 0.0, 0.5, 1.5, 3.0, vec![50.0; 2000], vec![0.2; 2000]).unwrap();
        let m = sample_counts(&cfg, &vec![1.0; 2000], &mut seeded(9));
        let mut perm = m.clone();
        perm.groups = (0..20).map(|i| if i % 2 == 0 { 1 } else { 2 }).collect();
        for method in [DeScoreMethod::LogT, DeScoreMethod::RankSum] {
            let mut a = de_gene_scores::<f64>(&m, method).unwrap().scores;
            let mut b = de_gene_scores::<f64>(&perm, method).unwrap().scores;
            a.sort_by(|x, y| x.partial_cmp(y).unwrap());
            b.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let ks = ks_distance(&a, &b);
            assert!(ks < 0.05, "{method:?}: KS {ks}");
        }
    }

    fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
        let (mut i, mut j, mut d) = (0, 0, 0.0f64);
        while i < a.len() && j < b.len() {
            let x = a[i].min(b[j]);
            while i < a.len() && a[i] <= x {
                i += 1;
            }
            while j < b.len() && b[j] <= x {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        d
    }

    #[test]
    fn rejects_bad_groups() {
        let m = matrix(&[vec![1, 2]], vec![1, 1]);
        assert!(de_gene_scores::<f64>(&m, DeScoreMethod::LogT).is_err());
    }
}
