//! Proportional-odds cumulative logit model with a single group effect.
//!
//! logit P(Y <= k | x) = alpha_k - beta x, with x = 1 for group 1 (table row 0)
//! and x = 0 for group 2. Fitted on the grouped table by Newton-Raphson in
//! (a_1, d_2, ..., d_{K-1}, beta) with alpha_1 = a_1 and
//! alpha_k = alpha_{k-1} + exp(d_k), so cutpoints stay strictly increasing.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::linalg::solve;
use super::{MethodId, TestResult};
use crate::scalar::Scalar;
use crate::table::ContingencyTable;

pub const MAX_ITERATIONS: usize = 50;
const MAX_HALVINGS: usize = 40;

fn logistic<T: Scalar>(eta: T) -> T {
    if eta >= T::zero() {
        T::one() / (T::one() + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (T::one() + e)
    }
}

struct Derivs<T> {
    ll: T,
    grad: Vec<T>,
    hess: Vec<T>,
}

/// Log-likelihood with gradient and Hessian in (alpha_1..alpha_{K-1}, beta).
fn derivatives<T: Scalar>(rows: &[Vec<u64>; 2], alpha: &[T], beta: T) -> Derivs<T> {
    let k = rows[0].len();
    let p = k; // K - 1 cutpoints plus beta
    let b_idx = k - 1;
    let mut ll = T::zero();
    let mut grad = vec![T::zero(); p];
    let mut hess = vec![T::zero(); p * p];
    let mut dp = vec![T::zero(); p];
    for (g, row) in rows.iter().enumerate() {
        let x = if g == 0 { T::one() } else { T::zero() };
        for (j, &count) in row.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let n = T::of(count as f64);
            // (F, f, f') at the upper and lower cutpoint, zero outside the range
            let at = |idx: usize| {
                let f = logistic(alpha[idx] - beta * x);
                let d = f * (T::one() - f);
                (f, d, d * (T::one() - T::of(2.0) * f))
            };
            let (fu, du, su) = if j < k - 1 {
                at(j)
            } else {
                (T::one(), T::zero(), T::zero())
            };
            let (fl, dl, sl) = if j > 0 {
                at(j - 1)
            } else {
                (T::zero(), T::zero(), T::zero())
            };
            let prob = fu - fl;
            ll += n * prob.ln();
            dp.iter_mut().for_each(|v| *v = T::zero());
            if j < k - 1 {
                dp[j] += du;
            }
            if j > 0 {
                dp[j - 1] -= dl;
            }
            dp[b_idx] = -x * (du - dl);
            for a in 0..p {
                grad[a] += n * dp[a] / prob;
            }
            // second derivative of prob: f'_u u u^T - f'_l l l^T with
            // u = e_j - x e_beta and l = e_{j-1} - x e_beta
            let mut add_outer = |idx: Option<usize>, s: T| {
                let mut v = vec![T::zero(); p];
                if let Some(i) = idx {
                    v[i] = T::one();
                }
                v[b_idx] -= x;
                for a in 0..p {
                    for c in 0..p {
                        hess[a * p + c] += n * s * v[a] * v[c] / prob;
                    }
                }
            };
            if j < k - 1 {
                add_outer(Some(j), su);
            }
            if j > 0 {
                add_outer(Some(j - 1), -sl);
            }
            for a in 0..p {
                for c in 0..p {
                    hess[a * p + c] -= n * dp[a] * dp[c] / (prob * prob);
                }
            }
        }
    }
    Derivs { ll, grad, hess }
}

fn cutpoints<T: Scalar>(phi: &[T]) -> Vec<T> {
    let m = phi.len() - 1; // number of cutpoints
    let mut alpha = Vec::with_capacity(m);
    alpha.push(phi[0]);
    for i in 1..m {
        let prev = alpha[i - 1];
        alpha.push(prev + phi[i].exp());
    }
    alpha
}

/// Gradient and Hessian with respect to the monotone parameterization.
fn reparameterize<T: Scalar>(phi: &[T], d: &Derivs<T>) -> (Vec<T>, Vec<T>) {
    let p = phi.len();
    let m = p - 1;
    // jac[j][i] = d alpha_j / d phi_i
    let mut jac = vec![T::zero(); p * p];
    for j in 0..m {
        jac[j * p] = T::one();
        for i in 1..=j {
            jac[j * p + i] = phi[i].exp();
        }
    }
    jac[m * p + m] = T::one();
    let mut g = vec![T::zero(); p];
    for i in 0..p {
        for j in 0..p {
            g[i] += jac[j * p + i] * d.grad[j];
        }
    }
    let mut h = vec![T::zero(); p * p];
    for a in 0..p {
        for b in 0..p {
            let mut s = T::zero();
            for j in 0..p {
                for l in 0..p {
                    s += jac[j * p + a] * d.hess[j * p + l] * jac[l * p + b];
                }
            }
            h[a * p + b] = s;
        }
    }
    for i in 1..m {
        let tail = (i..m).map(|j| d.grad[j]).sum::<T>();
        h[i * p + i] += phi[i].exp() * tail;
    }
    (g, h)
}

/// Likelihood-ratio test of beta = 0 on a 2 x K table of ordered categories.
/// The statistic is the LR chi-square; the fitted beta is in the diagnostics.
pub fn po_logistic_test_table<T: Scalar>(counts: &ContingencyTable) -> TestResult<T> {
    let fail = |reason: &str| TestResult::failed(MethodId::PoLogit, T::nan(), reason);
    let cols = counts.nonzero_columns();
    let t = counts.select_columns(&cols);
    let k = cols.len();
    if k < 2 {
        return fail("fewer than two observed categories");
    }
    let (n1, n2) = (t.row_sum(0), t.row_sum(1));
    if n1 == 0 || n2 == 0 {
        return fail("empty group");
    }
    let span = |g: usize| {
        let present: Vec<usize> = (0..k).filter(|&j| t.row(g)[j] > 0).collect();
        (present[0], present[present.len() - 1])
    };
    let ((min0, max0), (min1, max1)) = (span(0), span(1));
    if max0 <= min1 || max1 <= min0 {
        return fail("complete separation").with_diag("iterations", 0);
    }

    let rows = [t.row(0).to_vec(), t.row(1).to_vec()];
    let n = T::of((n1 + n2) as f64);
    let col: Vec<T> = (0..k).map(|j| T::of(t.col_sum(j) as f64)).collect();
    let ll0 = col.iter().map(|&c| c * (c / n).ln()).sum::<T>();

    // start at the intercept-only fit
    let mut phi = Vec::with_capacity(k);
    let mut cum = T::zero();
    let mut prev = T::zero();
    for (j, &c) in col.iter().enumerate().take(k - 1) {
        cum += c;
        let q = cum / n;
        let a = (q / (T::one() - q)).ln();
        phi.push(if j == 0 { a } else { (a - prev).ln() });
        prev = a;
    }
    phi.push(T::zero());

    let tol = T::of(1e-8).max(T::of(100.0) * T::epsilon() * n);
    let mut current = derivatives(&rows, &cutpoints(&phi), phi[k - 1]);
    let mut iterations = 0;
    loop {
        let gmax = current.grad.iter().fold(T::zero(), |m, g| m.max(g.abs()));
        if gmax < tol {
            break;
        }
        if iterations == MAX_ITERATIONS {
            return fail("no convergence")
                .with_diag("iterations", iterations)
                .with_diag("max_gradient", gmax);
        }
        iterations += 1;
        let (g, h) = reparameterize(&phi, &current);
        let neg_h: Vec<T> = h.iter().map(|&v| -v).collect();
        let mut step = solve(neg_h, g.clone()).unwrap_or_default();
        let ascent = step.iter().zip(&g).map(|(&s, &gi)| s * gi).sum::<T>();
        if step.is_empty() || !(ascent > T::zero()) {
            let norm = g.iter().map(|&v| v * v).sum::<T>().sqrt();
            step = g.iter().map(|&v| v / norm.max(T::one())).collect();
        }
        let mut scale = T::one();
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<T> = phi
                .iter()
                .zip(&step)
                .map(|(&p, &s)| p + scale * s)
                .collect();
            let d = derivatives(&rows, &cutpoints(&trial), trial[k - 1]);
            // near the optimum likelihood changes fall below rounding noise
            let slack = T::of(1000.0) * T::epsilon() * current.ll.abs();
            if d.ll.is_finite() && d.ll >= current.ll - slack {
                accepted = Some((trial, d));
                break;
            }
            scale *= T::half();
        }
        match accepted {
            Some((trial, d)) => {
                phi = trial;
                current = d;
            }
            None => {
                return fail("line search failed")
                    .with_diag("iterations", iterations)
                    .with_diag("max_gradient", gmax);
            }
        }
    }

    let beta = phi[k - 1];
    let lrt = (T::of(2.0) * (current.ll - ll0)).max(T::zero());
    let p = ChiSquared::new(1.0).expect("df = 1").sf(lrt.as_f64());
    TestResult::ok(MethodId::PoLogit, lrt, T::of(p.clamp(0.0, 1.0)))
        .with_diag("beta", beta)
        .with_diag("iterations", iterations)
        .with_diag("dropped_columns", counts.categories() - k)
}

/// Same test from raw 1-based categories `y` and group labels `x` in {1, 2}.
pub fn po_logistic_test<T: Scalar>(y: &[usize], x: &[u8], k: usize) -> TestResult<T> {
    match ContingencyTable::from_observations(y, x, k) {
        Ok(t) => po_logistic_test_table(&t),
        Err(e) => TestResult::failed(MethodId::PoLogit, T::nan(), e.to_string()),
    }
}
