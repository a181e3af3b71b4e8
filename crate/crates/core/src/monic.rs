//! Monic polynomials over the complex scalars, simultaneous root finding,
//! and the generalized discriminants used to count distinct roots.
//!
//! Coefficients follow the elementary-symmetric sign convention
//! `P(z) = z^n + sum_j (-1)^j a_j z^(n-j)`, so `a_j` is the j-th elementary
//! symmetric function of the roots.

use crate::C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RootError {
    #[error("root iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("roots failed to reproduce the coefficients (coefficient error {error:.3e})")]
    ReconstructionFailed { error: f64 },
}

/// Tuning knobs for [`MonicPoly::poly_roots`].
#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    /// Residual target relative to the coefficient scale.
    pub root_tol: f64,
    pub max_iterations: usize,
    /// Allowed coefficient error when reconstructing from the roots.
    pub reconstruct_tol: f64,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions {
            root_tol: 1e-12,
            max_iterations: 200,
            reconstruct_tol: 1e-8,
        }
    }
}

/// Monic polynomial stored through its elementary symmetric coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonicPoly {
    a: Vec<C64>,
}

impl MonicPoly {
    pub fn new(a: Vec<C64>) -> Self {
        MonicPoly { a }
    }

    pub fn degree(&self) -> usize {
        self.a.len()
    }

    /// `a_j` for `j = 1..=n`.
    pub fn a(&self, j: usize) -> C64 {
        assert!(j >= 1 && j <= self.a.len());
        self.a[j - 1]
    }

    pub fn coefficients(&self) -> &[C64] {
        &self.a
    }

    /// Build the polynomial with the given root multiset.
    pub fn from_roots(roots: &[C64]) -> Self {
        let mut e = vec![C64::ZERO; roots.len() + 1];
        e[0] = C64::new(1.0, 0.0);
        for (k, &r) in roots.iter().enumerate() {
            for j in (1..=k + 1).rev() {
                e[j] = e[j] + r * e[j - 1];
            }
        }
        MonicPoly { a: e[1..].to_vec() }
    }

    /// Coefficients of `z^0 .. z^n` in ascending powers.
    pub fn standard_coeffs(&self) -> Vec<C64> {
        let n = self.a.len();
        let mut c = vec![C64::ZERO; n + 1];
        c[n] = C64::new(1.0, 0.0);
        for j in 1..=n {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            c[n - j] = self.a[j - 1] * C64::new(sign, 0.0);
        }
        c
    }

    pub fn eval(&self, z: C64) -> C64 {
        let c = self.standard_coeffs();
        let mut acc = C64::ZERO;
        for &ck in c.iter().rev() {
            acc = acc * z + ck;
        }
        acc
    }

    /// Horner evaluation returning the value, the derivative, and the
    /// magnitude sum `sum_k |c_k| |z|^k` that bounds the evaluation noise.
    fn eval_with_derivative(c: &[C64], z: C64) -> (C64, C64, f64) {
        let mut p = C64::ZERO;
        let mut dp = C64::ZERO;
        let mut b = 0.0f64;
        let zn = z.norm();
        for &ck in c.iter().rev() {
            dp = dp * z + p;
            p = p * z + ck;
            b = b * zn + ck.norm();
        }
        (p, dp, b)
    }

    /// All roots with multiplicity, by Aberth-Ehrlich simultaneous
    /// iteration seeded on a circle scaled to the root bound.
    pub fn poly_roots(&self, opts: &RootOptions) -> Result<Vec<C64>, RootError> {
        let mut work = self.a.clone();
        let mut zeros = 0usize;
        // peel off exact roots at the origin first
        while work.last().is_some_and(|c| c.norm() == 0.0) {
            work.pop();
            zeros += 1;
        }
        let mut roots = vec![C64::ZERO; zeros];
        let n = work.len();
        if n == 0 {
            return Ok(roots);
        }
        if n == 1 {
            roots.push(work[0]);
            return Ok(roots);
        }

        let reduced = MonicPoly { a: work.clone() };
        let c = reduced.standard_coeffs();
        let scale = work.iter().map(|a| a.norm()).fold(1.0, f64::max);

        // Fujiwara-style bound on the root modulus
        let radius = 2.0
            * work
                .iter()
                .enumerate()
                .map(|(i, a)| a.norm().powf(1.0 / (i + 1) as f64))
                .fold(0.0, f64::max);
        let radius = radius.max(1e-3);

        let mut z: Vec<C64> = (0..n)
            .map(|i| {
                let theta = 2.0 * std::f64::consts::PI * i as f64 / n as f64 + 0.4;
                let r = radius * (1.0 + 0.05 * i as f64 / n as f64);
                C64::new(r * theta.cos(), r * theta.sin())
            })
            .collect();

        // Per-root stopping: the value has reached the floating-point noise
        // floor of its own evaluation. The coarser coefficient-scale target
        // is kept as a fallback acceptance so well-scaled problems cannot be
        // rejected for hovering slightly above the noise floor.
        let noise = |b: f64| 1e-13 * b;
        let tol = opts.root_tol * scale;
        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        for iter in 0..opts.max_iterations {
            iterations = iter + 1;
            let mut worst_excess = 0.0f64;
            let snapshot = z.clone();
            for i in 0..n {
                let (p, dp, b) = Self::eval_with_derivative(&c, snapshot[i]);
                worst_excess = worst_excess.max(p.norm() / noise(b).max(1e-300));
                if p.norm() <= noise(b) {
                    continue;
                }
                let q = if dp.norm() == 0.0 {
                    // derivative vanished exactly; nudge off the stationary point
                    z[i] += C64::new(1e-8 * (1.0 + snapshot[i].norm()), 1e-8);
                    continue;
                } else {
                    p / dp
                };
                let mut s = C64::ZERO;
                for (j, &zj) in snapshot.iter().enumerate() {
                    if j != i {
                        let d = snapshot[i] - zj;
                        if d.norm() > 0.0 {
                            s += C64::new(1.0, 0.0) / d;
                        }
                    }
                }
                let denom = C64::new(1.0, 0.0) - q * s;
                let w = if denom.norm() < 1e-300 { q } else { q / denom };
                z[i] = snapshot[i] - w;
            }
            if worst_excess <= 1.0 {
                residual = 0.0;
                break;
            }
        }
        if residual > 0.0 {
            // fall back to the coefficient-scale acceptance
            residual = z
                .iter()
                .map(|&zi| Self::eval_with_derivative(&c, zi).0.norm())
                .fold(0.0, f64::max);
            if residual > tol {
                return Err(RootError::NoConvergence {
                    iterations,
                    residual,
                });
            }
        }

        roots.extend(z);
        let rebuilt = MonicPoly::from_roots(&roots);
        let err = rebuilt
            .a
            .iter()
            .zip(&self.a)
            .map(|(u, v)| (u - v).norm())
            .fold(0.0, f64::max);
        if err > opts.reconstruct_tol * scale {
            return Err(RootError::ReconstructionFailed { error: err });
        }
        Ok(roots)
    }
}

/// `Delta_k`: sum over k-element subsets of the squared Vandermonde of the
/// chosen roots. `Delta_1` is the number of roots by convention.
pub fn delta_k(roots: &[C64], k: usize) -> C64 {
    let n = roots.len();
    assert!(k >= 1 && k <= n);
    if k == 1 {
        return C64::new(n as f64, 0.0);
    }
    let mut total = C64::ZERO;
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let mut prod = C64::new(1.0, 0.0);
        'subset: for p in 0..k {
            for q in (p + 1)..k {
                let d = roots[idx[p]] - roots[idx[q]];
                prod *= d * d;
                if prod.norm() == 0.0 {
                    break 'subset;
                }
            }
        }
        total += prod;
        // advance the combination
        let mut i = k;
        loop {
            if i == 0 {
                return total;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
        }
        idx[i] += 1;
        for j in (i + 1)..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

pub const DEFAULT_DISTINCT_TOL: f64 = 1e-8;

/// Number of distinct values in the root multiset: the largest `k` whose
/// spread-normalized `Delta_k` stays above `tol`.
pub fn distinct_count(roots: &[C64], tol: f64) -> usize {
    let n = roots.len();
    if n == 0 {
        return 0;
    }
    let mut spread = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            spread = spread.max((roots[i] - roots[j]).norm());
        }
    }
    if spread <= tol {
        return 1;
    }
    for k in (2..=n).rev() {
        let normalizer = spread.powi((k * (k - 1)) as i32);
        if delta_k(roots, k).norm() / normalizer > tol {
            return k;
        }
    }
    1
}
