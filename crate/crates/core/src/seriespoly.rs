//! Monic polynomials whose coefficients are truncated power series in `t`.
//!
//! The generalized discriminant series `Delta_k` are computed root-free:
//! Newton's identities turn the coefficients into power sums, and the k-th
//! Hankel determinant of the power sums equals the sum over k-element root
//! subsets of the squared Vandermonde.

use crate::series::{Series1, SeriesError};
use crate::{monic::MonicPoly, C64};
use serde::{Deserialize, Serialize};

/// Monic polynomial `z^n + sum_j (-1)^j a_j(t) z^(n-j)` with series
/// coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesPoly {
    a: Vec<Series1>,
}

impl SeriesPoly {
    pub fn new(a: Vec<Series1>) -> Self {
        SeriesPoly { a }
    }

    pub fn degree(&self) -> usize {
        self.a.len()
    }

    /// `a_j(t)` for `j = 1..=n`.
    pub fn a(&self, j: usize) -> &Series1 {
        assert!(j >= 1 && j <= self.a.len());
        &self.a[j - 1]
    }

    pub fn coefficients(&self) -> &[Series1] {
        &self.a
    }

    /// Smallest truncation window among the coefficients.
    pub fn trunc(&self) -> usize {
        self.a.iter().map(Series1::trunc).min().unwrap_or(1)
    }

    pub fn is_exact(&self) -> bool {
        self.a.iter().all(Series1::is_exact)
    }

    /// Specialize the parameter to a number.
    pub fn eval_at(&self, t: C64) -> MonicPoly {
        MonicPoly::new(self.a.iter().map(|s| s.eval(t)).collect())
    }

    /// Monic product of `(z - root_i(t))`.
    pub fn from_root_series(roots: &[Series1], trunc: usize) -> Self {
        let n = roots.len();
        let mut e: Vec<Series1> = (0..=n).map(|_| Series1::zero(trunc)).collect();
        e[0] = Series1::constant(C64::new(1.0, 0.0), trunc);
        for (k, r) in roots.iter().enumerate() {
            for j in (1..=k + 1).rev() {
                e[j] = e[j].add(&r.mul(&e[j - 1]));
            }
        }
        SeriesPoly { a: e[1..].to_vec() }
    }

    /// Ascending standard coefficients `c_0(t) .. c_n(t)` with `c_n = 1`.
    pub fn standard_coeffs(&self) -> Vec<Series1> {
        let n = self.a.len();
        let trunc = self.trunc();
        let mut c: Vec<Series1> = (0..=n).map(|_| Series1::zero(trunc)).collect();
        c[n] = Series1::constant(C64::new(1.0, 0.0), trunc);
        for j in 1..=n {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            c[n - j] = self.a[j - 1].scale(C64::new(sign, 0.0));
        }
        c
    }

    pub fn from_standard_coeffs(mut c: Vec<Series1>) -> Self {
        let n = c.len() - 1;
        let mut a = Vec::with_capacity(n);
        for j in 1..=n {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            a.push(c[n - j].scale(C64::new(sign, 0.0)));
            c[n - j] = Series1::zero(1);
        }
        SeriesPoly { a }
    }

    /// Taylor shift `z -> z + s(t)`.
    pub fn shift_z(&self, s: &Series1) -> SeriesPoly {
        let n = self.a.len();
        let mut c = self.standard_coeffs();
        for i in 0..n {
            for j in (i..n).rev() {
                c[j] = c[j].add(&s.mul(&c[j + 1]));
            }
        }
        SeriesPoly::from_standard_coeffs(c)
    }

    /// Substitute `t = s^gamma` in every coefficient.
    pub fn stretch(&self, gamma: usize) -> SeriesPoly {
        SeriesPoly {
            a: self.a.iter().map(|s| s.stretch(gamma)).collect(),
        }
    }

    /// Divide `a_j` by `t^(j*rho)`, the slope extraction step.
    pub fn extract_slope(&self, rho: usize) -> Result<SeriesPoly, SeriesError> {
        let mut a = Vec::with_capacity(self.a.len());
        for (j0, s) in self.a.iter().enumerate() {
            let j = j0 + 1;
            if s.is_zero() {
                let trunc = if s.is_exact() {
                    s.trunc()
                } else {
                    s.trunc().saturating_sub(j * rho).max(1)
                };
                let mut z = Series1::zero(trunc);
                if !s.is_exact() {
                    z = Series1::truncated(vec![C64::ZERO; trunc]);
                }
                a.push(z);
            } else {
                a.push(s.div_monomial(j * rho)?);
            }
        }
        Ok(SeriesPoly { a })
    }

    /// Power sums `p_0 .. p_max` of the roots via Newton's identities.
    pub fn power_sums(&self, max: usize) -> Vec<Series1> {
        let n = self.a.len();
        let trunc = self.trunc();
        let mut p: Vec<Series1> = Vec::with_capacity(max + 1);
        p.push(Series1::constant(C64::new(n as f64, 0.0), trunc));
        for k in 1..=max {
            let mut acc = Series1::zero(trunc);
            for i in 1..k.min(n + 1) {
                let sign = if (i - 1) % 2 == 0 { 1.0 } else { -1.0 };
                acc = acc.add(&self.a[i - 1].mul(&p[k - i]).scale(C64::new(sign, 0.0)));
            }
            if k <= n {
                let sign = if (k - 1) % 2 == 0 { 1.0 } else { -1.0 };
                acc = acc.add(&self.a[k - 1].scale(C64::new(sign * k as f64, 0.0)));
            }
            p.push(acc);
        }
        p
    }

    /// The series `Delta_k(t)` as a Hankel determinant of power sums.
    pub fn delta_series(&self, k: usize) -> Series1 {
        assert!(k >= 1 && k <= self.a.len());
        let p = self.power_sums(2 * k - 2);
        hankel_det(&p, k)
    }

    /// Orders of `Delta_1 .. Delta_n`; `None` marks zero through truncation.
    pub fn delta_orders(&self) -> Vec<Option<usize>> {
        (1..=self.a.len()).map(|k| self.delta_series(k).order()).collect()
    }
}

/// Determinant of the k-by-k Hankel matrix `H[i][j] = p[i+j]` by column-set
/// dynamic programming in the series ring.
fn hankel_det(p: &[Series1], k: usize) -> Series1 {
    let trunc = p.iter().map(Series1::trunc).min().unwrap_or(1);
    if k == 1 {
        return p[0].clone();
    }
    // dets[mask] = minor over the first popcount(mask) rows and columns in mask
    let full: u32 = (1 << k) - 1;
    let mut dets: Vec<Option<Series1>> = vec![None; 1 << k];
    dets[0] = Some(Series1::constant(C64::new(1.0, 0.0), trunc));
    for mask in 1..=full {
        let r = mask.count_ones() as usize;
        let mut acc = Series1::zero(trunc);
        let mut pos = 0;
        for c in 0..k {
            if mask & (1 << c) == 0 {
                continue;
            }
            let sub = dets[(mask ^ (1 << c)) as usize]
                .as_ref()
                .expect("minors are filled in mask order")
                .clone();
            let sign = if (r - 1 + pos) % 2 == 0 { 1.0 } else { -1.0 };
            acc = acc.add(&p[r - 1 + c].mul(&sub).scale(C64::new(sign, 0.0)));
            pos += 1;
        }
        dets[mask as usize] = Some(acc);
    }
    dets[full as usize].take().unwrap()
}
