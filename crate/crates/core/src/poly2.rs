//! Sparse polynomials in two variables `x`, `y` with complex coefficients.

use crate::C64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Poly2Error {
    #[error("monomial division failed: term x^{0} y^{1} is not divisible")]
    NotDivisible(u32, u32),
}

/// Bivariate polynomial keyed by exponent pairs `(a, b)` for `x^a y^b`.
/// Terms with exactly zero coefficient are never stored.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Poly2 {
    terms: BTreeMap<(u32, u32), C64>,
}

impl Poly2 {
    pub fn zero() -> Self {
        Poly2::default()
    }

    pub fn constant(c: C64) -> Self {
        Poly2::monomial(0, 0, c)
    }

    pub fn monomial(a: u32, b: u32, c: C64) -> Self {
        let mut p = Poly2::zero();
        if c.norm() != 0.0 {
            p.terms.insert((a, b), c);
        }
        p
    }

    pub fn var_x() -> Self {
        Poly2::monomial(1, 0, C64::new(1.0, 0.0))
    }

    pub fn var_y() -> Self {
        Poly2::monomial(0, 1, C64::new(1.0, 0.0))
    }

    /// Univariate polynomial in `x` from ascending coefficients.
    pub fn from_univariate(coeffs: &[C64]) -> Self {
        let mut p = Poly2::zero();
        for (k, &c) in coeffs.iter().enumerate() {
            if c.norm() != 0.0 {
                p.terms.insert((k as u32, 0), c);
            }
        }
        p
    }

    /// Ascending `x` coefficients, provided no `y` powers occur.
    pub fn as_univariate(&self) -> Option<Vec<C64>> {
        if self.terms.keys().any(|&(_, b)| b != 0) {
            return None;
        }
        let deg = self.terms.keys().map(|&(a, _)| a).max().unwrap_or(0);
        let mut coeffs = vec![C64::ZERO; deg as usize + 1];
        for (&(a, _), &c) in &self.terms {
            coeffs[a as usize] = c;
        }
        Some(coeffs)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = ((u32, u32), C64)> + '_ {
        self.terms.iter().map(|(&k, &v)| (k, v))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, a: u32, b: u32) -> C64 {
        self.terms.get(&(a, b)).copied().unwrap_or(C64::ZERO)
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    fn insert(&mut self, key: (u32, u32), c: C64) {
        if c.norm() == 0.0 {
            self.terms.remove(&key);
        } else {
            self.terms.insert(key, c);
        }
    }

    pub fn add(&self, other: &Poly2) -> Poly2 {
        let mut out = self.clone();
        for ((a, b), c) in other.terms() {
            let cur = out.coeff(a, b);
            out.insert((a, b), cur + c);
        }
        out
    }

    pub fn sub(&self, other: &Poly2) -> Poly2 {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Poly2 {
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            *v = -*v;
        }
        out
    }

    pub fn scale(&self, c: C64) -> Poly2 {
        if c.norm() == 0.0 {
            return Poly2::zero();
        }
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            *v *= c;
        }
        out
    }

    pub fn mul(&self, other: &Poly2) -> Poly2 {
        let mut out = Poly2::zero();
        for ((a1, b1), c1) in self.terms() {
            for ((a2, b2), c2) in other.terms() {
                let key = (a1 + a2, b1 + b2);
                let cur = out.coeff(key.0, key.1);
                out.insert(key, cur + c1 * c2);
            }
        }
        out
    }

    /// Complex-conjugate every coefficient (the adjoint of an entry when the
    /// parameters are real).
    pub fn conj_coeffs(&self) -> Poly2 {
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            *v = v.conj();
        }
        out
    }

    pub fn eval(&self, x: C64, y: C64) -> C64 {
        let mut acc = C64::ZERO;
        for (&(a, b), &c) in &self.terms {
            acc += c * x.powu(a) * y.powu(b);
        }
        acc
    }

    pub fn eval_x(&self, x: C64) -> C64 {
        self.eval(x, C64::ZERO)
    }

    pub fn d_dx(&self) -> Poly2 {
        let mut out = Poly2::zero();
        for ((a, b), c) in self.terms() {
            if a > 0 {
                out.insert((a - 1, b), c * C64::new(a as f64, 0.0));
            }
        }
        out
    }

    pub fn d_dy(&self) -> Poly2 {
        let mut out = Poly2::zero();
        for ((a, b), c) in self.terms() {
            if b > 0 {
                out.insert((a, b - 1), c * C64::new(b as f64, 0.0));
            }
        }
        out
    }

    /// Substitute `(x, y) -> (x, x*y)`: the first blow-up chart.
    pub fn subst_chart1(&self) -> Poly2 {
        let mut out = Poly2::zero();
        for ((a, b), c) in self.terms() {
            let key = (a + b, b);
            let cur = out.coeff(key.0, key.1);
            out.insert(key, cur + c);
        }
        out
    }

    /// Substitute `(x, y) -> (x*y, y)`: the second blow-up chart.
    pub fn subst_chart2(&self) -> Poly2 {
        let mut out = Poly2::zero();
        for ((a, b), c) in self.terms() {
            let key = (a, a + b);
            let cur = out.coeff(key.0, key.1);
            out.insert(key, cur + c);
        }
        out
    }

    /// Divide by `x^a y^b`; every stored term must be divisible.
    pub fn div_monomial(&self, a: u32, b: u32) -> Result<Poly2, Poly2Error> {
        let mut out = Poly2::zero();
        for ((ta, tb), c) in self.terms() {
            if ta < a || tb < b {
                return Err(Poly2Error::NotDivisible(ta, tb));
            }
            out.insert((ta - a, tb - b), c);
        }
        Ok(out)
    }

    pub fn mul_monomial(&self, a: u32, b: u32) -> Poly2 {
        let mut out = Poly2::zero();
        for ((ta, tb), c) in self.terms() {
            out.insert((ta + a, tb + b), c);
        }
        out
    }

    /// Drop terms whose coefficient magnitude is at most `eps`.
    pub fn cleaned(&self, eps: f64) -> Poly2 {
        let mut out = Poly2::zero();
        for (key, c) in self.terms() {
            if c.norm() > eps {
                out.terms.insert(key, c);
            }
        }
        out
    }

    /// Componentwise minimum of the exponents over all stored terms.
    pub fn exponent_min(&self) -> Option<(u32, u32)> {
        let mut it = self.terms.keys();
        let &first = it.next()?;
        Some(it.fold(first, |(a, b), &(ta, tb)| (a.min(ta), b.min(tb))))
    }

    /// Smallest total degree among the stored terms.
    pub fn order_total(&self) -> Option<u32> {
        self.terms.keys().map(|&(a, b)| a + b).min()
    }
}

impl fmt::Display for Poly2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (&(a, b), &c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            if c.im == 0.0 {
                write!(f, "{}", c.re)?;
            } else {
                write!(f, "({}+{}i)", c.re, c.im)?;
            }
            if a > 0 {
                write!(f, "*x^{a}")?;
            }
            if b > 0 {
                write!(f, "*y^{b}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn re(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn chart_substitutions() {
        // x - y under (x, y) -> (x, x*y) becomes x(1 - y)
        let p = Poly2::var_x().sub(&Poly2::var_y());
        let q = p.subst_chart1();
        assert_eq!(q.coeff(1, 0), re(1.0));
        assert_eq!(q.coeff(1, 1), re(-1.0));
        assert_eq!(q.num_terms(), 2);
        // and under (x, y) -> (x*y, y) becomes y(x - 1)
        let r = p.subst_chart2();
        assert_eq!(r.coeff(1, 1), re(1.0));
        assert_eq!(r.coeff(0, 1), re(-1.0));
    }

    #[test]
    fn substitution_commutes_with_evaluation() {
        let p = Poly2::var_x()
            .mul(&Poly2::var_x())
            .add(&Poly2::var_y().scale(re(3.0)))
            .add(&Poly2::constant(C64::new(0.0, 1.0)));
        let (x, y) = (C64::new(0.3, -0.2), C64::new(1.1, 0.4));
        let direct = p.eval(x, x * y);
        let subst = p.subst_chart1().eval(x, y);
        assert!((direct - subst).norm() < 1e-13);
    }

    #[test]
    fn monomial_division_checks_divisibility() {
        let p = Poly2::monomial(2, 1, re(4.0)).add(&Poly2::monomial(1, 1, re(-1.0)));
        let q = p.div_monomial(1, 1).unwrap();
        assert_eq!(q.coeff(1, 0), re(4.0));
        assert_eq!(q.coeff(0, 0), re(-1.0));
        assert!(p.div_monomial(2, 0).is_err());
    }

    #[test]
    fn exponent_min_is_componentwise() {
        let p = Poly2::monomial(2, 1, re(1.0)).add(&Poly2::monomial(1, 3, re(1.0)));
        assert_eq!(p.exponent_min(), Some((1, 1)));
        assert_eq!(p.order_total(), Some(3));
    }

    #[test]
    fn univariate_round_trip() {
        let coeffs = [re(1.0), re(0.0), re(-2.5)];
        let p = Poly2::from_univariate(&coeffs);
        assert_eq!(p.as_univariate().unwrap(), vec![re(1.0), re(0.0), re(-2.5)]);
        assert!(p.mul(&Poly2::var_y()).as_univariate().is_none());
    }
}
