//! Truncated power series in one variable over the complex scalars.
//!
//! A [`Series1`] stores coefficients of `t^0 .. t^(trunc-1)`. Unless the
//! series is marked exact, nothing is known about terms from `t^trunc` on,
//! and arithmetic propagates truncation accordingly.

use crate::C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default threshold below which a coefficient is treated as zero when
/// detecting orders.
pub const DEFAULT_EPS_ORDER: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    /// Inversion or division requires a nonzero constant term.
    #[error("series is not a unit: constant term {0} is below the order threshold")]
    NotAUnit(f64),
    /// Dividing by `t^k` needs the series to vanish to order `k` first.
    #[error("cannot divide by t^{required}: series has order {found}")]
    DivisionOrder { required: usize, found: usize },
    /// An operation consumed the whole truncation window.
    #[error("truncation exhausted: no coefficients left at truncation {0}")]
    TruncationExhausted(usize),
}

/// Truncated power series `c_0 + c_1 t + ... + c_(T-1) t^(T-1) + O(t^T)`.
///
/// `exact` records that the series is in fact a polynomial whose terms of
/// degree `>= trunc` are all zero; such series survive re-truncation and
/// keep full information under monomial division.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Series1 {
    coeffs: Vec<C64>,
    exact: bool,
    eps_order: f64,
}

impl Series1 {
    /// Series with all coefficients zero, exact by convention.
    pub fn zero(trunc: usize) -> Self {
        Series1 {
            coeffs: vec![C64::ZERO; trunc.max(1)],
            exact: true,
            eps_order: DEFAULT_EPS_ORDER,
        }
    }

    /// Constant series.
    pub fn constant(c: C64, trunc: usize) -> Self {
        let mut s = Series1::zero(trunc);
        s.coeffs[0] = c;
        s
    }

    /// The monomial `c t^k`.
    pub fn monomial(c: C64, k: usize, trunc: usize) -> Self {
        let mut s = Series1::zero(trunc.max(k + 1));
        s.coeffs[k] = c;
        s
    }

    /// Exact polynomial with the given low-order coefficients.
    pub fn polynomial(coeffs: &[C64], trunc: usize) -> Self {
        let mut s = Series1::zero(trunc.max(coeffs.len()));
        s.coeffs[..coeffs.len()].copy_from_slice(coeffs);
        s
    }

    /// Truncated series with unknown tail.
    pub fn truncated(coeffs: Vec<C64>) -> Self {
        Series1 {
            coeffs,
            exact: false,
            eps_order: DEFAULT_EPS_ORDER,
        }
    }

    pub fn trunc(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn eps_order(&self) -> f64 {
        self.eps_order
    }

    pub fn set_eps_order(&mut self, eps: f64) {
        self.eps_order = eps;
    }

    /// Coefficient of `t^k`; zero beyond the stored window (only meaningful
    /// there for exact series).
    pub fn coeff(&self, k: usize) -> C64 {
        self.coeffs.get(k).copied().unwrap_or(C64::ZERO)
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    /// Smallest `k` with `|c_k| > eps_order`, or `None` when the series is
    /// zero through its truncation window.
    pub fn order(&self) -> Option<usize> {
        self.coeffs.iter().position(|c| c.norm() > self.eps_order)
    }

    pub fn is_zero(&self) -> bool {
        self.order().is_none()
    }

    /// Degree of the stored polynomial part (largest index with a
    /// non-negligible coefficient).
    pub fn poly_degree(&self) -> Option<usize> {
        self.coeffs.iter().rposition(|c| c.norm() > self.eps_order)
    }

    /// Horner evaluation of the stored polynomial part.
    pub fn eval(&self, t: C64) -> C64 {
        let mut acc = C64::ZERO;
        for &c in self.coeffs.iter().rev() {
            acc = acc * t + c;
        }
        acc
    }

    /// Restrict or (for exact series) extend the truncation window.
    pub fn with_trunc(&self, trunc: usize) -> Self {
        let trunc = trunc.max(1);
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(trunc, C64::ZERO);
        Series1 {
            coeffs,
            // Shrinking keeps exactness only if nothing nonzero was cut.
            exact: self.exact
                && (trunc >= self.coeffs.len()
                    || self.coeffs[trunc..].iter().all(|c| c.norm() == 0.0)),
            eps_order: self.eps_order,
        }
    }

    fn join(a: &Series1, b: &Series1) -> (usize, bool, f64) {
        let eps = a.eps_order.max(b.eps_order);
        let trunc = match (a.exact, b.exact) {
            (true, true) => a.trunc().max(b.trunc()),
            (true, false) => b.trunc(),
            (false, true) => a.trunc(),
            (false, false) => a.trunc().min(b.trunc()),
        };
        (trunc, a.exact && b.exact, eps)
    }

    pub fn add(&self, other: &Series1) -> Series1 {
        let (trunc, exact, eps) = Series1::join(self, other);
        let mut coeffs = vec![C64::ZERO; trunc];
        for (k, c) in coeffs.iter_mut().enumerate() {
            *c = self.coeff(k) + other.coeff(k);
        }
        Series1 {
            coeffs,
            exact,
            eps_order: eps,
        }
    }

    pub fn sub(&self, other: &Series1) -> Series1 {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Series1 {
        let mut s = self.clone();
        for c in &mut s.coeffs {
            *c = -*c;
        }
        s
    }

    pub fn scale(&self, c: C64) -> Series1 {
        let mut s = self.clone();
        for x in &mut s.coeffs {
            *x *= c;
        }
        s
    }

    pub fn mul(&self, other: &Series1) -> Series1 {
        let (trunc, exact, eps) = Series1::join(self, other);
        let mut coeffs = vec![C64::ZERO; trunc];
        let da = self.coeffs.len().min(trunc);
        for i in 0..da {
            let a = self.coeffs[i];
            if a.norm() == 0.0 {
                continue;
            }
            for j in 0..(trunc - i).min(other.coeffs.len()) {
                coeffs[i + j] += a * other.coeff(j);
            }
        }
        // The product of exact polynomials stays exact only when the full
        // degree fits inside the window.
        let exact = exact
            && match (self.poly_degree(), other.poly_degree()) {
                (Some(da), Some(db)) => da + db < trunc,
                _ => true,
            };
        Series1 {
            coeffs,
            exact,
            eps_order: eps,
        }
    }

    /// Multiplicative inverse; requires a unit constant term.
    pub fn invert(&self) -> Result<Series1, SeriesError> {
        let c0 = self.coeff(0);
        if c0.norm() <= self.eps_order {
            return Err(SeriesError::NotAUnit(c0.norm()));
        }
        let trunc = self.trunc();
        let mut inv = vec![C64::ZERO; trunc];
        inv[0] = C64::new(1.0, 0.0) / c0;
        for k in 1..trunc {
            let mut acc = C64::ZERO;
            for j in 1..=k.min(self.coeffs.len() - 1) {
                acc += self.coeffs[j] * inv[k - j];
            }
            inv[k] = -acc / c0;
        }
        Ok(Series1 {
            coeffs: inv,
            exact: self.exact && self.poly_degree() == Some(0),
            eps_order: self.eps_order,
        })
    }

    pub fn div(&self, other: &Series1) -> Result<Series1, SeriesError> {
        Ok(self.mul(&other.invert()?))
    }

    /// Multiply by `t^k`.
    pub fn mul_monomial(&self, k: usize) -> Series1 {
        let trunc = if self.exact {
            self.trunc() + k
        } else {
            self.trunc()
        };
        let mut coeffs = vec![C64::ZERO; trunc];
        for (i, &c) in self.coeffs.iter().enumerate() {
            if i + k < trunc {
                coeffs[i + k] = c;
            }
        }
        Series1 {
            coeffs,
            exact: self.exact,
            eps_order: self.eps_order,
        }
    }

    /// Divide by `t^k`. The truncation window shrinks by `k` unless the
    /// series is exact.
    pub fn div_monomial(&self, k: usize) -> Result<Series1, SeriesError> {
        if k == 0 {
            return Ok(self.clone());
        }
        match self.order() {
            Some(ord) if ord < k => {
                return Err(SeriesError::DivisionOrder {
                    required: k,
                    found: ord,
                })
            }
            _ => {}
        }
        if !self.exact && self.trunc() <= k {
            return Err(SeriesError::TruncationExhausted(self.trunc()));
        }
        let trunc = if self.exact {
            self.trunc()
        } else {
            self.trunc() - k
        };
        let mut coeffs = vec![C64::ZERO; trunc.max(1)];
        for (i, c) in coeffs.iter_mut().enumerate() {
            *c = self.coeff(i + k);
        }
        Ok(Series1 {
            coeffs,
            exact: self.exact,
            eps_order: self.eps_order,
        })
    }

    /// Substitute `t = s^gamma`, returning a series in `s`.
    pub fn stretch(&self, gamma: usize) -> Series1 {
        assert!(gamma >= 1);
        if gamma == 1 {
            return self.clone();
        }
        let trunc = (self.trunc() - 1) * gamma + 1;
        let mut coeffs = vec![C64::ZERO; trunc];
        for (i, &c) in self.coeffs.iter().enumerate() {
            coeffs[i * gamma] = c;
        }
        Series1 {
            coeffs,
            exact: self.exact,
            eps_order: self.eps_order,
        }
    }

    /// Largest coefficient magnitude, a crude scale for comparisons.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Coefficientwise distance over the common truncation window.
    pub fn max_abs_diff(&self, other: &Series1) -> f64 {
        let n = self.trunc().min(other.trunc());
        (0..n)
            .map(|k| (self.coeff(k) - other.coeff(k)).norm())
            .fold(0.0, f64::max)
    }
}
