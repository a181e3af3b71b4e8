//! Small helpers for dense complex matrices.

use crate::monic::{MonicPoly, RootError, RootOptions};
use crate::{C64, CMatrix, CVector};

/// Frobenius norm.
pub fn fro_norm(m: &CMatrix) -> f64 {
    m.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Operator (spectral) norm via the largest singular value.
pub fn op_norm(m: &CMatrix) -> f64 {
    if m.iter().all(|c| c.norm() == 0.0) {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0, |acc, &s| acc.max(s))
}

/// `|| A A* - A* A ||_F`, the defect from normality.
pub fn normality_residual(a: &CMatrix) -> f64 {
    let ah = a.adjoint();
    fro_norm(&(a * &ah - &ah * a))
}

/// `|| A - A* ||_F`, the defect from being Hermitian.
pub fn hermitian_residual(a: &CMatrix) -> f64 {
    fro_norm(&(a - a.adjoint()))
}

/// Characteristic polynomial in elementary-symmetric form by the
/// Faddeev-LeVerrier recurrence.
pub fn char_poly(a: &CMatrix) -> MonicPoly {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut m = CMatrix::identity(n, n);
    let mut coeffs = Vec::with_capacity(n);
    for k in 1..=n {
        let am = a * &m;
        let c = -am.trace() / C64::new(k as f64, 0.0);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        coeffs.push(c * C64::new(sign, 0.0));
        m = am;
        for i in 0..n {
            m[(i, i)] += c;
        }
    }
    MonicPoly::new(coeffs)
}

/// Eigenvalues through the characteristic polynomial root pipeline.
pub fn eigenvalues(a: &CMatrix, opts: &RootOptions) -> Result<Vec<C64>, RootError> {
    char_poly(a).poly_roots(opts)
}

/// Eigenvalues of a normal matrix through its commuting Hermitian pair
/// `(A + A*)/2` and `(A - A*)/2i`, accurate to machine scale even at
/// multiple eigenvalues.
pub fn normal_eigenvalues(a: &CMatrix) -> Vec<C64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    if n == 0 {
        return Vec::new();
    }
    let scale = fro_norm(a);
    if scale == 0.0 {
        return vec![C64::ZERO; n];
    }
    let ah = a.adjoint();
    let h = (a + &ah) * C64::new(0.5, 0.0);
    let k = (a - &ah) * C64::new(0.0, -0.5);
    let se = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].total_cmp(&se.eigenvalues[j]));

    let gap = 1e-8 * scale;
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let mut stop = start + 1;
        while stop < n
            && se.eigenvalues[order[stop]] - se.eigenvalues[order[stop - 1]] <= gap
        {
            stop += 1;
        }
        let group = &order[start..stop];
        let hbar = group.iter().map(|&i| se.eigenvalues[i]).sum::<f64>()
            / group.len() as f64;
        let mut basis = CMatrix::zeros(n, group.len());
        for (c, &i) in group.iter().enumerate() {
            basis.set_column(c, &se.eigenvectors.column(i));
        }
        let b = basis.adjoint() * &k * &basis;
        let b = (&b + b.adjoint()) * C64::new(0.5, 0.0);
        let mut mu: Vec<f64> = b.symmetric_eigen().eigenvalues.iter().copied().collect();
        mu.sort_by(f64::total_cmp);
        out.extend(mu.into_iter().map(|m| C64::new(hbar, m)));
        start = stop;
    }
    out
}

/// Real eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = a
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Unit eigenvector for a (numerically) known eigenvalue: the singular
/// vector of `A - lambda I` with smallest singular value.
pub fn eigenvector_for(a: &CMatrix, lambda: C64) -> CVector {
    let n = a.nrows();
    let mut shifted = a.clone();
    for i in 0..n {
        shifted[(i, i)] -= lambda;
    }
    let svd = shifted.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let mut min_idx = 0;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s < svd.singular_values[min_idx] {
            min_idx = i;
        }
    }
    let mut v = CVector::zeros(n);
    for j in 0..n {
        v[j] = vt[(min_idx, j)].conj();
    }
    normalize_phase(&mut v);
    v
}

/// Scale to unit norm and rotate so the first component of noticeable size
/// is real and positive.
pub fn normalize_phase(v: &mut CVector) {
    let norm = v.norm();
    if norm > 0.0 {
        *v /= C64::new(norm, 0.0);
    }
    if let Some(lead) = v.iter().find(|c| c.norm() > 1e-10).copied() {
        let phase = lead / C64::new(lead.norm(), 0.0);
        *v *= phase.conj();
    }
}
