//! Truncated power-series eigenvalue branches for one-parameter polynomial
//! families.
//!
//! `branch_expand` factors the characteristic series of an exactly normal
//! family into integer-power branches by Hensel splitting and slope
//! extraction; `puiseux_expand` handles fractional exponents by stretching
//! the parameter first. The generalized discriminant reports feed both.

use crate::family::{CertKind, FamilyError, FamilyKind, MatrixFamily};
use crate::monic::{MonicPoly, RootError, RootOptions};
use crate::series::{Series1, SeriesError};
use crate::seriespoly::SeriesPoly;
use crate::C64;
use thiserror::Error;

/// Absolute root-cluster tolerance at the base point, after scaling.
const CLUSTER_TOL: f64 = 1e-6;
/// Coefficientwise tolerance for the Hensel product identity. A spurious
/// split of an unseparated cluster diverges geometrically over the window,
/// so the gate stays far from both regimes.
const HENSEL_TOL: f64 = 1e-6;
/// Relative noise floor stamped on split factors for later order detection.
const FLOOR_EPS: f64 = 1e-7;

/// Root options for base-point spectra: a root of multiplicity m is only
/// located to about the 1/m power of the evaluation noise, so the rebuild
/// gate sits well above that for the multiplicities a family can carry.
fn base_root_options() -> RootOptions {
    RootOptions {
        reconstruct_tol: 1e-5,
        ..RootOptions::default()
    }
}
/// Coefficientwise tolerance when rebuilding the input from branches;
/// loose enough to absorb lift noise re-amplified by the product.
const PRODUCT_TOL: f64 = 1e-6;
/// Relative floor below which Euclid remainders count as a common factor.
const COPRIME_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum FormalError {
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Root(#[from] RootError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error("discriminants vanish beyond k = {k_max} through the truncation window")]
    TruncationInconclusive { k_max: usize, order: usize },
    #[error("the first coefficient must vanish identically")]
    HypothesisViolated,
    #[error("constant-term roots form {clusters} cluster(s); splitting needs two")]
    ClustersNotSeparated { clusters: usize },
    #[error("branch expansion needs a polynomial family in one parameter")]
    PolynomialFamilyRequired,
    #[error("branch expansion needs an exact normality certificate")]
    ExactNormalityRequired,
    #[error("leading slope {num}/{den} is not an integer")]
    NonIntegerSlope { num: usize, den: usize },
    #[error("slope extraction exhausted the truncation window")]
    TruncationExhausted,
    #[error("branches coincide to infinite order as far as the window shows")]
    FlatContact,
    #[error("branch product misses the input by {residual:.3e}")]
    ReconstructionFailed { residual: f64 },
}

/// One eigenvalue branch `series(t^(1/gamma))`.
#[derive(Debug, Clone)]
pub struct SeriesBranch {
    pub series: Series1,
    pub gamma: usize,
    pub multiplicity: usize,
}

impl SeriesBranch {
    /// Branch value at a parameter t >= 0.
    pub fn value_at(&self, t: f64) -> C64 {
        let s = t.powf(1.0 / self.gamma as f64);
        self.series.eval(C64::new(s, 0.0))
    }
}

/// Outcome of the maximal-discriminant scan.
#[derive(Debug, Clone, Copy)]
pub struct NonflatReport {
    /// Largest k whose discriminant series is nonzero in the window.
    pub k_max: usize,
    /// Vanishing order of that series.
    pub order: usize,
    /// Whether some higher discriminant vanishes identically.
    pub flat: bool,
}

/// Locates the last nonvanishing generalized discriminant and its order.
pub fn nonflat_check(p: &SeriesPoly, trunc: usize) -> Result<NonflatReport, FormalError> {
    let n = p.degree();
    if n == 0 {
        return Ok(NonflatReport {
            k_max: 0,
            order: 0,
            flat: false,
        });
    }
    let pw = windowed(p, trunc);
    let deltas: Vec<Series1> = (1..=n).map(|k| pw.delta_series(k)).collect();
    let mut k_max = 0;
    let mut order = 0;
    for (i, d) in deltas.iter().enumerate() {
        if let Some(o) = d.order() {
            k_max = i + 1;
            order = o;
        }
    }
    if k_max == 0 {
        return Err(FormalError::TruncationInconclusive { k_max: 0, order: 0 });
    }
    let mut flat = false;
    for d in &deltas[k_max..] {
        flat = true;
        if !d.is_exact() {
            return Err(FormalError::TruncationInconclusive { k_max, order });
        }
    }
    Ok(NonflatReport { k_max, order, flat })
}

/// Both sides of the order biconditional for a polynomial with `a_1 = 0`.
#[derive(Debug, Clone, Copy)]
pub struct MultOrderReport {
    /// Every coefficient satisfies `order(a_j) >= j r`.
    pub cond_a: bool,
    /// Every discriminant satisfies `order(Delta_j) >= j (j-1) r`.
    pub cond_b: bool,
    pub agree: bool,
}

/// Evaluates the coefficient-order and discriminant-order conditions at
/// exponent `r` and reports whether they agree.
pub fn mult_order_check(p: &SeriesPoly, r: usize) -> Result<MultOrderReport, FormalError> {
    let n = p.degree();
    if n >= 1 && !p.a(1).is_zero() {
        return Err(FormalError::HypothesisViolated);
    }
    let cond_a = (1..=n).all(|j| match p.a(j).order() {
        None => true,
        Some(o) => o >= j * r,
    });
    let cond_b = (1..=n).all(|j| match p.delta_series(j).order() {
        None => true,
        Some(o) => o >= j * (j - 1) * r,
    });
    Ok(MultOrderReport {
        cond_a,
        cond_b,
        agree: cond_a == cond_b,
    })
}

/// Lifts the cluster factorization of the constant-term polynomial to a
/// factorization over series, one monic factor per root cluster.
///
/// A multiple root can come back from the root finder as a tight cloud
/// slightly wider than the cluster tolerance. The lift itself tells the
/// two cases apart: a genuine split reconstructs the input, a spurious
/// one diverges, so failed attempts retry with the closest clusters
/// merged.
pub fn split_series(p: &SeriesPoly, trunc: usize) -> Result<Vec<SeriesPoly>, FormalError> {
    let pw = windowed(p, trunc);
    let w = pw.trunc();
    let base: Vec<C64> = (1..=pw.degree()).map(|j| pw.a(j).coeff(0)).collect();
    let roots = MonicPoly::new(base).poly_roots(&base_root_options())?;
    let mut clusters = cluster_roots(&roots);
    let mut last = FormalError::ClustersNotSeparated {
        clusters: clusters.len(),
    };
    while clusters.len() >= 2 {
        match try_split(&pw, &clusters, w) {
            Ok(parts) => {
                let floor = FLOOR_EPS * coeff_scale(&pw);
                return Ok(parts.into_iter().map(|f| raise_floor(f, floor)).collect());
            }
            Err(e @ FormalError::ReconstructionFailed { .. })
            | Err(e @ FormalError::ClustersNotSeparated { .. }) => {
                if std::env::var("FORMAL_TRACE").is_ok() {
                    eprintln!("split retry {} clusters: {e:?}", clusters.len());
                }
                merge_closest(&mut clusters);
                last = e;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

/// Stamps factor coefficients with the parent's noise floor; the lift
/// reproduces the input's absolute rounding noise, which would otherwise
/// masquerade as low-order structure in later slope detection.
fn raise_floor(p: SeriesPoly, floor: f64) -> SeriesPoly {
    let coeffs = (1..=p.degree())
        .map(|j| {
            let mut s = p.a(j).clone();
            s.set_eps_order(s.eps_order().max(floor));
            s
        })
        .collect();
    SeriesPoly::new(coeffs)
}

fn try_split(
    pw: &SeriesPoly,
    clusters: &[Vec<C64>],
    w: usize,
) -> Result<Vec<SeriesPoly>, FormalError> {
    let mut out = Vec::with_capacity(clusters.len());
    let mut rem = pw.standard_coeffs();
    let mut pending = clusters.to_vec();
    while pending.len() > 1 {
        let head = pending.remove(0);
        let tail: Vec<C64> = pending.iter().flatten().copied().collect();
        let f0 = MonicPoly::from_roots(&head).standard_coeffs();
        let g0 = MonicPoly::from_roots(&tail).standard_coeffs();
        let (f, g) = lift_pair(&rem, &f0, &g0, w)?;
        out.push(SeriesPoly::from_standard_coeffs(f));
        rem = g;
    }
    out.push(SeriesPoly::from_standard_coeffs(rem));
    let scale = coeff_scale(pw);
    let mut prod = vec![Series1::constant(C64::new(1.0, 0.0), w)];
    for f in &out {
        prod = convolve(&prod, &f.standard_coeffs());
    }
    let residual = pw
        .standard_coeffs()
        .iter()
        .zip(&prod)
        .map(|(a, b)| a.max_abs_diff(b))
        .fold(0.0, f64::max);
    if !residual.is_finite() || residual > HENSEL_TOL * scale {
        return Err(FormalError::ReconstructionFailed { residual });
    }
    Ok(out)
}

/// Merge the two clusters whose means are closest.
fn merge_closest(clusters: &mut Vec<Vec<C64>>) {
    if clusters.len() < 2 {
        return;
    }
    let mut best = (0, 1, f64::INFINITY);
    for i in 0..clusters.len() {
        for j in (i + 1)..clusters.len() {
            let d = (mean(&clusters[i]) - mean(&clusters[j])).norm();
            if d < best.2 {
                best = (i, j, d);
            }
        }
    }
    let merged = clusters.remove(best.1);
    clusters[best.0].extend(merged);
}

/// All root series of a polynomial whose branches have integer exponents.
pub fn series_roots(p: &SeriesPoly, trunc: usize) -> Result<Vec<Series1>, FormalError> {
    let pw = windowed(p, trunc);
    expand_rec(&pw, pw.trunc())
}

/// Taylor branches of the eigenvalues of an exactly normal polynomial
/// family, each with ramification one.
pub fn branch_expand(f: &MatrixFamily, trunc: usize) -> Result<Vec<SeriesBranch>, FormalError> {
    if !matches!(f.kind, FamilyKind::Poly1(_)) {
        return Err(FormalError::PolynomialFamilyRequired);
    }
    let cert = f.normality_check()?;
    if cert.kind != CertKind::Exact {
        return Err(FormalError::ExactNormalityRequired);
    }
    let p = f.char_poly_series(trunc)?;
    let roots = series_roots(&p, trunc)?;
    let branches = fold_branches(roots, 1);
    verify_product(&windowed(&p, trunc), &branches)?;
    Ok(branches)
}

/// Puiseux branches of a general series polynomial: the parameter is
/// stretched by the least common ramification before expansion.
pub fn puiseux_expand(p: &SeriesPoly, trunc: usize) -> Result<Vec<SeriesBranch>, FormalError> {
    match nonflat_check(p, trunc) {
        Ok(_) => {}
        Err(FormalError::TruncationInconclusive { .. }) => return Err(FormalError::FlatContact),
        Err(e) => return Err(e),
    }
    let pw = windowed(p, trunc);
    let gamma = gamma_scan(&pw, pw.trunc())?;
    let q = pw.stretch(gamma);
    let roots = expand_rec(&q, q.trunc())?;
    let branches = fold_branches(roots, gamma);
    verify_product(&q, &branches)?;
    Ok(branches)
}

/// Re-windows the coefficients; exact polynomials keep their full degree.
fn windowed(p: &SeriesPoly, trunc: usize) -> SeriesPoly {
    let w = if p.is_exact() {
        let d = p
            .coefficients()
            .iter()
            .filter_map(Series1::poly_degree)
            .max()
            .unwrap_or(0);
        trunc.max(d + 1)
    } else {
        trunc.min(p.trunc())
    }
    .max(1);
    SeriesPoly::new(p.coefficients().iter().map(|s| s.with_trunc(w)).collect())
}

fn coeff_scale(p: &SeriesPoly) -> f64 {
    p.coefficients()
        .iter()
        .map(Series1::max_abs)
        .fold(1.0, f64::max)
}

fn expand_rec(p: &SeriesPoly, depth: usize) -> Result<Vec<Series1>, FormalError> {
    let n = p.degree();
    if std::env::var("FORMAL_TRACE").is_ok() {
        eprintln!("expand_rec n={n} depth={depth}");
        for j in 1..=n {
            let lead: Vec<f64> = (0..8).map(|k| p.a(j).coeff(k).norm()).collect();
            eprintln!(
                "  a({j}) ord {:?} eps {:.2e} {lead:?}",
                p.a(j).order(),
                p.a(j).eps_order()
            );
        }
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![p.a(1).clone()]);
    }
    let base: Vec<C64> = (1..=n).map(|j| p.a(j).coeff(0)).collect();
    let roots = MonicPoly::new(base).poly_roots(&base_root_options())?;
    if cluster_roots(&roots).len() >= 2 {
        match split_series(p, p.trunc()) {
            Ok(parts) => {
                let mut out = Vec::with_capacity(n);
                for f in parts {
                    out.extend(expand_rec(&f, depth)?);
                }
                return Ok(out);
            }
            Err(FormalError::ClustersNotSeparated { .. })
            | Err(FormalError::ReconstructionFailed { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let shift = p.a(1).scale(C64::new(1.0 / n as f64, 0.0));
    let q = p.shift_z(&shift);
    if q.coefficients().iter().all(Series1::is_zero) {
        return Ok(vec![shift; n]);
    }
    if depth == 0 {
        return Err(FormalError::TruncationExhausted);
    }
    let (num, den) = min_slope(&q);
    if num == 0 {
        return Err(FormalError::TruncationExhausted);
    }
    if den > 1 {
        return Err(FormalError::NonIntegerSlope { num, den });
    }
    let inner = expand_rec(&q.extract_slope(num)?, depth - 1)?;
    Ok(inner
        .into_iter()
        .map(|b| shift.add(&b.mul_monomial(num)))
        .collect())
}

/// Least common ramification needed to make every slope an integer.
fn gamma_scan(p: &SeriesPoly, depth: usize) -> Result<usize, FormalError> {
    let n = p.degree();
    if n <= 1 {
        return Ok(1);
    }
    let base: Vec<C64> = (1..=n).map(|j| p.a(j).coeff(0)).collect();
    let roots = MonicPoly::new(base).poly_roots(&base_root_options())?;
    if cluster_roots(&roots).len() >= 2 {
        match split_series(p, p.trunc()) {
            Ok(parts) => {
                let mut g = 1;
                for f in parts {
                    g = lcm(g, gamma_scan(&f, depth)?);
                }
                return Ok(g);
            }
            Err(FormalError::ClustersNotSeparated { .. })
            | Err(FormalError::ReconstructionFailed { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let shift = p.a(1).scale(C64::new(1.0 / n as f64, 0.0));
    let q = p.shift_z(&shift);
    if q.coefficients().iter().all(Series1::is_zero) {
        return Ok(1);
    }
    if depth == 0 {
        return Err(FormalError::TruncationExhausted);
    }
    let (num, den) = min_slope(&q);
    if num == 0 {
        return Err(FormalError::TruncationExhausted);
    }
    if den == 1 {
        return gamma_scan(&q.extract_slope(num)?, depth - 1);
    }
    let qs = q.stretch(den);
    let inner = gamma_scan(&qs.extract_slope(num)?, depth - 1)?;
    Ok(den * inner)
}

/// Minimal `order(a_j) / j` as a reduced fraction.
fn min_slope(q: &SeriesPoly) -> (usize, usize) {
    let mut num = 0;
    let mut den = 0;
    for j in 1..=q.degree() {
        if let Some(o) = q.a(j).order() {
            if den == 0 || o * den < num * j {
                num = o;
                den = j;
            }
        }
    }
    if den == 0 {
        return (0, 1);
    }
    let g = gcd(num.max(1), den);
    if num == 0 {
        (0, 1)
    } else {
        (num / g, den / g)
    }
}

fn gcd(a: usize, b: usize) -> usize {
    let (mut a, mut b) = (a, b);
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

fn fold_branches(roots: Vec<Series1>, gamma: usize) -> Vec<SeriesBranch> {
    let mut out: Vec<SeriesBranch> = Vec::new();
    for r in roots {
        let tol = PRODUCT_TOL * r.max_abs().max(1.0);
        match out.iter_mut().find(|b| b.series.max_abs_diff(&r) <= tol) {
            Some(b) => b.multiplicity += 1,
            None => out.push(SeriesBranch {
                series: r,
                gamma,
                multiplicity: 1,
            }),
        }
    }
    out.sort_by(|x, y| series_cmp(&x.series, &y.series));
    out
}

fn series_cmp(a: &Series1, b: &Series1) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    for k in 0..a.trunc().max(b.trunc()) {
        let (x, y) = (a.coeff(k), b.coeff(k));
        match x.re.total_cmp(&y.re) {
            Ordering::Equal => {}
            o => return o,
        }
        match x.im.total_cmp(&y.im) {
            Ordering::Equal => {}
            o => return o,
        }
    }
    Ordering::Equal
}

fn verify_product(p: &SeriesPoly, branches: &[SeriesBranch]) -> Result<(), FormalError> {
    let mut roots = Vec::new();
    for b in branches {
        for _ in 0..b.multiplicity {
            roots.push(b.series.clone());
        }
    }
    let q = SeriesPoly::from_root_series(&roots, p.trunc());
    let residual = (1..=p.degree())
        .map(|j| p.a(j).max_abs_diff(q.a(j)))
        .fold(0.0, f64::max);
    if residual > PRODUCT_TOL * coeff_scale(p) {
        return Err(FormalError::ReconstructionFailed { residual });
    }
    Ok(())
}

/// Groups roots by transitive closeness and sorts groups by their mean.
fn cluster_roots(roots: &[C64]) -> Vec<Vec<C64>> {
    let m = roots.len();
    let scale = roots.iter().map(|r| r.norm()).fold(1.0, f64::max);
    let tol = CLUSTER_TOL * scale;
    let mut parent: Vec<usize> = (0..m).collect();
    for i in 0..m {
        for j in i + 1..m {
            if (roots[i] - roots[j]).norm() <= tol {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let mut groups: Vec<Vec<C64>> = Vec::new();
    let mut rep: Vec<usize> = Vec::new();
    for i in 0..m {
        let r = find(&mut parent, i);
        match rep.iter().position(|&x| x == r) {
            Some(k) => groups[k].push(roots[i]),
            None => {
                rep.push(r);
                groups.push(vec![roots[i]]);
            }
        }
    }
    groups.sort_by(|a, b| {
        let ma = mean(a);
        let mb = mean(b);
        ma.re.total_cmp(&mb.re).then(ma.im.total_cmp(&mb.im))
    });
    groups
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn mean(v: &[C64]) -> C64 {
    v.iter().sum::<C64>() * C64::new(1.0 / v.len() as f64, 0.0)
}

/// Lifts `p = f0 g0 (mod t)` to a factorization over series by quadratic
/// Hensel steps: the window doubles each stage and the Bezout cofactors
/// are refreshed alongside the factors, so intermediates stay at the scale
/// of the true factors and rounding noise stays flat across orders.
fn lift_pair(
    p: &[Series1],
    f0: &[C64],
    g0: &[C64],
    w: usize,
) -> Result<(Vec<Series1>, Vec<Series1>), FormalError> {
    let (u0, v0) = bezout(f0, g0).ok_or(FormalError::ClustersNotSeparated { clusters: 1 })?;
    let lift = |c: &[C64]| -> Vec<Series1> {
        c.iter().map(|&x| Series1::constant(x, w)).collect()
    };
    let mut f = lift(f0);
    let mut g = lift(g0);
    let mut u = lift(&u0);
    let mut v = lift(&v0);
    let df = f0.len() - 1;
    let dg = g0.len() - 1;
    let one = lift(&[C64::new(1.0, 0.0)]);
    let mask = |zs: &mut Vec<Series1>, win: usize| {
        for s in zs.iter_mut() {
            *s = mask_above(s, win - 1);
        }
    };
    let mut m = 1usize;
    while m < w {
        let win = (2 * m).min(w);
        let mut e = szsub(p, &convolve(&f, &g));
        mask(&mut e, win);
        if e.iter().any(|s| !s.max_abs().is_finite()) {
            break;
        }
        let (q, r) = szdiv(&convolve(&v, &e), &f);
        for (slot, c) in f.iter_mut().take(df).zip(&r) {
            *slot = slot.add(c);
        }
        let gc = szadd(&convolve(&u, &e), &convolve(&q, &g));
        for (slot, c) in g.iter_mut().take(dg).zip(&gc) {
            *slot = slot.add(c);
        }
        mask(&mut f, win);
        mask(&mut g, win);
        let mut b = szsub(&szadd(&convolve(&u, &f), &convolve(&v, &g)), &one);
        mask(&mut b, win);
        let (c2, d2) = szdiv(&convolve(&v, &b), &f);
        let mut vn = szsub(&v, &d2);
        vn.truncate(df.max(1));
        mask(&mut vn, win);
        v = vn;
        let mut un = szsub(&u, &szadd(&convolve(&u, &b), &convolve(&c2, &g)));
        un.truncate(dg.max(1));
        mask(&mut un, win);
        u = un;
        m = win;
    }
    Ok((f, g))
}

/// Copy with every coefficient beyond order `k` zeroed.
fn mask_above(s: &Series1, k: usize) -> Series1 {
    let coeffs = (0..s.trunc())
        .map(|j| if j > k { C64::ZERO } else { s.coeff(j) })
        .collect();
    let mut out = Series1::truncated(coeffs);
    out.set_eps_order(s.eps_order());
    out
}

fn szadd(a: &[Series1], b: &[Series1]) -> Vec<Series1> {
    let n = a.len().max(b.len());
    let w = a.iter().chain(b).map(Series1::trunc).min().unwrap_or(1);
    (0..n)
        .map(|i| match (a.get(i), b.get(i)) {
            (Some(x), Some(y)) => x.add(y),
            (Some(x), None) => x.clone(),
            (None, Some(y)) => y.clone(),
            (None, None) => Series1::zero(w),
        })
        .collect()
}

fn szsub(a: &[Series1], b: &[Series1]) -> Vec<Series1> {
    let neg: Vec<Series1> = b.iter().map(Series1::neg).collect();
    szadd(a, &neg)
}

/// Long division in `z` by a factor whose leading coefficient is exactly
/// one, so quotient coefficients come straight off the remainder.
fn szdiv(num: &[Series1], den: &[Series1]) -> (Vec<Series1>, Vec<Series1>) {
    let dd = den.len() - 1;
    let w = num.iter().map(Series1::trunc).min().unwrap_or(1);
    let mut rem: Vec<Series1> = num.to_vec();
    if rem.len() <= dd {
        return (vec![Series1::zero(w)], rem);
    }
    let dn = rem.len() - 1;
    let mut quo = vec![Series1::zero(w); dn - dd + 1];
    for k in (0..=dn - dd).rev() {
        let c = rem[k + dd].clone();
        for (i, d) in den.iter().enumerate().take(dd) {
            rem[k + i] = rem[k + i].sub(&c.mul(d));
        }
        rem[k + dd] = Series1::zero(w);
        quo[k] = c;
    }
    rem.truncate(dd.max(1));
    (quo, rem)
}

fn convolve(a: &[Series1], b: &[Series1]) -> Vec<Series1> {
    let w = a
        .iter()
        .chain(b)
        .map(Series1::trunc)
        .min()
        .unwrap_or(1);
    let mut out = vec![Series1::zero(w); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] = out[i + j].add(&x.mul(y));
        }
    }
    out
}

fn zdeg(p: &[C64]) -> Option<usize> {
    let scale = p.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    p.iter().rposition(|c| c.norm() > COPRIME_FLOOR * scale)
}

fn zmul(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::ZERO; (a.len() + b.len()).saturating_sub(1).max(1)];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn zsub(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::ZERO; a.len().max(b.len()).max(1)];
    for (i, c) in out.iter_mut().enumerate() {
        *c = a.get(i).copied().unwrap_or(C64::ZERO) - b.get(i).copied().unwrap_or(C64::ZERO);
    }
    out
}

fn zdivmod(num: &[C64], den: &[C64]) -> (Vec<C64>, Vec<C64>) {
    let dd = zdeg(den).expect("division by zero polynomial");
    let lead = den[dd];
    let mut rem = num.to_vec();
    let dn = zdeg(&rem).unwrap_or(0);
    if dn < dd {
        return (vec![C64::ZERO], rem);
    }
    let mut quo = vec![C64::ZERO; dn - dd + 1];
    for k in (0..=dn - dd).rev() {
        let c = rem[k + dd] / lead;
        quo[k] = c;
        for i in 0..=dd {
            rem[k + i] -= c * den[i];
        }
    }
    rem.truncate(dd.max(1));
    (quo, rem)
}

/// Extended Euclid for coprime polynomials: returns `(u, v)` with
/// `u f + v g = 1`, or `None` when a common factor survives.
fn bezout(f: &[C64], g: &[C64]) -> Option<(Vec<C64>, Vec<C64>)> {
    let one = C64::new(1.0, 0.0);
    let mut r0 = f.to_vec();
    let mut r1 = g.to_vec();
    let mut u0 = vec![one];
    let mut u1 = vec![C64::ZERO];
    let mut v0 = vec![C64::ZERO];
    let mut v1 = vec![one];
    while let Some(d) = zdeg(&r1) {
        if d == 0 {
            break;
        }
        let (q, r) = zdivmod(&r0, &r1);
        let nu = zsub(&u0, &zmul(&q, &u1));
        let nv = zsub(&v0, &zmul(&q, &v1));
        r0 = std::mem::replace(&mut r1, r);
        u0 = std::mem::replace(&mut u1, nu);
        v0 = std::mem::replace(&mut v1, nv);
    }
    match zdeg(&r1) {
        Some(0) => {
            let c = one / r1[0];
            Some((
                u1.iter().map(|&x| x * c).collect(),
                v1.iter().map(|&x| x * c).collect(),
            ))
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::Domain;
    use crate::poly2::Poly2;

    fn t_monomial(c: f64, k: usize, w: usize) -> Series1 {
        Series1::monomial(C64::new(c, 0.0), k, w)
    }

    fn pair_poly(a1: Series1, a2: Series1) -> SeriesPoly {
        SeriesPoly::new(vec![a1, a2])
    }

    fn poly1_family(name: &str, entries: Vec<Poly2>) -> MatrixFamily {
        let n = (entries.len() as f64).sqrt() as usize;
        MatrixFamily::poly1(name, n, entries, Domain::Interval { lo: -1.0, hi: 1.0 }).unwrap()
    }

    fn tpoly(coeffs: &[f64]) -> Poly2 {
        let c: Vec<C64> = coeffs.iter().map(|&x| C64::new(x, 0.0)).collect();
        Poly2::from_univariate(&c)
    }

    #[test]
    fn delta_two_of_separated_pair() {
        let roots = [t_monomial(1.0, 1, 8), t_monomial(-1.0, 1, 8)];
        let p = SeriesPoly::from_root_series(&roots, 8);
        let d2 = p.delta_series(2);
        let expect = t_monomial(4.0, 2, 8);
        assert!(d2.max_abs_diff(&expect) < 1e-12);
        let report = nonflat_check(&p, 8).unwrap();
        assert_eq!(report.k_max, 2);
        assert_eq!(report.order, 2);
        assert!(!report.flat);
    }

    #[test]
    fn nonflat_flags_exact_double_root() {
        let roots = [t_monomial(1.0, 1, 10), t_monomial(1.0, 1, 10)];
        let p = SeriesPoly::from_root_series(&roots, 10);
        let report = nonflat_check(&p, 10).unwrap();
        assert_eq!(report.k_max, 1);
        assert_eq!(report.order, 0);
        assert!(report.flat);
    }

    #[test]
    fn nonflat_is_inconclusive_below_the_window() {
        let a2 = Series1::truncated(vec![C64::ZERO; 8]);
        let p = pair_poly(Series1::zero(8), a2);
        assert!(matches!(
            nonflat_check(&p, 8),
            Err(FormalError::TruncationInconclusive { k_max: 1, .. })
        ));
        assert!(matches!(
            puiseux_expand(&p, 8),
            Err(FormalError::FlatContact)
        ));
    }

    #[test]
    fn mult_order_biconditional_examples() {
        let p = pair_poly(Series1::zero(12), t_monomial(1.0, 4, 12));
        let d2 = p.delta_series(2);
        assert!(d2.max_abs_diff(&t_monomial(-4.0, 4, 12)) < 1e-12);
        let r = mult_order_check(&p, 2).unwrap();
        assert!(r.cond_a && r.cond_b && r.agree);

        let p = pair_poly(Series1::zero(12), t_monomial(1.0, 1, 12));
        let r = mult_order_check(&p, 1).unwrap();
        assert!(!r.cond_a && !r.cond_b && r.agree);

        let p = pair_poly(Series1::zero(12), Series1::zero(12));
        let r = mult_order_check(&p, 3).unwrap();
        assert!(r.cond_a && r.cond_b && r.agree);

        let p = pair_poly(t_monomial(1.0, 0, 12), Series1::zero(12));
        assert!(matches!(
            mult_order_check(&p, 1),
            Err(FormalError::HypothesisViolated)
        ));
    }

    #[test]
    fn mult_order_agrees_on_an_order_lattice() {
        for o2 in 0..6usize {
            for o3 in 0..6usize {
                for r in 1..=3usize {
                    let p = SeriesPoly::new(vec![
                        Series1::zero(20),
                        t_monomial(1.5, o2, 20),
                        t_monomial(-2.0, o3, 20),
                    ]);
                    let rep = mult_order_check(&p, r).unwrap();
                    assert!(rep.agree, "o2={o2} o3={o3} r={r}");
                }
            }
        }
    }

    #[test]
    fn split_separates_constant_pair() {
        let p = pair_poly(Series1::zero(8), t_monomial(-1.0, 0, 8));
        let parts = split_series(&p, 8).unwrap();
        assert_eq!(parts.len(), 2);
        let mut roots: Vec<Series1> = parts.iter().map(|f| f.a(1).clone()).collect();
        roots.sort_by(series_cmp);
        assert!(roots[0].max_abs_diff(&t_monomial(-1.0, 0, 8)) < 1e-12);
        assert!(roots[1].max_abs_diff(&t_monomial(1.0, 0, 8)) < 1e-12);
    }

    #[test]
    fn split_lifts_a_tilted_pair() {
        let a1 = t_monomial(1.0, 1, 10);
        let a2 = Series1::polynomial(&[C64::new(-1.0, 0.0), C64::new(1.0, 0.0)], 10);
        let p = pair_poly(a1, a2);
        let parts = split_series(&p, 10).unwrap();
        let mut roots: Vec<Series1> = parts.iter().map(|f| f.a(1).clone()).collect();
        roots.sort_by(series_cmp);
        let low = Series1::polynomial(&[C64::new(-1.0, 0.0), C64::new(1.0, 0.0)], 10);
        assert!(roots[0].max_abs_diff(&low) < 1e-10);
        assert!(roots[1].max_abs_diff(&t_monomial(1.0, 0, 10)) < 1e-10);
    }

    #[test]
    fn split_requires_two_clusters() {
        let roots = [t_monomial(1.0, 0, 8), t_monomial(1.0, 0, 8)];
        let p = SeriesPoly::from_root_series(&roots, 8);
        assert!(matches!(
            split_series(&p, 8),
            Err(FormalError::ClustersNotSeparated { clusters: 1 })
        ));
    }

    #[test]
    fn branches_of_a_diagonal_family() {
        let f = poly1_family(
            "diag",
            vec![tpoly(&[0.0, 1.0]), Poly2::zero(), Poly2::zero(), tpoly(&[0.0, -1.0])],
        );
        let branches = branch_expand(&f, 12).unwrap();
        assert_eq!(branches.len(), 2);
        assert!(branches.iter().all(|b| b.gamma == 1 && b.multiplicity == 1));
        assert!(branches[0].series.max_abs_diff(&t_monomial(-1.0, 1, 12)) < 1e-10);
        assert!(branches[1].series.max_abs_diff(&t_monomial(1.0, 1, 12)) < 1e-10);
    }

    #[test]
    fn branches_of_a_circulant_family() {
        let p = tpoly(&[0.0, 1.0]);
        let q = tpoly(&[0.0, 1.0, 0.0, -1.0]);
        let f = poly1_family("circ", vec![p.clone(), q.clone(), q, p]);
        let branches = branch_expand(&f, 12).unwrap();
        assert_eq!(branches.len(), 2);
        let sum = Series1::polynomial(
            &[C64::ZERO, C64::new(2.0, 0.0), C64::ZERO, C64::new(-1.0, 0.0)],
            12,
        );
        let diff = t_monomial(1.0, 3, 12);
        let hit = |target: &Series1| {
            branches
                .iter()
                .any(|b| b.series.max_abs_diff(target) < 1e-10)
        };
        assert!(hit(&sum));
        assert!(hit(&diff));
    }

    #[test]
    fn branches_of_a_tangential_arc() {
        let f = poly1_family(
            "arc",
            vec![
                tpoly(&[0.0, 0.0, 1.0]),
                tpoly(&[0.0, 0.0, 0.0, 1.0]),
                tpoly(&[0.0, 0.0, 0.0, 1.0]),
                tpoly(&[0.0, 0.0, -1.0]),
            ],
        );
        let branches = branch_expand(&f, 24).unwrap();
        assert_eq!(branches.len(), 2);
        let mut plus = vec![C64::ZERO; 24];
        let mut c = 1.0;
        let mut k = 0usize;
        while 2 + 2 * k < 24 {
            plus[2 + 2 * k] = C64::new(c, 0.0);
            c *= (0.5 - k as f64) / (k as f64 + 1.0);
            k += 1;
        }
        let plus = Series1::polynomial(&plus, 24);
        let hit = branches
            .iter()
            .find(|b| b.series.coeff(2).re > 0.0)
            .unwrap();
        assert!(hit.series.max_abs_diff(&plus) < 1e-10);
        let neg = branches
            .iter()
            .find(|b| b.series.coeff(2).re < 0.0)
            .unwrap();
        assert!(neg.series.max_abs_diff(&plus.neg()) < 1e-10);
    }

    #[test]
    fn repeated_eigenvalue_folds_into_one_branch() {
        let t = tpoly(&[0.0, 1.0]);
        let f = poly1_family("twice", vec![t.clone(), Poly2::zero(), Poly2::zero(), t]);
        let branches = branch_expand(&f, 12).unwrap();
        assert_eq!(branches.len(), 1);
        assert_eq!(branches[0].multiplicity, 2);
        assert!(branches[0].series.max_abs_diff(&t_monomial(1.0, 1, 12)) < 1e-10);
    }

    #[test]
    fn branch_expand_gates_its_inputs() {
        let f = MatrixFamily::expr1(
            "e",
            1,
            vec![crate::expr::ScalarExpr::parse("t").unwrap()],
            Domain::Interval { lo: 0.0, hi: 1.0 },
        )
        .unwrap();
        assert!(matches!(
            branch_expand(&f, 8),
            Err(FormalError::PolynomialFamilyRequired)
        ));
        let g = poly1_family(
            "shear",
            vec![Poly2::zero(), tpoly(&[0.0, 1.0]), tpoly(&[1.0]), Poly2::zero()],
        );
        assert!(matches!(branch_expand(&g, 8), Err(FormalError::Family(_))));
    }

    #[test]
    fn fractional_slope_is_rejected_for_integer_expansion() {
        let p = pair_poly(Series1::zero(8), t_monomial(-1.0, 1, 8));
        assert!(matches!(
            series_roots(&p, 8),
            Err(FormalError::NonIntegerSlope { num: 1, den: 2 })
        ));
    }

    #[test]
    fn puiseux_square_root_branches() {
        let p = pair_poly(Series1::zero(8), t_monomial(-1.0, 1, 8));
        let branches = puiseux_expand(&p, 8).unwrap();
        assert_eq!(branches.len(), 2);
        assert!(branches.iter().all(|b| b.gamma == 2));
        assert!(branches[0].series.max_abs_diff(&t_monomial(-1.0, 1, 8)) < 1e-12);
        assert!(branches[1].series.max_abs_diff(&t_monomial(1.0, 1, 8)) < 1e-12);
    }

    #[test]
    fn puiseux_three_halves_branches() {
        let p = pair_poly(Series1::zero(10), t_monomial(-1.0, 3, 10));
        let branches = puiseux_expand(&p, 10).unwrap();
        assert_eq!(branches.len(), 2);
        assert!(branches.iter().all(|b| b.gamma == 2));
        assert!(branches[0].series.max_abs_diff(&t_monomial(-1.0, 3, 19)) < 1e-12);
        assert!(branches[1].series.max_abs_diff(&t_monomial(1.0, 3, 19)) < 1e-12);
    }

    #[test]
    fn puiseux_keeps_integer_branches_unramified() {
        let roots = [t_monomial(1.0, 1, 8), t_monomial(-1.0, 1, 8)];
        let p = SeriesPoly::from_root_series(&roots, 8);
        let branches = puiseux_expand(&p, 8).unwrap();
        assert_eq!(branches.len(), 2);
        assert!(branches.iter().all(|b| b.gamma == 1));
    }

    #[test]
    fn branch_values_match_the_pointwise_spectrum() {
        let p = tpoly(&[0.0, 1.0]);
        let q = tpoly(&[0.0, 1.0, 0.0, -1.0]);
        let f = poly1_family("circ", vec![p.clone(), q.clone(), q, p]);
        let branches = branch_expand(&f, 16).unwrap();
        let t = 0.07;
        let poly = f.char_poly_at(&[t]).unwrap();
        let mut spectrum = poly.poly_roots(&RootOptions::default()).unwrap();
        for b in &branches {
            let v = b.value_at(t);
            let i = spectrum
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    (*a - v).norm().total_cmp(&(*b - v).norm())
                })
                .map(|(i, _)| i)
                .unwrap();
            assert!((spectrum[i] - v).norm() < 1e-9);
            spectrum.remove(i);
        }
    }
}
