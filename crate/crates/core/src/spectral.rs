//! Contour-integral spectral projections and eigenvector transport.
//!
//! A circle in the resolvent set turns into a projection through trapezoid
//! quadrature of the resolvent; Sylvester products give an algebraic
//! cross-check. Frames, reduced matrices, and the commutator `[P', P]`
//! support `transport`, which integrates `U' = Q U` so that `U(t)` carries
//! the eigenspaces of a matrix family along a parameter interval.

use crate::assignment::bottleneck_match;
use crate::family::{FamilyError, MatrixFamily};
use crate::mat;
use crate::monic::{RootError, RootOptions};
use crate::tracking::canonical_sort;
use crate::{C64, CMatrix};
use thiserror::Error;

/// Absolute tolerance on projection quadrature and invariants.
const PROJ_TOL: f64 = 1e-10;
/// Transport residual tolerance at the default grid density.
const TRANS_TOL: f64 = 1e-6;
/// Eigenvalues closer than this fraction of the radius abort quadrature.
const CONTOUR_MARGIN: f64 = 1e-6;
/// Quadrature node cap for the doubling loop.
const MAX_QUAD_NODES: usize = 8192;
/// Relative separation required between Sylvester group representatives.
const SEP_TOL: f64 = 1e-8;
/// Gaps below this fraction of the family scale count as collapsed.
const GAP_FLOOR: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error("eigenvalue solve failed: {0}")]
    Root(#[from] RootError),
    #[error("an eigenvalue lies within {distance:.3e} of the contour")]
    ContourHitsSpectrum { distance: f64 },
    #[error("projection quadrature still changes by {change:.3e} at {nodes} nodes")]
    QuadratureNotConverged { change: f64, nodes: usize },
    #[error("trace {trace:.6} is not close to an integer rank")]
    AmbiguousRank { trace: f64 },
    #[error("group representatives are separated by only {separation:.3e}")]
    GroupsNotSeparated { separation: f64 },
    #[error("matrix is not a projection (idempotency defect {residual:.3e})")]
    NotAProjection { residual: f64 },
    #[error("group selection is empty, repeated, or out of range")]
    InvalidGroup,
    #[error("seed columns span less than the projection rank")]
    SeedDegenerate,
    #[error("range of the frame is not invariant (residual {residual:.3e})")]
    NotInvariant { residual: f64 },
    #[error("spectral gap around the tracked group closes at t = {at}")]
    GapCollapse { at: f64 },
    #[error("transport residual {residual:.3e} exceeds the tolerance")]
    ToleranceExceeded { residual: f64 },
}

/// Circle in the complex plane with a quadrature node count.
#[derive(Debug, Clone)]
pub struct Contour {
    pub center: C64,
    pub radius: f64,
    pub nodes: usize,
}

impl Contour {
    pub fn circle(center: C64, radius: f64, nodes: usize) -> Self {
        Contour {
            center,
            radius,
            nodes: nodes.max(4),
        }
    }
}

/// Idempotent matrix from a resolvent integral or a Sylvester product.
///
/// `p` squares to itself within `1e-10` (quadrature) or `1e-6` (algebraic
/// product); its trace is within rounding of the integer `rank`.
#[derive(Debug, Clone)]
pub struct SpectralProjection {
    pub p: CMatrix,
    pub rank: usize,
    pub contour: Option<Contour>,
}

/// Matrix with orthonormal columns spanning the range of a projection.
#[derive(Debug, Clone)]
pub struct Frame {
    pub v: CMatrix,
}

/// Trapezoid sum of the resolvent over the circle with `k` nodes.
fn resolvent_sum(a: &CMatrix, contour: &Contour, k: usize) -> Result<CMatrix, SpectralError> {
    let n = a.nrows();
    let mut acc = CMatrix::zeros(n, n);
    for j in 0..k {
        let theta = 2.0 * std::f64::consts::PI * j as f64 / k as f64;
        let w = C64::new(0.0, theta).exp();
        let z = contour.center + w * contour.radius;
        let mut shifted = a.clone();
        for i in 0..n {
            shifted[(i, i)] -= z;
        }
        let inv = shifted
            .lu()
            .try_inverse()
            .ok_or(SpectralError::ContourHitsSpectrum { distance: 0.0 })?;
        acc += inv * w;
    }
    Ok(acc * C64::new(-contour.radius / k as f64, 0.0))
}

/// Riesz projection onto the eigenspaces enclosed by the contour.
///
/// The node count doubles until the projection stops moving; the result
/// squares to itself and commutes with `a` within `1e-10` (relative to
/// the norm of `a` for the commutator).
pub fn contour_projection(
    a: &CMatrix,
    contour: &Contour,
) -> Result<SpectralProjection, SpectralError> {
    let scale = mat::fro_norm(a).max(1.0);
    let eigs = if mat::normality_residual(a) <= 1e-8 * scale * scale {
        mat::normal_eigenvalues(a)
    } else {
        mat::eigenvalues(a, &RootOptions::default())?
    };
    let margin = eigs
        .iter()
        .map(|l| ((l - contour.center).norm() - contour.radius).abs())
        .fold(f64::INFINITY, f64::min);
    if margin < CONTOUR_MARGIN * contour.radius {
        return Err(SpectralError::ContourHitsSpectrum { distance: margin });
    }

    let mut k = contour.nodes;
    let mut p = resolvent_sum(a, contour, k)?;
    loop {
        let p2 = resolvent_sum(a, contour, 2 * k)?;
        let change = mat::fro_norm(&(&p2 - &p));
        p = p2;
        k *= 2;
        if change <= PROJ_TOL {
            break;
        }
        if k > MAX_QUAD_NODES {
            return Err(SpectralError::QuadratureNotConverged { change, nodes: k });
        }
    }

    let idem = mat::fro_norm(&(&p * &p - &p));
    if idem > PROJ_TOL {
        return Err(SpectralError::QuadratureNotConverged {
            change: idem,
            nodes: k,
        });
    }
    let comm = mat::fro_norm(&(a * &p - &p * a));
    if comm > PROJ_TOL * mat::fro_norm(a).max(1.0) {
        return Err(SpectralError::QuadratureNotConverged {
            change: comm,
            nodes: k,
        });
    }
    let rank = projection_rank(&p)?;
    Ok(SpectralProjection {
        p,
        rank,
        contour: Some(contour.clone()),
    })
}

/// Rank from the rounded trace, cross-checked against the count of
/// singular values above one half.
fn projection_rank(p: &CMatrix) -> Result<usize, SpectralError> {
    let tr = p.trace();
    let rounded = tr.re.round();
    if (tr.re - rounded).abs() > 0.1 || tr.im.abs() > 0.1 || rounded < 0.0 {
        return Err(SpectralError::AmbiguousRank { trace: tr.re });
    }
    let above = p
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .filter(|&&s| s > 0.5)
        .count();
    if above != rounded as usize {
        return Err(SpectralError::AmbiguousRank { trace: tr.re });
    }
    Ok(above)
}

/// Rank of a projection, recomputed from its matrix.
pub fn rank_of(p: &SpectralProjection) -> Result<usize, SpectralError> {
    projection_rank(&p.p)
}

/// Sylvester product projection for group `i` of a spectrum partition:
/// the product of `(A - r_j) / (r_i - r_j)` over the other groups, with
/// `r_j` the mean of group `j`.
///
/// Exact when each group holds copies of a single eigenvalue; tight
/// clusters give a projection up to the cluster width.
pub fn sylvester_projection(
    a: &CMatrix,
    groups: &[Vec<C64>],
    i: usize,
) -> Result<SpectralProjection, SpectralError> {
    if i >= groups.len() || groups.iter().any(Vec::is_empty) {
        return Err(SpectralError::InvalidGroup);
    }
    let reps: Vec<C64> = groups
        .iter()
        .map(|g| g.iter().sum::<C64>() / C64::new(g.len() as f64, 0.0))
        .collect();
    let scale = reps.iter().map(|r| r.norm()).fold(1.0, f64::max);
    let mut sep = f64::INFINITY;
    for p in 0..reps.len() {
        for q in (p + 1)..reps.len() {
            sep = sep.min((reps[p] - reps[q]).norm());
        }
    }
    if sep <= SEP_TOL * scale {
        return Err(SpectralError::GroupsNotSeparated { separation: sep });
    }

    let n = a.nrows();
    let mut p = CMatrix::identity(n, n);
    for (j, &r) in reps.iter().enumerate() {
        if j == i {
            continue;
        }
        let mut factor = a.clone();
        for d in 0..n {
            factor[(d, d)] -= r;
        }
        p = p * factor / (reps[i] - r);
    }

    let idem = mat::fro_norm(&(&p * &p - &p));
    if idem > 1e-6 * mat::fro_norm(&p).max(1.0) {
        return Err(SpectralError::NotAProjection { residual: idem });
    }
    let rank = projection_rank(&p)?;
    Ok(SpectralProjection {
        p,
        rank,
        contour: None,
    })
}

/// Orthonormal frame for the range of a projection.
///
/// Seed columns (default: the columns of `p` with the largest norms) are
/// projected and orthonormalized twice; each column's phase makes its
/// first noticeable component real positive.
pub fn frame_of(
    p: &SpectralProjection,
    seed: Option<&CMatrix>,
) -> Result<Frame, SpectralError> {
    let n = p.p.nrows();
    let rank = p.rank;
    let default_seed;
    let seed = match seed {
        Some(s) => {
            if s.nrows() != n || s.ncols() != rank {
                return Err(SpectralError::SeedDegenerate);
            }
            s
        }
        None => {
            let mut by_norm: Vec<usize> = (0..n).collect();
            by_norm.sort_by(|&a, &b| {
                p.p.column(b)
                    .norm()
                    .total_cmp(&p.p.column(a).norm())
                    .then(a.cmp(&b))
            });
            let mut picked = by_norm[..rank].to_vec();
            picked.sort_unstable();
            default_seed = CMatrix::from_columns(
                &picked.iter().map(|&j| p.p.column(j).into_owned()).collect::<Vec<_>>(),
            );
            &default_seed
        }
    };

    let mut cols: Vec<crate::CVector> = Vec::with_capacity(rank);
    for j in 0..rank {
        let raw = seed.column(j).into_owned();
        let mut w = &p.p * &raw;
        for _ in 0..2 {
            for c in &cols {
                let coeff = c.dotc(&w);
                w -= c * coeff;
            }
        }
        if w.norm() <= 1e-8 * raw.norm().max(f64::MIN_POSITIVE) {
            return Err(SpectralError::SeedDegenerate);
        }
        mat::normalize_phase(&mut w);
        cols.push(w);
    }
    Ok(Frame {
        v: CMatrix::from_columns(&cols),
    })
}

/// Compression `V* A V` of a matrix to the range of a frame.
pub fn reduced_matrix(a: &CMatrix, frame: &Frame) -> Result<CMatrix, SpectralError> {
    let v = &frame.v;
    let m = v.adjoint() * a * v;
    let residual = mat::fro_norm(&(a * v - v * &m)) / mat::fro_norm(a).max(1.0);
    if residual > 1e-8 {
        return Err(SpectralError::NotInvariant { residual });
    }
    Ok(m)
}

/// The commutator `P' P - P P'` that drives the transport equation.
pub fn commutator_q(p: &CMatrix, p_prime: &CMatrix) -> CMatrix {
    p_prime * p - p * p_prime
}

/// Tuning knobs for `transport`.
#[derive(Debug, Clone)]
pub struct TransportOptions {
    /// Step count; `None` chooses 200 per unit length (at least 40).
    pub steps: Option<usize>,
    /// Initial quadrature node count per projection.
    pub quad_nodes: usize,
    /// Differentiate the resolvent inside the quadrature instead of
    /// taking finite differences of the projection.
    pub resolvent_deriv: bool,
    pub trans_tol: f64,
    pub root: RootOptions,
}

impl Default for TransportOptions {
    fn default() -> Self {
        TransportOptions {
            steps: None,
            quad_nodes: 64,
            resolvent_deriv: false,
            trans_tol: TRANS_TOL,
            root: RootOptions::default(),
        }
    }
}

/// Transport of an eigenvalue group along a parameter interval.
#[derive(Debug, Clone)]
pub struct TransportResult {
    pub grid: Vec<f64>,
    /// Transformation matrices, starting from the identity.
    pub u: Vec<CMatrix>,
    /// Projection onto the tracked group at each node.
    pub p: Vec<CMatrix>,
    pub rank: usize,
    /// Largest `||U*U - I||` over the grid.
    pub unitary_residual: f64,
    /// Largest `||U P(t0) U* - P(t)||` over the grid.
    pub intertwine_residual: f64,
}

/// Integrate `U' = [P', P] U` for the eigenvalue group selected by
/// `group` (indices into the sorted spectrum at `lo`).
///
/// The contour is re-centered at every node and half-step: a circle at
/// the group mean whose radius splits the annulus between the group and
/// the rest of the spectrum. `U` stays unitary and carries `P(lo)` onto
/// `P(t)` within the tolerance, or the run fails.
pub fn transport(
    f: &MatrixFamily,
    lo: f64,
    hi: f64,
    group: &[usize],
    opts: &TransportOptions,
) -> Result<TransportResult, SpectralError> {
    let a0 = f.eval(&[lo])?;
    let n = a0.nrows();
    let mut seen = vec![false; n];
    if group.is_empty()
        || group
            .iter()
            .any(|&j| j >= n || std::mem::replace(&mut seen[j], true))
    {
        return Err(SpectralError::InvalidGroup);
    }
    let m = match opts.steps {
        Some(m) => m.max(1),
        None => (((hi - lo) * 200.0).ceil() as usize).max(40),
    };
    let dt = (hi - lo) / m as f64;
    let family_scale = {
        let mut s = 0.0f64;
        for t in [lo, 0.5 * (lo + hi), hi] {
            s = s.max(mat::fro_norm(&f.eval(&[t])?));
        }
        s
    };

    // walk nodes and half-steps, re-centering the contour as the group
    // moves; membership is carried by optimal matching of full spectra
    let mut vals = spectrum_sorted(&a0, &opts.root)?;
    let mut flags = vec![false; n];
    for &j in group {
        flags[j] = true;
    }
    let times: Vec<f64> = (0..=2 * m).map(|i| lo + 0.5 * dt * i as f64).collect();
    let mut qs: Vec<CMatrix> = Vec::with_capacity(times.len());
    let mut ps: Vec<CMatrix> = Vec::with_capacity(m + 1);
    let mut rank0 = 0usize;
    for (i, &s) in times.iter().enumerate() {
        if i > 0 {
            let next = spectrum_sorted(&f.eval(&[s])?, &opts.root)?;
            let sigma = bottleneck_match(&vals, &next);
            let mut next_flags = vec![false; n];
            for (j, &to) in sigma.iter().enumerate() {
                next_flags[to] = flags[j];
            }
            vals = next;
            flags = next_flags;
        }
        let contour = group_contour(&vals, &flags, s, family_scale)?;
        let proj = contour_projection(&f.eval(&[s])?, &contour)?;
        if i == 0 {
            rank0 = proj.rank;
        } else if proj.rank != rank0 {
            return Err(SpectralError::GapCollapse { at: s });
        }
        let dp = if opts.resolvent_deriv {
            resolvent_derivative(f, s, &contour, opts.quad_nodes)?
        } else {
            // five-point stencil with the contour frozen at the center
            let h = dt;
            let eight = C64::new(8.0, 0.0);
            let pm2 = contour_projection(&f.eval(&[s - 2.0 * h])?, &contour)?.p;
            let pm1 = contour_projection(&f.eval(&[s - h])?, &contour)?.p;
            let pp1 = contour_projection(&f.eval(&[s + h])?, &contour)?.p;
            let pp2 = contour_projection(&f.eval(&[s + 2.0 * h])?, &contour)?.p;
            (pm2 - pm1 * eight + pp1 * eight - pp2) / C64::new(12.0 * h, 0.0)
        };
        qs.push(commutator_q(&proj.p, &dp));
        if i % 2 == 0 {
            ps.push(proj.p);
        }
    }

    // classical one-step fourth-order integration of U' = Q U
    let mut us: Vec<CMatrix> = Vec::with_capacity(m + 1);
    us.push(CMatrix::identity(n, n));
    for k in 0..m {
        let u = us[k].clone();
        let (qa, qm, qb) = (&qs[2 * k], &qs[2 * k + 1], &qs[2 * k + 2]);
        let half = C64::new(0.5 * dt, 0.0);
        let two = C64::new(2.0, 0.0);
        let k1 = qa * &u;
        let k2 = qm * &(&u + &k1 * half);
        let k3 = qm * &(&u + &k2 * half);
        let k4 = qb * &(&u + &k3 * C64::new(dt, 0.0));
        us.push(&u + (k1 + k2 * two + k3 * two + k4) * C64::new(dt / 6.0, 0.0));
    }

    let eye = CMatrix::identity(n, n);
    let p0 = ps[0].clone();
    let mut unitary = 0.0f64;
    let mut intertwine = 0.0f64;
    for k in 0..=m {
        let u = &us[k];
        unitary = unitary.max(mat::fro_norm(&(u.adjoint() * u - &eye)));
        intertwine = intertwine.max(mat::fro_norm(&(u * &p0 * u.adjoint() - &ps[k])));
    }
    let worst = unitary.max(intertwine);
    if worst > opts.trans_tol {
        return Err(SpectralError::ToleranceExceeded { residual: worst });
    }
    Ok(TransportResult {
        grid: (0..=m).map(|k| lo + dt * k as f64).collect(),
        u: us,
        p: ps,
        rank: rank0,
        unitary_residual: unitary,
        intertwine_residual: intertwine,
    })
}

fn spectrum_sorted(a: &CMatrix, root: &RootOptions) -> Result<Vec<C64>, SpectralError> {
    let mut eigs = mat::eigenvalues(a, root)?;
    canonical_sort(&mut eigs);
    Ok(eigs)
}

/// Circle at the group mean whose radius splits the annulus between the
/// group and the rest of the spectrum.
///
/// The annulus must be wider than a fraction of the family scale because
/// eigenvalues of a defective characteristic polynomial carry root-finder
/// fuzz that would otherwise mimic a tiny open gap.
fn group_contour(
    vals: &[C64],
    flags: &[bool],
    at: f64,
    family_scale: f64,
) -> Result<Contour, SpectralError> {
    let members: Vec<C64> = vals
        .iter()
        .zip(flags)
        .filter(|(_, &f)| f)
        .map(|(&v, _)| v)
        .collect();
    let center = members.iter().sum::<C64>() / C64::new(members.len() as f64, 0.0);
    let d_in = members
        .iter()
        .map(|v| (v - center).norm())
        .fold(0.0, f64::max);
    let d_out = vals
        .iter()
        .zip(flags)
        .filter(|(_, &f)| !f)
        .map(|(&v, _)| (v - center).norm())
        .fold(f64::INFINITY, f64::min);
    if d_out.is_infinite() {
        return Ok(Contour::circle(center, d_in + 1.0, 64));
    }
    let width = d_out - d_in;
    if width <= 1e-6 * d_out.max(f64::MIN_POSITIVE)
        || width <= GAP_FLOOR * family_scale.max(f64::MIN_POSITIVE)
    {
        return Err(SpectralError::GapCollapse { at });
    }
    Ok(Contour::circle(center, 0.5 * (d_in + d_out), 64))
}

/// Quadrature of `R A' R` over the contour: the derivative of the
/// projection taken inside the resolvent integral.
fn resolvent_derivative(
    f: &MatrixFamily,
    t: f64,
    contour: &Contour,
    k: usize,
) -> Result<CMatrix, SpectralError> {
    let a = f.eval(&[t])?;
    let aprime = f.derivative(&[t], 0)?;
    let n = a.nrows();
    let mut acc = CMatrix::zeros(n, n);
    let mut prev: Option<CMatrix> = None;
    let mut k = k.max(4);
    loop {
        acc.fill(C64::ZERO);
        for j in 0..k {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / k as f64;
            let w = C64::new(0.0, theta).exp();
            let z = contour.center + w * contour.radius;
            let mut shifted = a.clone();
            for i in 0..n {
                shifted[(i, i)] -= z;
            }
            let inv = shifted
                .lu()
                .try_inverse()
                .ok_or(SpectralError::ContourHitsSpectrum { distance: 0.0 })?;
            acc += (&inv * &aprime * &inv) * w;
        }
        let dp = acc.clone() * C64::new(contour.radius / k as f64, 0.0);
        if let Some(p) = prev {
            let change = mat::fro_norm(&(&dp - &p));
            if change <= PROJ_TOL {
                return Ok(dp);
            }
            if 2 * k > MAX_QUAD_NODES {
                return Err(SpectralError::QuadratureNotConverged { change, nodes: k });
            }
        }
        prev = Some(dp);
        k *= 2;
    }
}
