//! Continuous eigenvalue branch selection along a parameter interval.
//!
//! `track_curve` samples the spectrum on a grid and connects consecutive
//! nodes by optimal matching, bisecting any step whose matching cost is
//! large compared to the eigenvalue gaps at its endpoints. Collision nodes
//! can then be refined to first or second order, and the resulting branch
//! sets feed the holonomy, completion, and certificate routines.

use crate::assignment::{bottleneck_cost, bottleneck_match};
use crate::family::{FamilyError, FamilyKind, MatrixFamily};
use crate::mat;
use crate::monic::{RootError, RootOptions};
use crate::poly2::Poly2;
use crate::{C64, CMatrix, CVector};
use thiserror::Error;

/// Relative closure tolerance for loop families.
const LOOP_TOL: f64 = 1e-10;
/// Relative slack when comparing quotients against the derivative bound.
const LIP_SLACK: f64 = 1e-6;
/// Offset used when probing one-sided behavior next to a node.
const PROBE_H: f64 = 1e-8;
/// Relative tolerance for Hermitian and skew-Hermitian detection.
const HERMITIAN_TOL: f64 = 1e-8;
/// Relative normality tolerance for the matching-bound check.
const NORMAL_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum TrackError {
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error("root solve failed at t = {at}: {source}")]
    Root { at: f64, source: RootError },
    #[error("the family must depend on a single real parameter")]
    UnivariateRequired,
    #[error("a grid needs at least two strictly increasing nodes")]
    GridTooSmall,
    #[error("step [{left}, {right}] kept cost {cost:.3e} after maximal bisection")]
    RefinementExhausted { left: f64, right: f64, cost: f64 },
    #[error("endpoint matrices differ by {residual:.3e}; not a loop")]
    NotALoop { residual: f64 },
    #[error("vector fails the eigenpair equation by {residual:.3e}")]
    NotAnEigenpair { residual: f64 },
    #[error("one-sided derivative sets at t = {node} mismatch by {cost:.3e}")]
    DerivativeSetMismatch { node: f64, cost: f64 },
    #[error("second-order refinement needs a polynomial family")]
    PolynomialFamilyRequired,
    #[error("shifted family is not divisible at t = {node} (remainder {residual:.3e})")]
    DeflationFailed { node: f64, residual: f64 },
    #[error("difference quotients at t = {node} shrink with ratio {ratio:.3} instead of 4")]
    RichardsonInconsistent { node: f64, ratio: f64 },
    #[error("claimed branch value is not part of the spectrum at t = {node}")]
    NotASubMultiset { node: f64 },
    #[error("the partial and full branch sets live on different grids")]
    GridMismatch,
    #[error("matrix is neither Hermitian nor skew-Hermitian (residual {residual:.3e})")]
    NotHermitian { residual: f64 },
    #[error("matrix is not normal (residual {residual:.3e})")]
    NotNormal { residual: f64 },
}

/// Tuning knobs for tracking and refinement.
#[derive(Debug, Clone)]
pub struct TrackOptions {
    /// Node count for `track_curve`; `None` chooses 200 per unit length.
    pub initial_nodes: Option<usize>,
    /// A step is accepted when its cost is below this fraction of the gap.
    pub gap_ratio: f64,
    pub max_bisection_depth: usize,
    /// Steps whose cost is below this (times scale) count as resolved.
    pub resolution_tol: f64,
    /// Distance under which node values form a collision cluster.
    pub collision_tol: f64,
    /// Allowed mismatch between one-sided derivative multisets.
    pub c1_tol: f64,
    /// Allowed drift in the second-difference consistency check.
    pub c2_tol: f64,
    /// Allowed eigenpair residual in `onesided_derivative`.
    pub eigenpair_tol: f64,
    pub root: RootOptions,
    /// Optional relabeling of the first node's sorted spectrum.
    pub initial_order: Option<Vec<usize>>,
}

impl Default for TrackOptions {
    fn default() -> Self {
        TrackOptions {
            initial_nodes: None,
            gap_ratio: 0.4,
            max_bisection_depth: 40,
            resolution_tol: 1e-9,
            collision_tol: 1e-8,
            c1_tol: 1e-6,
            c2_tol: 1e-4,
            eigenpair_tol: 1e-8,
            root: RootOptions::default(),
            initial_order: None,
        }
    }
}

/// Smoothness established for a branch set.
#[derive(Debug, Clone, PartialEq)]
pub enum Smoothness {
    Continuous,
    Differentiable,
    /// Differentiable, with second-order consistency at the listed nodes.
    TwiceAt(Vec<f64>),
}

/// Eigenvalue branches over a grid.
///
/// `values[k][j]` is branch `j` at node `k`; `source[k][j]` is its position
/// in the canonically sorted spectrum at that node. Derivative rows are
/// filled at refined collision nodes.
#[derive(Debug, Clone)]
pub struct BranchSet {
    pub grid: Vec<f64>,
    pub values: Vec<Vec<C64>>,
    pub source: Vec<Vec<usize>>,
    pub left_deriv: Vec<Option<Vec<C64>>>,
    pub right_deriv: Vec<Option<Vec<C64>>>,
    pub smoothness: Smoothness,
}

impl BranchSet {
    pub fn branches(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn nodes(&self) -> usize {
        self.grid.len()
    }

    /// Values of branch `j` along the grid.
    pub fn branch(&self, j: usize) -> Vec<C64> {
        self.values.iter().map(|row| row[j]).collect()
    }

    /// Indices of interior nodes where some values cluster within `tol`
    /// relative to the row scale.
    pub fn collision_nodes(&self, tol: f64) -> Vec<usize> {
        (1..self.grid.len().saturating_sub(1))
            .filter(|&k| {
                let row = &self.values[k];
                let eps = tol * row_scale(row);
                clusters(row, eps).iter().any(|g| g.len() > 1)
            })
            .collect()
    }
}

/// Sort in place by real part, then imaginary part.
pub fn canonical_sort(row: &mut [C64]) {
    row.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

fn row_scale(row: &[C64]) -> f64 {
    row.iter().map(|v| v.norm()).fold(1.0, f64::max)
}

/// Group indices whose values lie within `eps` of each other (transitively).
fn clusters(row: &[C64], eps: f64) -> Vec<Vec<usize>> {
    let n = row.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (row[i] - row[j]).norm() <= eps {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let r = find(&mut parent, i);
        groups[r].push(i);
    }
    groups.retain(|g| !g.is_empty());
    groups.sort_by_key(|g| g[0]);
    groups
}

/// Canonically sorted spectrum of the family at `t`.
fn spectrum(f: &MatrixFamily, t: f64, root: &RootOptions) -> Result<Vec<C64>, TrackError> {
    let a = f.eval(&[t])?;
    let p = mat::char_poly(&a);
    let mut roots = p
        .poly_roots(root)
        .map_err(|source| TrackError::Root { at: t, source })?;
    canonical_sort(&mut roots);
    Ok(roots)
}

/// Track with a uniform initial grid over `[lo, hi]`.
pub fn track_curve(
    f: &MatrixFamily,
    lo: f64,
    hi: f64,
    opts: &TrackOptions,
) -> Result<BranchSet, TrackError> {
    if !(hi > lo) {
        return Err(TrackError::GridTooSmall);
    }
    let nodes = match opts.initial_nodes {
        Some(m) if m >= 2 => m,
        Some(_) => return Err(TrackError::GridTooSmall),
        None => {
            let m = ((hi - lo) * 200.0).ceil() as usize;
            let m = m.max(40);
            // keep the count odd so symmetric intervals sample their center
            if m % 2 == 0 { m + 1 } else { m }
        }
    };
    let grid: Vec<f64> = (0..nodes)
        .map(|i| lo + (hi - lo) * i as f64 / (nodes - 1) as f64)
        .collect();
    track_on_grid(f, &grid, opts)
}

/// Track over a caller-supplied strictly increasing grid. Bisection may
/// insert additional nodes; all supplied nodes are kept.
pub fn track_on_grid(
    f: &MatrixFamily,
    grid: &[f64],
    opts: &TrackOptions,
) -> Result<BranchSet, TrackError> {
    if f.arity() != 1 {
        return Err(TrackError::UnivariateRequired);
    }
    if grid.len() < 2 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(TrackError::GridTooSmall);
    }
    let raw0 = spectrum(f, grid[0], &opts.root)?;
    let n = raw0.len();
    let order: Vec<usize> = match &opts.initial_order {
        Some(p) => {
            let mut seen = vec![false; n];
            if p.len() != n || p.iter().any(|&j| j >= n || std::mem::replace(&mut seen[j], true)) {
                return Err(TrackError::GridTooSmall);
            }
            p.clone()
        }
        None => (0..n).collect(),
    };
    let row0: Vec<C64> = order.iter().map(|&j| raw0[j]).collect();

    let mut nodes: Vec<(f64, Vec<C64>, Vec<usize>)> = vec![(grid[0], row0, order)];
    for &target in &grid[1..] {
        advance(f, &mut nodes, target, 0, opts)?;
    }

    let len = nodes.len();
    let mut out = BranchSet {
        grid: Vec::with_capacity(len),
        values: Vec::with_capacity(len),
        source: Vec::with_capacity(len),
        left_deriv: vec![None; len],
        right_deriv: vec![None; len],
        smoothness: Smoothness::Continuous,
    };
    for (t, row, src) in nodes {
        out.grid.push(t);
        out.values.push(row);
        out.source.push(src);
    }
    Ok(out)
}

/// Extend the node list up to `t_right`, bisecting while the matching cost
/// is large relative to the eigenvalue gaps and above the resolution floor.
fn advance(
    f: &MatrixFamily,
    nodes: &mut Vec<(f64, Vec<C64>, Vec<usize>)>,
    t_right: f64,
    depth: usize,
    opts: &TrackOptions,
) -> Result<(), TrackError> {
    let (t_left, left_row) = {
        let last = nodes.last().expect("at least the initial node");
        (last.0, last.1.clone())
    };
    let raw = spectrum(f, t_right, &opts.root)?;
    let mut sigma = bottleneck_match(&left_row, &raw);
    let cost = bottleneck_cost(&left_row, &raw, &sigma);
    let scale = row_scale(&left_row).max(row_scale(&raw));
    let gap = min_nonzero_gap(&left_row).min(min_nonzero_gap(&raw));
    let resolved = cost <= opts.resolution_tol * scale;
    if resolved || cost <= opts.gap_ratio * gap {
        disambiguate_ties(nodes, &left_row, &raw, &mut sigma);
        let row: Vec<C64> = sigma.iter().map(|&j| raw[j]).collect();
        nodes.push((t_right, row, sigma));
        return Ok(());
    }
    let mid = 0.5 * (t_left + t_right);
    if depth >= opts.max_bisection_depth || mid <= t_left || mid >= t_right {
        return Err(TrackError::RefinementExhausted {
            left: t_left,
            right: t_right,
            cost,
        });
    }
    advance(f, nodes, mid, depth + 1, opts)?;
    advance(f, nodes, t_right, depth + 1, opts)
}

/// Re-pair slots holding exactly equal values using the most recent row
/// where they were separated, so the continuation chosen through a
/// collision does not depend on slot order.
fn disambiguate_ties(
    nodes: &[(f64, Vec<C64>, Vec<usize>)],
    left_row: &[C64],
    raw: &[C64],
    sigma: &mut [usize],
) {
    let order = |a: &C64, b: &C64| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im));
    for g in clusters(left_row, 0.0) {
        if g.len() < 2 {
            continue;
        }
        let hist = nodes
            .iter()
            .rev()
            .map(|(_, row, _)| row)
            .find(|row| g.iter().all(|&i| g.iter().all(|&j| i == j || row[i] != row[j])));
        let Some(prev) = hist else { continue };
        let mut slots = g.clone();
        slots.sort_by(|&i, &j| order(&prev[i], &prev[j]));
        let mut targets: Vec<usize> = g.iter().map(|&i| sigma[i]).collect();
        targets.sort_by(|&p, &q| order(&raw[p], &raw[q]));
        for (&s, t) in slots.iter().zip(targets) {
            sigma[s] = t;
        }
    }
}

/// Smallest nonzero pairwise distance within a row; infinite when the row
/// is fully collapsed.
fn min_nonzero_gap(row: &[C64]) -> f64 {
    let mut gap = f64::INFINITY;
    for i in 0..row.len() {
        for j in (i + 1)..row.len() {
            let d = (row[i] - row[j]).norm();
            if d > 0.0 && d < gap {
                gap = d;
            }
        }
    }
    gap
}

/// Permutation mapping the final row of a loop back onto the initial row.
pub fn holonomy(f: &MatrixFamily, b: &BranchSet) -> Result<Vec<usize>, TrackError> {
    let a0 = f.eval(&[b.grid[0]])?;
    let a1 = f.eval(&[*b.grid.last().expect("nonempty grid")])?;
    let residual = mat::fro_norm(&(&a0 - &a1)) / mat::fro_norm(&a0).max(1.0);
    if residual > LOOP_TOL {
        return Err(TrackError::NotALoop { residual });
    }
    let last = b.values.last().expect("nonempty grid");
    Ok(bottleneck_match(last, &b.values[0]))
}

/// One-sided derivative of an eigenvalue branch from an eigenpair of the
/// adjacent matrix: the inner product of `aprime * w` against `w`.
pub fn onesided_derivative(
    a: &CMatrix,
    aprime: &CMatrix,
    lambda: C64,
    w: &CVector,
    tol: f64,
) -> Result<C64, TrackError> {
    let norm = w.norm();
    let wn: CVector = w / C64::new(norm, 0.0);
    let residual = (a * &wn - &wn * lambda).norm() / mat::fro_norm(a).max(1.0);
    if residual > tol {
        return Err(TrackError::NotAnEigenpair { residual });
    }
    Ok(wn.dotc(&(aprime * &wn)))
}

/// First-order refinement: reorder branches after each collision node so
/// one-sided derivative multisets connect continuously.
pub fn c1_refine(
    f: &MatrixFamily,
    b: &BranchSet,
    opts: &TrackOptions,
) -> Result<BranchSet, TrackError> {
    let n = b.branches();
    c1_refine_movable(f, b, opts, &vec![true; n])
}

fn c1_refine_movable(
    f: &MatrixFamily,
    b: &BranchSet,
    opts: &TrackOptions,
    movable: &[bool],
) -> Result<BranchSet, TrackError> {
    if f.arity() != 1 {
        return Err(TrackError::UnivariateRequired);
    }
    let mut out = b.clone();
    let n = out.branches();
    let len = out.grid.len();
    let lo = out.grid[0];
    let hi = out.grid[len - 1];
    // with a normality certificate the eigenpair formula applies; otherwise
    // fall back to difference quotients against probe spectra
    let eig_route = f.normality_check().is_ok();
    // collisions are judged against the branch set's overall magnitude so
    // that small-but-separated values near a zero are not misread as
    // crossings
    let gscale = out
        .values
        .iter()
        .flat_map(|row| row.iter().map(|v| v.norm()))
        .fold(0.0, f64::max);

    for k in 1..len.saturating_sub(1) {
        let row = out.values[k].clone();
        let eps = opts.collision_tol * gscale;
        let groups = clusters(&row, eps);
        if groups.iter().all(|g| g.len() == 1) {
            continue;
        }
        let tk = out.grid[k];
        let h = (PROBE_H * tk.abs().max(1.0))
            .min(0.5 * (tk - lo))
            .min(0.5 * (hi - tk));
        if h <= 0.0 {
            continue;
        }
        let spec_l = spectrum(f, tk - h, &opts.root)?;
        let spec_r = spectrum(f, tk + h, &opts.root)?;
        // transport branch labels onto the probes from the resolved sides
        let sig_l = bottleneck_match(&out.values[k - 1], &spec_l);
        let sig_r = bottleneck_match(&out.values[k + 1], &spec_r);

        let mut dl = vec![C64::ZERO; n];
        let mut dr = vec![C64::ZERO; n];
        if eig_route {
            let ap = f.derivative(&[tk], 0)?;
            let al = f.eval(&[tk - h])?;
            let ar = f.eval(&[tk + h])?;
            for j in 0..n {
                let wl = mat::eigenvector_for(&al, spec_l[sig_l[j]]);
                let wr = mat::eigenvector_for(&ar, spec_r[sig_r[j]]);
                dl[j] = wl.dotc(&(&ap * &wl));
                dr[j] = wr.dotc(&(&ap * &wr));
            }
        } else {
            let hb = C64::new(h, 0.0);
            for j in 0..n {
                dl[j] = (row[j] - spec_l[sig_l[j]]) / hb;
                dr[j] = (spec_r[sig_r[j]] - row[j]) / hb;
            }
        }

        let dscale = row_scale(&dl).max(row_scale(&dr));
        let mut dr_new = dr.clone();
        for g in &groups {
            let free: Vec<usize> = g.iter().copied().filter(|&j| movable[j]).collect();
            if free.len() < 2 {
                continue;
            }
            let gl: Vec<C64> = free.iter().map(|&j| dl[j]).collect();
            let gr: Vec<C64> = free.iter().map(|&j| dr[j]).collect();
            let sg = bottleneck_match(&gl, &gr);
            let cost = bottleneck_cost(&gl, &gr, &sg);
            if cost > opts.c1_tol * dscale {
                return Err(TrackError::DerivativeSetMismatch { node: tk, cost });
            }
            for m in (k + 1)..len {
                let vals = out.values[m].clone();
                let srcs = out.source[m].clone();
                for (p, &j) in free.iter().enumerate() {
                    out.values[m][j] = vals[free[sg[p]]];
                    out.source[m][j] = srcs[free[sg[p]]];
                }
            }
            for (p, &j) in free.iter().enumerate() {
                dr_new[j] = dr[free[sg[p]]];
            }
        }
        out.left_deriv[k] = Some(dl);
        out.right_deriv[k] = Some(dr_new);
    }
    out.smoothness = Smoothness::Differentiable;
    Ok(out)
}

/// Second-order refinement for polynomial families: at nodes where the
/// whole spectrum collides, subtract the mean eigenvalue, divide by the
/// vanishing factor, track the quotient family, and multiply back.
///
/// The returned grid refines the input grid; derivative rows are reset.
pub fn c2_refine(
    f: &MatrixFamily,
    b: &BranchSet,
    opts: &TrackOptions,
) -> Result<BranchSet, TrackError> {
    c2_inner(f, b, opts, 0)
}

fn c2_inner(
    f: &MatrixFamily,
    b: &BranchSet,
    opts: &TrackOptions,
    depth: usize,
) -> Result<BranchSet, TrackError> {
    let entries = match &f.kind {
        FamilyKind::Poly1(e) => e.clone(),
        _ => return Err(TrackError::PolynomialFamilyRequired),
    };
    let refined = c1_refine(f, b, opts)?;
    let n = refined.branches();
    let len = refined.grid.len();

    // find the first run of nodes where every branch shares one value
    let is_total = |k: usize| {
        let row = &refined.values[k];
        n >= 2 && clusters(row, opts.collision_tol * row_scale(row)).len() == 1
    };
    let Some(first) = (1..len.saturating_sub(1)).find(|&k| is_total(k)) else {
        return Ok(refined);
    };
    if depth >= 16 {
        return Ok(refined);
    }
    let mut last = first;
    while last + 1 < len - 1 && is_total(last + 1) {
        last += 1;
    }
    let spread = |k: usize| {
        let row = &refined.values[k];
        let mut s = 0.0f64;
        for i in 0..row.len() {
            for j in (i + 1)..row.len() {
                s = s.max((row[i] - row[j]).norm());
            }
        }
        s
    };
    let k0 = (first..=last)
        .min_by(|&a, &b| spread(a).total_cmp(&spread(b)))
        .expect("nonempty run");
    let lo = refined.grid[0];
    let hi = refined.grid[len - 1];

    // mean eigenvalue as a polynomial: trace / n
    let mut trace = Poly2::zero();
    for i in 0..n {
        trace = trace.add(&entries[i * n + i]);
    }
    let mu = trace.scale(C64::new(1.0 / n as f64, 0.0));
    let mut centered = Vec::with_capacity(n * n);
    for (idx, e) in entries.iter().enumerate() {
        let c = if idx % (n + 1) == 0 { e.sub(&mu) } else { e.clone() };
        centered.push(c.as_univariate().ok_or(TrackError::PolynomialFamilyRequired)?);
    }
    let coeff_scale = entries.iter().map(Poly2::max_abs).fold(1.0, f64::max);
    let defl_tol = 1e-8 * coeff_scale;
    let nonzero: Vec<&Vec<C64>> = centered
        .iter()
        .filter(|c| c.iter().any(|z| z.norm() > 0.0))
        .collect();
    if nonzero.is_empty() {
        // every branch equals the mean everywhere, so nothing needs a mark
        let mut out = refined;
        out.smoothness = Smoothness::TwiceAt(Vec::new());
        return Ok(out);
    }

    // the grid only brackets the collision; the true node is a common root
    // of the centered entries, so polish it before dividing
    let leash = (refined.grid[first - 1], refined.grid[last + 1]);
    let s = polish_common_root(&nonzero, refined.grid[k0], leash, coeff_scale);

    // divide each entry of A - mu*I by (t - s)
    let mut quotient_entries = Vec::with_capacity(n * n);
    for poly in &centered {
        let (q, rem) = divide_linear(poly, s);
        if rem.norm() > defl_tol {
            return Err(TrackError::DeflationFailed {
                node: s,
                residual: rem.norm(),
            });
        }
        quotient_entries.push(Poly2::from_univariate(&q));
    }
    let quotient_family = MatrixFamily::poly1(
        format!("{}/deflated", f.name),
        n,
        quotient_entries,
        f.domain.clone(),
    )?;

    // force symmetric probe nodes around s for the consistency check
    let h = (0.05 * (hi - lo)).min(0.25 * (s - lo).min(hi - s));
    let mut grid2 = refined.grid.clone();
    if h > 0.0 {
        for p in [s, s - h, s - h / 2.0, s - h / 4.0, s + h / 4.0, s + h / 2.0, s + h] {
            grid2.push(p);
        }
        grid2.sort_by(f64::total_cmp);
        grid2.dedup();
    }
    let qb = track_on_grid(&quotient_family, &grid2, opts)?;
    let qb = c2_inner(&quotient_family, &qb, opts, depth + 1)?;

    // multiply back: lambda = mu + (t - s) * quotient branch
    let mut marks = vec![s];
    if let Smoothness::TwiceAt(inner) = &qb.smoothness {
        marks.extend_from_slice(inner);
    }
    marks.sort_by(f64::total_cmp);
    marks.dedup_by(|a, b| (*a - *b).abs() <= opts.resolution_tol * b.abs().max(1.0));
    let mu_poly = mu.as_univariate().ok_or(TrackError::PolynomialFamilyRequired)?;
    let glen = qb.grid.len();
    let mut out = BranchSet {
        grid: qb.grid.clone(),
        values: Vec::with_capacity(glen),
        source: Vec::with_capacity(glen),
        left_deriv: vec![None; glen],
        right_deriv: vec![None; glen],
        smoothness: Smoothness::TwiceAt(marks.clone()),
    };
    for (k, &t) in qb.grid.iter().enumerate() {
        let shift = eval_poly(&mu_poly, t);
        let factor = C64::new(t - s, 0.0);
        let row: Vec<C64> = qb.values[k].iter().map(|&q| shift + factor * q).collect();
        // multiplying by (t - s) reverses the sorted order left of s, so
        // the sorted-position labels must be recomputed
        out.source.push(ranks_of(&row));
        out.values.push(row);
    }

    // second-difference consistency at the forced probes
    if h > 0.0 {
        let idx = |t: f64| out.grid.iter().position(|&g| g == t);
        if let (Some(im), Some(i1), Some(i2), Some(i4), Some(j4), Some(j2), Some(j1)) = (
            idx(s),
            idx(s - h),
            idx(s - h / 2.0),
            idx(s - h / 4.0),
            idx(s + h / 4.0),
            idx(s + h / 2.0),
            idx(s + h),
        ) {
            let scale = row_scale(&out.values[im]);
            let nf = 1e-9 * scale / (h * h);
            for j in 0..n {
                let d2 = |l: usize, r: usize, step: f64| {
                    (out.values[r][j] - out.values[im][j] * 2.0 + out.values[l][j])
                        / C64::new(step * step, 0.0)
                };
                let a = d2(i1, j1, h);
                let bb = d2(i2, j2, h / 2.0);
                let c = d2(i4, j4, h / 4.0);
                let e1 = (a - bb).norm();
                let e2 = (bb - c).norm();
                let ok = (e1 <= nf && e2 <= nf)
                    || (e2 <= nf && e1 <= opts.c2_tol * scale)
                    || (e2 > nf && (3.5..=4.5).contains(&(e1 / e2)));
                if !ok {
                    return Err(TrackError::RichardsonInconsistent {
                        node: s,
                        ratio: if e2 > 0.0 { e1 / e2 } else { f64::INFINITY },
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Quotient and remainder of `c` (ascending coefficients) by `(t - s)`.
fn divide_linear(c: &[C64], s: f64) -> (Vec<C64>, C64) {
    if c.len() <= 1 {
        return (Vec::new(), c.first().copied().unwrap_or(C64::ZERO));
    }
    let d = c.len() - 1;
    let sc = C64::new(s, 0.0);
    let mut q = vec![C64::ZERO; d];
    q[d - 1] = c[d];
    for j in (0..d - 1).rev() {
        q[j] = c[j + 1] + sc * q[j + 1];
    }
    let rem = c[0] + sc * q[0];
    (q, rem)
}

fn eval_poly(c: &[C64], t: f64) -> C64 {
    let tc = C64::new(t, 0.0);
    let mut acc = C64::ZERO;
    for &ck in c.iter().rev() {
        acc = acc * tc + ck;
    }
    acc
}

/// Newton-polish a common real root of several polynomials near `s0`.
/// Candidates outside the open leash interval fall back to `s0`.
fn polish_common_root(polys: &[&Vec<C64>], s0: f64, leash: (f64, f64), scale: f64) -> f64 {
    let residual = |s: f64| {
        polys
            .iter()
            .map(|c| eval_poly(c, s).norm())
            .fold(0.0, f64::max)
            / scale
    };
    let mut best = s0;
    let mut best_r = residual(s0);
    for c in polys {
        let cand = newton_real(c, s0);
        if cand > leash.0 && cand < leash.1 {
            let r = residual(cand);
            if r < best_r {
                best = cand;
                best_r = r;
            }
        }
    }
    best
}

/// Newton iteration for a real root of a complex-coefficient polynomial.
/// Multiple roots converge only linearly, hence the generous cap.
fn newton_real(c: &[C64], s0: f64) -> f64 {
    let mut s = s0;
    for _ in 0..200 {
        let tc = C64::new(s, 0.0);
        let mut p = C64::ZERO;
        let mut dp = C64::ZERO;
        for &ck in c.iter().rev() {
            dp = dp * tc + p;
            p = p * tc + ck;
        }
        if dp.norm() == 0.0 {
            break;
        }
        let step = (p / dp).re;
        if !step.is_finite() || step == 0.0 {
            break;
        }
        s -= step;
    }
    s
}

/// Position of each row entry in the canonically sorted row, equal values
/// consuming slots left to right.
fn ranks_of(row: &[C64]) -> Vec<usize> {
    let mut sorted = row.to_vec();
    canonical_sort(&mut sorted);
    let mut used = vec![false; sorted.len()];
    row.iter()
        .map(|v| {
            let i = (0..sorted.len())
                .find(|&i| !used[i] && sorted[i] == *v)
                .expect("row value appears in its own sort");
            used[i] = true;
            i
        })
        .collect()
}

/// Target regularity when completing a partial parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompletionMode {
    Continuous,
    Differentiable,
}

/// Extend `partial` (a prefix of branches on the same grid as `full`) to a
/// full branch set whose added branches are continuous, or differentiable
/// across collisions when requested.
pub fn complete_parameterization(
    f: &MatrixFamily,
    partial: &BranchSet,
    full: &BranchSet,
    mode: CompletionMode,
    opts: &TrackOptions,
) -> Result<BranchSet, TrackError> {
    if partial.grid != full.grid {
        return Err(TrackError::GridMismatch);
    }
    let n = full.branches();
    let k = partial.branches();
    let len = full.grid.len();

    // subtract the partial values from each node's multiset
    let mut rows: Vec<Vec<C64>> = Vec::with_capacity(len);
    let mut srcs: Vec<Vec<usize>> = Vec::with_capacity(len);
    for m in 0..len {
        let scale = row_scale(&full.values[m]);
        let mut used = vec![false; n];
        for &p in &partial.values[m] {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..n {
                if used[j] {
                    continue;
                }
                let d = (full.values[m][j] - p).norm();
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
            match best {
                Some((j, d)) if d <= opts.collision_tol * scale => used[j] = true,
                _ => {
                    return Err(TrackError::NotASubMultiset {
                        node: full.grid[m],
                    })
                }
            }
        }
        let complement: Vec<usize> = (0..n).filter(|&j| !used[j]).collect();
        rows.push(complement.iter().map(|&j| full.values[m][j]).collect());
        srcs.push(complement.iter().map(|&j| full.source[m][j]).collect());
    }

    // connect the complements continuously step by step
    for m in 1..len {
        let sigma = bottleneck_match(&rows[m - 1], &rows[m]);
        rows[m] = sigma.iter().map(|&j| rows[m][j]).collect();
        srcs[m] = sigma.iter().map(|&j| srcs[m][j]).collect();
    }

    let mut combined = BranchSet {
        grid: full.grid.clone(),
        values: (0..len)
            .map(|m| {
                let mut row = partial.values[m].clone();
                row.extend_from_slice(&rows[m]);
                row
            })
            .collect(),
        source: (0..len)
            .map(|m| {
                let mut row = partial.source[m].clone();
                row.extend_from_slice(&srcs[m]);
                row
            })
            .collect(),
        left_deriv: vec![None; len],
        right_deriv: vec![None; len],
        smoothness: Smoothness::Continuous,
    };
    if mode == CompletionMode::Differentiable {
        let mut movable = vec![true; n];
        for flag in movable.iter_mut().take(k) {
            *flag = false;
        }
        combined = c1_refine_movable(f, &combined, opts, &movable)?;
    }
    Ok(combined)
}

/// Grid-quotient certificate against the derivative norm bound.
#[derive(Debug, Clone)]
pub struct LipschitzReport {
    pub pass: bool,
    /// Largest operator norm of the parameter derivative over the grid.
    pub derivative_bound: f64,
    pub worst_quotient: f64,
    pub worst_step: (f64, f64),
    pub per_branch_max: Vec<f64>,
}

/// Compare per-step branch difference quotients against the sup of the
/// derivative operator norm over the grid.
pub fn lipschitz_certificate(
    f: &MatrixFamily,
    b: &BranchSet,
) -> Result<LipschitzReport, TrackError> {
    if f.arity() != 1 {
        return Err(TrackError::UnivariateRequired);
    }
    let n = b.branches();
    let mut bound = 0.0f64;
    for &t in &b.grid {
        bound = bound.max(mat::op_norm(&f.derivative(&[t], 0)?));
    }
    let mut per_branch = vec![0.0f64; n];
    let mut worst = 0.0f64;
    let mut worst_step = (b.grid[0], b.grid[0]);
    for m in 1..b.grid.len() {
        let dt = b.grid[m] - b.grid[m - 1];
        for j in 0..n {
            let q = (b.values[m][j] - b.values[m - 1][j]).norm() / dt;
            if q > per_branch[j] {
                per_branch[j] = q;
            }
            if q > worst {
                worst = q;
                worst_step = (b.grid[m - 1], b.grid[m]);
            }
        }
    }
    Ok(LipschitzReport {
        pass: worst <= bound * (1.0 + LIP_SLACK) + 1e-12,
        derivative_bound: bound,
        worst_quotient: worst,
        worst_step,
        per_branch_max: per_branch,
    })
}

/// Outcome of the ordered-eigenvalue comparison for (skew-)Hermitian pairs.
#[derive(Debug, Clone)]
pub struct WeylReport {
    /// True when the pair was handled through the skew-Hermitian rotation.
    pub skew: bool,
    /// Largest gap between sorted eigenvalue lists.
    pub lhs: f64,
    /// Operator norm of the difference.
    pub rhs: f64,
    pub pass: bool,
}

/// Check that sorted eigenvalues of a Hermitian (or skew-Hermitian) pair
/// differ by at most the operator norm of the difference.
pub fn weyl_check(a: &CMatrix, b: &CMatrix) -> Result<WeylReport, TrackError> {
    let scale = mat::fro_norm(a).max(mat::fro_norm(b)).max(1.0);
    let herm = mat::hermitian_residual(a).max(mat::hermitian_residual(b));
    let skew_res = skew_residual(a).max(skew_residual(b));
    let (skew, ah, bh) = if herm <= HERMITIAN_TOL * scale {
        (false, a.clone(), b.clone())
    } else if skew_res <= HERMITIAN_TOL * scale {
        let rot = C64::new(0.0, -1.0);
        (true, a.map(|z| z * rot), b.map(|z| z * rot))
    } else {
        return Err(TrackError::NotHermitian {
            residual: herm.min(skew_res),
        });
    };
    let ea = mat::hermitian_eigenvalues(&ah);
    let eb = mat::hermitian_eigenvalues(&bh);
    let lhs = ea
        .iter()
        .zip(&eb)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let rhs = mat::op_norm(&(a - b));
    Ok(WeylReport {
        skew,
        lhs,
        rhs,
        pass: lhs <= rhs * (1.0 + LIP_SLACK) + 1e-10 * scale,
    })
}

fn skew_residual(a: &CMatrix) -> f64 {
    mat::fro_norm(&(a + &a.adjoint()))
}

/// Outcome of the matching-distance comparison for a normal pair.
#[derive(Debug, Clone)]
pub struct MatchingBoundReport {
    pub matching_cost: f64,
    /// Operator norm of the difference.
    pub distance: f64,
    pub ratio: f64,
    /// Whether the cost stays within three times the distance.
    pub pass: bool,
}

/// Check the optimal matching distance between the spectra of two normal
/// matrices against three times their operator distance.
pub fn bhatia_check(
    a: &CMatrix,
    b: &CMatrix,
    root: &RootOptions,
) -> Result<MatchingBoundReport, TrackError> {
    for m in [a, b] {
        let scale = mat::fro_norm(m).powi(2).max(1.0);
        let res = mat::normality_residual(m);
        if res > NORMAL_TOL * scale {
            return Err(TrackError::NotNormal { residual: res });
        }
    }
    let ea = mat::char_poly(a)
        .poly_roots(root)
        .map_err(|source| TrackError::Root { at: 0.0, source })?;
    let eb = mat::char_poly(b)
        .poly_roots(root)
        .map_err(|source| TrackError::Root { at: 0.0, source })?;
    let sigma = bottleneck_match(&ea, &eb);
    let cost = bottleneck_cost(&ea, &eb, &sigma);
    let distance = mat::op_norm(&(a - b));
    Ok(MatchingBoundReport {
        matching_cost: cost,
        distance,
        ratio: if distance > 0.0 { cost / distance } else { 0.0 },
        pass: cost <= 3.0 * distance * (1.0 + LIP_SLACK) + 1e-12,
    })
}
