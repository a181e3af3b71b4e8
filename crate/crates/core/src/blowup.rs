//! Desingularization of two-parameter eigenvalue families by iterated
//! point blow-ups of chart origins.
//!
//! `resolve_family` alternates four moves until every chart is resolved:
//! block splitting at origin eigenvalue clusters, trace removal, monomial
//! extraction, and blowing up the origin when entries or their differences
//! fail to be monomial times unit. Leaves expose branch evaluators that
//! `chart_sample` composes back to eigenvalues of the original family.

use crate::family::{CertKind, FamilyError, FamilyKind, MatrixFamily};
use crate::mat;
use crate::monic::{distinct_count, MonicPoly, RootError, RootOptions, DEFAULT_DISTINCT_TOL};
use crate::poly2::Poly2;
use crate::spectral::{frame_of, sylvester_projection};
use crate::{C64, CMatrix};
use thiserror::Error;

/// Default blow-up budget along any root-to-leaf path.
pub const MAX_DEPTH: usize = 12;
/// Relative eigenvalue cluster tolerance at chart origins.
const ORIGIN_CLUSTER_TOL: f64 = 1e-8;
/// Relative floor below which polynomial coefficients count as noise.
const NOISE_TOL: f64 = 1e-12;
/// Relative tolerance for off-diagonal blocks of a constant-frame split.
const SPLIT_TOL: f64 = 1e-10;
/// Chart coordinates this close to the exceptional locus are not sampled.
const CHART_FLOOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum BlowupError {
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Root(#[from] RootError),
    #[error("the zero polynomial has no normal-crossings form")]
    ZeroPolynomial,
    #[error("exponents ({}, {}) and ({}, {}) are incomparable", a.0, a.1, b.0, b.1)]
    NotTotallyOrdered { a: (u32, u32), b: (u32, u32) },
    #[error("resolution needs a polynomial family in two parameters")]
    TwoParameterRequired,
    #[error("resolution needs an exact normality certificate")]
    ExactNormalityRequired,
    #[error("no resolved chart covers the point ({x}, {y})")]
    NoChartCovers { x: f64, y: f64 },
}

/// Substitutes one blow-up chart: 1 maps (x, y) to (x, x*y), 2 maps it
/// to (x*y, y).
pub fn blowup_substitute(p: &Poly2, chart: usize) -> Poly2 {
    match chart {
        1 => p.subst_chart1(),
        2 => p.subst_chart2(),
        _ => panic!("chart index must be 1 or 2"),
    }
}

/// A polynomial written as monomial times unit, or the verdict that no
/// such form exists at the chart origin.
#[derive(Debug, Clone)]
pub enum NcOutcome {
    Monomial { alpha: (u32, u32), unit: Poly2 },
    NotNc,
}

/// Extracts the largest dividing monomial and checks that the cofactor
/// survives at the origin.
pub fn normal_crossings_form(p: &Poly2) -> Result<NcOutcome, BlowupError> {
    let alpha = match p.exponent_min() {
        Some(a) => a,
        None => return Err(BlowupError::ZeroPolynomial),
    };
    let unit = p
        .div_monomial(alpha.0, alpha.1)
        .expect("terms divide their componentwise minimum");
    if unit.coeff(0, 0).norm() == 0.0 {
        return Ok(NcOutcome::NotNc);
    }
    Ok(NcOutcome::Monomial { alpha, unit })
}

/// Componentwise minimum of an exponent set, required to be a member.
pub fn monomial_min(exps: &[(u32, u32)]) -> Result<(u32, u32), BlowupError> {
    assert!(!exps.is_empty());
    let min = exps
        .iter()
        .fold((u32::MAX, u32::MAX), |(a, b), &(ta, tb)| {
            (a.min(ta), b.min(tb))
        });
    if exps.contains(&min) {
        return Ok(min);
    }
    for (i, &p) in exps.iter().enumerate() {
        for &q in &exps[i + 1..] {
            let p_le = p.0 <= q.0 && p.1 <= q.1;
            let q_le = q.0 <= p.0 && q.1 <= p.1;
            if !p_le && !q_le {
                return Err(BlowupError::NotTotallyOrdered { a: p, b: q });
            }
        }
    }
    unreachable!("a totally ordered set contains its minimum");
}

/// What the resolution loop operates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResolveMode {
    /// Matrix entries, yielding reduced matrix families per chart.
    Entries,
    /// Characteristic coefficients with slope weights, yielding reduced
    /// polynomials per chart.
    Coefficients,
}

#[derive(Debug, Clone)]
pub struct ResolveOptions {
    pub max_depth: usize,
    pub mode: ResolveMode,
}

impl Default for ResolveOptions {
    fn default() -> Self {
        ResolveOptions {
            max_depth: MAX_DEPTH,
            mode: ResolveMode::Entries,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafStatus {
    Resolved,
    DepthExceeded,
}

/// Terminal chart: a reduced matrix (or monic coefficient list) whose
/// origin eigenvalues are pairwise distinct, identically zero, or which
/// exhausted the blow-up budget.
#[derive(Debug, Clone)]
pub struct ChartLeaf {
    pub polys: Vec<Poly2>,
    pub n: usize,
    pub status: LeafStatus,
    pub path: String,
}

/// One step of the resolution procedure.
#[derive(Debug, Clone)]
pub enum ChartNode {
    /// Subtract `shift` from every eigenvalue, then continue.
    Shift { shift: Poly2, next: Box<ChartNode> },
    /// Multiply every eigenvalue by `x^a y^b`, then continue.
    Extract {
        alpha: (u32, u32),
        next: Box<ChartNode>,
    },
    /// Pass to the two charts of the origin blow-up.
    Blowup {
        chart1: Box<ChartNode>,
        chart2: Box<ChartNode>,
    },
    /// Constant-frame block decomposition at separated origin clusters.
    Split { blocks: Vec<SplitBlock> },
    Leaf(ChartLeaf),
}

#[derive(Debug, Clone)]
pub struct SplitBlock {
    pub frame: CMatrix,
    pub node: ChartNode,
}

/// Resolution tree of a family, rooted at the original coordinates.
#[derive(Debug, Clone)]
pub struct ChartTree {
    pub family: MatrixFamily,
    pub mode: ResolveMode,
    pub root: ChartNode,
}

impl ChartTree {
    /// All terminal charts.
    pub fn leaves(&self) -> Vec<&ChartLeaf> {
        let mut out = Vec::new();
        collect_leaves(&self.root, &mut out);
        out
    }

    /// Largest number of blow-ups along any root-to-leaf path.
    pub fn depth(&self) -> usize {
        node_depth(&self.root)
    }

    /// Maximal deviation between each node's polynomials and the ones
    /// reconstructed by re-running its children's transformations.
    pub fn faithfulness_residual(&self) -> f64 {
        let start = match (&self.family.kind, self.mode) {
            (FamilyKind::Poly2(e), ResolveMode::Entries) => e.clone(),
            (FamilyKind::Poly2(e), ResolveMode::Coefficients) => {
                char_coeffs(e, self.family.n)
            }
            _ => return f64::INFINITY,
        };
        faithful(&start, self.family.n, &self.root, self.mode)
    }

    /// Eigenvalue multiset of the family at a point, evaluated through
    /// the resolved charts.
    pub fn sample(&self, x: f64, y: f64) -> Result<Vec<C64>, BlowupError> {
        walk(&self.root, x, y, self.mode).map_err(|e| match e {
            BlowupError::NoChartCovers { .. } => BlowupError::NoChartCovers { x, y },
            other => other,
        })
    }
}

/// Runs the blow-up loop on an exactly normal two-parameter polynomial
/// family and returns the chart tree.
pub fn resolve_family(
    f: &MatrixFamily,
    opts: &ResolveOptions,
) -> Result<ChartTree, BlowupError> {
    let entries = match &f.kind {
        FamilyKind::Poly2(e) => e.clone(),
        _ => return Err(BlowupError::TwoParameterRequired),
    };
    let cert = f.normality_check()?;
    if cert.kind != CertKind::Exact {
        return Err(BlowupError::ExactNormalityRequired);
    }
    let root = match opts.mode {
        ResolveMode::Entries => resolve_entries(&entries, f.n, opts.max_depth, "")?,
        ResolveMode::Coefficients => {
            let a = char_coeffs(&entries, f.n);
            resolve_coeffs(&a, f.n, opts.max_depth, "")?
        }
    };
    Ok(ChartTree {
        family: f.clone(),
        mode: opts.mode,
        root,
    })
}

/// Evaluates branch values of a tree at a parameter point off the
/// exceptional locus.
pub fn chart_sample(tree: &ChartTree, x: f64, y: f64) -> Result<Vec<C64>, BlowupError> {
    tree.sample(x, y)
}

fn resolve_entries(
    entries: &[Poly2],
    n: usize,
    depth: usize,
    path: &str,
) -> Result<ChartNode, BlowupError> {
    let scale = poly_scale(entries);
    let entries: Vec<Poly2> = entries.iter().map(|p| p.cleaned(NOISE_TOL * scale)).collect();
    if n <= 1 {
        return Ok(leaf(entries, n, LeafStatus::Resolved, path));
    }
    let a0 = origin_value(&entries, n);
    let vals = mat::normal_eigenvalues(&a0);
    let clusters = cluster_values(&vals, ORIGIN_CLUSTER_TOL);
    if clusters.len() == n {
        return Ok(leaf(entries, n, LeafStatus::Resolved, path));
    }
    if clusters.len() >= 2 {
        return split_entries(&entries, n, &a0, &clusters, depth, path, scale);
    }
    let trace = (0..n).fold(Poly2::zero(), |acc, i| acc.add(&entries[i * n + i]));
    let shift = trace.scale(C64::new(1.0 / n as f64, 0.0));
    let mut work = entries.clone();
    if !shift.is_zero() {
        for i in 0..n {
            work[i * n + i] = work[i * n + i].sub(&shift).cleaned(NOISE_TOL * scale);
        }
    }
    let inner = resolve_entries_shifted(&work, n, depth, path, scale)?;
    if shift.is_zero() {
        Ok(inner)
    } else {
        Ok(ChartNode::Shift {
            shift,
            next: Box::new(inner),
        })
    }
}

fn resolve_entries_shifted(
    work: &[Poly2],
    n: usize,
    depth: usize,
    path: &str,
    scale: f64,
) -> Result<ChartNode, BlowupError> {
    if work.iter().all(Poly2::is_zero) {
        return Ok(leaf(work.to_vec(), n, LeafStatus::Resolved, path));
    }
    let mut needs_blowup = false;
    for p in work.iter().filter(|p| !p.is_zero()) {
        if matches!(normal_crossings_form(p)?, NcOutcome::NotNc) {
            needs_blowup = true;
        }
    }
    for i in 0..work.len() {
        for j in i + 1..work.len() {
            let d = work[i].sub(&work[j]).cleaned(NOISE_TOL * scale);
            if !d.is_zero() && matches!(normal_crossings_form(&d)?, NcOutcome::NotNc) {
                needs_blowup = true;
            }
        }
    }
    let exps: Vec<(u32, u32)> = work
        .iter()
        .filter_map(Poly2::exponent_min)
        .collect();
    let alpha = if needs_blowup {
        None
    } else {
        match monomial_min(&exps) {
            Ok(a) => Some(a),
            Err(BlowupError::NotTotallyOrdered { .. }) => None,
            Err(e) => return Err(e),
        }
    };
    match alpha {
        Some((0, 0)) => Ok(leaf(work.to_vec(), n, LeafStatus::DepthExceeded, path)),
        Some(alpha) => {
            let mut divided = Vec::with_capacity(work.len());
            for p in work {
                match p.div_monomial(alpha.0, alpha.1) {
                    Ok(q) => divided.push(q),
                    Err(_) => {
                        return Ok(leaf(work.to_vec(), n, LeafStatus::DepthExceeded, path))
                    }
                }
            }
            let next = resolve_entries(&divided, n, depth, path)?;
            Ok(ChartNode::Extract {
                alpha,
                next: Box::new(next),
            })
        }
        None => {
            if depth == 0 {
                return Ok(leaf(work.to_vec(), n, LeafStatus::DepthExceeded, path));
            }
            let c1: Vec<Poly2> = work.iter().map(Poly2::subst_chart1).collect();
            let c2: Vec<Poly2> = work.iter().map(Poly2::subst_chart2).collect();
            let chart1 = resolve_entries(&c1, n, depth - 1, &join_path(path, "s1"))?;
            let chart2 = resolve_entries(&c2, n, depth - 1, &join_path(path, "s2"))?;
            Ok(ChartNode::Blowup {
                chart1: Box::new(chart1),
                chart2: Box::new(chart2),
            })
        }
    }
}

fn split_entries(
    entries: &[Poly2],
    n: usize,
    a0: &CMatrix,
    clusters: &[Vec<C64>],
    depth: usize,
    path: &str,
    scale: f64,
) -> Result<ChartNode, BlowupError> {
    let groups: Vec<Vec<C64>> = clusters.to_vec();
    let mut frames = Vec::with_capacity(groups.len());
    for i in 0..groups.len() {
        let proj = match sylvester_projection(a0, &groups, i) {
            Ok(p) => p,
            Err(_) => return Ok(leaf(entries.to_vec(), n, LeafStatus::DepthExceeded, path)),
        };
        if proj.rank != groups[i].len() {
            return Ok(leaf(entries.to_vec(), n, LeafStatus::DepthExceeded, path));
        }
        match frame_of(&proj, None) {
            Ok(f) => frames.push(f.v),
            Err(_) => return Ok(leaf(entries.to_vec(), n, LeafStatus::DepthExceeded, path)),
        }
    }
    for h in 0..frames.len() {
        for l in 0..frames.len() {
            if h == l {
                continue;
            }
            let off = frame_block(entries, n, &frames[h], &frames[l]);
            let worst = off.iter().map(Poly2::max_abs).fold(0.0, f64::max);
            if worst > SPLIT_TOL * scale {
                return Ok(leaf(entries.to_vec(), n, LeafStatus::DepthExceeded, path));
            }
        }
    }
    let mut blocks = Vec::with_capacity(frames.len());
    for w in frames {
        let k = w.ncols();
        let sub = frame_block(entries, n, &w, &w);
        let node = resolve_entries(&sub, k, depth, path)?;
        blocks.push(SplitBlock { frame: w, node });
    }
    Ok(ChartNode::Split { blocks })
}

fn resolve_coeffs(
    a: &[Poly2],
    n: usize,
    depth: usize,
    path: &str,
) -> Result<ChartNode, BlowupError> {
    let scale = poly_scale(a);
    let a: Vec<Poly2> = a.iter().map(|p| p.cleaned(NOISE_TOL * scale)).collect();
    if n <= 1 {
        return Ok(leaf(a, n, LeafStatus::Resolved, path));
    }
    let base: Vec<C64> = a.iter().map(|p| p.coeff(0, 0)).collect();
    let roots = MonicPoly::new(base).poly_roots(&RootOptions::default())?;
    if distinct_count(&roots, DEFAULT_DISTINCT_TOL) == n {
        return Ok(leaf(a, n, LeafStatus::Resolved, path));
    }
    let shift = a[0].scale(C64::new(1.0 / n as f64, 0.0));
    let work = if shift.is_zero() {
        a.clone()
    } else {
        shift_coeffs(&a, &shift)
            .iter()
            .map(|p| p.cleaned(NOISE_TOL * scale))
            .collect()
    };
    let inner = resolve_coeffs_shifted(&work, n, depth, path)?;
    if shift.is_zero() {
        Ok(inner)
    } else {
        Ok(ChartNode::Shift {
            shift,
            next: Box::new(inner),
        })
    }
}

fn resolve_coeffs_shifted(
    work: &[Poly2],
    n: usize,
    depth: usize,
    path: &str,
) -> Result<ChartNode, BlowupError> {
    if work.iter().all(Poly2::is_zero) {
        return Ok(leaf(work.to_vec(), n, LeafStatus::Resolved, path));
    }
    let mut needs_blowup = false;
    for p in work.iter().filter(|p| !p.is_zero()) {
        if matches!(normal_crossings_form(p)?, NcOutcome::NotNc) {
            needs_blowup = true;
        }
    }
    let rho = if needs_blowup {
        None
    } else {
        weighted_min_slope(work)
    };
    match rho {
        Some((0, 0)) => Ok(leaf(work.to_vec(), n, LeafStatus::DepthExceeded, path)),
        Some(rho) => {
            let mut divided = Vec::with_capacity(work.len());
            for (j0, p) in work.iter().enumerate() {
                let j = j0 as u32 + 1;
                if p.is_zero() {
                    divided.push(Poly2::zero());
                    continue;
                }
                match p.div_monomial(j * rho.0, j * rho.1) {
                    Ok(q) => divided.push(q),
                    Err(_) => {
                        return Ok(leaf(work.to_vec(), n, LeafStatus::DepthExceeded, path))
                    }
                }
            }
            let next = resolve_coeffs(&divided, n, depth, path)?;
            Ok(ChartNode::Extract {
                alpha: rho,
                next: Box::new(next),
            })
        }
        None => {
            if depth == 0 {
                return Ok(leaf(work.to_vec(), n, LeafStatus::DepthExceeded, path));
            }
            let c1: Vec<Poly2> = work.iter().map(Poly2::subst_chart1).collect();
            let c2: Vec<Poly2> = work.iter().map(Poly2::subst_chart2).collect();
            let chart1 = resolve_coeffs(&c1, n, depth - 1, &join_path(path, "s1"))?;
            let chart2 = resolve_coeffs(&c2, n, depth - 1, &join_path(path, "s2"))?;
            Ok(ChartNode::Blowup {
                chart1: Box::new(chart1),
                chart2: Box::new(chart2),
            })
        }
    }
}

/// The slope vector `exponent(a_j) / j` that is componentwise minimal and
/// integral, when one exists.
fn weighted_min_slope(a: &[Poly2]) -> Option<(u32, u32)> {
    let weighted: Vec<(u32, (u32, u32))> = a
        .iter()
        .enumerate()
        .filter_map(|(j0, p)| p.exponent_min().map(|e| (j0 as u32 + 1, e)))
        .collect();
    'outer: for &(j, e) in &weighted {
        for &(k, f) in &weighted {
            let le_x = e.0 as u64 * k as u64 <= f.0 as u64 * j as u64;
            let le_y = e.1 as u64 * k as u64 <= f.1 as u64 * j as u64;
            if !(le_x && le_y) {
                continue 'outer;
            }
        }
        if e.0 % j == 0 && e.1 % j == 0 {
            return Some((e.0 / j, e.1 / j));
        }
        return None;
    }
    None
}

fn leaf(polys: Vec<Poly2>, n: usize, status: LeafStatus, path: &str) -> ChartNode {
    ChartNode::Leaf(ChartLeaf {
        polys,
        n,
        status,
        path: path.to_string(),
    })
}

fn join_path(path: &str, step: &str) -> String {
    if path.is_empty() {
        step.to_string()
    } else {
        format!("{path} {step}")
    }
}

fn origin_value(entries: &[Poly2], n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |i, j| entries[i * n + j].coeff(0, 0))
}

fn poly_scale(polys: &[Poly2]) -> f64 {
    polys.iter().map(Poly2::max_abs).fold(1.0, f64::max)
}

/// The block `Wl* A(x, y) Wr` as polynomials.
fn frame_block(entries: &[Poly2], n: usize, wl: &CMatrix, wr: &CMatrix) -> Vec<Poly2> {
    let p = wl.ncols();
    let q = wr.ncols();
    let mut out = vec![Poly2::zero(); p * q];
    for a in 0..p {
        for b in 0..q {
            let mut acc = Poly2::zero();
            for i in 0..n {
                for j in 0..n {
                    let c = wl[(i, a)].conj() * wr[(j, b)];
                    if c.norm() > 0.0 {
                        acc = acc.add(&entries[i * n + j].scale(c));
                    }
                }
            }
            out[a * q + b] = acc;
        }
    }
    out
}

fn cluster_values(vals: &[C64], rel_tol: f64) -> Vec<Vec<C64>> {
    let m = vals.len();
    let scale = vals.iter().map(|v| v.norm()).fold(1.0, f64::max);
    let tol = rel_tol * scale;
    let mut parent: Vec<usize> = (0..m).collect();
    for i in 0..m {
        for j in i + 1..m {
            if (vals[i] - vals[j]).norm() <= tol {
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
            Some(k) => groups[k].push(vals[i]),
            None => {
                rep.push(r);
                groups.push(vec![vals[i]]);
            }
        }
    }
    groups.sort_by(|a, b| {
        let (ma, mb) = (mean(a), mean(b));
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

/// Characteristic coefficients of a polynomial matrix in the sign
/// convention of `MonicPoly`, by the trace recursion.
fn char_coeffs(entries: &[Poly2], n: usize) -> Vec<Poly2> {
    let mut c = Vec::with_capacity(n);
    let mut b = entries.to_vec();
    for k in 1..=n {
        let trace = (0..n).fold(Poly2::zero(), |acc, i| acc.add(&b[i * n + i]));
        let pk = trace.scale(C64::new(1.0 / k as f64, 0.0));
        let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
        c.push(pk.scale(C64::new(sign, 0.0)));
        if k == n {
            break;
        }
        for i in 0..n {
            b[i * n + i] = b[i * n + i].sub(&pk);
        }
        b = poly_matrix_mul(entries, &b, n);
    }
    c
}

fn poly_matrix_mul(a: &[Poly2], b: &[Poly2], n: usize) -> Vec<Poly2> {
    let mut out = vec![Poly2::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = Poly2::zero();
            for k in 0..n {
                acc = acc.add(&a[i * n + k].mul(&b[k * n + j]));
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// Taylor shift `z -> z + s` on coefficients in the `MonicPoly` sign
/// convention.
fn shift_coeffs(a: &[Poly2], s: &Poly2) -> Vec<Poly2> {
    let n = a.len();
    let mut c = vec![Poly2::zero(); n + 1];
    c[n] = Poly2::constant(C64::new(1.0, 0.0));
    for j in 1..=n {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        c[n - j] = a[j - 1].scale(C64::new(sign, 0.0));
    }
    for i in 0..n {
        for j in (i..n).rev() {
            c[j] = c[j].add(&s.mul(&c[j + 1]));
        }
    }
    let mut out = Vec::with_capacity(n);
    for j in 1..=n {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        out.push(c[n - j].scale(C64::new(sign, 0.0)));
    }
    out
}

fn collect_leaves<'a>(node: &'a ChartNode, out: &mut Vec<&'a ChartLeaf>) {
    match node {
        ChartNode::Leaf(l) => out.push(l),
        ChartNode::Shift { next, .. } | ChartNode::Extract { next, .. } => {
            collect_leaves(next, out)
        }
        ChartNode::Blowup { chart1, chart2 } => {
            collect_leaves(chart1, out);
            collect_leaves(chart2, out);
        }
        ChartNode::Split { blocks } => {
            for b in blocks {
                collect_leaves(&b.node, out);
            }
        }
    }
}

fn node_depth(node: &ChartNode) -> usize {
    match node {
        ChartNode::Leaf(_) => 0,
        ChartNode::Shift { next, .. } | ChartNode::Extract { next, .. } => node_depth(next),
        ChartNode::Blowup { chart1, chart2 } => 1 + node_depth(chart1).max(node_depth(chart2)),
        ChartNode::Split { blocks } => blocks.iter().map(|b| node_depth(&b.node)).max().unwrap_or(0),
    }
}

fn faithful(polys: &[Poly2], n: usize, node: &ChartNode, mode: ResolveMode) -> f64 {
    match node {
        ChartNode::Leaf(l) => polys
            .iter()
            .zip(&l.polys)
            .map(|(a, b)| a.sub(b).max_abs())
            .fold(
                if polys.len() == l.polys.len() {
                    0.0
                } else {
                    f64::INFINITY
                },
                f64::max,
            ),
        ChartNode::Shift { shift, next } => {
            let child = match mode {
                ResolveMode::Entries => {
                    let mut c = polys.to_vec();
                    for i in 0..n {
                        c[i * n + i] = c[i * n + i].sub(shift);
                    }
                    c
                }
                ResolveMode::Coefficients => shift_coeffs(polys, shift),
            };
            faithful(&child, n, next, mode)
        }
        ChartNode::Extract { alpha, next } => {
            let mut child = Vec::with_capacity(polys.len());
            for (idx, p) in polys.iter().enumerate() {
                let (da, db) = match mode {
                    ResolveMode::Entries => *alpha,
                    ResolveMode::Coefficients => {
                        let j = idx as u32 + 1;
                        (j * alpha.0, j * alpha.1)
                    }
                };
                if p.is_zero() {
                    child.push(Poly2::zero());
                    continue;
                }
                match p.cleaned(NOISE_TOL * poly_scale(polys)).div_monomial(da, db) {
                    Ok(q) => child.push(q),
                    Err(_) => return f64::INFINITY,
                }
            }
            faithful(&child, n, next, mode)
        }
        ChartNode::Blowup { chart1, chart2 } => {
            let c1: Vec<Poly2> = polys.iter().map(Poly2::subst_chart1).collect();
            let c2: Vec<Poly2> = polys.iter().map(Poly2::subst_chart2).collect();
            faithful(&c1, n, chart1, mode).max(faithful(&c2, n, chart2, mode))
        }
        ChartNode::Split { blocks } => {
            let mut worst: f64 = 0.0;
            for b in blocks {
                let sub = frame_block(polys, n, &b.frame, &b.frame);
                worst = worst.max(faithful(&sub, b.frame.ncols(), &b.node, mode));
            }
            worst
        }
    }
}

fn walk(node: &ChartNode, x: f64, y: f64, mode: ResolveMode) -> Result<Vec<C64>, BlowupError> {
    match node {
        ChartNode::Leaf(l) => {
            if l.status != LeafStatus::Resolved {
                return Err(BlowupError::NoChartCovers { x, y });
            }
            let (cx, cy) = (C64::new(x, 0.0), C64::new(y, 0.0));
            match mode {
                ResolveMode::Entries => {
                    let m =
                        CMatrix::from_fn(l.n, l.n, |i, j| l.polys[i * l.n + j].eval(cx, cy));
                    Ok(mat::normal_eigenvalues(&m))
                }
                ResolveMode::Coefficients => {
                    let a: Vec<C64> = l.polys.iter().map(|p| p.eval(cx, cy)).collect();
                    Ok(MonicPoly::new(a).poly_roots(&RootOptions::default())?)
                }
            }
        }
        ChartNode::Shift { shift, next } => {
            let s = shift.eval(C64::new(x, 0.0), C64::new(y, 0.0));
            Ok(walk(next, x, y, mode)?.into_iter().map(|v| v + s).collect())
        }
        ChartNode::Extract { alpha, next } => {
            let m = x.powi(alpha.0 as i32) * y.powi(alpha.1 as i32);
            Ok(walk(next, x, y, mode)?
                .into_iter()
                .map(|v| v * C64::new(m, 0.0))
                .collect())
        }
        ChartNode::Blowup { chart1, chart2 } => {
            if x.abs() >= y.abs() && x.abs() >= CHART_FLOOR {
                walk(chart1, x, y / x, mode)
            } else if y.abs() >= CHART_FLOOR {
                walk(chart2, x / y, y, mode)
            } else {
                Err(BlowupError::NoChartCovers { x, y })
            }
        }
        ChartNode::Split { blocks } => {
            let mut out = Vec::new();
            for b in blocks {
                out.extend(walk(&b.node, x, y, mode)?);
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::Domain;
    use crate::tracking::canonical_sort;

    fn re(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn ex1_entries() -> Vec<Poly2> {
        vec![
            Poly2::var_x(),
            Poly2::var_y(),
            Poly2::var_y(),
            Poly2::var_x().neg(),
        ]
    }

    fn ex1_family() -> MatrixFamily {
        MatrixFamily::poly2(
            "fold",
            2,
            ex1_entries(),
            Domain::Rectangle {
                x: (-1.0, 1.0),
                y: (-1.0, 1.0),
            },
        )
        .unwrap()
    }

    fn diag_xy_family() -> MatrixFamily {
        MatrixFamily::poly2(
            "axes",
            2,
            vec![
                Poly2::var_x(),
                Poly2::zero(),
                Poly2::zero(),
                Poly2::var_y(),
            ],
            Domain::Rectangle {
                x: (-2.0, 2.0),
                y: (-2.0, 2.0),
            },
        )
        .unwrap()
    }

    #[test]
    fn substitution_examples() {
        let p = Poly2::monomial(2, 0, re(1.0)).add(&Poly2::monomial(0, 2, re(1.0)));
        let q = blowup_substitute(&p, 1);
        assert_eq!(q.coeff(2, 0), re(1.0));
        assert_eq!(q.coeff(2, 2), re(1.0));
        assert_eq!(q.num_terms(), 2);
        assert!(blowup_substitute(&Poly2::var_x(), 1)
            .sub(&Poly2::var_x())
            .is_zero());
        assert!(blowup_substitute(&Poly2::var_y(), 2)
            .sub(&Poly2::var_y())
            .is_zero());
    }

    #[test]
    fn normal_crossings_examples() {
        let p = Poly2::monomial(2, 3, re(2.0)).add(&Poly2::monomial(3, 3, re(1.0)));
        match normal_crossings_form(&p).unwrap() {
            NcOutcome::Monomial { alpha, unit } => {
                assert_eq!(alpha, (2, 3));
                assert_eq!(unit.coeff(0, 0), re(2.0));
                assert_eq!(unit.coeff(1, 0), re(1.0));
            }
            NcOutcome::NotNc => panic!("expected a monomial form"),
        }
        let q = Poly2::var_x().add(&Poly2::var_y());
        assert!(matches!(normal_crossings_form(&q).unwrap(), NcOutcome::NotNc));
        let r = Poly2::monomial(2, 0, re(1.0)).add(&Poly2::monomial(3, 0, re(1.0)));
        match normal_crossings_form(&r).unwrap() {
            NcOutcome::Monomial { alpha, unit } => {
                assert_eq!(alpha, (2, 0));
                assert_eq!(unit.coeff(0, 0), re(1.0));
                assert_eq!(unit.coeff(1, 0), re(1.0));
            }
            NcOutcome::NotNc => panic!("expected a monomial form"),
        }
        assert!(matches!(
            normal_crossings_form(&Poly2::zero()),
            Err(BlowupError::ZeroPolynomial)
        ));
    }

    #[test]
    fn monomial_min_examples() {
        assert_eq!(monomial_min(&[(1, 0), (2, 1)]).unwrap(), (1, 0));
        assert_eq!(monomial_min(&[(2, 2), (2, 3), (4, 2)]).unwrap(), (2, 2));
        assert!(matches!(
            monomial_min(&[(1, 0), (0, 1)]),
            Err(BlowupError::NotTotallyOrdered {
                a: (1, 0),
                b: (0, 1)
            })
        ));
    }

    #[test]
    fn ex1_resolves_after_one_blowup() {
        let tree = resolve_family(&ex1_family(), &ResolveOptions::default()).unwrap();
        assert_eq!(tree.depth(), 1);
        let leaves = tree.leaves();
        assert_eq!(leaves.len(), 2);
        assert!(leaves.iter().all(|l| l.status == LeafStatus::Resolved));
        let chart1 = leaves.iter().find(|l| l.path == "s1").unwrap();
        assert_eq!(chart1.polys[0].coeff(0, 0), re(1.0));
        assert_eq!(chart1.polys[1].coeff(0, 1), re(1.0));
        assert_eq!(chart1.polys[3].coeff(0, 0), re(-1.0));
        assert!(tree.faithfulness_residual() <= 1e-12);
    }

    #[test]
    fn ex1_branches_match_the_closed_form() {
        let tree = resolve_family(&ex1_family(), &ResolveOptions::default()).unwrap();
        let expect = (0.3f64 * 0.3 + 0.4 * 0.4).sqrt();
        assert!((expect - 0.5).abs() < 1e-15);
        let mut vals = tree.sample(0.3, 0.4).unwrap();
        canonical_sort(&mut vals);
        assert!((vals[0] - re(-0.5)).norm() < 1e-8);
        assert!((vals[1] - re(0.5)).norm() < 1e-8);
    }

    #[test]
    fn ex1_pushforward_agrees_off_the_locus() {
        let tree = resolve_family(&ex1_family(), &ResolveOptions::default()).unwrap();
        let pts = [
            (0.7, 0.2),
            (-0.5, 0.9),
            (0.05, -0.6),
            (-0.8, -0.3),
            (1.0, 1.0),
            (0.4, 0.0),
            (0.0, 0.4),
        ];
        for (x, y) in pts {
            let mut vals = tree.sample(x, y).unwrap();
            canonical_sort(&mut vals);
            let f = ex1_family();
            let a = f.eval(&[x, y]).unwrap();
            let mut direct = mat::eigenvalues(&a, &RootOptions::default()).unwrap();
            canonical_sort(&mut direct);
            for (u, v) in vals.iter().zip(&direct) {
                assert!((u - v).norm() < 1e-8, "at ({x}, {y})");
            }
        }
    }

    #[test]
    fn diagonal_axes_family_resolves() {
        let tree = resolve_family(&diag_xy_family(), &ResolveOptions::default()).unwrap();
        assert_eq!(tree.depth(), 1);
        assert!(tree.leaves().iter().all(|l| l.status == LeafStatus::Resolved));
        assert!(tree.faithfulness_residual() <= 1e-12);
        let mut vals = tree.sample(1.0, 2.0).unwrap();
        canonical_sort(&mut vals);
        assert!((vals[0] - re(1.0)).norm() < 1e-10);
        assert!((vals[1] - re(2.0)).norm() < 1e-10);
    }

    #[test]
    fn constant_families_resolve_at_depth_zero() {
        let f = MatrixFamily::poly2(
            "const",
            2,
            vec![
                Poly2::constant(re(2.0)),
                Poly2::zero(),
                Poly2::zero(),
                Poly2::constant(re(-1.0)),
            ],
            Domain::Rectangle {
                x: (-1.0, 1.0),
                y: (-1.0, 1.0),
            },
        )
        .unwrap();
        let tree = resolve_family(&f, &ResolveOptions::default()).unwrap();
        assert_eq!(tree.depth(), 0);
        let mut vals = tree.sample(0.5, 0.5).unwrap();
        canonical_sort(&mut vals);
        assert!((vals[0] - re(-1.0)).norm() < 1e-12);
        assert!((vals[1] - re(2.0)).norm() < 1e-12);

        let g = MatrixFamily::poly2(
            "scalar",
            2,
            vec![
                Poly2::constant(re(3.0)),
                Poly2::zero(),
                Poly2::zero(),
                Poly2::constant(re(3.0)),
            ],
            Domain::Rectangle {
                x: (-1.0, 1.0),
                y: (-1.0, 1.0),
            },
        )
        .unwrap();
        let tree = resolve_family(&g, &ResolveOptions::default()).unwrap();
        assert_eq!(tree.depth(), 0);
        let vals = tree.sample(0.2, -0.7).unwrap();
        assert!(vals.iter().all(|v| (v - re(3.0)).norm() < 1e-12));
    }

    #[test]
    fn separated_cluster_splits_into_blocks() {
        let mut entries = vec![Poly2::zero(); 9];
        entries[0] = Poly2::var_x();
        entries[1] = Poly2::var_y();
        entries[3] = Poly2::var_y();
        entries[4] = Poly2::var_x().neg();
        entries[8] = Poly2::constant(re(5.0)).add(&Poly2::var_x());
        let f = MatrixFamily::poly2(
            "block",
            3,
            entries,
            Domain::Rectangle {
                x: (-1.0, 1.0),
                y: (-1.0, 1.0),
            },
        )
        .unwrap();
        let tree = resolve_family(&f, &ResolveOptions::default()).unwrap();
        assert!(matches!(tree.root, ChartNode::Split { .. }));
        assert!(tree.leaves().iter().all(|l| l.status == LeafStatus::Resolved));
        assert!(tree.faithfulness_residual() <= 1e-10);
        let mut vals = tree.sample(0.3, 0.4).unwrap();
        canonical_sort(&mut vals);
        assert!((vals[0] - re(-0.5)).norm() < 1e-8);
        assert!((vals[1] - re(0.5)).norm() < 1e-8);
        assert!((vals[2] - re(5.3)).norm() < 1e-8);
    }

    #[test]
    fn coefficient_mode_resolves_ex1() {
        let opts = ResolveOptions {
            mode: ResolveMode::Coefficients,
            ..ResolveOptions::default()
        };
        let tree = resolve_family(&ex1_family(), &opts).unwrap();
        assert_eq!(tree.depth(), 1);
        assert!(tree.leaves().iter().all(|l| l.status == LeafStatus::Resolved));
        assert!(tree.faithfulness_residual() <= 1e-12);
        let mut vals = tree.sample(0.3, 0.4).unwrap();
        canonical_sort(&mut vals);
        assert!((vals[0] - re(-0.5)).norm() < 1e-8);
        assert!((vals[1] - re(0.5)).norm() < 1e-8);
    }

    #[test]
    fn coefficient_extraction_attains_the_minimal_slope() {
        let opts = ResolveOptions {
            mode: ResolveMode::Coefficients,
            ..ResolveOptions::default()
        };
        let tree = resolve_family(&ex1_family(), &opts).unwrap();
        fn check(polys: &[Poly2], node: &ChartNode) {
            match node {
                ChartNode::Extract { alpha, next } => {
                    let total = alpha.0 + alpha.1;
                    let mut attained = false;
                    for (j0, p) in polys.iter().enumerate() {
                        if let Some(o) = p.order_total() {
                            let j = j0 as u32 + 1;
                            assert!(o >= j * total);
                            if o == j * total {
                                attained = true;
                            }
                        }
                    }
                    assert!(attained);
                    let mut child = Vec::new();
                    for (j0, p) in polys.iter().enumerate() {
                        let j = j0 as u32 + 1;
                        child.push(if p.is_zero() {
                            Poly2::zero()
                        } else {
                            p.div_monomial(j * alpha.0, j * alpha.1).unwrap()
                        });
                    }
                    check(&child, next);
                }
                ChartNode::Blowup { chart1, chart2 } => {
                    let c1: Vec<Poly2> = polys.iter().map(Poly2::subst_chart1).collect();
                    let c2: Vec<Poly2> = polys.iter().map(Poly2::subst_chart2).collect();
                    check(&c1, chart1);
                    check(&c2, chart2);
                }
                ChartNode::Shift { shift, next } => {
                    check(&shift_coeffs(polys, shift), next);
                }
                _ => {}
            }
        }
        let FamilyKind::Poly2(e) = &tree.family.kind else {
            panic!("two-parameter family expected")
        };
        check(&char_coeffs(e, 2), &tree.root);
    }

    #[test]
    fn gates_and_depth_exhaustion() {
        let f = MatrixFamily::poly1(
            "line",
            1,
            vec![Poly2::var_x()],
            Domain::Interval { lo: -1.0, hi: 1.0 },
        )
        .unwrap();
        assert!(matches!(
            resolve_family(&f, &ResolveOptions::default()),
            Err(BlowupError::TwoParameterRequired)
        ));
        let shear = MatrixFamily::poly2(
            "shear",
            2,
            vec![
                Poly2::zero(),
                Poly2::var_x(),
                Poly2::var_y(),
                Poly2::zero(),
            ],
            Domain::Rectangle {
                x: (-1.0, 1.0),
                y: (-1.0, 1.0),
            },
        )
        .unwrap();
        assert!(matches!(
            resolve_family(&shear, &ResolveOptions::default()),
            Err(BlowupError::Family(_))
        ));
        let opts = ResolveOptions {
            max_depth: 0,
            ..ResolveOptions::default()
        };
        let tree = resolve_family(&ex1_family(), &opts).unwrap();
        assert!(tree
            .leaves()
            .iter()
            .any(|l| l.status == LeafStatus::DepthExceeded));
        assert!(matches!(
            tree.sample(0.3, 0.4),
            Err(BlowupError::NoChartCovers { .. })
        ));
    }

    #[test]
    fn sampling_avoids_the_exceptional_locus() {
        let tree = resolve_family(&ex1_family(), &ResolveOptions::default()).unwrap();
        assert!(matches!(
            tree.sample(0.0, 0.0),
            Err(BlowupError::NoChartCovers { x, y }) if x == 0.0 && y == 0.0
        ));
    }
}
