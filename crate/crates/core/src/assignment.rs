//! Optimal matching between two eigenvalue multisets.
//!
//! The matching minimizes, in order: the largest matched distance (the
//! bottleneck), then the sum of squared distances, then the permutation
//! itself lexicographically. The bottleneck level is found by binary search
//! over the sorted distance values with an augmenting-path feasibility
//! check. Sums of squared distances are compared as exact real numbers
//! (the squared distances themselves being ordinary rounded products), so
//! the tie-break outcome does not depend on accumulation order.

use crate::C64;
use std::cmp::Ordering;

/// Upper size limit for the exact tie-break stage; beyond it only the
/// bottleneck level is optimized.
const EXACT_LIMIT: usize = 16;

/// Error-free transformation: `a + b = s + e` exactly.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bv = s - a;
    let av = s - bv;
    (s, (a - av) + (b - bv))
}

/// Exact sum of f64 addends, kept as a nonoverlapping expansion with
/// components in increasing magnitude.
#[derive(Clone, Debug, Default)]
struct ExactSum(Vec<f64>);

impl ExactSum {
    fn add(&self, x: f64) -> ExactSum {
        let mut out = Vec::with_capacity(self.0.len() + 1);
        let mut q = x;
        for &c in &self.0 {
            let (s, e) = two_sum(q, c);
            if e != 0.0 {
                out.push(e);
            }
            q = s;
        }
        if q != 0.0 || out.is_empty() {
            out.push(q);
        }
        ExactSum(out)
    }

    fn cmp_value(&self, other: &ExactSum) -> Ordering {
        let mut diff = self.clone();
        for &c in &other.0 {
            diff = diff.add(-c);
        }
        let top = *diff.0.last().unwrap_or(&0.0);
        top.partial_cmp(&0.0).unwrap()
    }
}

/// Match `prev[j]` to `next[sigma[j]]`. Both slices must have equal length.
pub fn bottleneck_match(prev: &[C64], next: &[C64]) -> Vec<usize> {
    let n = prev.len();
    assert_eq!(n, next.len());
    if n == 0 {
        return Vec::new();
    }
    let dist: Vec<Vec<f64>> = prev
        .iter()
        .map(|&p| next.iter().map(|&q| (p - q).norm()).collect())
        .collect();

    let cstar = bottleneck_level(&dist);
    if n <= EXACT_LIMIT {
        exact_tiebreak(&dist, cstar)
    } else {
        feasible_matching(&dist, cstar).expect("bottleneck level is feasible")
    }
}

/// Largest matched distance under the given matching.
pub fn bottleneck_cost(prev: &[C64], next: &[C64], sigma: &[usize]) -> f64 {
    prev.iter()
        .zip(sigma)
        .map(|(&p, &j)| (p - next[j]).norm())
        .fold(0.0, f64::max)
}

/// Smallest `c` such that a perfect matching exists using only pairs with
/// distance `<= c`.
fn bottleneck_level(dist: &[Vec<f64>]) -> f64 {
    let mut levels: Vec<f64> = dist.iter().flatten().copied().collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut lo = 0usize;
    let mut hi = levels.len() - 1;
    while lo < hi {
        let mid = (lo + hi) / 2;
        if feasible_matching(dist, levels[mid]).is_some() {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    levels[lo]
}

/// Augmenting-path bipartite matching restricted to edges `<= level`.
fn feasible_matching(dist: &[Vec<f64>], level: f64) -> Option<Vec<usize>> {
    let n = dist.len();
    let mut col_of_row = vec![usize::MAX; n];
    let mut row_of_col = vec![usize::MAX; n];

    fn try_augment(
        r: usize,
        dist: &[Vec<f64>],
        level: f64,
        visited: &mut [bool],
        col_of_row: &mut [usize],
        row_of_col: &mut [usize],
    ) -> bool {
        for c in 0..dist.len() {
            if dist[r][c] <= level && !visited[c] {
                visited[c] = true;
                if row_of_col[c] == usize::MAX
                    || try_augment(row_of_col[c], dist, level, visited, col_of_row, row_of_col)
                {
                    col_of_row[r] = c;
                    row_of_col[c] = r;
                    return true;
                }
            }
        }
        false
    }

    for r in 0..n {
        let mut visited = vec![false; n];
        if !try_augment(r, dist, level, &mut visited, &mut col_of_row, &mut row_of_col) {
            return None;
        }
    }
    Some(col_of_row)
}

/// Among matchings with bottleneck `<= cstar`, minimize the exact sum of
/// squared distances, then pick the lexicographically smallest permutation.
///
/// `g[S]` holds the optimal exact sum for assigning the last `|S|` rows to
/// the column set `S`; the traceback then fixes rows top-down, taking the
/// smallest column that still achieves the optimum.
fn exact_tiebreak(dist: &[Vec<f64>], cstar: f64) -> Vec<usize> {
    let n = dist.len();
    let full: u32 = (1 << n) - 1;
    let mut g: Vec<Option<ExactSum>> = vec![None; (full as usize) + 1];
    g[0] = Some(ExactSum::default());
    for mask in 1..=full {
        let r = n - mask.count_ones() as usize; // row assigned at this layer
        let mut best: Option<ExactSum> = None;
        for c in 0..n {
            if mask & (1 << c) == 0 || dist[r][c] > cstar {
                continue;
            }
            let Some(sub) = &g[(mask ^ (1 << c)) as usize] else {
                continue;
            };
            let candidate = sub.add(dist[r][c] * dist[r][c]);
            if best
                .as_ref()
                .is_none_or(|b| candidate.cmp_value(b) == Ordering::Less)
            {
                best = Some(candidate);
            }
        }
        g[mask as usize] = best;
    }

    let mut sigma = Vec::with_capacity(n);
    let mut mask = full;
    for r in 0..n {
        let goal = g[mask as usize].clone().expect("bottleneck level is feasible");
        let choice = (0..n)
            .find(|&c| {
                if mask & (1 << c) == 0 || dist[r][c] > cstar {
                    return false;
                }
                match &g[(mask ^ (1 << c)) as usize] {
                    Some(sub) => {
                        sub.add(dist[r][c] * dist[r][c]).cmp_value(&goal) == Ordering::Equal
                    }
                    None => false,
                }
            })
            .expect("DP table admits a consistent choice");
        sigma.push(choice);
        mask ^= 1 << choice;
    }
    sigma
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, f64)]) -> Vec<C64> {
        v.iter().map(|&(r, i)| C64::new(r, i)).collect()
    }

    /// Reference: enumerate all permutations and apply the same tie-break
    /// chain directly, with its own exact accumulator.
    fn brute_force(prev: &[C64], next: &[C64]) -> Vec<usize> {
        fn exact_sum_components(mut terms: Vec<f64>) -> Vec<f64> {
            // repeated error-free addition, smallest residuals first
            let mut comps: Vec<f64> = Vec::new();
            for x in terms.drain(..) {
                let mut q = x;
                let mut nonzero = Vec::new();
                for &c in &comps {
                    let s = q + c;
                    let bv = s - q;
                    let av = s - bv;
                    let e = (q - av) + (c - bv);
                    if e != 0.0 {
                        nonzero.push(e);
                    }
                    q = s;
                }
                if q != 0.0 || nonzero.is_empty() {
                    nonzero.push(q);
                }
                comps = nonzero;
            }
            comps
        }
        fn exact_less(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
            let mut diff: Vec<f64> = a.to_vec();
            let negated: Vec<f64> = b.iter().map(|x| -x).collect();
            let mut all: Vec<f64> = diff.drain(..).chain(negated).collect();
            all = exact_sum_components(std::mem::take(&mut all));
            let top = *all.last().unwrap_or(&0.0);
            top.partial_cmp(&0.0).unwrap()
        }
        let n = prev.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let key = |p: &[usize]| -> (f64, Vec<f64>) {
            let mut worst = 0.0f64;
            let mut squares = Vec::with_capacity(n);
            for (j, &s) in p.iter().enumerate() {
                let d = (prev[j] - next[s]).norm();
                worst = worst.max(d);
                squares.push(d * d);
            }
            (worst, exact_sum_components(squares))
        };
        let mut best: Option<((f64, Vec<f64>), Vec<usize>)> = None;
        let consider = |p: &[usize], best: &mut Option<((f64, Vec<f64>), Vec<usize>)>| {
            let k = key(p);
            let replace = match best {
                None => true,
                Some((bk, bp)) => {
                    use std::cmp::Ordering::*;
                    match k.0.partial_cmp(&bk.0).unwrap() {
                        Less => true,
                        Greater => false,
                        Equal => match exact_less(&k.1, &bk.1) {
                            Less => true,
                            Greater => false,
                            Equal => p < bp.as_slice(),
                        },
                    }
                }
            };
            if replace {
                *best = Some((k, p.to_vec()));
            }
        };
        consider(&perm, &mut best);
        // Heap's algorithm
        let mut c = vec![0usize; n];
        let mut i = 0;
        while i < n {
            if c[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(c[i], i);
                }
                consider(&perm, &mut best);
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        best.unwrap().1
    }

    #[test]
    fn identity_when_already_aligned() {
        let a = pts(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        assert_eq!(bottleneck_match(&a, &a), vec![0, 1, 2]);
    }

    #[test]
    fn crossing_prefers_smaller_bottleneck() {
        // prev at 0 and 10; next at 9 and 1: pairing straight across would
        // cost max 9, the swap costs max 1
        let prev = pts(&[(0.0, 0.0), (10.0, 0.0)]);
        let next = pts(&[(9.0, 0.0), (1.0, 0.0)]);
        assert_eq!(bottleneck_match(&prev, &next), vec![1, 0]);
    }

    #[test]
    fn full_tie_resolved_lexicographically() {
        // total collapse: every assignment has the same cost profile
        let prev = pts(&[(0.0, 0.0), (0.0, 0.0)]);
        let next = pts(&[(1.0, 0.0), (-1.0, 0.0)]);
        assert_eq!(bottleneck_match(&prev, &next), vec![0, 1]);
    }

    #[test]
    fn sum_of_squares_breaks_bottleneck_ties() {
        // both matchings share the bottleneck edge; the secondary sum picks
        // the cheaper completion
        let prev = pts(&[(0.0, 0.0), (5.0, 0.0)]);
        let next = pts(&[(3.0, 0.0), (5.1, 0.0)]);
        // identity: max 3, sum 9.01; swap: max 5.1 -> identity wins
        assert_eq!(bottleneck_match(&prev, &next), vec![0, 1]);
    }

    #[test]
    fn exact_sum_comparison_is_order_independent() {
        let a = ExactSum::default().add(1.0).add(1e-20).add(-1.0);
        let b = ExactSum::default().add(1e-20);
        assert_eq!(a.cmp_value(&b), std::cmp::Ordering::Equal);
        let c = ExactSum::default().add(1e-20).add(1e-40);
        assert_eq!(a.cmp_value(&c), std::cmp::Ordering::Less);
        assert_eq!(c.cmp_value(&a), std::cmp::Ordering::Greater);
    }

    #[test]
    fn agrees_with_brute_force_on_random_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for n in 1..=6usize {
            for _ in 0..200 {
                let prev: Vec<C64> = (0..n)
                    .map(|_| C64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
                    .collect();
                let next: Vec<C64> = (0..n)
                    .map(|_| C64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
                    .collect();
                let fast = bottleneck_match(&prev, &next);
                let brute = brute_force(&prev, &next);
                assert_eq!(fast, brute, "n = {n}, prev = {prev:?}, next = {next:?}");
            }
        }
    }

    #[test]
    fn clustered_points_still_agree_with_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            // draw from a tiny lattice to force plenty of exact ties
            let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
                C64::new(
                    (rng.random_range(0..3) as f64) * 0.5,
                    (rng.random_range(0..2) as f64) * 0.5,
                )
            };
            let prev: Vec<C64> = (0..5).map(|_| draw(&mut rng)).collect();
            let next: Vec<C64> = (0..5).map(|_| draw(&mut rng)).collect();
            let fast = bottleneck_match(&prev, &next);
            let brute = brute_force(&prev, &next);
            assert_eq!(fast, brute, "prev = {prev:?}, next = {next:?}");
        }
    }
}
