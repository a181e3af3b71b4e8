//! Built-in example families whose eigenvalue behavior is known in closed
//! form, together with the expected artifacts each analysis should produce.

use crate::expr::{BinOp, Func, ScalarExpr, Var};
use crate::family::{Domain, MatrixFamily};
use crate::poly2::Poly2;
use crate::tracking::canonical_sort;
use crate::{C64, CMatrix};

/// Exponent pair for the differentiable variant of the oscillating family.
pub const EX4_C1_ALPHA: f64 = 1.5;
pub const EX4_C1_BETA: f64 = 2.6;
/// Exponent pair for which the Lipschitz certificate must fail.
pub const EX4_FAIL_ALPHA: f64 = 1.2;
pub const EX4_FAIL_BETA: f64 = 2.5;

/// Closed-form branch values at a parameter point, canonically sorted.
pub type BranchOracle = Box<dyn Fn(&[f64]) -> Vec<C64> + Send + Sync>;

/// A named family plus every expectation a test can verify mechanically.
pub struct CorpusEntry {
    pub name: &'static str,
    pub summary: &'static str,
    pub family: MatrixFamily,
    pub branch_oracle: Option<BranchOracle>,
    /// Permutation of branch indices after tracking across the interval.
    pub holonomy: Option<Vec<usize>>,
    /// Ramification index of the one-parameter series expansion.
    pub gamma: Option<usize>,
    /// Blow-up depth at which the two-parameter resolution terminates.
    pub chart_depth: Option<usize>,
    /// Verdict the Lipschitz certificate should reach near the origin.
    pub lipschitz_pass: Option<bool>,
    /// Whether first-order refinement yields derivatives continuous at 0.
    pub c1_continuous: Option<bool>,
}

/// The four standard entries with default parameters.
pub fn entries() -> Vec<CorpusEntry> {
    vec![ex1(), excont(), ex3(), ex4(EX4_C1_ALPHA, EX4_C1_BETA)]
}

/// Look up a standard entry by name.
pub fn by_name(name: &str) -> Option<CorpusEntry> {
    match name {
        "ex1" => Some(ex1()),
        "excont" => Some(excont()),
        "ex3" => Some(ex3()),
        "ex4" => Some(ex4(EX4_C1_ALPHA, EX4_C1_BETA)),
        _ => None,
    }
}

/// Real symmetric fold `[[x, y], [y, -x]]` with eigenvalues equal to plus
/// and minus the distance from the origin.
pub fn ex1() -> CorpusEntry {
    let family = MatrixFamily::poly2(
        "ex1",
        2,
        vec![
            Poly2::var_x(),
            Poly2::var_y(),
            Poly2::var_y(),
            Poly2::var_x().neg(),
        ],
        Domain::Rectangle {
            x: (-1.0, 1.0),
            y: (-1.0, 1.0),
        },
    )
    .expect("well-formed entries");
    CorpusEntry {
        name: "ex1",
        summary: "conical eigenvalues; eigenvector derivatives unbounded at 0",
        family,
        branch_oracle: Some(Box::new(|p: &[f64]| {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            vec![C64::new(-r, 0.0), C64::new(r, 0.0)]
        })),
        holonomy: None,
        gamma: None,
        chart_depth: Some(1),
        lipschitz_pass: None,
        c1_continuous: None,
    }
}

/// Unitary loop `[[0, e^{it}], [1, 0]]` on `[0, 2pi]`: the branches swap
/// after one circuit, so no continuous single-valued selection exists.
pub fn excont() -> CorpusEntry {
    let it = ScalarExpr::Bin(
        BinOp::Mul,
        Box::new(ScalarExpr::Imag),
        Box::new(ScalarExpr::Var(Var::T)),
    );
    let family = MatrixFamily::expr1(
        "excont",
        2,
        vec![
            ScalarExpr::Num(0.0),
            ScalarExpr::Call(Func::Exp, Box::new(it)),
            ScalarExpr::Num(1.0),
            ScalarExpr::Num(0.0),
        ],
        Domain::Interval {
            lo: 0.0,
            hi: 2.0 * std::f64::consts::PI,
        },
    )
    .expect("well-formed entries");
    CorpusEntry {
        name: "excont",
        summary: "normal loop whose eigenvalues cannot be chosen continuously",
        family,
        branch_oracle: Some(Box::new(|p: &[f64]| {
            let half = C64::new(0.0, p[0] / 2.0).exp();
            let mut v = vec![half, -half];
            canonical_sort(&mut v);
            v
        })),
        holonomy: Some(vec![1, 0]),
        gamma: None,
        chart_depth: None,
        lipschitz_pass: None,
        c1_continuous: None,
    }
}

/// Diagonalizable curve with branches `x` and both square roots of `x^3`,
/// ramified of index 2 at the origin.
pub fn ex3() -> CorpusEntry {
    let mut e = vec![Poly2::zero(); 9];
    e[0] = Poly2::var_x();
    e[5] = Poly2::monomial(2, 0, C64::new(1.0, 0.0));
    e[7] = Poly2::var_x();
    let family = MatrixFamily::poly1(
        "ex3",
        3,
        e,
        Domain::Interval { lo: -1.0, hi: 1.0 },
    )
    .expect("well-formed entries");
    CorpusEntry {
        name: "ex3",
        summary: "diagonalizable curve with three-halves power branches",
        family,
        branch_oracle: Some(Box::new(|p: &[f64]| {
            let x = p[0];
            let m = x.abs().powf(1.5);
            let mut v = if x >= 0.0 {
                vec![C64::new(x, 0.0), C64::new(m, 0.0), C64::new(-m, 0.0)]
            } else {
                vec![C64::new(x, 0.0), C64::new(0.0, m), C64::new(0.0, -m)]
            };
            canonical_sort(&mut v);
            v
        })),
        holonomy: None,
        gamma: Some(2),
        chart_depth: None,
        lipschitz_pass: None,
        c1_continuous: None,
    }
}

/// Oscillating diagonalizable curve pinned to 0 at the origin. Branch
/// derivatives at 0 are continuous iff `alpha + beta > 4` and the
/// difference quotients are unbounded iff `alpha + beta < 4`.
pub fn ex4(alpha: f64, beta: f64) -> CorpusEntry {
    let abs_t = ScalarExpr::Call(Func::Abs, Box::new(ScalarExpr::Var(Var::T)));
    let pow = |e: f64| {
        ScalarExpr::Bin(
            BinOp::Pow,
            Box::new(abs_t.clone()),
            Box::new(ScalarExpr::Num(e)),
        )
    };
    let osc = ScalarExpr::Bin(
        BinOp::Add,
        Box::new(ScalarExpr::Num(2.0)),
        Box::new(ScalarExpr::Call(
            Func::Sin,
            Box::new(ScalarExpr::Bin(
                BinOp::Div,
                Box::new(ScalarExpr::Num(1.0)),
                Box::new(abs_t.clone()),
            )),
        )),
    );
    let family = MatrixFamily::expr1(
        "ex4",
        2,
        vec![
            pow(alpha),
            ScalarExpr::Bin(
                BinOp::Sub,
                Box::new(pow(alpha)),
                Box::new(ScalarExpr::Bin(
                    BinOp::Mul,
                    Box::new(pow(beta)),
                    Box::new(osc),
                )),
            ),
            ScalarExpr::Neg(Box::new(pow(alpha))),
            ScalarExpr::Neg(Box::new(pow(alpha))),
        ],
        Domain::Interval { lo: -0.5, hi: 0.5 },
    )
    .expect("well-formed entries")
    .with_override(vec![0.0], CMatrix::zeros(2, 2));
    let c1 = alpha + beta > 4.0;
    CorpusEntry {
        name: "ex4",
        summary: "oscillating curve; Lipschitz bound fails when alpha+beta < 4",
        family,
        branch_oracle: Some(Box::new(move |p: &[f64]| {
            let t = p[0].abs();
            if t == 0.0 {
                return vec![C64::ZERO, C64::ZERO];
            }
            let m = t.powf((alpha + beta) / 2.0) * (2.0 + (1.0 / t).sin()).sqrt();
            vec![C64::new(-m, 0.0), C64::new(m, 0.0)]
        })),
        holonomy: None,
        gamma: None,
        chart_depth: None,
        lipschitz_pass: Some(c1),
        c1_continuous: Some(c1),
    }
}
