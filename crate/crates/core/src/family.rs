//! Parameter-dependent matrix families: evaluation, derivatives, normality
//! certification, characteristic polynomials, and the JSON document format.

use crate::expr::{Bindings, EvalError, ScalarExpr};
use crate::mat;
use crate::monic::MonicPoly;
use crate::poly2::Poly2;
use crate::series::Series1;
use crate::seriespoly::SeriesPoly;
use crate::{C64, CMatrix};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Coefficient-space residual bound for an exact normality certificate.
pub const EXACT_NORMAL_TOL: f64 = 1e-12;
/// Relative residual bound when normality is only sampled.
pub const SAMPLED_NORMAL_TOL: f64 = 1e-8;
/// Number of sample points for grid-based normality checks.
pub const NORMALITY_SAMPLES: usize = 101;
/// Distance under which a parameter point takes an override value.
pub const OVERRIDE_TOL: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum FamilyError {
    #[error("expected {expected} parameter(s), got {got}")]
    Arity { expected: usize, got: usize },
    #[error("entry ({row}, {col}) failed to evaluate: {source}")]
    Eval {
        row: usize,
        col: usize,
        source: EvalError,
    },
    #[error("family is not normal: residual {residual:.3e}{}", witness_text(.witness))]
    NotNormal {
        residual: f64,
        witness: Option<Vec<f64>>,
    },
    #[error("operation needs polynomial entries in one variable")]
    NotUnivariate,
    #[error("family document is malformed: {0}")]
    Document(String),
}

fn witness_text(w: &Option<Vec<f64>>) -> String {
    match w {
        Some(p) => format!(" at {p:?}"),
        None => String::new(),
    }
}

/// Parameter domain the family is declared on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    Interval { lo: f64, hi: f64 },
    Rectangle { x: (f64, f64), y: (f64, f64) },
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            Domain::Rectangle { .. } => 2,
        }
    }
}

/// Entry representation of the family.
#[derive(Debug, Clone)]
pub enum FamilyKind {
    /// Polynomial entries in a single parameter (stored with `y` unused).
    Poly1(Vec<Poly2>),
    /// Polynomial entries in two parameters.
    Poly2(Vec<Poly2>),
    /// Expression entries in the single parameter `t`.
    Expr1(Vec<ScalarExpr>),
}

impl FamilyKind {
    fn label(&self) -> &'static str {
        match self {
            FamilyKind::Poly1(_) => "poly1",
            FamilyKind::Poly2(_) => "poly2",
            FamilyKind::Expr1(_) => "expr1",
        }
    }
}

/// How a normality certificate was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CertKind {
    /// Verified in coefficient space.
    Exact,
    /// Verified on a sample grid.
    Sampled,
}

/// Evidence that `A(p) A(p)* = A(p)* A(p)` across the domain.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NormalityCertificate {
    pub kind: CertKind,
    pub max_residual: f64,
}

/// A family of square complex matrices depending on one or two real
/// parameters. Values at isolated points can be pinned by overrides, which
/// is how removable singularities of expression entries are handled.
#[derive(Debug, Clone)]
pub struct MatrixFamily {
    pub name: String,
    pub n: usize,
    pub kind: FamilyKind,
    pub domain: Domain,
    pub overrides: Vec<(Vec<f64>, CMatrix)>,
}

impl MatrixFamily {
    pub fn poly1(
        name: impl Into<String>,
        n: usize,
        entries: Vec<Poly2>,
        domain: Domain,
    ) -> Result<Self, FamilyError> {
        if entries.len() != n * n {
            return Err(FamilyError::Document(format!(
                "expected {} entries, got {}",
                n * n,
                entries.len()
            )));
        }
        if entries.iter().any(|e| e.as_univariate().is_none()) {
            return Err(FamilyError::NotUnivariate);
        }
        Ok(MatrixFamily {
            name: name.into(),
            n,
            kind: FamilyKind::Poly1(entries),
            domain,
            overrides: Vec::new(),
        })
    }

    pub fn poly2(
        name: impl Into<String>,
        n: usize,
        entries: Vec<Poly2>,
        domain: Domain,
    ) -> Result<Self, FamilyError> {
        if entries.len() != n * n {
            return Err(FamilyError::Document(format!(
                "expected {} entries, got {}",
                n * n,
                entries.len()
            )));
        }
        Ok(MatrixFamily {
            name: name.into(),
            n,
            kind: FamilyKind::Poly2(entries),
            domain,
            overrides: Vec::new(),
        })
    }

    pub fn expr1(
        name: impl Into<String>,
        n: usize,
        entries: Vec<ScalarExpr>,
        domain: Domain,
    ) -> Result<Self, FamilyError> {
        if entries.len() != n * n {
            return Err(FamilyError::Document(format!(
                "expected {} entries, got {}",
                n * n,
                entries.len()
            )));
        }
        for e in &entries {
            let (_, x, y) = e.uses();
            if x || y {
                return Err(FamilyError::Document(
                    "expr1 entries may only use the variable t".into(),
                ));
            }
        }
        Ok(MatrixFamily {
            name: name.into(),
            n,
            kind: FamilyKind::Expr1(entries),
            domain,
            overrides: Vec::new(),
        })
    }

    pub fn with_override(mut self, at: Vec<f64>, value: CMatrix) -> Self {
        self.overrides.push((at, value));
        self
    }

    /// Number of real parameters.
    pub fn arity(&self) -> usize {
        match self.kind {
            FamilyKind::Poly2(_) => 2,
            _ => 1,
        }
    }

    fn check_arity(&self, p: &[f64]) -> Result<(), FamilyError> {
        if p.len() != self.arity() {
            return Err(FamilyError::Arity {
                expected: self.arity(),
                got: p.len(),
            });
        }
        Ok(())
    }

    fn override_at(&self, p: &[f64]) -> Option<&CMatrix> {
        self.overrides
            .iter()
            .find(|(at, _)| {
                at.len() == p.len()
                    && at
                        .iter()
                        .zip(p)
                        .all(|(a, b)| (a - b).abs() <= OVERRIDE_TOL)
            })
            .map(|(_, m)| m)
    }

    /// Evaluate the family at a parameter point.
    pub fn eval(&self, p: &[f64]) -> Result<CMatrix, FamilyError> {
        self.check_arity(p)?;
        if let Some(m) = self.override_at(p) {
            return Ok(m.clone());
        }
        let n = self.n;
        let mut out = CMatrix::zeros(n, n);
        match &self.kind {
            FamilyKind::Poly1(entries) => {
                let x = C64::new(p[0], 0.0);
                for i in 0..n {
                    for j in 0..n {
                        out[(i, j)] = entries[i * n + j].eval_x(x);
                    }
                }
            }
            FamilyKind::Poly2(entries) => {
                let (x, y) = (C64::new(p[0], 0.0), C64::new(p[1], 0.0));
                for i in 0..n {
                    for j in 0..n {
                        out[(i, j)] = entries[i * n + j].eval(x, y);
                    }
                }
            }
            FamilyKind::Expr1(entries) => {
                let b = Bindings::t_real(p[0]);
                for i in 0..n {
                    for j in 0..n {
                        out[(i, j)] =
                            entries[i * n + j].eval(&b).map_err(|source| {
                                FamilyError::Eval {
                                    row: i,
                                    col: j,
                                    source,
                                }
                            })?;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Finite-difference step used for expression-entry derivatives.
    pub fn fd_step(&self, t: f64) -> f64 {
        1e-5 * t.abs().max(1.0)
    }

    /// Derivative in parameter direction `dir` (0 for `x`/`t`, 1 for `y`).
    /// Polynomial entries are differentiated symbolically; expression
    /// entries use a central difference with step [`Self::fd_step`].
    pub fn derivative(&self, p: &[f64], dir: usize) -> Result<CMatrix, FamilyError> {
        self.check_arity(p)?;
        assert!(dir < self.arity(), "direction out of range");
        let n = self.n;
        match &self.kind {
            FamilyKind::Poly1(entries) => {
                let x = C64::new(p[0], 0.0);
                let mut out = CMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        out[(i, j)] = entries[i * n + j].d_dx().eval_x(x);
                    }
                }
                Ok(out)
            }
            FamilyKind::Poly2(entries) => {
                let (x, y) = (C64::new(p[0], 0.0), C64::new(p[1], 0.0));
                let mut out = CMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        let d = if dir == 0 {
                            entries[i * n + j].d_dx()
                        } else {
                            entries[i * n + j].d_dy()
                        };
                        out[(i, j)] = d.eval(x, y);
                    }
                }
                Ok(out)
            }
            FamilyKind::Expr1(_) => {
                let h = self.fd_step(p[0]);
                let plus = self.eval(&[p[0] + h])?;
                let minus = self.eval(&[p[0] - h])?;
                Ok((plus - minus) / C64::new(2.0 * h, 0.0))
            }
        }
    }

    /// Certify that the family is normal. Polynomial entries are checked in
    /// coefficient space (an exact certificate); expression entries are
    /// sampled on a grid over the domain.
    pub fn normality_check(&self) -> Result<NormalityCertificate, FamilyError> {
        match &self.kind {
            FamilyKind::Poly1(entries) | FamilyKind::Poly2(entries) => {
                let n = self.n;
                let adj = |es: &[Poly2], i: usize, j: usize| es[j * n + i].conj_coeffs();
                let scale = entries.iter().map(Poly2::max_abs).fold(1.0, f64::max);
                let mut residual = 0.0f64;
                for i in 0..n {
                    for j in 0..n {
                        let mut diff = Poly2::zero();
                        for k in 0..n {
                            // (A A*)_ij - (A* A)_ij
                            diff = diff
                                .add(&entries[i * n + k].mul(&adj(entries, k, j)))
                                .sub(&adj(entries, i, k).mul(&entries[k * n + j]));
                        }
                        residual = residual.max(diff.max_abs());
                    }
                }
                let rel = residual / (scale * scale);
                if rel <= EXACT_NORMAL_TOL {
                    Ok(NormalityCertificate {
                        kind: CertKind::Exact,
                        max_residual: rel,
                    })
                } else {
                    Err(FamilyError::NotNormal {
                        residual: rel,
                        witness: None,
                    })
                }
            }
            FamilyKind::Expr1(_) => {
                let (lo, hi) = match self.domain {
                    Domain::Interval { lo, hi } => (lo, hi),
                    Domain::Rectangle { .. } => {
                        return Err(FamilyError::Document(
                            "expr1 family with a rectangle domain".into(),
                        ))
                    }
                };
                let mut worst = (0.0f64, lo);
                for k in 0..NORMALITY_SAMPLES {
                    let t = lo + (hi - lo) * k as f64 / (NORMALITY_SAMPLES - 1) as f64;
                    let a = self.eval(&[t])?;
                    let scale = mat::fro_norm(&a).powi(2).max(1.0);
                    let r = mat::normality_residual(&a) / scale;
                    if r > worst.0 {
                        worst = (r, t);
                    }
                }
                if worst.0 <= SAMPLED_NORMAL_TOL {
                    Ok(NormalityCertificate {
                        kind: CertKind::Sampled,
                        max_residual: worst.0,
                    })
                } else {
                    Err(FamilyError::NotNormal {
                        residual: worst.0,
                        witness: Some(vec![worst.1]),
                    })
                }
            }
        }
    }

    /// Characteristic polynomial at a point.
    pub fn char_poly_at(&self, p: &[f64]) -> Result<MonicPoly, FamilyError> {
        Ok(mat::char_poly(&self.eval(p)?))
    }

    /// Characteristic polynomial with series coefficients, for polynomial
    /// one-parameter families.
    pub fn char_poly_series(&self, trunc: usize) -> Result<SeriesPoly, FamilyError> {
        let entries = match &self.kind {
            FamilyKind::Poly1(entries) => entries,
            _ => return Err(FamilyError::NotUnivariate),
        };
        let n = self.n;
        let series: Vec<Series1> = entries
            .iter()
            .map(|e| {
                let c = e.as_univariate().expect("validated univariate");
                Series1::polynomial(&c, trunc)
            })
            .collect();
        Ok(char_poly_series_from_entries(&series, n, trunc))
    }
}

/// Faddeev-LeVerrier over the truncated series ring.
fn char_poly_series_from_entries(a: &[Series1], n: usize, trunc: usize) -> SeriesPoly {
    let zero = Series1::zero(trunc);
    let one = Series1::constant(C64::new(1.0, 0.0), trunc);
    let mut m: Vec<Series1> = (0..n * n)
        .map(|idx| {
            if idx / n == idx % n {
                one.clone()
            } else {
                zero.clone()
            }
        })
        .collect();
    let mut coeffs = Vec::with_capacity(n);
    for k in 1..=n {
        // am = A * M
        let mut am = vec![zero.clone(); n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = zero.clone();
                for l in 0..n {
                    acc = acc.add(&a[i * n + l].mul(&m[l * n + j]));
                }
                am[i * n + j] = acc;
            }
        }
        let mut tr = zero.clone();
        for i in 0..n {
            tr = tr.add(&am[i * n + i]);
        }
        let c = tr.scale(C64::new(-1.0 / k as f64, 0.0));
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        coeffs.push(c.scale(C64::new(sign, 0.0)));
        m = am;
        for i in 0..n {
            m[i * n + i] = m[i * n + i].add(&c);
        }
    }
    SeriesPoly::new(coeffs)
}

// --- JSON document format -------------------------------------------------

#[derive(Serialize, Deserialize)]
struct FamilyDoc {
    name: String,
    n: usize,
    kind: String,
    entries: Vec<EntryDoc>,
    domain: DomainDoc,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    overrides: Vec<OverrideDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum EntryDoc {
    Expr(String),
    Table(BTreeMap<String, [f64; 2]>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DomainDoc {
    Interval { interval: [f64; 2] },
    Rect { rect: [[f64; 2]; 2] },
}

#[derive(Serialize, Deserialize)]
struct OverrideDoc {
    at: Vec<f64>,
    matrix: Vec<Vec<[f64; 2]>>,
}

impl MatrixFamily {
    pub fn to_json(&self) -> serde_json::Value {
        let entries = match &self.kind {
            FamilyKind::Poly1(es) => es
                .iter()
                .map(|e| {
                    let mut table = BTreeMap::new();
                    for ((a, _), c) in e.terms() {
                        table.insert(a.to_string(), [c.re, c.im]);
                    }
                    EntryDoc::Table(table)
                })
                .collect(),
            FamilyKind::Poly2(es) => es
                .iter()
                .map(|e| {
                    let mut table = BTreeMap::new();
                    for ((a, b), c) in e.terms() {
                        table.insert(format!("{a},{b}"), [c.re, c.im]);
                    }
                    EntryDoc::Table(table)
                })
                .collect(),
            FamilyKind::Expr1(es) => es.iter().map(|e| EntryDoc::Expr(e.to_string())).collect(),
        };
        let domain = match self.domain {
            Domain::Interval { lo, hi } => DomainDoc::Interval { interval: [lo, hi] },
            Domain::Rectangle { x, y } => DomainDoc::Rect {
                rect: [[x.0, x.1], [y.0, y.1]],
            },
        };
        let overrides = self
            .overrides
            .iter()
            .map(|(at, m)| OverrideDoc {
                at: at.clone(),
                matrix: (0..self.n)
                    .map(|i| (0..self.n).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
                    .collect(),
            })
            .collect();
        let doc = FamilyDoc {
            name: self.name.clone(),
            n: self.n,
            kind: self.kind.label().to_string(),
            entries,
            domain,
            overrides,
        };
        serde_json::to_value(doc).expect("family document serialization")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, FamilyError> {
        let doc: FamilyDoc = serde_json::from_value(value.clone())
            .map_err(|e| FamilyError::Document(e.to_string()))?;
        if doc.entries.len() != doc.n * doc.n {
            return Err(FamilyError::Document(format!(
                "expected {} entries, got {}",
                doc.n * doc.n,
                doc.entries.len()
            )));
        }
        let domain = match doc.domain {
            DomainDoc::Interval { interval } => Domain::Interval {
                lo: interval[0],
                hi: interval[1],
            },
            DomainDoc::Rect { rect } => Domain::Rectangle {
                x: (rect[0][0], rect[0][1]),
                y: (rect[1][0], rect[1][1]),
            },
        };
        let kind = match doc.kind.as_str() {
            "poly1" => {
                let mut entries = Vec::with_capacity(doc.entries.len());
                for e in &doc.entries {
                    let EntryDoc::Table(table) = e else {
                        return Err(FamilyError::Document(
                            "poly1 entries must be coefficient tables".into(),
                        ));
                    };
                    let mut p = Poly2::zero();
                    for (key, [re, im]) in table {
                        let a: u32 = key.parse().map_err(|_| {
                            FamilyError::Document(format!("bad poly1 exponent key {key:?}"))
                        })?;
                        p = p.add(&Poly2::monomial(a, 0, C64::new(*re, *im)));
                    }
                    entries.push(p);
                }
                FamilyKind::Poly1(entries)
            }
            "poly2" => {
                let mut entries = Vec::with_capacity(doc.entries.len());
                for e in &doc.entries {
                    let EntryDoc::Table(table) = e else {
                        return Err(FamilyError::Document(
                            "poly2 entries must be coefficient tables".into(),
                        ));
                    };
                    let mut p = Poly2::zero();
                    for (key, [re, im]) in table {
                        let (sa, sb) = key.split_once(',').ok_or_else(|| {
                            FamilyError::Document(format!("bad poly2 exponent key {key:?}"))
                        })?;
                        let a: u32 = sa.trim().parse().map_err(|_| {
                            FamilyError::Document(format!("bad poly2 exponent key {key:?}"))
                        })?;
                        let b: u32 = sb.trim().parse().map_err(|_| {
                            FamilyError::Document(format!("bad poly2 exponent key {key:?}"))
                        })?;
                        p = p.add(&Poly2::monomial(a, b, C64::new(*re, *im)));
                    }
                    entries.push(p);
                }
                FamilyKind::Poly2(entries)
            }
            "expr1" => {
                let mut entries = Vec::with_capacity(doc.entries.len());
                for e in &doc.entries {
                    let EntryDoc::Expr(src) = e else {
                        return Err(FamilyError::Document(
                            "expr1 entries must be expression strings".into(),
                        ));
                    };
                    entries.push(
                        ScalarExpr::parse(src)
                            .map_err(|err| FamilyError::Document(err.to_string()))?,
                    );
                }
                FamilyKind::Expr1(entries)
            }
            other => {
                return Err(FamilyError::Document(format!(
                    "unknown family kind {other:?}"
                )))
            }
        };
        let mut fam = match kind {
            FamilyKind::Poly1(entries) => MatrixFamily::poly1(doc.name, doc.n, entries, domain)?,
            FamilyKind::Poly2(entries) => MatrixFamily::poly2(doc.name, doc.n, entries, domain)?,
            FamilyKind::Expr1(entries) => MatrixFamily::expr1(doc.name, doc.n, entries, domain)?,
        };
        for o in doc.overrides {
            if o.matrix.len() != fam.n || o.matrix.iter().any(|r| r.len() != fam.n) {
                return Err(FamilyError::Document("override matrix has wrong shape".into()));
            }
            let mut m = CMatrix::zeros(fam.n, fam.n);
            for i in 0..fam.n {
                for j in 0..fam.n {
                    m[(i, j)] = C64::new(o.matrix[i][j][0], o.matrix[i][j][1]);
                }
            }
            fam = fam.with_override(o.at, m);
        }
        Ok(fam)
    }
}
