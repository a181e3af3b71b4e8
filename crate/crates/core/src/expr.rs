//! A small expression language for matrix entries that are not polynomial.
//!
//! Grammar (whitespace between tokens is ignored):
//!
//! ```text
//! expr     := term { ("+" | "-") term }
//! term     := factor { ("*" | "/") factor }
//! factor   := "-" factor | power
//! power    := atom [ "^" factor ]
//! atom     := number | "i" | "t" | "x" | "y"
//!           | func "(" expr ")" | "(" expr ")"
//! func     := "abs" | "sin" | "cos" | "sqrt" | "exp"
//! number   := digits ["." digits] [("e" | "E") ["+" | "-"] digits]
//! ```
//!
//! `^` binds tighter than unary minus (`-x^2` is `-(x^2)`) and is right
//! associative. The canonical printer emits a fully parenthesized form, so
//! printing, reparsing, and printing again always reproduces the same
//! string.

use crate::C64;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Var {
    T,
    X,
    Y,
}

impl Var {
    pub fn name(self) -> &'static str {
        match self {
            Var::T => "t",
            Var::X => "x",
            Var::Y => "y",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Func {
    Abs,
    Sin,
    Cos,
    Sqrt,
    Exp,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Abs => "abs",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
        }
    }
}

/// Abstract syntax tree of a scalar-valued expression in `t`, `x`, `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScalarExpr {
    Num(f64),
    Imag,
    Var(Var),
    Neg(Box<ScalarExpr>),
    Bin(BinOp, Box<ScalarExpr>, Box<ScalarExpr>),
    Call(Func, Box<ScalarExpr>),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("syntax error at byte {offset}: expected {expected}, found {found}")]
pub struct SyntaxError {
    pub offset: usize,
    pub expected: String,
    pub found: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("variable {0} has no bound value")]
    UnboundVariable(&'static str),
    #[error("division by zero")]
    DivisionByZero,
    #[error("result is not finite")]
    NonFinite,
}

/// Values bound to the variables during evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Bindings {
    pub t: Option<C64>,
    pub x: Option<C64>,
    pub y: Option<C64>,
}

impl Bindings {
    pub fn t(v: C64) -> Self {
        Bindings {
            t: Some(v),
            ..Default::default()
        }
    }

    pub fn t_real(v: f64) -> Self {
        Bindings::t(C64::new(v, 0.0))
    }

    pub fn xy(x: C64, y: C64) -> Self {
        Bindings {
            x: Some(x),
            y: Some(y),
            ..Default::default()
        }
    }

    pub fn xy_real(x: f64, y: f64) -> Self {
        Bindings::xy(C64::new(x, 0.0), C64::new(y, 0.0))
    }

    fn get(&self, v: Var) -> Result<C64, EvalError> {
        match v {
            Var::T => self.t,
            Var::X => self.x,
            Var::Y => self.y,
        }
        .ok_or(EvalError::UnboundVariable(v.name()))
    }
}

impl ScalarExpr {
    /// Parse the canonical grammar; the error carries the byte offset of the
    /// first offending token.
    pub fn parse(input: &str) -> Result<ScalarExpr, SyntaxError> {
        let mut p = Parser {
            bytes: input.as_bytes(),
            pos: 0,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < p.bytes.len() {
            return Err(p.error("end of input"));
        }
        Ok(e)
    }

    pub fn eval(&self, b: &Bindings) -> Result<C64, EvalError> {
        let v = self.eval_inner(b)?;
        if v.re.is_finite() && v.im.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    fn eval_inner(&self, b: &Bindings) -> Result<C64, EvalError> {
        Ok(match self {
            ScalarExpr::Num(x) => C64::new(*x, 0.0),
            ScalarExpr::Imag => C64::I,
            ScalarExpr::Var(v) => b.get(*v)?,
            ScalarExpr::Neg(e) => -e.eval_inner(b)?,
            ScalarExpr::Bin(op, l, r) => {
                let a = l.eval_inner(b)?;
                let c = r.eval_inner(b)?;
                match op {
                    BinOp::Add => a + c,
                    BinOp::Sub => a - c,
                    BinOp::Mul => a * c,
                    BinOp::Div => {
                        if c.norm() == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        a / c
                    }
                    BinOp::Pow => pow(a, c),
                }
            }
            ScalarExpr::Call(f, e) => {
                let v = e.eval_inner(b)?;
                match f {
                    // On real inputs the modulus coincides with the real
                    // absolute value, so one formula serves both cases.
                    Func::Abs => C64::new(v.norm(), 0.0),
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Sqrt => v.sqrt(),
                    Func::Exp => v.exp(),
                }
            }
        })
    }

    /// Variables that occur in the expression, as a `(t, x, y)` mask.
    pub fn uses(&self) -> (bool, bool, bool) {
        let mut mask = (false, false, false);
        self.visit_vars(&mut mask);
        mask
    }

    fn visit_vars(&self, mask: &mut (bool, bool, bool)) {
        match self {
            ScalarExpr::Var(Var::T) => mask.0 = true,
            ScalarExpr::Var(Var::X) => mask.1 = true,
            ScalarExpr::Var(Var::Y) => mask.2 = true,
            ScalarExpr::Neg(e) | ScalarExpr::Call(_, e) => e.visit_vars(mask),
            ScalarExpr::Bin(_, l, r) => {
                l.visit_vars(mask);
                r.visit_vars(mask);
            }
            _ => {}
        }
    }
}

fn pow(base: C64, exp: C64) -> C64 {
    // powc routes through the complex logarithm, which turns a zero base
    // into NaN even when the limit is plainly zero.
    if base.norm() == 0.0 && exp.im == 0.0 && exp.re > 0.0 {
        return C64::new(0.0, 0.0);
    }
    if exp.im == 0.0 && exp.re.fract() == 0.0 && exp.re.abs() <= 64.0 {
        base.powi(exp.re as i32)
    } else {
        base.powc(exp)
    }
}

/// Canonical fully parenthesized rendering.
impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarExpr::Num(x) => {
                if *x < 0.0 {
                    write!(f, "(-{})", -x)
                } else {
                    write!(f, "{x}")
                }
            }
            ScalarExpr::Imag => write!(f, "i"),
            ScalarExpr::Var(v) => write!(f, "{}", v.name()),
            ScalarExpr::Neg(e) => write!(f, "(-{e})"),
            ScalarExpr::Bin(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            ScalarExpr::Call(g, e) => write!(f, "{}({e})", g.name()),
        }
    }
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn error(&self, expected: &str) -> SyntaxError {
        let found = match self.bytes.get(self.pos) {
            Some(&b) => format!("{:?}", b as char),
            None => "end of input".to_string(),
        };
        SyntaxError {
            offset: self.pos,
            expected: expected.to_string(),
            found,
        }
    }

    fn expr(&mut self) -> Result<ScalarExpr, SyntaxError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = ScalarExpr::Bin(BinOp::Add, Box::new(lhs), Box::new(rhs));
                }
                Some(b'-') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = ScalarExpr::Bin(BinOp::Sub, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<ScalarExpr, SyntaxError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = ScalarExpr::Bin(BinOp::Mul, Box::new(lhs), Box::new(rhs));
                }
                Some(b'/') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = ScalarExpr::Bin(BinOp::Div, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<ScalarExpr, SyntaxError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.factor()?;
            return Ok(ScalarExpr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<ScalarExpr, SyntaxError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.factor()?;
            return Ok(ScalarExpr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<ScalarExpr, SyntaxError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() == Some(b')') {
                    self.pos += 1;
                    Ok(inner)
                } else {
                    Err(self.error("')'"))
                }
            }
            Some(b) if b.is_ascii_digit() || b == b'.' => self.number(),
            Some(b) if b.is_ascii_alphabetic() => {
                let start = self.pos;
                while self
                    .bytes
                    .get(self.pos)
                    .is_some_and(|b| b.is_ascii_alphabetic())
                {
                    self.pos += 1;
                }
                let word = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
                match word {
                    "i" => Ok(ScalarExpr::Imag),
                    "t" => Ok(ScalarExpr::Var(Var::T)),
                    "x" => Ok(ScalarExpr::Var(Var::X)),
                    "y" => Ok(ScalarExpr::Var(Var::Y)),
                    "abs" | "sin" | "cos" | "sqrt" | "exp" => {
                        let func = match word {
                            "abs" => Func::Abs,
                            "sin" => Func::Sin,
                            "cos" => Func::Cos,
                            "sqrt" => Func::Sqrt,
                            _ => Func::Exp,
                        };
                        if self.peek() != Some(b'(') {
                            return Err(self.error("'(' after function name"));
                        }
                        self.pos += 1;
                        let arg = self.expr()?;
                        if self.peek() != Some(b')') {
                            return Err(self.error("')'"));
                        }
                        self.pos += 1;
                        Ok(ScalarExpr::Call(func, Box::new(arg)))
                    }
                    _ => {
                        self.pos = start;
                        Err(self.error("a variable (t, x, y), 'i', or a function name"))
                    }
                }
            }
            _ => Err(self.error("a number, variable, function call, '-', or '('")),
        }
    }

    fn number(&mut self) -> Result<ScalarExpr, SyntaxError> {
        self.skip_ws();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if self.bytes.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
                self.pos += 1;
            }
        }
        if matches!(self.bytes.get(self.pos), Some(b'e') | Some(b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.bytes.get(self.pos), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            if self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
                while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
                    self.pos += 1;
                }
            } else {
                // not an exponent after all ("2e" could start "2*e..."),
                // roll back and let the caller complain
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        match text.parse::<f64>() {
            Ok(v) => Ok(ScalarExpr::Num(v)),
            Err(_) => {
                self.pos = start;
                Err(self.error("a numeric literal"))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_t(src: &str, t: f64) -> C64 {
        ScalarExpr::parse(src).unwrap().eval(&Bindings::t_real(t)).unwrap()
    }

    #[test]
    fn abs_then_square() {
        let v = eval_t("abs(t)^2", -3.0);
        assert!((v - C64::new(9.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn power_binds_tighter_than_division() {
        let v = eval_t("t^(3)/t", 2.0);
        assert!((v - C64::new(4.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn power_binds_tighter_than_unary_minus() {
        let v = eval_t("-2^2", 0.0);
        assert!((v - C64::new(-4.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn power_is_right_associative() {
        let v = eval_t("2^3^2", 0.0);
        assert!((v - C64::new(512.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn imaginary_exponential() {
        let v = eval_t("exp(i*t)", std::f64::consts::PI);
        assert!((v - C64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn fractional_power_of_zero_is_zero() {
        let v = eval_t("abs(t)^0.1", 0.0);
        assert_eq!(v, C64::new(0.0, 0.0));
    }

    #[test]
    fn oscillating_entry_matches_direct_formula() {
        let src = "abs(t)^2.5*(2+sin(1/abs(t)))";
        let t: f64 = 0.37;
        let expect = t.abs().powf(2.5) * (2.0 + (1.0 / t.abs()).sin());
        assert!((eval_t(src, t) - C64::new(expect, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn syntax_error_reports_offset() {
        let err = ScalarExpr::parse("t +* 2").unwrap_err();
        assert_eq!(err.offset, 3);
        assert!(err.expected.contains("number") || err.expected.contains("variable"));
    }

    #[test]
    fn trailing_garbage_rejected() {
        let err = ScalarExpr::parse("t + 2 )").unwrap_err();
        assert_eq!(err.offset, 6);
    }

    #[test]
    fn unbound_variable() {
        let e = ScalarExpr::parse("x + 1").unwrap();
        match e.eval(&Bindings::t_real(0.0)) {
            Err(EvalError::UnboundVariable("x")) => {}
            other => panic!("expected unbound x, got {other:?}"),
        }
    }

    #[test]
    fn division_by_zero() {
        let e = ScalarExpr::parse("1/t").unwrap();
        assert_eq!(e.eval(&Bindings::t_real(0.0)), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn print_parse_print_fixpoint_on_examples() {
        for src in [
            "abs(t)^2",
            "t^(3)/t",
            "-2^2",
            "1 + 2*t - t^2/3",
            "exp(i*t)",
            "sqrt(x^2 + y^2)",
            "abs(t)^2.5*(2+sin(1/abs(t)))",
        ] {
            let once = ScalarExpr::parse(src).unwrap().to_string();
            let twice = ScalarExpr::parse(&once).unwrap().to_string();
            assert_eq!(once, twice, "for {src}");
        }
    }
}
