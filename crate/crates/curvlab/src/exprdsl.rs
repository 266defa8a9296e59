//! A small expression language for the scalar functions that drive every
//! construction: generating functions, curvature bounds `k(s)`, conformal
//! factors `λ(x, y)`.
//!
//! Grammar:
//!
//! ```text
//! expr     = term { ("+" | "-") term } ;
//! term     = unary { ("*" | "/") unary } ;
//! unary    = ("-" | "+") unary | power ;
//! power    = primary [ "^" unary ] ;              (* right associative *)
//! primary  = number | variable | constant | call | "(" expr ")" ;
//! call     = func "(" expr ")"
//!          | ("min" | "max") "(" expr "," expr ")"
//!          | "piecewise" "(" [ expr ">=" ] expr ";" expr ";" expr ")" ;
//! func     = "exp" | "log" | "sqrt" | "sinh" | "cosh" | "abs" ;
//! variable = "t" | "x" | "y" | "r" | "s" ;
//! constant = "pi" | "e" ;
//! number   = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ] ;
//! ```
//!
//! `piecewise(c; L; R)` is `L` while the bound variable is below `c` and `R`
//! from `c` onwards, so it is right-continuous. The explicit form
//! `piecewise(key >= c; L; R)` compares an arbitrary expression instead.
//!
//! Derivatives are exact on the tree. At kinks of `abs`, `min`, `max` and
//! `piecewise` the derivative follows the same right-continuous selection,
//! which gives the right-hand derivative when the selector key increases.

use std::collections::BTreeSet;
use std::fmt;
use std::ops;
use std::str::FromStr;

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    T,
    X,
    Y,
    R,
    S,
}

impl Var {
    pub const ALL: [Var; 5] = [Var::T, Var::X, Var::Y, Var::R, Var::S];

    fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Var::T => "t",
            Var::X => "x",
            Var::Y => "y",
            Var::R => "r",
            Var::S => "s",
        }
    }

    fn from_name(name: &str) -> Option<Var> {
        Var::ALL.into_iter().find(|v| v.name() == name)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Sinh,
    Cosh,
    Abs,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Abs => "abs",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        [Func::Exp, Func::Log, Func::Sqrt, Func::Sinh, Func::Cosh, Func::Abs]
            .into_iter()
            .find(|f| f.name() == name)
    }

    fn apply(self, a: f64) -> Result<f64, EvalError> {
        let v = match self {
            Func::Exp => a.exp(),
            Func::Log => {
                if a <= 0.0 {
                    return Err(EvalError::Domain { op: "log", arg: a });
                }
                a.ln()
            }
            Func::Sqrt => {
                if a < 0.0 {
                    return Err(EvalError::Domain { op: "sqrt", arg: a });
                }
                a.sqrt()
            }
            Func::Sinh => a.sinh(),
            Func::Cosh => a.cosh(),
            Func::Abs => a.abs(),
        };
        finite(self.name(), v)
    }
}

/// Expression tree. Build with [`parse`], the operator overloads, or the
/// helper constructors; all of them fold constants.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    /// `left` while `key < threshold`, `right` otherwise. A missing key means
    /// the single variable bound at evaluation time.
    Step {
        key: Option<Box<Expr>>,
        threshold: Box<Expr>,
        left: Box<Expr>,
        right: Box<Expr>,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("variable `{0}` is not bound")]
    Unbound(Var),
    #[error("{op} is undefined at {arg}")]
    Domain { op: &'static str, arg: f64 },
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("piecewise without a key needs exactly one bound variable, found {0}")]
    StepKey(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("parse error at byte {pos}: {kind}")]
pub struct ParseError {
    pub pos: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseErrorKind {
    #[error("empty expression")]
    Empty,
    #[error("expected {expected}, found {found}")]
    Unexpected { expected: String, found: String },
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("malformed number `{0}`")]
    BadNumber(String),
}

fn finite(op: &'static str, v: f64) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite { op })
    }
}

/// Values for the free variables of an expression.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Bindings([Option<f64>; 5]);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn one(v: Var, value: f64) -> Self {
        Self::new().with(v, value)
    }

    pub fn with(mut self, v: Var, value: f64) -> Self {
        self.0[v.index()] = Some(value);
        self
    }

    pub fn get(&self, v: Var) -> Option<f64> {
        self.0[v.index()]
    }

    fn sole(&self) -> Result<f64, EvalError> {
        let bound: Vec<f64> = self.0.iter().flatten().copied().collect();
        match bound.as_slice() {
            [v] => Ok(*v),
            other => Err(EvalError::StepKey(other.len())),
        }
    }
}

pub fn parse(source: &str) -> Result<Expr, ParseError> {
    let tokens = lex(source)?;
    let mut p = Parser { tokens, i: 0, len: source.len() };
    if p.tokens.is_empty() {
        return Err(ParseError { pos: 0, kind: ParseErrorKind::Empty });
    }
    let e = p.expr()?;
    match p.peek() {
        None => Ok(e),
        Some(t) => Err(p.unexpected("end of input", t.clone())),
    }
}

impl FromStr for Expr {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

// ---------------------------------------------------------------------------
// constructors with constant folding

fn konst(e: &Expr) -> Option<f64> {
    match e {
        Expr::Const(c) => Some(*c),
        _ => None,
    }
}

fn folded(v: f64, fallback: Expr) -> Expr {
    if v.is_finite() {
        Expr::Const(v)
    } else {
        fallback
    }
}

impl Expr {
    pub fn c(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn pow(self, b: Expr) -> Expr {
        match (konst(&self), konst(&b)) {
            (_, Some(e)) if e == 1.0 => self,
            (_, Some(e)) if e == 0.0 => Expr::Const(1.0),
            (Some(x), Some(y)) => match pow_checked(x, y) {
                Ok(v) => Expr::Const(v),
                Err(_) => Expr::Pow(Box::new(self), Box::new(b)),
            },
            _ => Expr::Pow(Box::new(self), Box::new(b)),
        }
    }

    pub fn powi(self, n: i32) -> Expr {
        self.pow(Expr::Const(n as f64))
    }

    fn call(f: Func, a: Expr) -> Expr {
        if let Some(x) = konst(&a) {
            if let Ok(v) = f.apply(x) {
                return Expr::Const(v);
            }
        }
        Expr::Call(f, Box::new(a))
    }

    pub fn exp(self) -> Expr {
        Expr::call(Func::Exp, self)
    }
    pub fn log(self) -> Expr {
        Expr::call(Func::Log, self)
    }
    pub fn sqrt(self) -> Expr {
        Expr::call(Func::Sqrt, self)
    }
    pub fn sinh(self) -> Expr {
        Expr::call(Func::Sinh, self)
    }
    pub fn cosh(self) -> Expr {
        Expr::call(Func::Cosh, self)
    }
    pub fn abs(self) -> Expr {
        Expr::call(Func::Abs, self)
    }

    pub fn min(self, b: Expr) -> Expr {
        match (konst(&self), konst(&b)) {
            (Some(x), Some(y)) => Expr::Const(x.min(y)),
            _ => Expr::Min(Box::new(self), Box::new(b)),
        }
    }

    pub fn max(self, b: Expr) -> Expr {
        match (konst(&self), konst(&b)) {
            (Some(x), Some(y)) => Expr::Const(x.max(y)),
            _ => Expr::Max(Box::new(self), Box::new(b)),
        }
    }

    /// `piecewise(threshold; left; right)` on the implicit variable.
    pub fn piecewise(threshold: Expr, left: Expr, right: Expr) -> Expr {
        Expr::Step { key: None, threshold: Box::new(threshold), left: Box::new(left), right: Box::new(right) }
    }

    /// `piecewise(key >= threshold; left; right)`.
    pub fn step(key: Expr, threshold: Expr, left: Expr, right: Expr) -> Expr {
        if let (Some(k), Some(c)) = (konst(&key), konst(&threshold)) {
            return if k < c { left } else { right };
        }
        if left == right {
            return left;
        }
        Expr::Step {
            key: Some(Box::new(key)),
            threshold: Box::new(threshold),
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    // -----------------------------------------------------------------------
    // evaluation

    pub fn eval(&self, b: &Bindings) -> Result<f64, EvalError> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(v) => b.get(*v).ok_or(EvalError::Unbound(*v)),
            Expr::Neg(a) => Ok(-a.eval(b)?),
            Expr::Add(x, y) => finite("+", x.eval(b)? + y.eval(b)?),
            Expr::Sub(x, y) => finite("-", x.eval(b)? - y.eval(b)?),
            Expr::Mul(x, y) => finite("*", x.eval(b)? * y.eval(b)?),
            Expr::Div(x, y) => {
                let num = x.eval(b)?;
                let den = y.eval(b)?;
                if den == 0.0 {
                    return Err(EvalError::Domain { op: "/", arg: den });
                }
                finite("/", num / den)
            }
            Expr::Pow(x, y) => {
                let base = x.eval(b)?;
                let ex = y.eval(b)?;
                pow_checked(base, ex)
            }
            Expr::Call(f, a) => f.apply(a.eval(b)?),
            Expr::Min(x, y) => Ok(x.eval(b)?.min(y.eval(b)?)),
            Expr::Max(x, y) => Ok(x.eval(b)?.max(y.eval(b)?)),
            Expr::Step { key, threshold, left, right } => {
                let k = match key {
                    Some(k) => k.eval(b)?,
                    None => b.sole()?,
                };
                if k < threshold.eval(b)? {
                    left.eval(b)
                } else {
                    right.eval(b)
                }
            }
        }
    }

    /// Evaluate with a single variable bound.
    pub fn at(&self, v: Var, value: f64) -> Result<f64, EvalError> {
        self.eval(&Bindings::one(v, value))
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let Expr::Var(v) = e {
                out.insert(*v);
            }
        });
        out
    }

    /// The only free variable, or `default` for a constant expression.
    /// `None` when several variables occur.
    pub fn sole_var(&self, default: Var) -> Option<Var> {
        let vars = self.free_vars();
        match vars.len() {
            0 => Some(default),
            1 => vars.into_iter().next(),
            _ => None,
        }
    }

    /// Constant thresholds of piecewise nodes keyed on `v` (or on the
    /// implicit variable). Quadrature and ODE routines split there.
    pub fn breakpoints(&self, v: Var) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Step { key, threshold, .. } = e {
                let keyed = match key {
                    None => true,
                    Some(k) => **k == Expr::Var(v),
                };
                if let (true, Some(c)) = (keyed, konst(threshold)) {
                    out.push(c);
                }
            }
        });
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    fn visit<F: FnMut(&Expr)>(&self, f: &mut F) {
        f(self);
        match self {
            Expr::Const(_) | Expr::Var(_) => {}
            Expr::Neg(a) | Expr::Call(_, a) => a.visit(f),
            Expr::Add(x, y)
            | Expr::Sub(x, y)
            | Expr::Mul(x, y)
            | Expr::Div(x, y)
            | Expr::Pow(x, y)
            | Expr::Min(x, y)
            | Expr::Max(x, y) => {
                x.visit(f);
                y.visit(f);
            }
            Expr::Step { key, threshold, left, right } => {
                if let Some(k) = key {
                    k.visit(f);
                }
                threshold.visit(f);
                left.visit(f);
                right.visit(f);
            }
        }
    }

    // -----------------------------------------------------------------------
    // differentiation

    pub fn diff(&self, v: Var) -> Expr {
        use Expr::*;
        match self {
            Const(_) => Const(0.0),
            Var(w) => Const(if *w == v { 1.0 } else { 0.0 }),
            Neg(a) => -a.diff(v),
            Add(a, b) => a.diff(v) + b.diff(v),
            Sub(a, b) => a.diff(v) - b.diff(v),
            Mul(a, b) => a.diff(v) * (**b).clone() + (**a).clone() * b.diff(v),
            Div(a, b) => {
                let (a, b) = ((**a).clone(), (**b).clone());
                (a.diff(v) * b.clone() - a * b.diff(v)) / b.powi(2)
            }
            Pow(a, b) => {
                let (a, b) = ((**a).clone(), (**b).clone());
                let da = a.diff(v);
                let db = b.diff(v);
                if let Some(n) = konst(&b) {
                    Const(n) * a.pow(Const(n - 1.0)) * da
                } else if konst(&db) == Some(0.0) {
                    b.clone() * a.clone().pow(b - Const(1.0)) * da
                } else {
                    a.clone().pow(b.clone()) * (db * a.clone().log() + b * da / a)
                }
            }
            Call(f, a) => {
                let inner = (**a).clone();
                let da = a.diff(v);
                let outer = match f {
                    Func::Exp => inner.exp(),
                    Func::Log => Const(1.0) / inner,
                    Func::Sqrt => Const(0.5) / inner.sqrt(),
                    Func::Sinh => inner.cosh(),
                    Func::Cosh => inner.sinh(),
                    Func::Abs => Expr::step(inner, Const(0.0), Const(-1.0), Const(1.0)),
                };
                outer * da
            }
            Min(a, b) => Expr::step((**a).clone() - (**b).clone(), Const(0.0), a.diff(v), b.diff(v)),
            Max(a, b) => Expr::step((**a).clone() - (**b).clone(), Const(0.0), b.diff(v), a.diff(v)),
            Step { key, threshold, left, right } => {
                let (dl, dr) = (left.diff(v), right.diff(v));
                match key {
                    None if dl == dr => dl,
                    None => Step { key: None, threshold: threshold.clone(), left: Box::new(dl), right: Box::new(dr) },
                    Some(k) => Expr::step((**k).clone(), (**threshold).clone(), dl, dr),
                }
            }
        }
    }

    fn prec(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(..) => 3,
            Expr::Const(c) if c.is_sign_negative() => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }
}

fn pow_checked(base: f64, ex: f64) -> Result<f64, EvalError> {
    if base < 0.0 && ex.fract() != 0.0 {
        return Err(EvalError::Domain { op: "^", arg: base });
    }
    if base == 0.0 && ex < 0.0 {
        return Err(EvalError::Domain { op: "^", arg: base });
    }
    let v = if ex.fract() == 0.0 && ex.abs() <= i32::MAX as f64 {
        base.powi(ex as i32)
    } else {
        base.powf(ex)
    };
    finite("^", v)
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(-c),
            Expr::Neg(a) => *a,
            other => Expr::Neg(Box::new(other)),
        }
    }
}

impl ops::Add for Expr {
    type Output = Expr;
    fn add(self, b: Expr) -> Expr {
        match (konst(&self), konst(&b)) {
            (Some(x), Some(y)) => folded(x + y, Expr::Add(Box::new(self), Box::new(b))),
            (Some(x), _) if x == 0.0 => b,
            (_, Some(y)) if y == 0.0 => self,
            _ => Expr::Add(Box::new(self), Box::new(b)),
        }
    }
}

impl ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, b: Expr) -> Expr {
        match (konst(&self), konst(&b)) {
            (Some(x), Some(y)) => folded(x - y, Expr::Sub(Box::new(self), Box::new(b))),
            (Some(x), _) if x == 0.0 => -b,
            (_, Some(y)) if y == 0.0 => self,
            _ => Expr::Sub(Box::new(self), Box::new(b)),
        }
    }
}

impl ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, b: Expr) -> Expr {
        match (konst(&self), konst(&b)) {
            (Some(x), Some(y)) => folded(x * y, Expr::Mul(Box::new(self), Box::new(b))),
            (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::Const(0.0),
            (Some(x), _) if x == 1.0 => b,
            (_, Some(y)) if y == 1.0 => self,
            (Some(x), _) if x == -1.0 => -b,
            (_, Some(y)) if y == -1.0 => -self,
            _ => Expr::Mul(Box::new(self), Box::new(b)),
        }
    }
}

impl ops::Div for Expr {
    type Output = Expr;
    fn div(self, b: Expr) -> Expr {
        match (konst(&self), konst(&b)) {
            (Some(x), Some(y)) if y != 0.0 => folded(x / y, Expr::Div(Box::new(self), Box::new(b))),
            (_, Some(y)) if y == 1.0 => self,
            _ => Expr::Div(Box::new(self), Box::new(b)),
        }
    }
}

// ---------------------------------------------------------------------------
// printing

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn wrap(e: &Expr, min: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            if e.prec() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => {
                f.write_str("-")?;
                wrap(a, 3, f)
            }
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                wrap(a, 1, f)?;
                f.write_str(if matches!(self, Expr::Add(..)) { " + " } else { " - " })?;
                wrap(b, 2, f)
            }
            Expr::Mul(a, b) | Expr::Div(a, b) => {
                wrap(a, 2, f)?;
                f.write_str(if matches!(self, Expr::Mul(..)) { "*" } else { "/" })?;
                wrap(b, 3, f)
            }
            Expr::Pow(a, b) => {
                wrap(a, 5, f)?;
                f.write_str("^")?;
                wrap(b, 3, f)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Min(a, b) => write!(f, "min({a}, {b})"),
            Expr::Max(a, b) => write!(f, "max({a}, {b})"),
            Expr::Step { key, threshold, left, right } => match key {
                None => write!(f, "piecewise({threshold}; {left}; {right})"),
                Some(k) => write!(f, "piecewise({k} >= {threshold}; {left}; {right})"),
            },
        }
    }
}

// ---------------------------------------------------------------------------
// lexer and parser

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(&'static str),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "number {v}"),
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Sym(s) => write!(f, "`{s}`"),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| ParseError {
                pos: start,
                kind: ParseErrorKind::BadNumber(text.to_string()),
            })?;
            out.push((start, Tok::Num(v)));
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
            continue;
        }
        let sym = match c {
            b'+' => "+",
            b'-' => "-",
            b'*' => "*",
            b'/' => "/",
            b'^' => "^",
            b'(' => "(",
            b')' => ")",
            b',' => ",",
            b';' => ";",
            b'>' if bytes.get(i + 1) == Some(&b'=') => {
                i += 1;
                ">="
            }
            _ => {
                let ch = src[i..].chars().next().unwrap_or('?');
                return Err(ParseError {
                    pos: start,
                    kind: ParseErrorKind::Unexpected { expected: "a token".into(), found: format!("`{ch}`") },
                });
            }
        };
        i += 1;
        out.push((start, Tok::Sym(sym)));
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Tok)>,
    i: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.i).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.tokens.get(self.i).map(|(p, _)| *p).unwrap_or(self.len)
    }

    fn unexpected(&self, expected: &str, found: Tok) -> ParseError {
        ParseError {
            pos: self.pos(),
            kind: ParseErrorKind::Unexpected { expected: expected.to_string(), found: found.to_string() },
        }
    }

    fn eat(&mut self, sym: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(s)) if *s == sym) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, sym: &'static str) -> Result<(), ParseError> {
        if self.eat(sym) {
            return Ok(());
        }
        let err = match self.peek() {
            Some(t) => self.unexpected(&format!("`{sym}`"), t.clone()),
            None => ParseError {
                pos: self.len,
                kind: ParseErrorKind::Unexpected { expected: format!("`{sym}`"), found: "end of input".into() },
            },
        };
        Err(err)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat("+") {
                lhs = lhs + self.term()?;
            } else if self.eat("-") {
                lhs = lhs - self.term()?;
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat("*") {
                lhs = lhs * self.unary()?;
            } else if self.eat("/") {
                lhs = lhs / self.unary()?;
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat("-") {
            return Ok(-self.unary()?);
        }
        if self.eat("+") {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.eat("^") {
            let ex = self.unary()?;
            return Ok(base.pow(ex));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        let tok = match self.peek() {
            Some(t) => t.clone(),
            None => {
                return Err(ParseError {
                    pos,
                    kind: ParseErrorKind::Unexpected { expected: "an operand".into(), found: "end of input".into() },
                })
            }
        };
        match tok {
            Tok::Num(v) => {
                self.i += 1;
                Ok(Expr::Const(v))
            }
            Tok::Sym("(") => {
                self.i += 1;
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.i += 1;
                if let Some(v) = Var::from_name(&name) {
                    return Ok(Expr::Var(v));
                }
                match name.as_str() {
                    "pi" => return Ok(Expr::Const(std::f64::consts::PI)),
                    "e" => return Ok(Expr::Const(std::f64::consts::E)),
                    _ => {}
                }
                if let Some(func) = Func::from_name(&name) {
                    self.expect("(")?;
                    let a = self.expr()?;
                    self.expect(")")?;
                    return Ok(Expr::call(func, a));
                }
                match name.as_str() {
                    "min" | "max" => {
                        self.expect("(")?;
                        let a = self.expr()?;
                        self.expect(",")?;
                        let b = self.expr()?;
                        self.expect(")")?;
                        Ok(if name == "min" { a.min(b) } else { a.max(b) })
                    }
                    "piecewise" => {
                        self.expect("(")?;
                        let first = self.expr()?;
                        let (key, threshold) = if self.eat(">=") { (Some(first), self.expr()?) } else { (None, first) };
                        self.expect(";")?;
                        let left = self.expr()?;
                        self.expect(";")?;
                        let right = self.expr()?;
                        self.expect(")")?;
                        Ok(match key {
                            Some(k) => Expr::step(k, threshold, left, right),
                            None => Expr::piecewise(threshold, left, right),
                        })
                    }
                    _ => Err(ParseError { pos, kind: ParseErrorKind::UnknownIdentifier(name) }),
                }
            }
            other => Err(self.unexpected("an operand", other)),
        }
    }
}
