//! Scalar expression DSL with symbolic first derivatives.

mod parse;

use std::fmt;
use std::sync::Arc;

pub use parse::parse_expression;

use crate::error::{Error, Result};
use crate::smooth::{Map, SmoothMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarGroup {
    X,
    U,
    W,
    Theta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    pub group: VarGroup,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Func(Func, Box<Expr>),
}

fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() < 1024.0 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

impl Expr {
    pub fn eval(&self, lookup: &dyn Fn(Var) -> f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => lookup(*v),
            Expr::Neg(a) => -a.eval(lookup),
            Expr::Add(a, b) => a.eval(lookup) + b.eval(lookup),
            Expr::Sub(a, b) => a.eval(lookup) - b.eval(lookup),
            Expr::Mul(a, b) => a.eval(lookup) * b.eval(lookup),
            Expr::Div(a, b) => a.eval(lookup) / b.eval(lookup),
            Expr::Pow(a, b) => pow(a.eval(lookup), b.eval(lookup)),
            Expr::Func(f, a) => {
                let v = a.eval(lookup);
                match f {
                    Func::Exp => v.exp(),
                    Func::Log if v > 0.0 => v.ln(),
                    Func::Sqrt if v >= 0.0 => v.sqrt(),
                    _ => f64::NAN,
                }
            }
        }
    }

    pub fn variables(&self, out: &mut Vec<Var>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                if !out.contains(v) {
                    out.push(*v)
                }
            }
            Expr::Neg(a) | Expr::Func(_, a) => a.variables(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.variables(out);
                b.variables(out);
            }
        }
    }

    fn is_const(&self, v: f64) -> bool {
        matches!(self, Expr::Const(c) if *c == v)
    }

    /// Symbolic partial derivative, lightly simplified.
    pub fn derivative(&self, wrt: Var) -> Expr {
        use Expr::*;
        match self {
            Const(_) => Const(0.0),
            Var(v) => Const(if *v == wrt { 1.0 } else { 0.0 }),
            Neg(a) => neg(a.derivative(wrt)),
            Add(a, b) => add(a.derivative(wrt), b.derivative(wrt)),
            Sub(a, b) => sub(a.derivative(wrt), b.derivative(wrt)),
            Mul(a, b) => add(mul(a.derivative(wrt), (**b).clone()), mul((**a).clone(), b.derivative(wrt))),
            Div(a, b) => {
                let num = sub(mul(a.derivative(wrt), (**b).clone()), mul((**a).clone(), b.derivative(wrt)));
                div(num, pow_e((**b).clone(), Const(2.0)))
            }
            Pow(a, b) => {
                let da = a.derivative(wrt);
                let db = b.derivative(wrt);
                if db.is_const(0.0) {
                    let lowered = match &**b {
                        Const(c) => Const(c - 1.0),
                        other => sub(other.clone(), Const(1.0)),
                    };
                    mul(mul((**b).clone(), pow_e((**a).clone(), lowered)), da)
                } else {
                    let ln_a = Func(self::Func::Log, a.clone());
                    let inner = add(mul(db, ln_a), div(mul((**b).clone(), da), (**a).clone()));
                    mul(self.clone(), inner)
                }
            }
            Func(f, a) => {
                let da = a.derivative(wrt);
                let outer = match f {
                    self::Func::Exp => self.clone(),
                    self::Func::Log => div(Const(1.0), (**a).clone()),
                    self::Func::Sqrt => div(Const(1.0), mul(Const(2.0), self.clone())),
                };
                mul(outer, da)
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(..) => 3,
            Expr::Pow(..) => 4,
            Expr::Const(c) if *c < 0.0 => 3,
            _ => 5,
        }
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(other.into()),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        _ if a.is_const(0.0) => b,
        _ if b.is_const(0.0) => a,
        _ => Expr::Add(a.into(), b.into()),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        _ if b.is_const(0.0) => a,
        _ if a.is_const(0.0) => neg(b),
        _ => Expr::Sub(a.into(), b.into()),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        _ if a.is_const(0.0) || b.is_const(0.0) => Expr::Const(0.0),
        _ if a.is_const(1.0) => b,
        _ if b.is_const(1.0) => a,
        _ => Expr::Mul(a.into(), b.into()),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    if a.is_const(0.0) {
        return Expr::Const(0.0);
    }
    if b.is_const(1.0) {
        return a;
    }
    Expr::Div(a.into(), b.into())
}

fn pow_e(a: Expr, b: Expr) -> Expr {
    if b.is_const(1.0) {
        return a;
    }
    if b.is_const(0.0) {
        return Expr::Const(1.0);
    }
    Expr::Pow(a.into(), b.into())
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = match self.group {
            VarGroup::X => "x",
            VarGroup::U => "u",
            VarGroup::W => "w",
            VarGroup::Theta => "theta",
        };
        write!(f, "{g}{}", self.index)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |f: &mut fmt::Formatter<'_>, e: &Expr, paren: bool| {
            if paren {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Const(c) => {
                if *c < 0.0 {
                    write!(f, "-{}", -c)
                } else {
                    write!(f, "{c}")
                }
            }
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                wrap(f, a, a.precedence() < 3)
            }
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                let op = if matches!(self, Expr::Add(..)) { " + " } else { " - " };
                wrap(f, a, a.precedence() < 1)?;
                write!(f, "{op}")?;
                wrap(f, b, b.precedence() <= 1)
            }
            Expr::Mul(a, b) | Expr::Div(a, b) => {
                let op = if matches!(self, Expr::Mul(..)) { "*" } else { "/" };
                wrap(f, a, a.precedence() < 2)?;
                write!(f, "{op}")?;
                wrap(f, b, b.precedence() <= 2)
            }
            Expr::Pow(a, b) => {
                wrap(f, a, a.precedence() <= 4)?;
                write!(f, "^")?;
                wrap(f, b, b.precedence() < 3)
            }
            Expr::Func(func, a) => {
                let name = match func {
                    Func::Exp => "exp",
                    Func::Log => "log",
                    Func::Sqrt => "sqrt",
                };
                write!(f, "{name}({a})")
            }
        }
    }
}

/// A vector-valued map whose components are DSL expressions over grouped arguments.
#[derive(Debug, Clone)]
pub struct ExprMap {
    groups: Vec<VarGroup>,
    dims: Vec<usize>,
    outputs: Vec<Expr>,
    /// `derivs[wrt][out][idx]`.
    derivs: Vec<Vec<Vec<Expr>>>,
}

impl ExprMap {
    pub fn new(groups: Vec<(VarGroup, usize)>, outputs: Vec<Expr>) -> Result<Self> {
        if outputs.is_empty() {
            return Err(Error::Invalid("expression map needs at least one output".into()));
        }
        let (groups, dims): (Vec<_>, Vec<_>) = groups.into_iter().unzip();
        for e in &outputs {
            let mut vars = Vec::new();
            e.variables(&mut vars);
            for v in vars {
                match groups.iter().position(|g| *g == v.group) {
                    Some(gi) if v.index < dims[gi] => {}
                    _ => return Err(Error::Invalid(format!("variable {v} is outside the declared dimensions"))),
                }
            }
        }
        let derivs = groups
            .iter()
            .zip(&dims)
            .map(|(g, d)| {
                outputs
                    .iter()
                    .map(|e| (0..*d).map(|i| e.derivative(Var { group: *g, index: i })).collect())
                    .collect()
            })
            .collect();
        Ok(Self { groups, dims, outputs, derivs })
    }

    /// Parses one expression per output.
    pub fn parse(groups: Vec<(VarGroup, usize)>, texts: &[&str]) -> Result<Self> {
        let outputs = texts.iter().map(|t| parse_expression(t)).collect::<Result<Vec<_>>>()?;
        Self::new(groups, outputs)
    }

    pub fn into_map(self) -> Map {
        Arc::new(self)
    }

    pub fn outputs(&self) -> &[Expr] {
        &self.outputs
    }

    fn lookup<'a>(&'a self, args: &'a [&'a [f64]]) -> impl Fn(Var) -> f64 + 'a {
        move |v: Var| {
            let gi = self.groups.iter().position(|g| *g == v.group).expect("validated variable");
            args[gi][v.index]
        }
    }
}

impl SmoothMap for ExprMap {
    fn arg_dims(&self) -> &[usize] {
        &self.dims
    }
    fn out_dim(&self) -> usize {
        self.outputs.len()
    }
    fn eval(&self, args: &[&[f64]], out: &mut [f64]) {
        let look = self.lookup(args);
        for (o, e) in out.iter_mut().zip(&self.outputs) {
            *o = e.eval(&look);
        }
    }
    fn jacobian(&self, args: &[&[f64]], wrt: usize, out: &mut [f64]) {
        let look = self.lookup(args);
        let n = self.dims[wrt];
        for (i, row) in self.derivs[wrt].iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                out[i * n + j] = e.eval(&look);
            }
        }
    }
    fn analytic(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(e: &Expr, x: f64, u: f64) -> f64 {
        e.eval(&|v: Var| match v.group {
            VarGroup::X => x,
            _ => u,
        })
    }

    #[test]
    fn polynomial_at_origin() {
        let e = parse_expression("0.25*u0^4 - (4/3)*u0^3 + 1.5*u0^2").unwrap();
        assert_eq!(at(&e, 0.0, 0.0), 0.0);
    }

    #[test]
    fn exp_at_zero() {
        assert_eq!(at(&parse_expression("exp(x0^4)").unwrap(), 0.0, 0.0), 1.0);
    }

    #[test]
    fn precedence_rules() {
        let e = parse_expression("-x^2").unwrap();
        assert_eq!(at(&e, 3.0, 0.0), -9.0);
        let e = parse_expression("2^3^2").unwrap();
        assert_eq!(at(&e, 0.0, 0.0), 512.0);
        let e = parse_expression("8/2/2 - 1 - 1").unwrap();
        assert_eq!(at(&e, 0.0, 0.0), 0.0);
        let e = parse_expression("2^-1").unwrap();
        assert_eq!(at(&e, 0.0, 0.0), 0.5);
    }

    #[test]
    fn errors_carry_offsets() {
        match parse_expression("x0 + foo") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_expression("exp(x0, u0)"), Err(Error::Parse { .. })));
        assert!(matches!(parse_expression("x0 +"), Err(Error::Parse { .. })));
        assert!(matches!(parse_expression("  "), Err(Error::Parse { .. })));
    }

    #[test]
    fn derivative_of_quartic() {
        let e = parse_expression("0.25*u^4 - (4/3)*u^3 + 1.5*u^2").unwrap();
        let d2 = e.derivative(Var { group: VarGroup::U, index: 0 }).derivative(Var { group: VarGroup::U, index: 0 });
        assert!((at(&d2, 0.0, 3.0) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn round_trip_keeps_structure() {
        for s in ["a", "x0 - (u0 - w0)", "-(x0 + 1)^2", "(-x0)^2", "x0^-u0", "2/(x0*u0)", "exp(-x0)*-u0"] {
            let Ok(e) = parse_expression(s) else { continue };
            let printed = e.to_string();
            assert_eq!(parse_expression(&printed).unwrap(), e, "{s} -> {printed}");
        }
    }

    #[test]
    fn out_of_range_variable_rejected() {
        assert!(ExprMap::parse(vec![(VarGroup::X, 1)], &["x1"]).is_err());
        assert!(ExprMap::parse(vec![(VarGroup::X, 1)], &["u0"]).is_err());
    }
}
