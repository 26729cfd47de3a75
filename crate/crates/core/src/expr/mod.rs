//! Closed-form scalar expressions: parsing, printing and jet evaluation.
//!
//! Grammar (precedence `^` > unary minus > `* /` > `+ -`, binaries left-associative):
//!
//! ```text
//! expr  := term (("+"|"-") term)*
//! term  := unary (("*"|"/") unary)*
//! unary := "-" unary | pow
//! pow   := atom ("^" (integer | "(" expr ")"))?
//! atom  := number | ident | func "(" expr ")" | "(" expr ")"
//! func  := "ln" | "exp" | "sin" | "cos" | "sqrt"
//! ```
//!
//! Identifiers `x1 … xn` are coordinates; anything else is a parameter.

mod jet;
mod parse;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

pub use jet::{Jet, MAX_ORDER};
pub use parse::{parse, parse_in, Scope};

pub type Params = BTreeMap<String, f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier '{name}' at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("function '{func}' takes exactly one argument (byte {offset})")]
    Arity { func: String, offset: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("pole at evaluation point: {0}")]
    Pole(String),
    #[error("parameter '{0}' has no value")]
    MissingParameter(String),
    #[error("point has {got} coordinates, expression needs {need}")]
    PointDimension { got: usize, need: usize },
    #[error("jet order {0} exceeds the maximum of {MAX_ORDER}")]
    Order(usize),
}

pub type Result<T> = std::result::Result<T, ExprError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Ln,
    Exp,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Ln => "ln",
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "ln" => Func::Ln,
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Zero-based coordinate index (`x1` is `Coord(0)`).
    Coord(usize),
    Param(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    /// Power with a literal non-negative integer exponent.
    PowInt(Box<Expr>, u32),
    /// Power with a parenthesized expression as exponent.
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    /// Literal; negative values become a negated literal so printing reparses identically.
    pub fn num(c: f64) -> Self {
        if c < 0.0 || (c == 0.0 && c.is_sign_negative()) {
            Expr::Neg(Box::new(Expr::Num(-c)))
        } else {
            Expr::Num(c)
        }
    }

    pub fn coord(i: usize) -> Self {
        Expr::Coord(i)
    }

    pub fn param(name: &str) -> Self {
        Expr::Param(name.to_string())
    }

    pub fn powi(self, k: u32) -> Self {
        Expr::PowInt(Box::new(self), k)
    }

    pub fn call(f: Func, arg: Expr) -> Self {
        Expr::Call(f, Box::new(arg))
    }

    pub fn ln(self) -> Self {
        Self::call(Func::Ln, self)
    }

    /// Sum of terms (`0` for an empty list).
    pub fn sum(terms: impl IntoIterator<Item = Expr>) -> Self {
        terms.into_iter().reduce(|a, b| a + b).unwrap_or(Expr::Num(0.0))
    }

    /// Largest coordinate index used plus one.
    pub fn coord_bound(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Param(_) => 0,
            Expr::Coord(i) => i + 1,
            Expr::Neg(a) | Expr::PowInt(a, _) | Expr::Call(_, a) => a.coord_bound(),
            Expr::Bin(_, a, b) | Expr::Pow(a, b) => a.coord_bound().max(b.coord_bound()),
        }
    }

    /// Parameter names referenced by the expression.
    pub fn params(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_params(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_params(&self, out: &mut Vec<String>) {
        match self {
            Expr::Param(p) => out.push(p.clone()),
            Expr::Num(_) | Expr::Coord(_) => {}
            Expr::Neg(a) | Expr::PowInt(a, _) | Expr::Call(_, a) => a.collect_params(out),
            Expr::Bin(_, a, b) | Expr::Pow(a, b) => {
                a.collect_params(out);
                b.collect_params(out);
            }
        }
    }

    fn check_point(&self, point: &[f64]) -> Result<()> {
        let need = self.coord_bound();
        if point.len() < need {
            return Err(ExprError::PointDimension { got: point.len(), need });
        }
        Ok(())
    }

    /// Plain value at a point.
    pub fn eval(&self, point: &[f64], params: &Params) -> Result<f64> {
        self.check_point(point)?;
        self.eval_f64(point, params)
    }

    fn eval_f64(&self, x: &[f64], params: &Params) -> Result<f64> {
        Ok(match self {
            Expr::Num(c) => *c,
            Expr::Coord(i) => x[*i],
            Expr::Param(p) => *params.get(p).ok_or_else(|| ExprError::MissingParameter(p.clone()))?,
            Expr::Neg(a) => -a.eval_f64(x, params)?,
            Expr::Bin(op, a, b) => {
                let (u, v) = (a.eval_f64(x, params)?, b.eval_f64(x, params)?);
                match op {
                    BinOp::Add => u + v,
                    BinOp::Sub => u - v,
                    BinOp::Mul => u * v,
                    BinOp::Div => {
                        if v == 0.0 {
                            return Err(ExprError::Pole(format!("division by zero in {self}")));
                        }
                        u / v
                    }
                }
            }
            Expr::PowInt(a, k) => a.eval_f64(x, params)?.powi(*k as i32),
            Expr::Pow(a, b) => {
                let (u, v) = (a.eval_f64(x, params)?, b.eval_f64(x, params)?);
                real_pow(u, v, self)?
            }
            Expr::Call(f, a) => {
                let u = a.eval_f64(x, params)?;
                match f {
                    Func::Ln => {
                        if u <= 0.0 {
                            return Err(ExprError::Domain(format!("ln of non-positive value {u}")));
                        }
                        u.ln()
                    }
                    Func::Sqrt => {
                        if u < 0.0 {
                            return Err(ExprError::Domain(format!("sqrt of negative value {u}")));
                        }
                        u.sqrt()
                    }
                    Func::Exp => u.exp(),
                    Func::Sin => u.sin(),
                    Func::Cos => u.cos(),
                }
            }
        })
    }

    /// Value and all partial derivatives up to `order` at `point`.
    pub fn eval_jet(&self, point: &[f64], params: &Params, order: usize) -> Result<Jet> {
        if order > MAX_ORDER {
            return Err(ExprError::Order(order));
        }
        self.check_point(point)?;
        let j = self.jet_rec(point, params, order)?;
        if !j.is_finite() {
            return Err(ExprError::Pole(format!("non-finite derivatives of {self}")));
        }
        Ok(j)
    }

    fn jet_rec(&self, x: &[f64], params: &Params, order: usize) -> Result<Jet> {
        let n = x.len();
        Ok(match self {
            Expr::Num(c) => Jet::constant(n, order, *c),
            Expr::Coord(i) => Jet::variable(n, order, *i, x[*i]),
            Expr::Param(p) => {
                Jet::constant(n, order, *params.get(p).ok_or_else(|| ExprError::MissingParameter(p.clone()))?)
            }
            Expr::Neg(a) => -&a.jet_rec(x, params, order)?,
            Expr::Bin(op, a, b) => {
                let (u, v) = (a.jet_rec(x, params, order)?, b.jet_rec(x, params, order)?);
                match op {
                    BinOp::Add => &u + &v,
                    BinOp::Sub => &u - &v,
                    BinOp::Mul => &u * &v,
                    BinOp::Div => {
                        if v.value() == 0.0 {
                            return Err(ExprError::Pole(format!("division by zero in {self}")));
                        }
                        &u * &v.recip()
                    }
                }
            }
            Expr::PowInt(a, k) => a.jet_rec(x, params, order)?.powi(*k),
            Expr::Pow(a, b) => {
                let u = a.jet_rec(x, params, order)?;
                let v = b.jet_rec(x, params, order)?;
                let v_const = v.coeffs()[1..].iter().all(|&c| c == 0.0);
                if u.value() > 0.0 {
                    (&v * &u.ln()).exp()
                } else if v_const && v.value().fract() == 0.0 && v.value() >= 0.0 {
                    u.powi(v.value() as u32)
                } else if v_const && v.value().fract() == 0.0 && u.value() != 0.0 {
                    u.powi((-v.value()) as u32).recip()
                } else {
                    return Err(ExprError::Domain(format!("non-positive base in {self}")));
                }
            }
            Expr::Call(f, a) => {
                let u = a.jet_rec(x, params, order)?;
                match f {
                    Func::Ln => {
                        if u.value() <= 0.0 {
                            return Err(ExprError::Domain(format!("ln of non-positive value {}", u.value())));
                        }
                        u.ln()
                    }
                    Func::Sqrt => {
                        if u.value() < 0.0 {
                            return Err(ExprError::Domain(format!("sqrt of negative value {}", u.value())));
                        }
                        if u.value() == 0.0 && order > 0 {
                            return Err(ExprError::Pole("derivative of sqrt at 0".into()));
                        }
                        u.sqrt()
                    }
                    Func::Exp => u.exp(),
                    Func::Sin => u.sin(),
                    Func::Cos => u.cos(),
                }
            }
        })
    }

    /// Central finite-difference estimate of the jet, error O(h²) per coefficient.
    pub fn fd_jet(&self, point: &[f64], params: &Params, order: usize, h: f64) -> Result<Jet> {
        if order > MAX_ORDER {
            return Err(ExprError::Order(order));
        }
        if !(h > 0.0) {
            return Err(ExprError::Domain("finite-difference step must be positive".into()));
        }
        self.check_point(point)?;
        let n = point.len();
        let template = Jet::zero(n, order);
        let mut cache: HashMap<Vec<i8>, f64> = HashMap::new();
        let mut coeffs = Vec::with_capacity(template.coeffs().len());
        for alpha in template.multi_indices() {
            // tensor-product stencil over the variables that are differentiated
            let mut terms: Vec<(Vec<i8>, f64)> = vec![(vec![0; n], 1.0)];
            for (v, &m) in alpha.iter().enumerate() {
                if m == 0 {
                    continue;
                }
                let st = stencil(m as usize, h);
                let mut next = Vec::with_capacity(terms.len() * st.len());
                for (off, w) in &terms {
                    for &(s, ws) in &st {
                        let mut o = off.clone();
                        o[v] = s;
                        next.push((o, w * ws));
                    }
                }
                terms = next;
            }
            let mut acc = 0.0;
            for (off, w) in terms {
                let val = match cache.get(&off) {
                    Some(&v) => v,
                    None => {
                        let x: Vec<f64> = point.iter().zip(&off).map(|(p, &o)| p + o as f64 * h).collect();
                        let v = self.eval_f64(&x, params)?;
                        cache.insert(off, v);
                        v
                    }
                };
                acc += w * val;
            }
            coeffs.push(acc);
        }
        Ok(Jet::from_coeffs(n, order, coeffs))
    }
}

fn real_pow(u: f64, v: f64, e: &Expr) -> Result<f64> {
    if u > 0.0 || v.fract() == 0.0 {
        if u == 0.0 && v < 0.0 {
            return Err(ExprError::Pole(format!("negative power of zero in {e}")));
        }
        Ok(u.powf(v))
    } else {
        Err(ExprError::Domain(format!("non-positive base in {e}")))
    }
}

/// Central difference weights for an `m`-th derivative: `(offset, weight)`.
fn stencil(m: usize, h: f64) -> Vec<(i8, f64)> {
    match m {
        1 => vec![(1, 0.5 / h), (-1, -0.5 / h)],
        2 => {
            let c = 1.0 / (h * h);
            vec![(1, c), (0, -2.0 * c), (-1, c)]
        }
        3 => {
            let c = 1.0 / (h * h * h);
            vec![(2, 0.5 * c), (1, -c), (-1, c), (-2, -0.5 * c)]
        }
        4 => {
            let c = 1.0 / (h * h * h * h);
            vec![(2, c), (1, -4.0 * c), (0, 6.0 * c), (-1, -4.0 * c), (-2, c)]
        }
        _ => unreachable!("stencil order bounded by MAX_ORDER"),
    }
}

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        Expr::Neg(_) => 3,
        Expr::PowInt(..) | Expr::Pow(..) => 4,
        _ => 5,
    }
}

struct Wrapped<'a>(&'a Expr, bool);

impl fmt::Display for Wrapped<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.1 {
            write!(f, "({})", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(c) => {
                if c.is_finite() && *c >= 0.0 {
                    write!(f, "{c}")
                } else {
                    // only reachable for hand-built trees
                    write!(f, "({c})")
                }
            }
            Expr::Coord(i) => write!(f, "x{}", i + 1),
            Expr::Param(p) => write!(f, "{p}"),
            Expr::Neg(a) => write!(f, "-{}", Wrapped(a, prec(a) < 3)),
            Expr::Bin(op, a, b) => {
                let (p, sym) = match op {
                    BinOp::Add => (1, " + "),
                    BinOp::Sub => (1, " - "),
                    BinOp::Mul => (2, "*"),
                    BinOp::Div => (2, "/"),
                };
                write!(f, "{}{}{}", Wrapped(a, prec(a) < p), sym, Wrapped(b, prec(b) <= p))
            }
            Expr::PowInt(a, k) => write!(f, "{}^{}", Wrapped(a, prec(a) < 5), k),
            Expr::Pow(a, b) => write!(f, "{}^({})", Wrapped(a, prec(a) < 5), b),
            Expr::Call(func, a) => write!(f, "{}({})", func.name(), a),
        }
    }
}

macro_rules! bin_impl {
    ($tr:ident, $m:ident, $op:expr) => {
        impl std::ops::$tr for Expr {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                Expr::Bin($op, Box::new(self), Box::new(rhs))
            }
        }
    };
}
bin_impl!(Add, add, BinOp::Add);
bin_impl!(Sub, sub, BinOp::Sub);
bin_impl!(Mul, mul, BinOp::Mul);
bin_impl!(Div, div, BinOp::Div);

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}
