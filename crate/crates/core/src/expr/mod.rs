//! Scalar expressions over named phase variables.
//!
//! Expressions are parsed from infix text (see [`parse`]) or assembled with
//! the arithmetic operators implemented on `&Expr`. Evaluation comes in two
//! flavours sharing one set of domain rules: [`Expr::eval`] for the value
//! only and [`Expr::eval_jet2`] for value, gradient and Hessian.

mod parser;

use std::fmt;
use std::ops;
use std::sync::Arc;

use thiserror::Error;

use crate::jet::Jet2;

pub use parser::parse_with;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),
    #[error("domain error in `{node}`: argument {input}")]
    Domain { node: String, input: f64 },
    #[error("expected {expected} coordinates, got {got}")]
    Arity { expected: usize, got: usize },
}

/// Elementary functions accepted in call position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Ln,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        match name {
            "exp" => Some(Func::Exp),
            "ln" | "log" => Some(Func::Ln),
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    /// Power with a constant real exponent.
    Pow(Box<Node>, f64),
    Call(Func, Box<Node>),
}

impl Node {
    fn visit_vars(&self, out: &mut impl FnMut(usize)) {
        match self {
            Node::Const(_) => {}
            Node::Var(i) => out(*i),
            Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => a.visit_vars(out),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.visit_vars(out);
                b.visit_vars(out);
            }
        }
    }

    fn map_vars(&self, map: &impl Fn(usize) -> usize) -> Node {
        let bx = |n: &Node| Box::new(n.map_vars(map));
        match self {
            Node::Const(c) => Node::Const(*c),
            Node::Var(i) => Node::Var(map(*i)),
            Node::Neg(a) => Node::Neg(bx(a)),
            Node::Pow(a, c) => Node::Pow(bx(a), *c),
            Node::Call(f, a) => Node::Call(*f, bx(a)),
            Node::Add(a, b) => Node::Add(bx(a), bx(b)),
            Node::Sub(a, b) => Node::Sub(bx(a), bx(b)),
            Node::Mul(a, b) => Node::Mul(bx(a), bx(b)),
            Node::Div(a, b) => Node::Div(bx(a), bx(b)),
        }
    }
}

/// Variable names in coordinate order, plus optional aliases that resolve
/// to the same slot (e.g. `q1` for `q` when there is one degree of freedom).
#[derive(Debug, Clone, PartialEq)]
pub struct Variables {
    names: Arc<[String]>,
    aliases: Vec<(String, usize)>,
}

impl Variables {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Self, ExprError> {
        let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(ExprError::DuplicateVariable(name.clone()));
            }
        }
        Ok(Variables {
            names: names.into(),
            aliases: Vec::new(),
        })
    }

    pub fn with_alias(mut self, alias: &str, target: &str) -> Self {
        if let Some(i) = self.names.iter().position(|n| n == target) {
            if self.lookup(alias).is_none() {
                self.aliases.push((alias.to_string(), i));
            }
        }
        self
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn lookup(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name).or_else(|| {
            self.aliases
                .iter()
                .find(|(a, _)| a == name)
                .map(|&(_, i)| i)
        })
    }
}

/// An immutable expression tree together with the ordered variable list it
/// is evaluated against.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    vars: Arc<[String]>,
}

/// Parse `source` over the variables `vars` (in coordinate order).
pub fn parse<S: AsRef<str>>(source: &str, vars: &[S]) -> Result<Expr, ExprError> {
    parse_with(source, &Variables::new(vars)?)
}

impl Expr {
    pub(crate) fn from_parts(root: Node, vars: Arc<[String]>) -> Self {
        Expr { root, vars }
    }

    pub fn constant(value: f64, vars: &Variables) -> Expr {
        Expr {
            root: Node::Const(value),
            vars: vars.names.clone(),
        }
    }

    pub fn variable(index: usize, vars: &Variables) -> Expr {
        assert!(index < vars.len(), "variable index out of range");
        Expr {
            root: Node::Var(index),
            vars: vars.names.clone(),
        }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn nvars(&self) -> usize {
        self.vars.len()
    }

    /// Whether the tree mentions coordinate `index` anywhere.
    pub fn references(&self, index: usize) -> bool {
        let mut found = false;
        self.root.visit_vars(&mut |i| found |= i == index);
        found
    }

    /// Names of the referenced variables, in coordinate order.
    pub fn referenced_names(&self) -> Vec<&str> {
        let mut used = vec![false; self.nvars()];
        self.root.visit_vars(&mut |i| used[i] = true);
        self.vars
            .iter()
            .zip(used)
            .filter_map(|(n, u)| u.then_some(n.as_str()))
            .collect()
    }

    pub fn is_constant(&self) -> bool {
        self.referenced_names().is_empty()
    }

    /// Re-express the tree over a different variable list, matching by name
    /// (aliases included). Fails if a referenced name is missing.
    pub fn rebind(&self, target: &Variables) -> Result<Expr, ExprError> {
        let mut mapping = Vec::with_capacity(self.nvars());
        for name in self.vars.iter() {
            mapping.push(target.lookup(name));
        }
        for name in self.referenced_names() {
            let i = self.vars.iter().position(|n| n == name).unwrap();
            if mapping[i].is_none() {
                return Err(ExprError::UnknownVariable(name.to_string()));
            }
        }
        let root = self.root.map_vars(&|i| mapping[i].unwrap_or(usize::MAX));
        Ok(Expr {
            root,
            vars: target.names.clone(),
        })
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64, ExprError> {
        self.check_arity(point)?;
        eval_node::<f64>(&self.root, point, self)
    }

    pub fn eval_jet2(&self, point: &[f64]) -> Result<Jet2, ExprError> {
        self.check_arity(point)?;
        eval_node::<Jet2>(&self.root, point, self)
    }

    fn check_arity(&self, point: &[f64]) -> Result<(), ExprError> {
        if point.len() != self.nvars() {
            return Err(ExprError::Arity {
                expected: self.nvars(),
                got: point.len(),
            });
        }
        Ok(())
    }

    fn with_root(&self, root: Node) -> Expr {
        Expr {
            root,
            vars: self.vars.clone(),
        }
    }

    pub fn powf(&self, exponent: f64) -> Expr {
        self.with_root(Node::Pow(Box::new(self.root.clone()), exponent))
    }

    pub fn call(&self, func: Func) -> Expr {
        self.with_root(Node::Call(func, Box::new(self.root.clone())))
    }

    pub fn exp(&self) -> Expr {
        self.call(Func::Exp)
    }

    pub fn ln(&self) -> Expr {
        self.call(Func::Ln)
    }

    pub fn scale(&self, c: f64) -> Expr {
        self.with_root(Node::Mul(
            Box::new(Node::Const(c)),
            Box::new(self.root.clone()),
        ))
    }

    fn binary(&self, rhs: &Expr, op: fn(Box<Node>, Box<Node>) -> Node) -> Expr {
        assert_eq!(
            self.vars, rhs.vars,
            "combining expressions over different variable lists"
        );
        self.with_root(op(Box::new(self.root.clone()), Box::new(rhs.root.clone())))
    }
}

macro_rules! impl_binop {
    ($trait:ident, $method:ident, $variant:ident) => {
        impl ops::$trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                self.binary(rhs, Node::$variant)
            }
        }
    };
}

impl_binop!(Add, add, Add);
impl_binop!(Sub, sub, Sub);
impl_binop!(Mul, mul, Mul);
impl_binop!(Div, div, Div);

impl ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        self.with_root(Node::Neg(Box::new(self.root.clone())))
    }
}

/// Number types the evaluator can run on.
trait Scalar: Sized {
    fn constant(c: f64, nvars: usize) -> Self;
    fn variable(index: usize, value: f64, nvars: usize) -> Self;
    fn value(&self) -> f64;
    fn add(&self, rhs: &Self) -> Self;
    fn sub(&self, rhs: &Self) -> Self;
    fn mul(&self, rhs: &Self) -> Self;
    fn div(&self, rhs: &Self) -> Self;
    fn neg(&self) -> Self;
    fn compose(&self, f: f64, df: f64, d2f: f64) -> Self;
}

impl Scalar for f64 {
    fn constant(c: f64, _: usize) -> Self {
        c
    }
    fn variable(_: usize, value: f64, _: usize) -> Self {
        value
    }
    fn value(&self) -> f64 {
        *self
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn sub(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn div(&self, rhs: &Self) -> Self {
        self / rhs
    }
    fn neg(&self) -> Self {
        -self
    }
    fn compose(&self, f: f64, _: f64, _: f64) -> Self {
        f
    }
}

impl Scalar for Jet2 {
    fn constant(c: f64, nvars: usize) -> Self {
        Jet2::constant(c, nvars)
    }
    fn variable(index: usize, value: f64, nvars: usize) -> Self {
        Jet2::variable(index, value, nvars)
    }
    fn value(&self) -> f64 {
        Jet2::value(self)
    }
    fn add(&self, rhs: &Self) -> Self {
        Jet2::add(self, rhs)
    }
    fn sub(&self, rhs: &Self) -> Self {
        Jet2::sub(self, rhs)
    }
    fn mul(&self, rhs: &Self) -> Self {
        Jet2::mul(self, rhs)
    }
    fn div(&self, rhs: &Self) -> Self {
        Jet2::div(self, rhs)
    }
    fn neg(&self) -> Self {
        Jet2::neg(self)
    }
    fn compose(&self, f: f64, df: f64, d2f: f64) -> Self {
        Jet2::compose(self, f, df, d2f)
    }
}

fn is_integer(c: f64) -> bool {
    c.fract() == 0.0 && c.abs() < 2f64.powi(31)
}

/// `(f, f', f'')` of `u^c`, or `None` outside the real, twice
/// differentiable domain.
fn power_derivatives(u: f64, c: f64) -> Option<(f64, f64, f64)> {
    if is_integer(c) {
        let k = c as i32;
        if u == 0.0 && k < 0 {
            return None;
        }
        let f = u.powi(k);
        let df = if k == 0 { 0.0 } else { c * u.powi(k - 1) };
        let d2f = if k == 0 || k == 1 {
            0.0
        } else {
            c * (c - 1.0) * u.powi(k - 2)
        };
        Some((f, df, d2f))
    } else if u > 0.0 || (u == 0.0 && c >= 2.0) {
        Some((
            u.powf(c),
            c * u.powf(c - 1.0),
            c * (c - 1.0) * u.powf(c - 2.0),
        ))
    } else {
        None
    }
}

fn call_derivatives(func: Func, u: f64) -> Option<(f64, f64, f64)> {
    match func {
        Func::Exp => {
            let e = u.exp();
            Some((e, e, e))
        }
        Func::Ln => (u > 0.0).then(|| (u.ln(), 1.0 / u, -1.0 / (u * u))),
        Func::Sin => Some((u.sin(), u.cos(), -u.sin())),
        Func::Cos => Some((u.cos(), -u.sin(), -u.cos())),
        Func::Sqrt => (u > 0.0).then(|| {
            let r = u.sqrt();
            (r, 0.5 / r, -0.25 / (r * u))
        }),
    }
}

fn domain_error(node: &Node, input: f64, expr: &Expr) -> ExprError {
    ExprError::Domain {
        node: expr.with_root(node.clone()).to_string(),
        input,
    }
}

fn eval_node<T: Scalar>(node: &Node, x: &[f64], expr: &Expr) -> Result<T, ExprError> {
    let n = x.len();
    let out = match node {
        Node::Const(c) => T::constant(*c, n),
        Node::Var(i) => T::variable(*i, x[*i], n),
        Node::Neg(a) => eval_node::<T>(a, x, expr)?.neg(),
        Node::Add(a, b) => eval_node::<T>(a, x, expr)?.add(&eval_node(b, x, expr)?),
        Node::Sub(a, b) => eval_node::<T>(a, x, expr)?.sub(&eval_node(b, x, expr)?),
        Node::Mul(a, b) => eval_node::<T>(a, x, expr)?.mul(&eval_node(b, x, expr)?),
        Node::Div(a, b) => {
            let den: T = eval_node(b, x, expr)?;
            if den.value() == 0.0 {
                return Err(domain_error(node, 0.0, expr));
            }
            eval_node::<T>(a, x, expr)?.div(&den)
        }
        Node::Pow(a, c) => {
            let base: T = eval_node(a, x, expr)?;
            let u = base.value();
            let (f, df, d2f) =
                power_derivatives(u, *c).ok_or_else(|| domain_error(node, u, expr))?;
            base.compose(f, df, d2f)
        }
        Node::Call(func, a) => {
            let arg: T = eval_node(a, x, expr)?;
            let u = arg.value();
            let (f, df, d2f) =
                call_derivatives(*func, u).ok_or_else(|| domain_error(node, u, expr))?;
            arg.compose(f, df, d2f)
        }
    };
    if !out.value().is_finite() {
        return Err(domain_error(node, out.value(), expr));
    }
    Ok(out)
}

/// Writes a fully parenthesised form that [`parse`] reads back to the same
/// tree shape. Constants use the shortest round-trip decimal.
struct Printer<'a> {
    node: &'a Node,
    vars: &'a [String],
}

impl fmt::Display for Printer<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sub = |node| Printer {
            node,
            vars: self.vars,
        };
        match self.node {
            Node::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => {
                write!(f, "(-{:?})", -c)
            }
            Node::Const(c) => write!(f, "{c:?}"),
            Node::Var(i) => f.write_str(&self.vars[*i]),
            Node::Neg(a) => write!(f, "(-{})", sub(a)),
            Node::Add(a, b) => write!(f, "({} + {})", sub(a), sub(b)),
            Node::Sub(a, b) => write!(f, "({} - {})", sub(a), sub(b)),
            Node::Mul(a, b) => write!(f, "({} * {})", sub(a), sub(b)),
            Node::Div(a, b) => write!(f, "({} / {})", sub(a), sub(b)),
            Node::Pow(a, c) if *c < 0.0 => write!(f, "({}^(-{:?}))", sub(a), -c),
            Node::Pow(a, c) => write!(f, "({}^{:?})", sub(a), c),
            Node::Call(func, a) => write!(f, "{}({})", func.name(), sub(a)),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Printer {
            node: &self.root,
            vars: &self.vars,
        }
        .fmt(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qp(src: &str) -> Expr {
        parse(src, &["q", "p"]).unwrap()
    }

    #[test]
    fn harmonic_hamiltonian_jet() {
        let h = qp("p^2/2 + q^2/2");
        let j = h.eval_jet2(&[1.0, 2.0]).unwrap();
        assert_eq!(j.value(), 2.5);
        assert_eq!(j.grad(), &[1.0, 2.0]);
        assert_eq!(j.hessian(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn harmonic_hamiltonian_with_mass_parses() {
        let h = qp("p^2/(2*1) + 0.5*q^2");
        assert_eq!(h.eval(&[1.0, 2.0]).unwrap(), 2.5);
    }

    #[test]
    fn mixed_partial() {
        let j = qp("q*p").eval_jet2(&[1.0, 1.0]).unwrap();
        assert_eq!(j.hess(0, 1), 1.0);
        assert_eq!(j.hess(1, 0), 1.0);
    }

    #[test]
    fn log_at_zero_is_domain_error() {
        let err = qp("ln(q)").eval_jet2(&[0.0, 1.0]).unwrap_err();
        assert!(matches!(err, ExprError::Domain { input, .. } if input == 0.0));
        assert!(qp("ln(q)").eval(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn negative_power_value() {
        let j = qp("(p+4*q)^(-5)").eval_jet2(&[1.0, 1.0]).unwrap();
        assert!((j.value() - 3.2e-4).abs() < 1e-18);
    }

    #[test]
    fn fractional_power_of_negative_base_rejected() {
        assert!(qp("q^0.5").eval(&[-1.0, 0.0]).is_err());
        assert_eq!(qp("q^3").eval(&[-2.0, 0.0]).unwrap(), -8.0);
        assert!(qp("q^(-1)").eval(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn division_by_zero_rejected() {
        assert!(qp("1/q").eval(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn unused_variable_has_zero_derivatives() {
        let j = qp("exp(q)*sin(q)").eval_jet2(&[0.3, 7.0]).unwrap();
        assert_eq!(j.grad()[1], 0.0);
        assert_eq!(j.hess(1, 0), 0.0);
        assert_eq!(j.hess(1, 1), 0.0);
    }

    #[test]
    fn rebind_by_name() {
        let e = parse("q1*p1 + s", &["q1", "p1", "s"]).unwrap();
        let target = Variables::new(&["s", "q1", "p1"]).unwrap();
        let r = e.rebind(&target).unwrap();
        assert_eq!(r.eval(&[3.0, 1.0, 2.0]).unwrap(), 5.0);

        let symplectic = Variables::new(&["q1", "p1"]).unwrap();
        assert_eq!(
            e.rebind(&symplectic).unwrap_err(),
            ExprError::UnknownVariable("s".into())
        );
    }

    #[test]
    fn builders_match_parsed() {
        let vars = Variables::new(&["q", "p"]).unwrap();
        let q = Expr::variable(0, &vars);
        let p = Expr::variable(1, &vars);
        let four = Expr::constant(4.0, &vars);
        let built = (&p + &(&four * &q)).powf(-5.0);
        let parsed = qp("(p+4*q)^(-5)");
        let x = [0.7, 1.9];
        assert_eq!(built.eval(&x).unwrap(), parsed.eval(&x).unwrap());
    }

    #[test]
    fn display_round_trip() {
        let e = qp("-q^2 + 3.5e-7*exp(p)/(1-q) - (p+q)^(-1.25)");
        let again = qp(&e.to_string());
        assert_eq!(e, again);
    }

    #[test]
    fn referenced_names_in_order() {
        let e = parse("s + q2", &["q1", "q2", "p1", "p2", "s"]).unwrap();
        assert_eq!(e.referenced_names(), vec!["q2", "s"]);
        assert!(e.references(4));
        assert!(!e.references(0));
    }
}
