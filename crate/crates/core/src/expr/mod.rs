//! Immutable expression trees over jet variables, independent variables and
//! named parameters.
//!
//! Nodes are reference counted, so cloning an [`Expr`] is cheap and shared
//! subtrees stay shared through differentiation and substitution. Every
//! operation here is a pure function of its inputs.

pub mod corpus;
mod diff;
mod eval;
mod parse;
mod print;
mod simplify;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

pub use eval::{CompiledExpr, EvalPoint};
pub use parse::parse;

/// Highest jet index the symbol space admits (`u0` … `u9`).
pub const MAX_JET: usize = 9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("unbound symbol `{0}`")]
    Unbound(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("division by zero")]
    DivisionByZero,
}

/// What an identifier denotes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SymbolKind {
    /// `t`, `x` or `y`.
    Independent,
    /// `u_k = d^k u / dx^k`.
    Jet(usize),
    Parameter,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol(Arc<str>);

impl Symbol {
    pub fn new(name: &str) -> Self {
        if name == "u" {
            return Symbol(Arc::from("u0"));
        }
        Symbol(Arc::from(name))
    }

    pub fn jet(k: usize) -> Self {
        assert!(k <= MAX_JET, "jet index {k} beyond u{MAX_JET}");
        Symbol(Arc::from(format!("u{k}").as_str()))
    }

    pub fn name(&self) -> &str {
        &self.0
    }

    pub fn kind(&self) -> SymbolKind {
        match &*self.0 {
            "t" | "x" | "y" => SymbolKind::Independent,
            s => match jet_index(s) {
                Some(k) => SymbolKind::Jet(k),
                None => SymbolKind::Parameter,
            },
        }
    }

    pub fn jet_index(&self) -> Option<usize> {
        match self.kind() {
            SymbolKind::Jet(k) => Some(k),
            _ => None,
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn jet_index(s: &str) -> Option<usize> {
    let digits = s.strip_prefix('u')?;
    if digits.len() != 1 {
        return None;
    }
    let k = digits.chars().next()?.to_digit(10)? as usize;
    Some(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Ln,
    Sin,
    Cos,
    Tan,
    Sinh,
    Cosh,
    Tanh,
    Sqrt,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "tanh" => Func::Tanh,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
            Func::Sqrt => "sqrt",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Sym(Symbol),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Sub(Expr, Expr),
    Div(Expr, Expr),
    Pow(Expr, Expr),
    Call(Func, Expr),
}

/// An immutable, cheaply clonable expression tree.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || *self.0 == *other.0
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

impl Expr {
    pub fn from_node(node: Node) -> Self {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub(crate) fn ptr_id(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn num(v: f64) -> Self {
        Expr::from_node(Node::Num(v))
    }

    pub fn zero() -> Self {
        Expr::num(0.0)
    }

    pub fn one() -> Self {
        Expr::num(1.0)
    }

    pub fn sym(name: &str) -> Self {
        Expr::from_node(Node::Sym(Symbol::new(name)))
    }

    pub fn jet(k: usize) -> Self {
        Expr::from_node(Node::Sym(Symbol::jet(k)))
    }

    pub fn add(terms: Vec<Expr>) -> Self {
        Expr::from_node(Node::Add(terms))
    }

    pub fn mul(factors: Vec<Expr>) -> Self {
        Expr::from_node(Node::Mul(factors))
    }

    pub fn sub(a: Expr, b: Expr) -> Self {
        Expr::from_node(Node::Sub(a, b))
    }

    pub fn div(a: Expr, b: Expr) -> Self {
        Expr::from_node(Node::Div(a, b))
    }

    pub fn pow(base: Expr, exp: Expr) -> Self {
        Expr::from_node(Node::Pow(base, exp))
    }

    pub fn call(f: Func, arg: Expr) -> Self {
        Expr::from_node(Node::Call(f, arg))
    }

    pub fn neg(e: Expr) -> Self {
        Expr::sub(Expr::zero(), e)
    }

    pub fn as_num(&self) -> Option<f64> {
        match self.node() {
            Node::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_num() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.as_num() == Some(1.0)
    }

    /// Every identifier occurring in the tree.
    pub fn free_symbols(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let Node::Sym(s) = e.node() {
                out.insert(s.clone());
            }
        });
        out
    }

    pub fn contains(&self, name: &str) -> bool {
        let target = Symbol::new(name);
        let mut found = false;
        self.visit(&mut |e| {
            if let Node::Sym(s) = e.node() {
                if *s == target {
                    found = true;
                }
            }
        });
        found
    }

    /// Highest `k` such that `u_k` is free in the tree.
    pub fn max_jet_index(&self) -> Option<usize> {
        self.free_symbols().iter().filter_map(Symbol::jet_index).max()
    }

    /// Parameters: free symbols that are neither independent nor jet variables.
    pub fn parameters(&self) -> BTreeSet<Symbol> {
        self.free_symbols()
            .into_iter()
            .filter(|s| s.kind() == SymbolKind::Parameter)
            .collect()
    }

    fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self.node() {
            Node::Num(_) | Node::Sym(_) => {}
            Node::Add(v) | Node::Mul(v) => v.iter().for_each(|c| c.visit(f)),
            Node::Sub(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Node::Call(_, a) => a.visit(f),
        }
    }

    /// Number of nodes, counting shared subtrees once per occurrence.
    pub fn size(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_| n += 1);
        n
    }

    /// Top-level additive terms with their signs (`a - b + c` → `[a, -b, c]`).
    pub fn additive_terms(&self) -> Vec<(f64, Expr)> {
        fn go(e: &Expr, sign: f64, out: &mut Vec<(f64, Expr)>) {
            match e.node() {
                Node::Add(v) => v.iter().for_each(|c| go(c, sign, out)),
                Node::Sub(a, b) => {
                    go(a, sign, out);
                    go(b, -sign, out);
                }
                _ => out.push((sign, e.clone())),
            }
        }
        let mut out = Vec::new();
        go(self, 1.0, &mut out);
        out
    }

    pub fn differentiate(&self, var: &str) -> Expr {
        differentiate(self, var)
    }

    pub fn substitute(&self, bindings: &BTreeMap<String, Expr>) -> Expr {
        substitute(self, bindings)
    }

    pub fn simplify(&self) -> Expr {
        simplify_basic(self)
    }

    pub fn evaluate(&self, point: &EvalPoint) -> Result<f64, ExprError> {
        evaluate(self, point)
    }
}

impl std::str::FromStr for Expr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

/// Exact structural partial derivative, simplified with [`simplify_basic`].
/// Jet variables are independent coordinates.
pub fn differentiate(e: &Expr, var: &str) -> Expr {
    diff::differentiate(e, &Symbol::new(var))
}

pub fn evaluate(e: &Expr, point: &EvalPoint) -> Result<f64, ExprError> {
    eval::evaluate(e, point)
}

/// Simultaneous, non-recursive substitution of symbols.
pub fn substitute(e: &Expr, bindings: &BTreeMap<String, Expr>) -> Expr {
    if bindings.is_empty() {
        return e.clone();
    }
    let normalized: BTreeMap<Symbol, Expr> = bindings
        .iter()
        .map(|(k, v)| (Symbol::new(k), v.clone()))
        .collect();
    let mut memo = std::collections::HashMap::new();
    subst_rec(e, &normalized, &mut memo)
}

fn subst_rec(
    e: &Expr,
    b: &BTreeMap<Symbol, Expr>,
    memo: &mut std::collections::HashMap<usize, Expr>,
) -> Expr {
    if let Some(r) = memo.get(&e.ptr_id()) {
        return r.clone();
    }
    let out = match e.node() {
        Node::Num(_) => e.clone(),
        Node::Sym(s) => b.get(s).cloned().unwrap_or_else(|| e.clone()),
        Node::Add(v) => Expr::add(v.iter().map(|c| subst_rec(c, b, memo)).collect()),
        Node::Mul(v) => Expr::mul(v.iter().map(|c| subst_rec(c, b, memo)).collect()),
        Node::Sub(x, y) => Expr::sub(subst_rec(x, b, memo), subst_rec(y, b, memo)),
        Node::Div(x, y) => Expr::div(subst_rec(x, b, memo), subst_rec(y, b, memo)),
        Node::Pow(x, y) => Expr::pow(subst_rec(x, b, memo), subst_rec(y, b, memo)),
        Node::Call(f, x) => Expr::call(*f, subst_rec(x, b, memo)),
    };
    memo.insert(e.ptr_id(), out.clone());
    out
}

/// Constant folding, 0/1 identity elimination and flattening of nested sums
/// and products. Never changes the value at a point where `e` evaluates.
pub fn simplify_basic(e: &Expr) -> Expr {
    simplify::simplify(e)
}

/// Substitute numeric values for parameters and simplify.
pub fn bind_numbers(e: &Expr, values: &BTreeMap<String, f64>) -> Expr {
    let b: BTreeMap<String, Expr> = values
        .iter()
        .map(|(k, v)| (k.clone(), Expr::num(*v)))
        .collect();
    simplify_basic(&substitute(e, &b))
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::add(vec![self, rhs])
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::sub(self, rhs)
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::mul(vec![self, rhs])
    }
}

impl std::ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::div(self, rhs)
    }
}

#[cfg(test)]
mod tests;
