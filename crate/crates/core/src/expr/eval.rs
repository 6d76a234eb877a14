use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{Expr, ExprError, Func, Node, Symbol};

/// Binding of identifiers to real values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EvalPoint(BTreeMap<String, f64>);

impl EvalPoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.set(name, value);
        self
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.0.insert(Symbol::new(name).name().to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(Symbol::new(name).name()).copied()
    }

    pub fn extend(&mut self, other: &EvalPoint) {
        for (k, v) in &other.0 {
            self.0.insert(k.clone(), *v);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn as_map(&self) -> &BTreeMap<String, f64> {
        &self.0
    }
}

impl From<BTreeMap<String, f64>> for EvalPoint {
    fn from(m: BTreeMap<String, f64>) -> Self {
        let mut p = EvalPoint::new();
        for (k, v) in m {
            p.set(&k, v);
        }
        p
    }
}

impl<const N: usize> From<[(&str, f64); N]> for EvalPoint {
    fn from(pairs: [(&str, f64); N]) -> Self {
        let mut p = EvalPoint::new();
        for (k, v) in pairs {
            p.set(k, v);
        }
        p
    }
}

pub(crate) fn apply_pow(x: f64, y: f64) -> Result<f64, ExprError> {
    if y.fract() == 0.0 && y.abs() <= i32::MAX as f64 {
        if x == 0.0 && y < 0.0 {
            return Err(ExprError::DivisionByZero);
        }
        return Ok(x.powi(y as i32));
    }
    if x > 0.0 {
        Ok(x.powf(y))
    } else {
        Err(ExprError::Domain(format!(
            "non-positive base {x} with non-integer exponent {y}"
        )))
    }
}

pub(crate) fn apply_call(f: Func, x: f64) -> Result<f64, ExprError> {
    Ok(match f {
        Func::Exp => x.exp(),
        Func::Ln => {
            if x <= 0.0 {
                return Err(ExprError::Domain(format!("ln of non-positive {x}")));
            }
            x.ln()
        }
        Func::Sqrt => {
            if x <= 0.0 {
                return Err(ExprError::Domain(format!("sqrt of non-positive {x}")));
            }
            x.sqrt()
        }
        Func::Sin => x.sin(),
        Func::Cos => x.cos(),
        Func::Tan => x.tan(),
        Func::Sinh => x.sinh(),
        Func::Cosh => x.cosh(),
        Func::Tanh => x.tanh(),
    })
}

pub(super) fn evaluate(e: &Expr, p: &EvalPoint) -> Result<f64, ExprError> {
    CompiledExpr::new(e).eval(p)
}

#[derive(Debug, Clone)]
enum Op {
    Const(f64),
    Load(usize),
    Add(Vec<usize>),
    Mul(Vec<usize>),
    Sub(usize, usize),
    Div(usize, usize),
    Pow(usize, usize),
    Call(Func, usize),
}

/// A flattened evaluation tape. Shared subtrees are evaluated once.
#[derive(Debug, Clone)]
pub struct CompiledExpr {
    ops: Vec<Op>,
    symbols: Vec<Symbol>,
    roots: Vec<usize>,
}

impl CompiledExpr {
    pub fn new(e: &Expr) -> Self {
        Self::new_multi(std::slice::from_ref(e))
    }

    /// One tape for several expressions; subtrees shared between them are
    /// evaluated once.
    pub fn new_multi(exprs: &[Expr]) -> Self {
        assert!(!exprs.is_empty(), "nothing to compile");
        let mut c = Compiler::default();
        let roots = exprs.iter().map(|e| c.emit(e)).collect();
        CompiledExpr {
            ops: c.ops,
            symbols: c.symbols,
            roots,
        }
    }

    /// Slot values read from a point, in [`CompiledExpr::symbols`] order.
    pub fn bind(&self, p: &EvalPoint) -> Result<Vec<f64>, ExprError> {
        self.symbols
            .iter()
            .map(|s| {
                p.get(s.name())
                    .ok_or_else(|| ExprError::Unbound(s.name().to_string()))
            })
            .collect()
    }

    /// Symbols in slot order, as expected by [`CompiledExpr::eval_slots`].
    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    /// Value of the first compiled expression.
    pub fn eval(&self, p: &EvalPoint) -> Result<f64, ExprError> {
        Ok(self.eval_many(p)?[0])
    }

    /// Values of all compiled expressions.
    pub fn eval_many(&self, p: &EvalPoint) -> Result<Vec<f64>, ExprError> {
        self.eval_slots(&self.bind(p)?)
    }

    pub fn eval_slots(&self, slots: &[f64]) -> Result<Vec<f64>, ExprError> {
        let mut vals = Vec::with_capacity(self.ops.len());
        self.run(slots, &mut vals)?;
        Ok(self.roots.iter().map(|&r| vals[r]).collect())
    }

    /// Value of the first root, reusing `scratch` for intermediate values.
    pub fn eval_slots_with(&self, slots: &[f64], scratch: &mut Vec<f64>) -> Result<f64, ExprError> {
        self.run(slots, scratch)?;
        Ok(scratch[self.roots[0]])
    }

    fn run(&self, slots: &[f64], vals: &mut Vec<f64>) -> Result<(), ExprError> {
        vals.clear();
        for op in &self.ops {
            let v = match op {
                Op::Const(c) => *c,
                Op::Load(i) => slots[*i],
                Op::Add(ix) => ix.iter().map(|&i| vals[i]).sum(),
                Op::Mul(ix) => ix.iter().map(|&i| vals[i]).product(),
                Op::Sub(a, b) => vals[*a] - vals[*b],
                Op::Div(a, b) => {
                    if vals[*b] == 0.0 {
                        return Err(ExprError::DivisionByZero);
                    }
                    vals[*a] / vals[*b]
                }
                Op::Pow(a, b) => apply_pow(vals[*a], vals[*b])?,
                Op::Call(f, a) => apply_call(*f, vals[*a])?,
            };
            if !v.is_finite() {
                return Err(ExprError::Domain("non-finite intermediate value".into()));
            }
            vals.push(v);
        }
        Ok(())
    }
}

#[derive(Default)]
struct Compiler {
    ops: Vec<Op>,
    symbols: Vec<Symbol>,
    memo: HashMap<usize, usize>,
    slot_of: HashMap<Symbol, usize>,
}

impl Compiler {
    fn emit(&mut self, e: &Expr) -> usize {
        if let Some(&i) = self.memo.get(&e.ptr_id()) {
            return i;
        }
        let op = match e.node() {
            Node::Num(v) => Op::Const(*v),
            Node::Sym(s) => {
                let next = self.symbols.len();
                let slot = *self.slot_of.entry(s.clone()).or_insert(next);
                if slot == next {
                    self.symbols.push(s.clone());
                }
                Op::Load(slot)
            }
            Node::Add(v) => Op::Add(v.iter().map(|c| self.emit(c)).collect()),
            Node::Mul(v) => Op::Mul(v.iter().map(|c| self.emit(c)).collect()),
            Node::Sub(a, b) => {
                let (a, b) = (self.emit(a), self.emit(b));
                Op::Sub(a, b)
            }
            Node::Div(a, b) => {
                let (a, b) = (self.emit(a), self.emit(b));
                Op::Div(a, b)
            }
            Node::Pow(a, b) => {
                let (a, b) = (self.emit(a), self.emit(b));
                Op::Pow(a, b)
            }
            Node::Call(f, a) => {
                let a = self.emit(a);
                Op::Call(*f, a)
            }
        };
        self.ops.push(op);
        let idx = self.ops.len() - 1;
        self.memo.insert(e.ptr_id(), idx);
        idx
    }
}
