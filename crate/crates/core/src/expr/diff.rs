use std::collections::HashMap;

use super::simplify::{add, div, mul, neg, pow, sub};
use super::{Expr, Func, Node, Symbol};

pub(super) fn differentiate(e: &Expr, var: &Symbol) -> Expr {
    let mut d = Diff {
        var,
        memo: HashMap::new(),
        free: HashMap::new(),
    };
    // the constructors simplify as they go; one final pass settles the rest
    super::simplify::simplify(&d.rec(e))
}

struct Diff<'a> {
    var: &'a Symbol,
    memo: HashMap<usize, Expr>,
    free: HashMap<usize, bool>,
}

impl Diff<'_> {
    fn depends(&mut self, e: &Expr) -> bool {
        if let Some(&b) = self.free.get(&e.ptr_id()) {
            return b;
        }
        let b = match e.node() {
            Node::Num(_) => false,
            Node::Sym(s) => s == self.var,
            Node::Add(v) | Node::Mul(v) => v.iter().any(|c| self.depends(c)),
            Node::Sub(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                self.depends(a) || self.depends(b)
            }
            Node::Call(_, a) => self.depends(a),
        };
        self.free.insert(e.ptr_id(), b);
        b
    }

    fn rec(&mut self, e: &Expr) -> Expr {
        if !self.depends(e) {
            return Expr::zero();
        }
        if let Some(r) = self.memo.get(&e.ptr_id()) {
            return r.clone();
        }
        let out = match e.node() {
            Node::Num(_) => Expr::zero(),
            Node::Sym(s) => {
                if s == self.var {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Add(v) => add(v.iter().map(|c| self.rec(c)).collect()),
            Node::Sub(a, b) => {
                let (da, db) = (self.rec(a), self.rec(b));
                sub(da, db)
            }
            Node::Mul(v) => {
                let mut terms = Vec::new();
                for i in 0..v.len() {
                    let di = self.rec(&v[i]);
                    if di.is_zero() {
                        continue;
                    }
                    let mut factors: Vec<Expr> = Vec::with_capacity(v.len());
                    for (j, c) in v.iter().enumerate() {
                        factors.push(if i == j { di.clone() } else { c.clone() });
                    }
                    terms.push(mul(factors));
                }
                add(terms)
            }
            Node::Div(a, b) => {
                let (da, db) = (self.rec(a), self.rec(b));
                if db.is_zero() {
                    div(da, b.clone())
                } else {
                    let num = sub(
                        mul(vec![da, b.clone()]),
                        mul(vec![a.clone(), db]),
                    );
                    div(num, pow(b.clone(), Expr::num(2.0)))
                }
            }
            Node::Pow(base, exp) => {
                let db = self.rec(base);
                let de = self.rec(exp);
                if de.is_zero() {
                    // e * b^(e-1) * b'
                    let lowered = pow(base.clone(), sub(exp.clone(), Expr::one()));
                    mul(vec![exp.clone(), lowered, db])
                } else if db.is_zero() {
                    // b^e * ln(b) * e'
                    mul(vec![e.clone(), Expr::call(Func::Ln, base.clone()), de])
                } else {
                    let inner = add(vec![
                        mul(vec![de, Expr::call(Func::Ln, base.clone())]),
                        div(mul(vec![exp.clone(), db]), base.clone()),
                    ]);
                    mul(vec![e.clone(), inner])
                }
            }
            Node::Call(f, a) => {
                let da = self.rec(a);
                let a = a.clone();
                let outer = match f {
                    Func::Exp => e.clone(),
                    Func::Ln => div(Expr::one(), a),
                    Func::Sin => Expr::call(Func::Cos, a),
                    Func::Cos => neg(Expr::call(Func::Sin, a)),
                    Func::Tan => div(
                        Expr::one(),
                        pow(Expr::call(Func::Cos, a), Expr::num(2.0)),
                    ),
                    Func::Sinh => Expr::call(Func::Cosh, a),
                    Func::Cosh => Expr::call(Func::Sinh, a),
                    Func::Tanh => sub(Expr::one(), pow(e.clone(), Expr::num(2.0))),
                    Func::Sqrt => div(Expr::one(), mul(vec![Expr::num(2.0), e.clone()])),
                };
                mul(vec![da, outer])
            }
        };
        self.memo.insert(e.ptr_id(), out.clone());
        out
    }
}
