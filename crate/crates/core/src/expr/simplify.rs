use std::collections::HashMap;

use super::eval::{apply_call, apply_pow};
use super::{Expr, Node};

pub(super) fn simplify(e: &Expr) -> Expr {
    let mut memo = HashMap::new();
    rec(e, &mut memo)
}

fn rec(e: &Expr, memo: &mut HashMap<usize, Expr>) -> Expr {
    if let Some(r) = memo.get(&e.ptr_id()) {
        return r.clone();
    }
    let out = match e.node() {
        Node::Num(_) | Node::Sym(_) => e.clone(),
        Node::Add(v) => add(v.iter().map(|c| rec(c, memo)).collect()),
        Node::Mul(v) => mul(v.iter().map(|c| rec(c, memo)).collect()),
        Node::Sub(a, b) => sub(rec(a, memo), rec(b, memo)),
        Node::Div(a, b) => div(rec(a, memo), rec(b, memo)),
        Node::Pow(a, b) => pow(rec(a, memo), rec(b, memo)),
        Node::Call(f, a) => {
            let a = rec(a, memo);
            match a.as_num().map(|v| apply_call(*f, v)) {
                Some(Ok(v)) if v.is_finite() => Expr::num(v),
                _ => Expr::call(*f, a),
            }
        }
    };
    memo.insert(e.ptr_id(), out.clone());
    out
}

// The constructors below assume already-simplified children.

pub(super) fn add(children: Vec<Expr>) -> Expr {
    let mut terms = Vec::with_capacity(children.len());
    let mut constant = 0.0;
    let push = |c: Expr, terms: &mut Vec<Expr>, constant: &mut f64| match c.node() {
        Node::Num(v) => *constant += v,
        _ => terms.push(c),
    };
    for c in children {
        if let Node::Add(inner) = c.node() {
            for g in inner {
                push(g.clone(), &mut terms, &mut constant);
            }
        } else {
            push(c, &mut terms, &mut constant);
        }
    }
    if constant != 0.0 {
        terms.push(Expr::num(constant));
    }
    match terms.len() {
        0 => Expr::zero(),
        1 => terms.pop().expect("one term"),
        _ => Expr::add(terms),
    }
}

pub(super) fn mul(children: Vec<Expr>) -> Expr {
    let mut factors = Vec::with_capacity(children.len());
    let mut constant = 1.0;
    for c in children {
        let parts: Vec<Expr> = match c.node() {
            Node::Mul(inner) => inner.clone(),
            _ => vec![c],
        };
        for g in parts {
            match g.node() {
                Node::Num(v) => constant *= v,
                _ => factors.push(g),
            }
        }
    }
    if constant == 0.0 {
        return Expr::zero();
    }
    if constant != 1.0 || factors.is_empty() {
        factors.insert(0, Expr::num(constant));
    }
    match factors.len() {
        1 => factors.pop().expect("one factor"),
        _ => Expr::mul(factors),
    }
}

pub(super) fn neg(e: Expr) -> Expr {
    mul(vec![Expr::num(-1.0), e])
}

pub(super) fn sub(a: Expr, b: Expr) -> Expr {
    if let (Some(x), Some(y)) = (a.as_num(), b.as_num()) {
        return Expr::num(x - y);
    }
    if b.is_zero() {
        return a;
    }
    if a == b {
        return Expr::zero();
    }
    if a.is_zero() {
        return match b.node() {
            Node::Sub(z, inner) if z.is_zero() => inner.clone(),
            Node::Mul(v) if v[0].as_num().is_some() => neg(b),
            _ => Expr::sub(a, b),
        };
    }
    Expr::sub(a, b)
}

pub(super) fn div(a: Expr, b: Expr) -> Expr {
    if let (Some(x), Some(y)) = (a.as_num(), b.as_num()) {
        if y != 0.0 {
            return Expr::num(x / y);
        }
    }
    if b.is_one() {
        return a;
    }
    if a.is_zero() {
        return Expr::zero();
    }
    Expr::div(a, b)
}

pub(super) fn pow(a: Expr, b: Expr) -> Expr {
    if let (Some(x), Some(y)) = (a.as_num(), b.as_num()) {
        if let Ok(v) = apply_pow(x, y) {
            if v.is_finite() {
                return Expr::num(v);
            }
        }
    }
    if b.is_one() {
        return a;
    }
    if b.is_zero() || a.is_one() {
        return Expr::one();
    }
    if a.is_zero() && b.as_num().is_some_and(|y| y > 0.0) {
        return Expr::zero();
    }
    Expr::pow(a, b)
}
