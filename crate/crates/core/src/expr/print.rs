use std::fmt;

use super::{Expr, Node};

// Binding strength used to decide parenthesization.
fn prec(e: &Expr) -> u8 {
    match e.node() {
        Node::Add(_) | Node::Sub(..) => 1,
        Node::Mul(_) | Node::Div(..) => 2,
        Node::Pow(..) => 3,
        Node::Num(_) | Node::Sym(_) | Node::Call(..) => 4,
    }
}

fn write_num(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    if v < 0.0 {
        write!(f, "(-{})", -v)
    } else {
        write!(f, "{v}")
    }
}

fn wrap(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Num(v) => write_num(f, *v),
            Node::Sym(s) => write!(f, "{s}"),
            Node::Add(v) => {
                if v.is_empty() {
                    return f.write_str("0");
                }
                for (i, c) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" + ")?;
                    }
                    wrap(f, c, i > 0 && prec(c) <= 1)?;
                }
                Ok(())
            }
            Node::Sub(a, b) => {
                wrap(f, a, prec(a) < 1)?;
                f.write_str(" - ")?;
                wrap(f, b, prec(b) <= 1)
            }
            Node::Mul(v) => {
                if v.is_empty() {
                    return f.write_str("1");
                }
                for (i, c) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str("*")?;
                    }
                    let parens = if i == 0 { prec(c) <= 1 } else { prec(c) <= 2 };
                    wrap(f, c, parens)?;
                }
                Ok(())
            }
            Node::Div(a, b) => {
                wrap(f, a, prec(a) <= 1)?;
                f.write_str("/")?;
                wrap(f, b, prec(b) <= 2)
            }
            Node::Pow(a, b) => {
                wrap(f, a, prec(a) <= 3)?;
                f.write_str("^")?;
                wrap(f, b, prec(b) <= 2)
            }
            Node::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}
