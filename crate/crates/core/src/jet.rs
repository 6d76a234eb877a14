//! Total derivatives `D_x`, `D_t` on the jet space of an evolution equation
//! `u_t = F(t, x, u, u_1, ..., u_n)`.
//!
//! `D_t` is taken on solutions: every `u_k` evolves by `D_x^k F`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::expr::{self, Expr, ExprError, SymbolKind, MAX_JET};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum JetError {
    #[error("jet cap exceeded: result needs u{needed}, cap is u{cap}")]
    CapExceeded { needed: usize, cap: usize },
    #[error("invalid evolution equation: {0}")]
    InvalidEquation(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvolutionEquation {
    #[serde(serialize_with = "crate::util::ser_display")]
    rhs: Expr,
    order: usize,
    parameters: Vec<String>,
}

impl EvolutionEquation {
    pub fn new(rhs: Expr) -> Result<Self, JetError> {
        let order = rhs.max_jet_index().unwrap_or(0);
        if order == 0 {
            return Err(JetError::InvalidEquation(format!(
                "right-hand side `{rhs}` has no x-derivative"
            )));
        }
        let parameters: Vec<String> = rhs
            .parameters()
            .into_iter()
            .map(|s| s.name().to_string())
            .collect();
        if let Some(bad) = parameters
            .iter()
            .find(|p| matches!(p.as_str(), "ut" | "u_t"))
        {
            return Err(JetError::InvalidEquation(format!(
                "right-hand side contains time derivative symbol `{bad}`"
            )));
        }
        Ok(EvolutionEquation {
            rhs,
            order,
            parameters,
        })
    }

    pub fn parse(rhs: &str) -> Result<Self, JetError> {
        Self::new(expr::parse(rhs)?)
    }

    /// `u_t = (u^q u_x)_x + f(u)`, written out as
    /// `u^q u_2 + q u^(q-1) u_1^2 + f`.
    pub fn diffusion(q: f64, f: &Expr) -> Result<Self, JetError> {
        let rhs = Expr::add(vec![
            Expr::mul(vec![Expr::pow(Expr::jet(0), Expr::num(q)), Expr::jet(2)]),
            Expr::mul(vec![
                Expr::num(q),
                Expr::pow(Expr::jet(0), Expr::num(q - 1.0)),
                Expr::pow(Expr::jet(1), Expr::num(2.0)),
            ]),
            f.clone(),
        ]);
        Self::new(expr::simplify_basic(&rhs))
    }

    pub fn rhs(&self) -> &Expr {
        &self.rhs
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn parameters(&self) -> &[String] {
        &self.parameters
    }

    pub fn depends_on_x(&self) -> bool {
        self.rhs.contains("x")
    }

    /// Replace parameters by numbers.
    pub fn bind(&self, values: &BTreeMap<String, f64>) -> Result<Self, JetError> {
        Self::new(expr::bind_numbers(&self.rhs, values))
    }
}

fn check_jets(e: &Expr) -> Result<Option<usize>, JetError> {
    Ok(e.max_jet_index())
}

/// `D_x e = e_x + sum_{k < cap} u_{k+1} e_{u_k}`. The result may contain
/// jets up to `u_cap`.
pub fn total_x_derivative(e: &Expr, cap: usize) -> Result<Expr, JetError> {
    if cap > MAX_JET {
        return Err(JetError::CapExceeded {
            needed: cap,
            cap: MAX_JET,
        });
    }
    if let Some(p) = check_jets(e)? {
        if p >= cap {
            return Err(JetError::CapExceeded {
                needed: p + 1,
                cap,
            });
        }
    }
    let mut terms = vec![expr::differentiate(e, "x")];
    for s in e.free_symbols() {
        if let SymbolKind::Jet(k) = s.kind() {
            let partial = expr::differentiate(e, s.name());
            terms.push(Expr::mul(vec![partial, Expr::jet(k + 1)]));
        }
    }
    Ok(expr::simplify_basic(&Expr::add(terms)))
}

/// `D_x` with the full jet cap.
pub fn d_x(e: &Expr) -> Result<Expr, JetError> {
    total_x_derivative(e, MAX_JET)
}

pub fn d_x_n(e: &Expr, n: usize) -> Result<Expr, JetError> {
    let mut out = e.clone();
    for _ in 0..n {
        out = d_x(&out)?;
    }
    Ok(out)
}

/// `D_x^k F`: the evolution of `u_k` on solutions.
pub fn prolong_rhs(eq: &EvolutionEquation, k: usize) -> Result<Expr, JetError> {
    if eq.order + k > MAX_JET {
        return Err(JetError::CapExceeded {
            needed: eq.order + k,
            cap: MAX_JET,
        });
    }
    d_x_n(&eq.rhs, k)
}

/// `D_t e = e_t + sum_k (D_x^k F) e_{u_k}` restricted to solutions of `eq`.
pub fn total_t_derivative(e: &Expr, eq: &EvolutionEquation) -> Result<Expr, JetError> {
    let top = e.max_jet_index();
    if let Some(p) = top {
        if p + eq.order > MAX_JET {
            return Err(JetError::CapExceeded {
                needed: p + eq.order,
                cap: MAX_JET,
            });
        }
    }
    let mut terms = vec![expr::differentiate(e, "t")];
    if let Some(p) = top {
        let mut prolonged = eq.rhs.clone();
        for k in 0..=p {
            if k > 0 {
                prolonged = d_x(&prolonged)?;
            }
            let partial = expr::differentiate(e, &format!("u{k}"));
            if !partial.is_zero() {
                terms.push(Expr::mul(vec![prolonged.clone(), partial]));
            }
        }
    }
    Ok(expr::simplify_basic(&Expr::add(terms)))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::expr::{parse, EvalPoint};
    use crate::sampling::JetDomain;

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    fn porous(q: f64) -> EvolutionEquation {
        EvolutionEquation::diffusion(q, &Expr::zero()).unwrap()
    }

    #[test]
    fn x_derivative_examples() {
        assert_eq!(d_x(&p("u1")).unwrap().to_string(), "u2");
        assert_eq!(d_x(&p("u0^q")).unwrap().to_string(), "q*u0^(q - 1)*u1");
        assert_eq!(d_x(&p("x*u1")).unwrap().to_string(), "u1 + x*u2");
    }

    #[test]
    fn x_derivative_respects_cap() {
        assert!(matches!(
            total_x_derivative(&p("u3"), 3),
            Err(JetError::CapExceeded { .. })
        ));
        assert!(d_x(&p("u9")).is_err());
        assert_eq!(total_x_derivative(&p("u2"), 3).unwrap().to_string(), "u3");
    }

    #[test]
    fn prolongation_of_porous_medium() {
        let eq = porous(1.0);
        assert_eq!(eq.order(), 2);
        let f0 = prolong_rhs(&eq, 0).unwrap();
        assert_eq!(f0, *eq.rhs());
        let pt = EvalPoint::from([("u0", 1.0), ("u1", 2.0), ("u2", 3.0), ("u3", 4.0)]);
        assert_eq!(f0.evaluate(&pt).unwrap(), 1.0 * 3.0 + 4.0);
        // hand oracle: D_x(u u2 + u1^2) = 3 u1 u2 + u u3
        let f1 = prolong_rhs(&eq, 1).unwrap();
        assert_eq!(f1.evaluate(&pt).unwrap(), 22.0);
        assert!(matches!(
            prolong_rhs(&eq, 8),
            Err(JetError::CapExceeded { needed: 10, .. })
        ));
    }

    #[test]
    fn t_derivative_examples() {
        let eq = porous(2.0);
        assert_eq!(total_t_derivative(&p("u0"), &eq).unwrap(), *eq.rhs());
        assert!(total_t_derivative(&p("x"), &eq).unwrap().is_zero());
        assert_eq!(
            total_t_derivative(&p("t*x"), &eq).unwrap().to_string(),
            "x"
        );
        assert!(total_t_derivative(&p("u8"), &eq).is_err());
    }

    #[test]
    fn equation_validation() {
        assert!(EvolutionEquation::parse("u0^2").is_err());
        assert!(EvolutionEquation::parse("u2 + ut").is_err());
        let eq = EvolutionEquation::parse("u0*u2 + s*u0").unwrap();
        assert_eq!(eq.parameters(), ["s"]);
        assert!(!eq.depends_on_x());
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn total_derivatives_commute_on_solutions() {
        let eq = EvolutionEquation::parse("u0^1.5*u2 + 1.5*u0^0.5*u1^2 + 0.3*u0 - 0.2*u0^(-1.5)")
            .unwrap();
        let domain = JetDomain::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for src in ["u0", "u1", "u2 + 1.5*u1^2/u0", "t*u1*x + exp(u0)"] {
            let e = p(src);
            let lhs = total_t_derivative(&d_x(&e).unwrap(), &eq).unwrap();
            let rhs = d_x(&total_t_derivative(&e, &eq).unwrap()).unwrap();
            for _ in 0..100 {
                let pt = domain.sample(&mut rng, 7);
                let (a, b) = (lhs.evaluate(&pt).unwrap(), rhs.evaluate(&pt).unwrap());
                assert!(rel_close(a, b, 1e-9), "{src}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn leibniz_rule() {
        let e1 = p("u0^2.5*u1 + x");
        let e2 = p("sin(u2)*t + u0");
        let lhs = d_x(&Expr::mul(vec![e1.clone(), e2.clone()])).unwrap();
        let rhs = Expr::add(vec![
            Expr::mul(vec![d_x(&e1).unwrap(), e2.clone()]),
            Expr::mul(vec![e1, d_x(&e2).unwrap()]),
        ]);
        let domain = JetDomain::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let pt = domain.sample(&mut rng, 4);
            let (a, b) = (lhs.evaluate(&pt).unwrap(), rhs.evaluate(&pt).unwrap());
            assert!(rel_close(a, b, 1e-10));
        }
    }
}
