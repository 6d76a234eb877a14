use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn p(s: &str) -> Expr {
    parse(s).unwrap_or_else(|e| panic!("{s}: {e}"))
}

fn names(e: &Expr) -> Vec<String> {
    e.free_symbols().iter().map(|s| s.name().to_string()).collect()
}

#[test]
fn parse_sum_with_free_symbols() {
    let e = p("u2 + q*u1^2/u0");
    assert!(matches!(e.node(), Node::Add(_)));
    assert_eq!(names(&e), ["q", "u0", "u1", "u2"]);
}

#[test]
fn parse_product_with_call() {
    let e = p("exp(k*q*t)*(r*x+s)");
    assert!(matches!(e.node(), Node::Mul(_)));
    assert_eq!(names(&e), ["k", "q", "r", "s", "t", "x"]);
}

#[test]
fn parse_reports_end_of_input() {
    match parse("u2 +") {
        Err(ExprError::Syntax { offset, message }) => {
            assert_eq!(offset, 4);
            assert!(message.contains("end of input"), "{message}");
        }
        other => panic!("expected syntax error, got {other:?}"),
    }
}

#[test]
fn parse_rejects_unknown_function_and_high_jets() {
    assert!(matches!(
        parse("log(u0)"),
        Err(ExprError::UnknownFunction { ref name, offset: 0 }) if name == "log"
    ));
    assert!(parse("u10 + 1").is_err());
    assert!(parse("").is_err());
    assert!(parse("(u0").is_err());
}

#[test]
fn precedence_and_associativity() {
    let e = p("2^3^2");
    assert_eq!(e.evaluate(&EvalPoint::new()).unwrap(), 512.0);
    let e = p("-2^2");
    assert_eq!(e.evaluate(&EvalPoint::new()).unwrap(), -4.0);
    assert_eq!(e.to_string(), "0 - 2^2");
    let e = p("8/2/2*3");
    assert_eq!(e.evaluate(&EvalPoint::new()).unwrap(), 6.0);
    let e = p("u0^-2");
    assert_eq!(e.evaluate(&EvalPoint::from([("u0", 2.0)])).unwrap(), 0.25);
}

#[test]
fn u_is_an_alias_for_u0() {
    assert_eq!(p("u*u1"), p("u0*u1"));
    assert_eq!(Symbol::new("u3").kind(), SymbolKind::Jet(3));
    assert_eq!(Symbol::new("t").kind(), SymbolKind::Independent);
    assert_eq!(Symbol::new("q").kind(), SymbolKind::Parameter);
    assert_eq!(Symbol::new("u_t").kind(), SymbolKind::Parameter);
}

#[test]
fn power_rule() {
    assert_eq!(differentiate(&p("u1^2"), "u1").to_string(), "2*u1");
    assert_eq!(differentiate(&p("u0^q"), "u0").to_string(), "q*u0^(q - 1)");
}

#[test]
fn chain_rule_through_exp() {
    assert_eq!(
        differentiate(&p("exp(k*q*t)"), "t").to_string(),
        "k*q*exp(k*q*t)"
    );
}

#[test]
fn derivative_of_absent_symbol_is_zero() {
    assert!(differentiate(&p("u0^q*sin(x)"), "y").is_zero());
}

#[test]
fn evaluation_examples() {
    let e = p("u2 + q*u1^2/u0");
    let pt = EvalPoint::from([("q", 1.0), ("u0", 1.0), ("u1", 2.0), ("u2", 3.0)]);
    assert_eq!(e.evaluate(&pt).unwrap(), 7.0);
    let e = p("u0^q");
    assert_eq!(e.evaluate(&EvalPoint::from([("u0", 4.0), ("q", 0.5)])).unwrap(), 2.0);
    assert!(matches!(
        p("ln(u0)").evaluate(&EvalPoint::from([("u0", 0.0)])),
        Err(ExprError::Domain(_))
    ));
}

#[test]
fn evaluation_errors() {
    assert_eq!(
        p("a + 1").evaluate(&EvalPoint::new()),
        Err(ExprError::Unbound("a".into()))
    );
    assert_eq!(
        p("1/(x-1)").evaluate(&EvalPoint::from([("x", 1.0)])),
        Err(ExprError::DivisionByZero)
    );
    assert!(matches!(
        p("x^0.5").evaluate(&EvalPoint::from([("x", -1.0)])),
        Err(ExprError::Domain(_))
    ));
    assert!(matches!(
        p("sqrt(x)").evaluate(&EvalPoint::from([("x", 0.0)])),
        Err(ExprError::Domain(_))
    ));
    // integer exponents accept negative bases
    assert_eq!(p("x^3").evaluate(&EvalPoint::from([("x", -2.0)])).unwrap(), -8.0);
}

#[test]
fn substitution_examples() {
    let mut b = BTreeMap::new();
    b.insert("u0".to_string(), p("v^(1/q)"));
    assert_eq!(substitute(&p("u0^q"), &b).to_string(), "(v^(1/q))^q");

    let e = p("u2 + q*u1^2/u0");
    assert_eq!(substitute(&e, &BTreeMap::new()), e);

    let mut b = BTreeMap::new();
    b.insert("u1".to_string(), Expr::zero());
    let s = substitute(&e, &b);
    assert_eq!(s.to_string(), "u2 + q*0^2/u0");
    assert_eq!(simplify_basic(&s).to_string(), "u2");
}

#[test]
fn substitution_is_simultaneous() {
    let mut b = BTreeMap::new();
    b.insert("a".to_string(), p("b"));
    b.insert("b".to_string(), p("a"));
    assert_eq!(substitute(&p("a - b"), &b).to_string(), "b - a");
}

#[test]
fn simplify_examples() {
    assert_eq!(simplify_basic(&p("1*(x+0)")).to_string(), "x");
    assert_eq!(simplify_basic(&p("2*3")).to_string(), "6");
    assert_eq!(simplify_basic(&p("(a*b)*(c*2)*3")).to_string(), "6*a*b*c");
    assert_eq!(simplify_basic(&p("x^1 + y^0 + 0/z")).to_string(), "x + 1");
    // folding skips invalid constant subexpressions
    assert_eq!(simplify_basic(&p("ln(0-1)")).to_string(), "ln((-1))");
}

#[test]
fn linearity_is_structural_after_simplify() {
    let e1 = p("u0^q*u1");
    let e2 = p("sin(u0)*x");
    let a = p("c");
    let combined = Expr::add(vec![Expr::mul(vec![a.clone(), e1.clone()]), e2.clone()]);
    let lhs = differentiate(&combined, "u0");
    let rhs = simplify_basic(&Expr::add(vec![
        Expr::mul(vec![a, differentiate(&e1, "u0")]),
        differentiate(&e2, "u0"),
    ]));
    assert_eq!(lhs, rhs);
}

fn corpus() -> Vec<(&'static str, &'static str)> {
    super::corpus::CORPUS.to_vec()
}

fn random_point(e: &Expr, rng: &mut ChaCha8Rng) -> EvalPoint {
    let mut pt = EvalPoint::new();
    for s in e.free_symbols() {
        let v = match s.kind() {
            SymbolKind::Jet(0) => rng.random_range(0.5..2.0),
            SymbolKind::Jet(_) => rng.random_range(-2.0..2.0),
            SymbolKind::Independent => rng.random_range(0.0..1.0),
            SymbolKind::Parameter => rng.random_range(0.2..1.5),
        };
        pt.set(s.name(), v);
    }
    pt
}

#[test]
fn derivative_matches_central_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (src, var) in corpus() {
        let e = p(src);
        let d = differentiate(&e, var);
        let mut checked = 0;
        while checked < 100 {
            let pt = random_point(&e, &mut rng);
            let x0 = pt.get(var).unwrap_or(0.0);
            let step = 1e-6;
            let (Ok(plus), Ok(minus), Ok(exact)) = (
                e.evaluate(&pt.clone().with(var, x0 + step)),
                e.evaluate(&pt.clone().with(var, x0 - step)),
                d.evaluate(&pt),
            ) else {
                continue;
            };
            let fd = (plus - minus) / (2.0 * step);
            assert!(
                (exact - fd).abs() <= 1e-5 * (1.0 + exact.abs()),
                "{src} d/d{var}: exact {exact} vs fd {fd} at {pt:?}"
            );
            checked += 1;
        }
    }
}

#[test]
fn simplify_preserves_values_on_corpus() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (src, var) in corpus() {
        let e = p(src);
        let raw = diff::differentiate(&e, &Symbol::new(var));
        for target in [e.clone(), raw.clone()] {
            let s = simplify_basic(&target);
            for _ in 0..100 {
                let pt = random_point(&e, &mut rng);
                if let Ok(a) = target.evaluate(&pt) {
                    let b = s.evaluate(&pt).expect("simplified form evaluates");
                    assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{target} vs {s}");
                }
            }
        }
    }
}

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0u32..100).prop_map(|n| Expr::num(n as f64 / 4.0)),
        prop::sample::select(vec!["u0", "u1", "u2", "t", "x", "q", "k"]).prop_map(Expr::sym),
    ];
    leaf.prop_recursive(5, 48, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::add),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::mul),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::sub(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::div(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::pow(a, b)),
            (
                prop::sample::select(vec![Func::Exp, Func::Sin, Func::Ln, Func::Tanh]),
                inner
            )
                .prop_map(|(f, a)| Expr::call(f, a)),
        ]
    })
}

proptest! {
    #[test]
    fn parse_print_parse_is_stable(e in arb_expr()) {
        let first = parse(&e.to_string()).unwrap();
        let second = parse(&first.to_string()).unwrap();
        prop_assert_eq!(&first, &second);
        prop_assert_eq!(first.to_string(), second.to_string());
    }

    #[test]
    fn printing_preserves_value(e in arb_expr(), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pt = random_point(&e, &mut rng);
        let reparsed = parse(&e.to_string()).unwrap();
        if let Ok(a) = e.evaluate(&pt) {
            let b = reparsed.evaluate(&pt).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn free_symbols_are_exact(e in arb_expr()) {
        let printed = e.to_string();
        let reparsed = parse(&printed).unwrap();
        prop_assert_eq!(e.free_symbols(), reparsed.free_symbols());
        for s in e.free_symbols() {
            prop_assert!(printed.contains(s.name()));
        }
    }

    #[test]
    fn simplify_preserves_values(e in arb_expr(), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pt = random_point(&e, &mut rng);
        if let Ok(a) = e.evaluate(&pt) {
            let b = simplify_basic(&e).evaluate(&pt).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{} vs {}", a, b);
        }
    }

    #[test]
    fn differentiation_is_linear(e1 in arb_expr(), e2 in arb_expr(), a in 0.1f64..3.0, seed in 0u64..1000) {
        let lhs = differentiate(&Expr::add(vec![Expr::mul(vec![Expr::num(a), e1.clone()]), e2.clone()]), "u0");
        let rhs = Expr::add(vec![
            Expr::mul(vec![Expr::num(a), differentiate(&e1, "u0")]),
            differentiate(&e2, "u0"),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pt = random_point(&Expr::add(vec![e1, e2]), &mut rng).with("u0", 1.3);
        if let (Ok(x), Ok(y)) = (lhs.evaluate(&pt), rhs.evaluate(&pt)) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs().max(y.abs())));
        }
    }
}
