//! Linear determining equations.
//!
//! For `u_t = F(t, x, u, u_1, ..., u_N)` the general equation reads
//!
//! ```text
//! D_t h = sum_{i=0..N} sum_{k=0..i} b_ik D_x^{i-k}(F_{u_{N-k}}) D_x^{N-i}(h)
//! ```
//!
//! and for `u_t = (u^q u_x)_x + f(u)` it reduces to
//!
//! ```text
//! D_t h = u^q D_x^2 h + b1 q u_1 u^(q-1) D_x h
//!       + (b3 q u^(q-1) u_2 + b2 q (q-1) u^(q-2) u_1^2 + b4 f_u) h.
//! ```
//!
//! A candidate `h` solves the equation when the residual vanishes
//! identically on jet space. That is tested by seeded random evaluation;
//! the residual is affine in the `b` coefficients, so unknown `b` values
//! are recovered by least squares.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::expr::{self, CompiledExpr, EvalPoint, Expr, ExprError};
use crate::jet::{d_x, d_x_n, total_t_derivative, EvolutionEquation, JetError};
use crate::sampling::{
    measure, JetDomain, ResidualReport, SampleConfig, SampleError, ScaledResidual, MAX_RETRIES,
};

/// Identity tolerance on the relative residual.
pub const IDENTITY_TOL: f64 = 1e-8;
/// Validation tolerance after a coefficient fit.
pub const FIT_TOL: f64 = 1e-7;
/// Relative singular-value cutoff for the rank of the fit system.
pub const RANK_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LdeError {
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error("determining equation of order {spec} does not match equation order {eq}")]
    OrderMismatch { spec: usize, eq: usize },
    #[error("q = 0 is excluded")]
    ZeroQ,
    #[error("singular sampling: {0}")]
    SingularSampling(String),
}

impl From<ExprError> for LdeError {
    fn from(e: ExprError) -> Self {
        LdeError::Sample(SampleError::Expr(e))
    }
}

/// Coefficients of a determining equation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum DeterminingSpec {
    /// `b[i][k]` for `0 <= k <= i <= order`.
    General { order: usize, b: Vec<Vec<f64>> },
    /// `(b1, b2, b3, b4)` of the reduced diffusion form.
    Diffusion([f64; 4]),
}

impl DeterminingSpec {
    /// `b_ik = delta_ik`: the determining equation of classical symmetries.
    pub fn classical(order: usize) -> Self {
        let b = (0..=order)
            .map(|i| (0..=i).map(|k| if i == k { 1.0 } else { 0.0 }).collect())
            .collect();
        DeterminingSpec::General { order, b }
    }

    pub fn zero(order: usize) -> Self {
        let b = (0..=order).map(|i| vec![0.0; i + 1]).collect();
        DeterminingSpec::General { order, b }
    }

    /// Reduced coefficients of a second-order general spec with `b00 = 1`.
    ///
    /// The general form only reaches reduced specs with `b2 = b3`:
    /// both come from `b20 + 2 b21 + b22`.
    pub fn to_diffusion(&self) -> Option<[f64; 4]> {
        match self {
            DeterminingSpec::General { order: 2, b } if b[0][0] == 1.0 => {
                let b1 = b[1][0] + 2.0 * b[1][1];
                let second = b[2][0] + 2.0 * b[2][1] + b[2][2];
                Some([b1, second, second, b[2][2]])
            }
            DeterminingSpec::Diffusion(b) => Some(*b),
            _ => None,
        }
    }
}

/// Residual of the general determining equation.
pub fn build_residual_general(
    h: &Expr,
    eq: &EvolutionEquation,
    spec: &DeterminingSpec,
) -> Result<Expr, LdeError> {
    let DeterminingSpec::General { order, b } = spec else {
        return Err(LdeError::OrderMismatch {
            spec: 2,
            eq: eq.order(),
        });
    };
    let n = *order;
    if n != eq.order() {
        return Err(LdeError::OrderMismatch {
            spec: n,
            eq: eq.order(),
        });
    }
    let mut h_derivs = vec![h.clone()];
    for _ in 0..n {
        h_derivs.push(d_x(h_derivs.last().expect("non-empty"))?);
    }
    let mut terms = Vec::new();
    for (i, row) in b.iter().enumerate().take(n + 1) {
        for (k, &coef) in row.iter().enumerate().take(i + 1) {
            if coef == 0.0 {
                continue;
            }
            let partial = expr::differentiate(eq.rhs(), &format!("u{}", n - k));
            let factor = d_x_n(&partial, i - k)?;
            terms.push(Expr::mul(vec![
                Expr::num(coef),
                factor,
                h_derivs[n - i].clone(),
            ]));
        }
    }
    let dt = total_t_derivative(h, eq)?;
    Ok(expr::simplify_basic(&Expr::sub(dt, Expr::add(terms))))
}

/// Pieces of the reduced residual: `base - sum_j b_j * terms[j]`.
#[derive(Debug, Clone)]
pub struct DiffusionResidual {
    pub base: Expr,
    pub terms: [Expr; 4],
}

impl DiffusionResidual {
    pub fn new(h: &Expr, q: f64, f: &Expr) -> Result<Self, LdeError> {
        if q == 0.0 {
            return Err(LdeError::ZeroQ);
        }
        let eq = EvolutionEquation::diffusion(q, f)?;
        let u = Expr::jet(0);
        let u_pow = |p: f64| Expr::pow(u.clone(), Expr::num(p));
        let dh = d_x(h)?;
        let d2h = d_x(&dh)?;
        let base = Expr::sub(
            total_t_derivative(h, &eq)?,
            Expr::mul(vec![u_pow(q), d2h]),
        );
        let t1 = Expr::mul(vec![Expr::num(q), Expr::jet(1), u_pow(q - 1.0), dh]);
        let t2 = Expr::mul(vec![
            Expr::num(q * (q - 1.0)),
            u_pow(q - 2.0),
            Expr::pow(Expr::jet(1), Expr::num(2.0)),
            h.clone(),
        ]);
        let t3 = Expr::mul(vec![Expr::num(q), u_pow(q - 1.0), Expr::jet(2), h.clone()]);
        let t4 = Expr::mul(vec![expr::differentiate(f, "u0"), h.clone()]);
        let s = expr::simplify_basic;
        Ok(DiffusionResidual {
            base: s(&base),
            terms: [s(&t1), s(&t2), s(&t3), s(&t4)],
        })
    }

    pub fn assemble(&self, b: [f64; 4]) -> Expr {
        let mut parts = vec![self.base.clone()];
        for (bj, t) in b.iter().zip(&self.terms) {
            parts.push(Expr::mul(vec![Expr::num(-bj), t.clone()]));
        }
        expr::simplify_basic(&Expr::add(parts))
    }
}

/// Residual of the reduced determining equation of `u_t = (u^q u_x)_x + f`.
pub fn build_residual_diffusion(
    h: &Expr,
    q: f64,
    f: &Expr,
    b: [f64; 4],
) -> Result<Expr, LdeError> {
    Ok(DiffusionResidual::new(h, q, f)?.assemble(b))
}

/// Evaluate a jet-space residual at seeded points of `domain`; parameters
/// not drawn from the domain must be bound in `fixed`.
pub fn check_identity_in(
    residual: &Expr,
    config: &SampleConfig,
    domain: &JetDomain,
    fixed: &EvalPoint,
) -> Result<ResidualReport, LdeError> {
    let max_jet = residual.max_jet_index().unwrap_or(0);
    let scaled = ScaledResidual::new(residual);
    Ok(measure(&scaled, config, |rng| {
        let mut p = domain.sample(rng, max_jet);
        p.extend(fixed);
        p
    })?)
}

pub fn check_identity(residual: &Expr, config: &SampleConfig) -> Result<ResidualReport, LdeError> {
    check_identity_in(residual, config, &JetDomain::default(), &EvalPoint::new())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitConfig {
    pub seed: u64,
    /// Rows of the least-squares system.
    pub rows: usize,
    pub validation: SampleConfig,
    pub domain: JetDomain,
}

impl FitConfig {
    pub fn with_seed(seed: u64) -> Self {
        FitConfig {
            seed,
            rows: 8,
            validation: SampleConfig::new(seed ^ 0x9e37_79b9_7f4a_7c15, 100, FIT_TOL),
            domain: JetDomain::default(),
        }
    }
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig::with_seed(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    #[serde(serialize_with = "ser_b")]
    pub b: [f64; 4],
    pub rank: usize,
    pub degenerate: bool,
    pub validation: ResidualReport,
}

fn ser_b<S: serde::Serializer>(b: &[f64; 4], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(4))?;
    for v in b {
        seq.serialize_element(&crate::util::Sig17(*v))?;
    }
    seq.end()
}

/// Recover `(b1, b2, b3, b4)` for a given `h`, `q`, `f` by least squares
/// over sampled jet points. Rank-deficient systems get the minimum-norm
/// solution and the degeneracy flag.
pub fn fit_b_coefficients(
    h: &Expr,
    q: f64,
    f: &Expr,
    config: &FitConfig,
) -> Result<FitResult, LdeError> {
    let parts = DiffusionResidual::new(h, q, f)?;
    let mut roots = vec![parts.base.clone()];
    roots.extend(parts.terms.iter().cloned());
    let tape = CompiledExpr::new_multi(&roots);
    let max_jet = roots.iter().filter_map(Expr::max_jet_index).max().unwrap_or(0);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let rows = config.rows.max(8);
    let mut a = DMatrix::<f64>::zeros(rows, 4);
    let mut rhs = DVector::<f64>::zeros(rows);
    let mut points: Vec<EvalPoint> = Vec::with_capacity(rows);
    for r in 0..rows {
        let mut attempt = 0;
        let vals = loop {
            let p = config.domain.sample(&mut rng, max_jet);
            match tape.eval_many(&p) {
                Ok(v) => {
                    points.push(p);
                    break v;
                }
                Err(e @ ExprError::Unbound(_)) => return Err(e.into()),
                Err(e) => {
                    if attempt == MAX_RETRIES {
                        return Err(SampleError::DomainExhausted(e).into());
                    }
                    attempt += 1;
                }
            }
        };
        let scale = 1.0 + vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        rhs[r] = vals[0] / scale;
        for j in 0..4 {
            a[(r, j)] = vals[j + 1] / scale;
        }
    }
    if points.windows(2).all(|w| w[0] == w[1]) {
        return Err(LdeError::SingularSampling(
            "all sample points coincide".into(),
        ));
    }

    let svd = a.svd(true, true);
    let sigma_max = svd.singular_values.max();
    if sigma_max == 0.0 {
        return Err(LdeError::SingularSampling(
            "every coefficient term vanishes at the sampled points".into(),
        ));
    }
    let cutoff = RANK_CUTOFF * sigma_max;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    let solution = svd
        .solve(&rhs, cutoff)
        .map_err(|e| LdeError::SingularSampling(e.to_string()))?;
    let b = [solution[0], solution[1], solution[2], solution[3]];

    let residual = parts.assemble(b);
    let validation = check_identity_in(
        &residual,
        &config.validation,
        &config.domain,
        &EvalPoint::new(),
    )?;
    Ok(FitResult {
        b,
        rank,
        degenerate: rank < 4,
        validation,
    })
}

/// Scalar field for the branch relations; lets tests evaluate them exactly.
pub trait BranchScalar:
    Copy
    + PartialEq
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
{
    fn from_int(i: i64) -> Self;
}

impl BranchScalar for f64 {
    fn from_int(i: i64) -> Self {
        i as f64
    }
}

/// Coefficient relation of `u_2 u_1^2`:
/// `2 b2 q - 2 b2 - b3^2 q + b3 q + 4 b3 - 6 q`.
pub fn relation_u2u1sq<T: BranchScalar>(q: T, b2: T, b3: T) -> T {
    let c = T::from_int;
    c(2) * b2 * q - c(2) * b2 - b3 * b3 * q + b3 * q + c(4) * b3 - c(6) * q
}

/// Coefficient relation of `u_1^3`:
/// `4 b2 q - 4 b2 + b3^2 q - 4 b3 q + 2 b3 - 9 q + 6`.
pub fn relation_u1cubed<T: BranchScalar>(q: T, b2: T, b3: T) -> T {
    let c = T::from_int;
    c(4) * b2 * q - c(4) * b2 + b3 * b3 * q - c(4) * b3 * q + c(2) * b3 - c(9) * q + c(6)
}

/// `b2` paired with `b3` by the `u_2 u_1^2` relation; undefined at `q = 1`.
pub fn paired_b2<T: BranchScalar>(q: T, b3: T) -> Option<T> {
    let c = T::from_int;
    let denom = c(2) * (q - c(1));
    if denom == c(0) {
        return None;
    }
    Some((b3 * b3 * q - b3 * q - c(4) * b3 + c(6) * q) / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchRoot {
    pub b3: f64,
    pub b2: Option<f64>,
}

/// Eliminate `b2` between the two coefficient relations and return the
/// real roots in `b3` (ascending), each with its paired `b2`.
pub fn solve_b3_relations(q: f64) -> Result<Vec<BranchRoot>, LdeError> {
    if q == 0.0 {
        return Err(LdeError::ZeroQ);
    }
    // 2*(first) - (second) has no b2 term; it is quadratic in b3.
    let eliminated = |b3: f64| {
        2.0 * relation_u2u1sq(q, 0.0, b3) - relation_u1cubed(q, 0.0, b3)
    };
    let (p0, p1, pm1) = (eliminated(0.0), eliminated(1.0), eliminated(-1.0));
    let c0 = p0;
    let c2 = (p1 + pm1) / 2.0 - p0;
    let c1 = (p1 - pm1) / 2.0;
    let disc = c1 * c1 - 4.0 * c2 * c0;
    if disc < 0.0 {
        return Ok(Vec::new());
    }
    let sq = disc.sqrt();
    // numerically stable pair of roots
    let t = -0.5 * (c1 + c1.signum() * sq);
    let mut roots = vec![t / c2, c0 / t];
    roots.sort_by(f64::total_cmp);
    roots.dedup();
    Ok(roots
        .into_iter()
        .map(|b3| BranchRoot {
            b3,
            b2: paired_b2(q, b3),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use num_rational::Rational64;

    use super::*;
    use crate::expr::parse;

    impl BranchScalar for Rational64 {
        fn from_int(i: i64) -> Self {
            Rational64::from_integer(i)
        }
    }

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    fn cfg(seed: u64) -> SampleConfig {
        SampleConfig::new(seed, 100, IDENTITY_TOL)
    }

    #[test]
    fn classical_spec_accepts_translation_for_autonomous_equations() {
        let eq = EvolutionEquation::diffusion(1.0, &Expr::zero()).unwrap();
        let r = build_residual_general(&p("u1"), &eq, &DeterminingSpec::classical(2)).unwrap();
        let rep = check_identity(&r, &SampleConfig::new(1, 100, 1e-12)).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn classical_spec_rejects_translation_with_explicit_x() {
        let eq = EvolutionEquation::parse("x*u2").unwrap();
        let r = build_residual_general(&p("u1"), &eq, &DeterminingSpec::classical(2)).unwrap();
        let rep = check_identity(&r, &SampleConfig::new(1, 100, 1e-12)).unwrap();
        assert!(rep.max_abs > 0.1, "{rep:?}");
    }

    #[test]
    fn zero_spec_leaves_time_derivative() {
        let eq = EvolutionEquation::diffusion(2.0, &p("0.3*u0")).unwrap();
        let h = p("u2 + 2*u1^2/u0");
        let r = build_residual_general(&h, &eq, &DeterminingSpec::zero(2)).unwrap();
        let dt = total_t_derivative(&h, &eq).unwrap();
        let diff = Expr::sub(r, dt);
        let rep = check_identity(&diff, &SampleConfig::new(2, 50, 1e-14)).unwrap();
        assert!(rep.pass);
    }

    #[test]
    fn order_mismatch_is_rejected() {
        let eq = EvolutionEquation::diffusion(2.0, &Expr::zero()).unwrap();
        assert!(matches!(
            build_residual_general(&p("u1"), &eq, &DeterminingSpec::classical(3)),
            Err(LdeError::OrderMismatch { spec: 3, eq: 2 })
        ));
    }

    #[test]
    fn general_form_reduces_to_diffusion_form() {
        let q = 1.7;
        let f = p("0.4*u0 - 0.9*u0^(-1.7)");
        let eq = EvolutionEquation::diffusion(q, &f).unwrap();
        let spec = DeterminingSpec::General {
            order: 2,
            b: vec![vec![1.0], vec![0.6, 1.3], vec![0.2, -0.35, 0.9]],
        };
        let reduced = spec.to_diffusion().unwrap();
        assert!((reduced[0] - (0.6 + 2.0 * 1.3)).abs() < 1e-15);
        for h in ["u2 + 1.7*u1^2/u0", "u1*x + u0^2", "u3 - u1*u2/u0"] {
            let h = p(h);
            let general = build_residual_general(&h, &eq, &spec).unwrap();
            let diffusion = build_residual_diffusion(&h, q, &f, reduced).unwrap();
            let rep = check_identity(&Expr::sub(general, diffusion), &SampleConfig::new(4, 100, 1e-10))
                .unwrap();
            assert!(rep.pass, "{rep:?}");
        }
    }

    #[test]
    fn second_order_constraint_with_closed_form_coefficients() {
        let r = build_residual_diffusion(
            &p("u2 + 2*u1^2/u0"),
            2.0,
            &p("0.3*u0 - 1.2*u0^(-2)"),
            [4.0, 4.0, 1.0, 1.0],
        )
        .unwrap();
        let rep = check_identity(&r, &SampleConfig::new(7, 100, 1e-9)).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn dropping_the_nonlinear_term_breaks_the_identity() {
        let r = build_residual_diffusion(
            &p("u2"),
            2.0,
            &p("0.3*u0 - 1.2*u0^(-2)"),
            [4.0, 4.0, 1.0, 1.0],
        )
        .unwrap();
        let rep = check_identity(&r, &cfg(7)).unwrap();
        assert!(rep.max_abs > 1e-2, "{rep:?}");
    }

    #[test]
    fn logarithmic_source_with_fitted_spec() {
        let h = p("u2 - u1^2/u0");
        let f = p("0.4*u0 + 0.8*u0*ln(u0)");
        let fit = fit_b_coefficients(&h, -1.0, &f, &FitConfig::with_seed(3)).unwrap();
        let r = build_residual_diffusion(&h, -1.0, &f, fit.b).unwrap();
        let rep = check_identity(&r, &SampleConfig::new(8, 100, 1e-9)).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn q_zero_is_rejected() {
        assert_eq!(
            build_residual_diffusion(&p("u2"), 0.0, &Expr::zero(), [0.0; 4]).unwrap_err(),
            LdeError::ZeroQ
        );
        assert_eq!(solve_b3_relations(0.0).unwrap_err(), LdeError::ZeroQ);
    }

    #[test]
    fn identity_checks_on_trivial_residuals() {
        let rep = check_identity(&Expr::zero(), &cfg(0)).unwrap();
        assert_eq!(rep.max_abs, 0.0);
        assert!(rep.pass);
        let rep = check_identity(&Expr::num(1e-3), &cfg(0)).unwrap();
        assert!(!rep.pass);
        assert!(matches!(
            check_identity(&Expr::zero(), &SampleConfig::new(0, 0, 1e-8)),
            Err(LdeError::Sample(SampleError::NoSamples))
        ));
    }

    #[test]
    fn third_order_entry_passes_with_fitted_coefficients() {
        let q = 3.0;
        let h = p("u3 + 8*u1*u2/u0 + 3*u1^3/u0^2 + 0.7*u1");
        let f = p("0.5*u0 + 0.7/3*u0^4");
        let fit = fit_b_coefficients(&h, q, &f, &FitConfig::with_seed(1)).unwrap();
        assert!(!fit.degenerate);
        let r = build_residual_diffusion(&h, q, &f, fit.b).unwrap();
        let rep = check_identity(&r, &cfg(2)).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn fit_recovers_b3_one_branch_at_q2() {
        let fit = fit_b_coefficients(
            &p("u2 + 2*u1^2/u0"),
            2.0,
            &p("0.7*u0 + 1.3*u0^(-2)"),
            &FitConfig::with_seed(5),
        )
        .unwrap();
        assert_eq!(fit.rank, 4);
        assert!(!fit.degenerate);
        for (got, want) in fit.b.iter().zip([4.0, 4.0, 1.0, 1.0]) {
            assert!((got - want).abs() < 1e-6, "{:?}", fit.b);
        }
        assert!(fit.validation.pass);
    }

    #[test]
    fn fit_is_idempotent() {
        let h = p("u2 + 2*u1^2/u0");
        let f = p("0.7*u0 + 1.3*u0^(-2)");
        let first = fit_b_coefficients(&h, 2.0, &f, &FitConfig::with_seed(5)).unwrap();
        let second = fit_b_coefficients(&h, 2.0, &f, &FitConfig::with_seed(6)).unwrap();
        for (a, b) in first.b.iter().zip(&second.b) {
            assert!((a - b).abs() < 1e-9);
        }
        // the fitted values leave nothing to fit
        let r = build_residual_diffusion(&h, 2.0, &f, first.b).unwrap();
        assert!(check_identity(&r, &cfg(9)).unwrap().pass);
    }

    #[test]
    fn translation_generator_gives_degenerate_fit() {
        // with q = 1 and f = 0 the u1^2 and f_u columns vanish and
        // b1, b3 multiply the same term u1*u2, leaving rank 1
        let fit = fit_b_coefficients(&p("u1"), 1.0, &Expr::zero(), &FitConfig::with_seed(2))
            .unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.rank, 1);
        assert!((fit.b[0] + fit.b[2] - 3.0).abs() < 1e-9);
        assert!((fit.b[0] - fit.b[2]).abs() < 1e-9, "minimum norm splits evenly");
        assert!(fit.validation.max_abs < 1e-10);
    }

    #[test]
    fn identical_sample_points_are_singular() {
        let mut config = FitConfig::with_seed(1);
        config.domain = JetDomain::point(0.5, 0.1, 1.2, 0.7);
        assert!(matches!(
            fit_b_coefficients(&p("u2 + 2*u1^2/u0"), 2.0, &p("u0"), &config),
            Err(LdeError::SingularSampling(_))
        ));
    }

    fn rat(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    #[test]
    fn branch_roots_match_closed_form() {
        for (q, second) in [(2.0, 2.0), (3.0, 5.0 / 3.0), (-1.0, -1.0), (-4.0 / 3.0, -0.5)] {
            let roots = solve_b3_relations(q).unwrap();
            let mut want = vec![1.0, second];
            want.sort_by(f64::total_cmp);
            assert_eq!(roots.len(), 2);
            for (r, w) in roots.iter().zip(&want) {
                assert!((r.b3 - w).abs() < 1e-12, "q={q}: {roots:?}");
                let b2 = r.b2.unwrap();
                assert!(relation_u2u1sq(q, b2, r.b3).abs() < 1e-12);
                assert!(relation_u1cubed(q, b2, r.b3).abs() < 1e-12);
            }
            let one = roots.iter().find(|r| (r.b3 - 1.0).abs() < 1e-12).unwrap();
            assert!((one.b2.unwrap() - (3.0 * q - 2.0) / (q - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn branch_roots_are_exact_over_rationals() {
        // independent of the f64 elimination: closed-form roots, paired b2
        // from the first relation, both relations evaluated exactly
        for q in [rat(2, 1), rat(3, 1), rat(-1, 1), rat(-4, 3), rat(5, 7)] {
            for b3 in [rat(1, 1), (q + rat(2, 1)) / q] {
                let b2 = paired_b2(q, b3).unwrap();
                assert_eq!(relation_u2u1sq(q, b2, b3), rat(0, 1));
                assert_eq!(relation_u1cubed(q, b2, b3), rat(0, 1));
            }
        }
    }

    #[test]
    fn q_equal_one_leaves_b2_undefined() {
        let roots = solve_b3_relations(1.0).unwrap();
        assert_eq!(roots.len(), 2);
        assert!(roots.iter().all(|r| r.b2.is_none()));
    }
}
