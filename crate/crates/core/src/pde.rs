//! Certification of candidate solutions: symbolic residuals of closed
//! forms in one and two space dimensions, conformal images for the fast
//! diffusion equation, and a method-of-lines solver for constraint drift.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;

use crate::catalog::{CompatSpec, Pde, SolutionInstance};
use crate::expr::{self, CompiledExpr, EvalPoint, Expr, ExprError};
use crate::jet::EvolutionEquation;
use crate::sampling::{measure, ResidualReport, SampleConfig, SampleError, ScaledResidual, Window};
use crate::util::ser_sig17;

/// Stability factor: `dt <= STABILITY * dx^2 / max |F_u2|`.
pub const STABILITY: f64 = 0.2;
/// Floor of the drift threshold.
pub const DRIFT_FLOOR: f64 = 1e-4;
/// Allowed growth of the constraint over its initial discrete value.
pub const DRIFT_GROWTH: f64 = 100.0;
/// Largest `|h|` accepted on the initial profile.
pub const DRIFT_PRECONDITION: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PdeError {
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("time step {dt:e} exceeds the stability bound {bound:e} (0.2*dx^2/max|F_u2|)")]
    Stability { dt: f64, bound: f64 },
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("unsupported equation: {0}")]
    Unsupported(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("map derivative vanishes at {re} + {im}i inside the window")]
    CriticalPoint { re: f64, im: f64 },
}

fn jets_in_x(u: &Expr, order: usize) -> Vec<Expr> {
    let mut out = vec![u.clone()];
    for _ in 0..order {
        out.push(expr::differentiate(out.last().expect("non-empty"), "x"));
    }
    out
}

/// Residual terms of `u_t = F` for a closed form `u(t, x)`.
pub fn residual_terms_1d(u: &Expr, eq: &EvolutionEquation) -> Vec<(f64, Expr)> {
    let jets = jets_in_x(u, eq.order());
    let bindings: BTreeMap<String, Expr> = jets
        .iter()
        .enumerate()
        .map(|(k, e)| (format!("u{k}"), e.clone()))
        .collect();
    let mut terms = vec![(1.0, expr::differentiate(u, "t"))];
    for (s, term) in eq.rhs().additive_terms() {
        terms.push((-s, expr::substitute(&term, &bindings)));
    }
    terms
}

/// `u_t - F(t, x, u, u_x, ...)` with every derivative taken symbolically.
pub fn residual_expr_1d(u: &Expr, eq: &EvolutionEquation) -> Expr {
    let terms = residual_terms_1d(u, eq)
        .into_iter()
        .map(|(s, e)| Expr::mul(vec![Expr::num(s), e]))
        .collect();
    expr::simplify_basic(&Expr::add(terms))
}

fn run(
    terms: Vec<(f64, Expr)>,
    guards: Vec<Expr>,
    window: &Window,
    config: &SampleConfig,
    fixed: &EvalPoint,
) -> Result<ResidualReport, PdeError> {
    let scaled = ScaledResidual::with_guards(terms, guards);
    Ok(measure(&scaled, config, |rng| {
        let mut p = window.sample(rng);
        p.extend(fixed);
        p
    })?)
}

/// Relative residual of a closed form against an evolution equation at
/// seeded points of `window`. Points where `u <= 0` are redrawn.
pub fn residual_exact(
    u: &Expr,
    eq: &EvolutionEquation,
    window: &Window,
    config: &SampleConfig,
) -> Result<ResidualReport, PdeError> {
    residual_exact_with(u, eq, window, config, &EvalPoint::new())
}

/// As [`residual_exact`], with extra bindings for symbols not drawn from
/// the window.
pub fn residual_exact_with(
    u: &Expr,
    eq: &EvolutionEquation,
    window: &Window,
    config: &SampleConfig,
    fixed: &EvalPoint,
) -> Result<ResidualReport, PdeError> {
    run(residual_terms_1d(u, eq), vec![u.clone()], window, config, fixed)
}

/// The two-dimensional fast diffusion equation in either variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FastDiffusion {
    /// `v_t = v^2 (ln v)_xx + v^2 (ln v)_yy`, with `v = 1/u`.
    VForm,
    /// `u_t = (ln u)_xx + (ln u)_yy`.
    UForm,
}

pub fn residual_terms_2d(w: &Expr, form: FastDiffusion) -> Vec<(f64, Expr)> {
    let d = |e: &Expr, v: &str| expr::differentiate(e, v);
    let (wx, wy) = (d(w, "x"), d(w, "y"));
    let (wxx, wyy) = (d(&wx, "x"), d(&wy, "y"));
    let sq = |e: Expr| Expr::pow(e, Expr::num(2.0));
    let wt = d(w, "t");
    match form {
        FastDiffusion::VForm => vec![
            (1.0, wt),
            (-1.0, Expr::mul(vec![w.clone(), wxx])),
            (-1.0, Expr::mul(vec![w.clone(), wyy])),
            (1.0, sq(wx)),
            (1.0, sq(wy)),
        ],
        FastDiffusion::UForm => vec![
            (1.0, wt),
            (-1.0, Expr::div(wxx, w.clone())),
            (-1.0, Expr::div(wyy, w.clone())),
            (1.0, Expr::div(sq(wx), sq(w.clone()))),
            (1.0, Expr::div(sq(wy), sq(w.clone()))),
        ],
    }
}

/// Relative residual of `w(t, x, y)` for the chosen form of the fast
/// diffusion equation. Points where `w <= 0` are redrawn.
pub fn residual_2d(
    w: &Expr,
    form: FastDiffusion,
    window: &Window,
    config: &SampleConfig,
) -> Result<ResidualReport, PdeError> {
    let window = window_2d(window);
    run(
        residual_terms_2d(w, form),
        vec![w.clone()],
        &window,
        config,
        &EvalPoint::new(),
    )
}

fn window_2d(window: &Window) -> Window {
    let mut w = window.clone();
    w.y.get_or_insert([-1.0, 1.0]);
    w
}

/// Real and imaginary parts of a polynomial in `z = x + i y`.
fn complex_poly(coeffs: &[Complex64]) -> (Expr, Expr) {
    let (x, y) = (Expr::sym("x"), Expr::sym("y"));
    let mut re = Expr::zero();
    let mut im = Expr::zero();
    // Horner: p <- p*z + c
    for c in coeffs.iter().rev() {
        let nre = Expr::sub(
            Expr::mul(vec![re.clone(), x.clone()]),
            Expr::mul(vec![im.clone(), y.clone()]),
        );
        let nim = Expr::add(vec![
            Expr::mul(vec![re, y.clone()]),
            Expr::mul(vec![im, x.clone()]),
        ]);
        re = expr::simplify_basic(&Expr::add(vec![nre, Expr::num(c.re)]));
        im = expr::simplify_basic(&Expr::add(vec![nim, Expr::num(c.im)]));
    }
    (re, im)
}

fn derivative_coeffs(coeffs: &[Complex64]) -> Vec<Complex64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, c)| c * k as f64)
        .collect()
}

fn trim(coeffs: &[Complex64]) -> &[Complex64] {
    let n = coeffs
        .iter()
        .rposition(|c| c.norm() > 0.0)
        .map_or(0, |i| i + 1);
    &coeffs[..n]
}

/// Roots of a polynomial with coefficients in ascending degree, by
/// Durand-Kerner iteration.
pub fn polynomial_roots(coeffs: &[Complex64]) -> Vec<Complex64> {
    let c = trim(coeffs);
    if c.len() < 2 {
        return Vec::new();
    }
    let deg = c.len() - 1;
    let lead = c[deg];
    let monic: Vec<Complex64> = c.iter().map(|v| v / lead).collect();
    let eval = |z: Complex64| monic.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, a| acc * z + a);
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..deg).map(|k| seed.powu(k as u32)).collect();
    for _ in 0..1000 {
        let mut delta = 0.0f64;
        for i in 0..deg {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..deg {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 {
            break;
        }
    }
    roots
}

/// The image `u(t, Re A, Im A) |A'(z)|^2` of a base solution under the
/// analytic polynomial map `A(z) = sum_k coeffs[k] z^k`.
pub fn conformal_transform(base: &Expr, coeffs: &[Complex64]) -> Result<Expr, PdeError> {
    let c = trim(coeffs);
    if c.len() < 2 {
        return Err(PdeError::Precondition("map A is constant".into()));
    }
    let (re, im) = complex_poly(c);
    let (dre, dim) = complex_poly(&derivative_coeffs(c));
    let mut b = BTreeMap::new();
    b.insert("x".to_string(), re);
    b.insert("y".to_string(), im);
    let image = expr::substitute(base, &b);
    let jac = Expr::add(vec![
        Expr::pow(dre, Expr::num(2.0)),
        Expr::pow(dim, Expr::num(2.0)),
    ]);
    Ok(expr::simplify_basic(&Expr::mul(vec![image, jac])))
}

/// Residual of the u-form for the conformal image of `base`. The map's
/// critical points must lie outside the window.
pub fn conformal_image(
    base: &Expr,
    coeffs: &[Complex64],
    window: &Window,
    config: &SampleConfig,
) -> Result<ResidualReport, PdeError> {
    let window = window_2d(window);
    let [y0, y1] = window.y.expect("set by window_2d");
    let margin = 1e-9;
    for r in polynomial_roots(&derivative_coeffs(trim(coeffs))) {
        let inside = r.re >= window.x[0] - margin
            && r.re <= window.x[1] + margin
            && r.im >= y0 - margin
            && r.im <= y1 + margin;
        if inside {
            return Err(PdeError::CriticalPoint { re: r.re, im: r.im });
        }
    }
    let u = conformal_transform(base, coeffs)?;
    residual_2d(&u, FastDiffusion::UForm, &window, config)
}

/// Residual of a catalog solution family, and of its printed form if any.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionReport {
    pub id: String,
    pub verified: ResidualReport,
    pub printed: Option<ResidualReport>,
}

fn certify_one(
    pde: &Pde,
    equation: Option<&EvolutionEquation>,
    u: &Expr,
    params: &EvalPoint,
    window: &Window,
    config: &SampleConfig,
) -> Result<ResidualReport, PdeError> {
    match pde {
        Pde::Evolution { .. } => {
            let eq = equation.ok_or_else(|| PdeError::Unsupported("missing equation".into()))?;
            residual_exact_with(u, eq, window, config, params)
        }
        Pde::VForm => residual_2d(u, FastDiffusion::VForm, window, config),
        Pde::UForm => residual_2d(u, FastDiffusion::UForm, window, config),
        Pde::Conformal { map } => {
            let coeffs: Vec<Complex64> = map.iter().map(|[re, im]| Complex64::new(*re, *im)).collect();
            conformal_image(u, &coeffs, window, config)
        }
    }
}

/// Certify a solution family. A printed form of a conformal family is
/// the image itself and is checked against the u-form directly.
pub fn certify_solution(
    sol: &SolutionInstance,
    window: &Window,
    config: &SampleConfig,
) -> Result<SolutionReport, PdeError> {
    let verified = certify_one(&sol.pde, sol.equation.as_ref(), &sol.u, &sol.params, window, config)?;
    let printed = match &sol.printed {
        Some(p) => {
            let pde = match sol.pde {
                Pde::Conformal { .. } => Pde::UForm,
                ref other => other.clone(),
            };
            Some(certify_one(&pde, p.equation.as_ref(), &p.u, &p.params, window, config)?)
        }
        None => None,
    };
    Ok(SolutionReport {
        id: sol.id.clone(),
        verified,
        printed,
    })
}

/// Uniform one-dimensional grid with a time window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub x0: f64,
    pub x1: f64,
    pub nodes: usize,
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    /// Number of recorded states after the initial one.
    pub outputs: usize,
}

impl Grid {
    pub fn new(x: [f64; 2], nodes: usize, t: [f64; 2], dt: f64) -> Result<Self, PdeError> {
        let g = Grid {
            x0: x[0],
            x1: x[1],
            nodes,
            t0: t[0],
            t1: t[1],
            dt,
            outputs: 10,
        };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<(), PdeError> {
        if self.nodes < 5 || !(self.x1 > self.x0) {
            return Err(PdeError::Grid("need x1 > x0 and at least 5 nodes".into()));
        }
        if !(self.dt > 0.0) || !(self.t1 > self.t0) {
            return Err(PdeError::Grid("need dt > 0 and t1 > t0".into()));
        }
        if self.outputs == 0 {
            return Err(PdeError::Grid("need at least one output".into()));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x1 - self.x0) / (self.nodes - 1) as f64
    }

    pub fn xs(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.nodes).map(|i| self.x0 + dx * i as f64).collect()
    }

    /// Largest stable step for `eq` on `profile` at `t0`, times `safety`.
    pub fn stable_dt(
        &self,
        eq: &EvolutionEquation,
        profile: &[f64],
        safety: f64,
    ) -> Result<f64, PdeError> {
        let rhs = Rhs::new(eq, &Boundary::Reflective)?;
        let d = rhs.max_diffusivity(self.t0, &self.xs(), profile, self.dx())?;
        Ok(safety * STABILITY * self.dx().powi(2) / d)
    }
}

/// Boundary treatment for the method of lines.
#[derive(Debug, Clone)]
pub enum Boundary {
    /// Dirichlet values from a reference solution `u(t, x)`.
    Reference(Expr),
    /// Zero slope: ghost values mirror the first interior node.
    Reflective,
}

impl Boundary {
    pub fn name(&self) -> &'static str {
        match self {
            Boundary::Reference(_) => "dirichlet-reference",
            Boundary::Reflective => "reflective",
        }
    }
}

/// Recorded states of a method-of-lines run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldHistory {
    pub x: Vec<f64>,
    pub times: Vec<f64>,
    pub fields: Vec<Vec<f64>>,
    pub dt: f64,
    pub steps: usize,
    pub boundary: String,
    pub blow_up: bool,
}

impl FieldHistory {
    /// Rows `t,x,u`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,u\n");
        for (t, f) in self.times.iter().zip(&self.fields) {
            for (x, u) in self.x.iter().zip(f) {
                out.push_str(&format!("{t:.17e},{x:.17e},{u:.17e}\n"));
            }
        }
        out
    }

    pub fn last(&self) -> (f64, &[f64]) {
        let i = self.times.len() - 1;
        (self.times[i], &self.fields[i])
    }
}

/// Slots of a tape over `t, x, u0, ..., u3`.
struct Tape {
    tape: CompiledExpr,
    map: Vec<usize>,
}

const SLOT_NAMES: [&str; 6] = ["t", "x", "u0", "u1", "u2", "u3"];

impl Tape {
    fn new(e: &Expr) -> Result<Self, PdeError> {
        let tape = CompiledExpr::new(e);
        let map = tape
            .symbols()
            .iter()
            .map(|s| {
                SLOT_NAMES
                    .iter()
                    .position(|n| *n == s.name())
                    .ok_or_else(|| ExprError::Unbound(s.name().to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Tape { tape, map })
    }

    fn eval(&self, vars: &[f64; 6], slots: &mut Vec<f64>, scratch: &mut Vec<f64>) -> Result<f64, ExprError> {
        slots.clear();
        slots.extend(self.map.iter().map(|&i| vars[i]));
        self.tape.eval_slots_with(slots, scratch)
    }
}

struct Rhs {
    f: Tape,
    diffusivity: Tape,
    boundary: Option<(Tape, Tape)>,
}

impl Rhs {
    fn new(eq: &EvolutionEquation, boundary: &Boundary) -> Result<Self, PdeError> {
        if eq.order() > 2 {
            return Err(PdeError::Unsupported(format!(
                "method of lines needs order <= 2, got {}",
                eq.order()
            )));
        }
        let boundary = match boundary {
            Boundary::Reference(u) => Some((Tape::new(u)?, Tape::new(&expr::differentiate(u, "t"))?)),
            Boundary::Reflective => None,
        };
        Ok(Rhs {
            f: Tape::new(eq.rhs())?,
            diffusivity: Tape::new(&expr::differentiate(eq.rhs(), "u2"))?,
            boundary,
        })
    }

    fn jets(u: &[f64], i: usize, dx: f64, reflective: bool) -> (f64, f64) {
        let n = u.len();
        let (l, r) = match (i, reflective) {
            (0, true) => (u[1], u[1]),
            (i, true) if i == n - 1 => (u[n - 2], u[n - 2]),
            _ => (u[i - 1], u[i + 1]),
        };
        ((r - l) / (2.0 * dx), (r - 2.0 * u[i] + l) / (dx * dx))
    }

    fn max_diffusivity(&self, t: f64, xs: &[f64], u: &[f64], dx: f64) -> Result<f64, PdeError> {
        let (mut slots, mut scratch) = (Vec::new(), Vec::new());
        let mut d = 0.0f64;
        let reflective = self.boundary.is_none();
        for i in 0..u.len() {
            if !reflective && (i == 0 || i == u.len() - 1) {
                continue;
            }
            let (u1, u2) = Self::jets(u, i, dx, reflective);
            let vars = [t, xs[i], u[i], u1, u2, 0.0];
            d = d.max(self.diffusivity.eval(&vars, &mut slots, &mut scratch)?.abs());
        }
        Ok(d.max(f64::MIN_POSITIVE))
    }

    fn eval(&self, t: f64, xs: &[f64], u: &[f64], dx: f64, out: &mut [f64]) -> Result<(), ExprError> {
        let (mut slots, mut scratch) = (Vec::new(), Vec::new());
        let n = u.len();
        match &self.boundary {
            Some((_, ut)) => {
                for i in [0, n - 1] {
                    let vars = [t, xs[i], 0.0, 0.0, 0.0, 0.0];
                    out[i] = ut.eval(&vars, &mut slots, &mut scratch)?;
                }
                for i in 1..n - 1 {
                    let (u1, u2) = Self::jets(u, i, dx, false);
                    let vars = [t, xs[i], u[i], u1, u2, 0.0];
                    out[i] = self.f.eval(&vars, &mut slots, &mut scratch)?;
                }
            }
            None => {
                for i in 0..n {
                    let (u1, u2) = Self::jets(u, i, dx, true);
                    let vars = [t, xs[i], u[i], u1, u2, 0.0];
                    out[i] = self.f.eval(&vars, &mut slots, &mut scratch)?;
                }
            }
        }
        Ok(())
    }

    fn reference(&self, t: f64, xs: &[f64]) -> Option<Result<Vec<f64>, ExprError>> {
        let (u, _) = self.boundary.as_ref()?;
        let (mut slots, mut scratch) = (Vec::new(), Vec::new());
        Some(
            xs.iter()
                .map(|&x| u.eval(&[t, x, 0.0, 0.0, 0.0, 0.0], &mut slots, &mut scratch))
                .collect(),
        )
    }
}

/// Sample an expression in `t`, `x` on the grid nodes at time `t`.
pub fn sample_profile(u: &Expr, t: f64, xs: &[f64]) -> Result<Vec<f64>, PdeError> {
    let tape = Tape::new(u)?;
    let (mut slots, mut scratch) = (Vec::new(), Vec::new());
    Ok(xs
        .iter()
        .map(|&x| tape.eval(&[t, x, 0.0, 0.0, 0.0, 0.0], &mut slots, &mut scratch))
        .collect::<Result<_, _>>()?)
}

/// Method of lines: central differences in `x`, classical RK4 in `t`.
/// The step is shortened to divide the time window evenly; a step above
/// the stability bound of the current field is refused.
pub fn mol_evolve(
    eq: &EvolutionEquation,
    initial: &[f64],
    grid: &Grid,
    boundary: &Boundary,
) -> Result<FieldHistory, PdeError> {
    grid.validate()?;
    if initial.len() != grid.nodes {
        return Err(PdeError::Grid(format!(
            "initial profile has {} values for {} nodes",
            initial.len(),
            grid.nodes
        )));
    }
    let rhs = Rhs::new(eq, boundary)?;
    let xs = grid.xs();
    let dx = grid.dx();
    let span = grid.t1 - grid.t0;
    let per_output = ((span / grid.dt / grid.outputs as f64).ceil() as usize).max(1);
    let steps = per_output * grid.outputs;
    let dt = span / steps as f64;

    let mut u = initial.to_vec();
    let mut hist = FieldHistory {
        x: xs.clone(),
        times: vec![grid.t0],
        fields: vec![u.clone()],
        dt,
        steps: 0,
        boundary: boundary.name().to_string(),
        blow_up: false,
    };
    let n = u.len();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut stage = vec![0.0; n];
    for step in 0..steps {
        let t = grid.t0 + dt * step as f64;
        let d = match rhs.max_diffusivity(t, &xs, &u, dx) {
            Ok(d) => d,
            Err(_) => {
                hist.blow_up = true;
                break;
            }
        };
        let bound = STABILITY * dx * dx / d;
        if dt > bound * (1.0 + 1e-12) {
            return Err(PdeError::Stability { dt, bound });
        }
        let ok = (|| -> Result<(), ExprError> {
            rhs.eval(t, &xs, &u, dx, &mut k1)?;
            for i in 0..n {
                stage[i] = u[i] + 0.5 * dt * k1[i];
            }
            rhs.eval(t + 0.5 * dt, &xs, &stage, dx, &mut k2)?;
            for i in 0..n {
                stage[i] = u[i] + 0.5 * dt * k2[i];
            }
            rhs.eval(t + 0.5 * dt, &xs, &stage, dx, &mut k3)?;
            for i in 0..n {
                stage[i] = u[i] + dt * k3[i];
            }
            rhs.eval(t + dt, &xs, &stage, dx, &mut k4)?;
            Ok(())
        })();
        if ok.is_err() {
            hist.blow_up = true;
            break;
        }
        for i in 0..n {
            u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if let Some(Ok(r)) = rhs.reference(t + dt, &xs) {
            // pin boundary values exactly
            u[0] = r[0];
            u[n - 1] = r[n - 1];
        }
        hist.steps = step + 1;
        if u.iter().any(|v| !v.is_finite()) {
            hist.blow_up = true;
            break;
        }
        if (step + 1) % per_output == 0 {
            hist.times.push(t + dt);
            hist.fields.push(u.clone());
        }
    }
    Ok(hist)
}

/// Maximum deviation of a history's last state from a closed form.
pub fn max_deviation(hist: &FieldHistory, reference: &Expr) -> Result<f64, PdeError> {
    let (t, u) = hist.last();
    let r = sample_profile(reference, t, &hist.x)?;
    Ok(u.iter().zip(&r).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub times: Vec<f64>,
    /// `max |h|` over interior nodes at each recorded time.
    pub norms: Vec<f64>,
    #[serde(serialize_with = "ser_sig17")]
    pub initial: f64,
    #[serde(serialize_with = "ser_sig17")]
    pub growth: f64,
    #[serde(serialize_with = "ser_sig17")]
    pub threshold: f64,
    pub blow_up: bool,
    pub boundary: String,
    pub pass: bool,
}

impl DriftReport {
    pub fn max_norm(&self) -> f64 {
        self.norms.iter().fold(0.0, |m, v| m.max(*v))
    }
}

/// Discrete `max |h|` on nodes with a full five-point stencil.
fn discrete_constraint(tape: &Tape, t: f64, xs: &[f64], u: &[f64], dx: f64) -> f64 {
    let (mut slots, mut scratch) = (Vec::new(), Vec::new());
    let mut m = 0.0f64;
    for i in 2..u.len() - 2 {
        let u1 = (u[i + 1] - u[i - 1]) / (2.0 * dx);
        let u2 = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (dx * dx);
        let u3 = (u[i + 2] - 2.0 * u[i + 1] + 2.0 * u[i - 1] - u[i - 2]) / (2.0 * dx.powi(3));
        match tape.eval(&[t, xs[i], u[i], u1, u2, u3], &mut slots, &mut scratch) {
            Ok(v) => m = m.max(v.abs()),
            Err(_) => return f64::INFINITY,
        }
    }
    m
}

/// Evolve `initial` (an expression in `x`, optionally `t`) and follow the
/// constraint `h` along the discrete solution. With `reference` set, the
/// initial expression also supplies Dirichlet boundary values.
pub fn constraint_drift(
    eq: &EvolutionEquation,
    h: &Expr,
    initial: &Expr,
    reference: bool,
    grid: &Grid,
) -> Result<DriftReport, PdeError> {
    if h.max_jet_index().unwrap_or(0) > 3 {
        return Err(PdeError::Unsupported("constraint order above 3".into()));
    }
    let xs = grid.xs();
    let jets = jets_in_x(initial, 3);
    let bindings: BTreeMap<String, Expr> = jets
        .iter()
        .enumerate()
        .map(|(k, e)| (format!("u{k}"), e.clone()))
        .collect();
    let exact_h = expr::substitute(h, &bindings);
    let exact = sample_profile(&exact_h, grid.t0, &xs)?;
    let worst = exact.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if worst >= DRIFT_PRECONDITION {
        return Err(PdeError::Precondition(format!(
            "initial data has max |h| = {worst:e} >= {DRIFT_PRECONDITION:e}"
        )));
    }
    let profile = sample_profile(initial, grid.t0, &xs)?;
    let boundary = if reference {
        Boundary::Reference(initial.clone())
    } else {
        Boundary::Reflective
    };
    let hist = mol_evolve(eq, &profile, grid, &boundary)?;
    let tape = Tape::new(h)?;
    let dx = grid.dx();
    let norms: Vec<f64> = hist
        .times
        .iter()
        .zip(&hist.fields)
        .map(|(t, u)| discrete_constraint(&tape, *t, &xs, u, dx))
        .collect();
    let initial_norm = norms[0];
    let threshold = (DRIFT_GROWTH * initial_norm).max(DRIFT_FLOOR);
    let max = norms.iter().fold(0.0f64, |m, v| m.max(*v));
    let reached_end = (hist.times[hist.times.len() - 1] - grid.t1).abs() < 1e-9 * (1.0 + grid.t1.abs());
    Ok(DriftReport {
        growth: max / initial_norm.max(f64::MIN_POSITIVE),
        pass: !hist.blow_up && reached_end && max.is_finite() && max <= threshold,
        times: hist.times,
        norms,
        initial: initial_norm,
        threshold,
        blow_up: hist.blow_up,
        boundary: boundary.name().to_string(),
    })
}

/// Run a catalog compatibility case on its own grid, with a step at 90%
/// of the stability bound of the initial profile.
pub fn compat_drift(spec: &CompatSpec) -> Result<DriftReport, PdeError> {
    let case = spec
        .instantiate()
        .map_err(|e| PdeError::Precondition(e.to_string()))?;
    let mut grid = Grid::new(spec.x, spec.nodes, [0.0, spec.t1], 1.0)?;
    let profile = sample_profile(&case.initial, 0.0, &grid.xs())?;
    grid.dt = grid.stable_dt(&case.equation, &profile, 0.9)?;
    constraint_drift(&case.equation, &case.h, &case.initial, spec.reference, &grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    fn cfg() -> SampleConfig {
        SampleConfig::new(1, 100, 1e-8)
    }

    #[test]
    fn log_diffusion_closed_form() {
        let eq = EvolutionEquation::parse("u2/u0 - u1^2/u0^2 + 0.7*u0*ln(u0)").unwrap();
        let u = p("exp((0.3 + 0.5*x)*exp(0.7*t))");
        let rep = residual_exact(&u, &eq, &Window::default(), &cfg()).unwrap();
        assert!(rep.max_abs < 1e-9, "{rep:?}");
        let printed = p("2*exp(0.5*x*exp(0.7*t))");
        let rep = residual_exact(&printed, &eq, &Window::default(), &cfg()).unwrap();
        assert!(rep.max_abs > 1e-3);
        let unit = p("exp(0.5*x*exp(0.7*t))");
        assert!(residual_exact(&unit, &eq, &Window::default(), &cfg()).unwrap().pass);
    }

    #[test]
    fn power_source_closed_form_and_perturbation() {
        let eq = EvolutionEquation::parse("u0^2*u2 + 2*u0*u1^2 + 0.3*u0 + 0.2*u0^(-1)").unwrap();
        let u = p("(2*0.4*x*exp(2*0.3*t) + 0.4^2/0.3*exp(4*0.3*t) - 0.2/0.3)^(1/2)");
        let w = Window {
            t: [0.0, 0.5],
            x: [0.5, 1.5],
            y: None,
        };
        let rep = residual_exact(&u, &eq, &w, &cfg()).unwrap();
        assert!(rep.max_abs < 1e-9, "{rep:?}");
        let perturbed = Expr::mul(vec![u, p("1 + 0.01*x")]);
        let rep = residual_exact(&perturbed, &eq, &w, &cfg()).unwrap();
        assert!(rep.max_abs > 1e-3, "{rep:?}");
    }

    #[test]
    fn residuals_ignore_simplification() {
        let eq = EvolutionEquation::parse("u2/u0 - u1^2/u0^2 + 0.7*u0*ln(u0)").unwrap();
        let u = p("1*exp((0.3 + 0*t + 0.5*x)*exp(0.7*t)) + 0");
        let a = residual_exact(&u, &eq, &Window::default(), &cfg()).unwrap();
        let b = residual_exact(&expr::simplify_basic(&u), &eq, &Window::default(), &cfg()).unwrap();
        assert!((a.max_abs - b.max_abs).abs() < 1e-14);
    }

    #[test]
    fn travelling_wave_sign() {
        let w = Window::default().with_y([-1.0, 1.0]);
        let good = p("1 + 0.5*exp(x + 2*y + 5*t)");
        assert!(residual_2d(&good, FastDiffusion::VForm, &w, &cfg()).unwrap().max_abs < 1e-9);
        let bad = p("1 + 0.5*exp(x + 2*y - 5*t)");
        assert!(residual_2d(&bad, FastDiffusion::VForm, &w, &cfg()).unwrap().max_abs > 1e-3);
        let u = p("1/(1 + 0.5*exp(x + 2*y + 5*t))");
        assert!(residual_2d(&u, FastDiffusion::UForm, &w, &cfg()).unwrap().max_abs < 1e-9);
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn conformal_identity_and_square() {
        let base = p("1/(1 + 0.5*exp(x + y + 2*t))");
        let w = Window::default().with_y([-1.0, 1.0]);
        let ident = conformal_image(&base, &[c(0.0, 0.0), c(1.0, 0.0)], &w, &cfg()).unwrap();
        let direct = residual_2d(&base, FastDiffusion::UForm, &w, &cfg()).unwrap();
        assert_eq!(ident, direct);
        let away = Window {
            t: [0.0, 0.5],
            x: [0.5, 1.5],
            y: Some([0.5, 1.5]),
        };
        let sq = conformal_image(&base, &[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)], &away, &cfg()).unwrap();
        assert!(sq.max_abs < 1e-8, "{sq:?}");
        let cubic = [c(0.1, 0.0), c(0.0, 0.0), c(0.3, -0.2), c(0.5, 0.1)];
        let rep = conformal_image(&base, &cubic, &away, &cfg()).unwrap();
        assert!(rep.max_abs < 1e-8, "{rep:?}");
    }

    #[test]
    fn conformal_rejects_critical_points() {
        let base = p("1/(1 + 0.5*exp(x + y + 2*t))");
        let w = Window::default().with_y([-1.0, 1.0]);
        let err = conformal_image(&base, &[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)], &w, &cfg());
        assert!(matches!(err, Err(PdeError::CriticalPoint { .. })));
        // A'(z) = 3 (z - 0.2i)^2 has a root inside
        let coeffs = [c(0.0, 0.0), c(-0.12, 0.0), c(0.0, -0.6), c(1.0, 0.0)];
        let err = conformal_image(&base, &coeffs, &w, &cfg());
        assert!(matches!(err, Err(PdeError::CriticalPoint { .. })), "{err:?}");
    }

    #[test]
    fn durand_kerner_roots() {
        // (z - 1)(z + 2)(z - i)
        let coeffs = [c(0.0, 2.0), c(-2.0, -1.0), c(1.0, -1.0), c(1.0, 0.0)];
        let mut roots = polynomial_roots(&coeffs);
        roots.sort_by(|a, b| a.re.total_cmp(&b.re));
        let want = [c(-2.0, 0.0), c(0.0, 1.0), c(1.0, 0.0)];
        for (r, w) in roots.iter().zip(want) {
            assert!((r - w).norm() < 1e-12, "{roots:?}");
        }
        assert!(polynomial_roots(&[c(3.0, 0.0)]).is_empty());
    }

    #[test]
    fn constant_profile_is_an_equilibrium() {
        let eq = EvolutionEquation::parse("u0*u2 + u1^2").unwrap();
        let grid = Grid::new([0.0, 1.0], 41, [0.0, 0.2], 5e-5).unwrap();
        let hist = mol_evolve(&eq, &[1.5; 41], &grid, &Boundary::Reflective).unwrap();
        let (t, u) = hist.last();
        assert!((t - 0.2).abs() < 1e-12);
        assert!(u.iter().all(|v| (v - 1.5).abs() < 1e-12));
        assert!(!hist.blow_up);
    }

    #[test]
    fn unstable_step_is_refused() {
        let eq = EvolutionEquation::parse("u0*u2 + u1^2").unwrap();
        let grid = Grid::new([0.0, 1.0], 41, [0.0, 0.2], 1e-2).unwrap();
        let err = mol_evolve(&eq, &[1.5; 41], &grid, &Boundary::Reflective).unwrap_err();
        let PdeError::Stability { bound, .. } = err else {
            panic!("{err:?}")
        };
        let dx: f64 = 1.0 / 40.0;
        assert!((bound - 0.2 * dx * dx / 1.5).abs() < 1e-15);
        assert!(err.to_string().contains("stability bound"));
    }

    #[test]
    fn heat_equation_converges_at_second_order() {
        let eq = EvolutionEquation::parse("u2").unwrap();
        let exact = p("exp(-t)*sin(x) + 2");
        let mut errors = Vec::new();
        for nodes in [21, 41, 81] {
            let mut grid = Grid::new([0.0, 3.0], nodes, [0.0, 0.5], 1.0).unwrap();
            let init = sample_profile(&exact, 0.0, &grid.xs()).unwrap();
            grid.dt = grid.stable_dt(&eq, &init, 0.5).unwrap();
            let hist = mol_evolve(&eq, &init, &grid, &Boundary::Reference(exact.clone())).unwrap();
            errors.push(max_deviation(&hist, &exact).unwrap());
        }
        assert!(errors[0] / errors[1] > 3.5 && errors[1] / errors[2] > 3.5, "{errors:?}");
    }

    #[test]
    fn drift_precondition() {
        let eq = EvolutionEquation::parse("u0^2*u2 + 2*u0*u1^2").unwrap();
        let grid = Grid::new([0.0, 1.0], 41, [0.0, 0.01], 1e-5).unwrap();
        let err = constraint_drift(&eq, &p("u2"), &p("x^2 + 1"), false, &grid).unwrap_err();
        assert!(matches!(err, PdeError::Precondition(_)));
        let err = constraint_drift(&eq, &p("u4"), &p("x + 1"), false, &grid).unwrap_err();
        assert!(matches!(err, PdeError::Unsupported(_)));
    }
}
