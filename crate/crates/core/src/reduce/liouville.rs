//! The square-root diffusion equation `u_t = (u^(-1/2) u_x)_x + m u - 2 k sqrt(u)`
//! through the Liouville equation: closed-form `T(t)`, integrated `X(x)`,
//! the `(a1 + a2 e^(mt/2))^2` representation and the orthogonality
//! relation of the `k = 0` branch.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{integrate_rk4, linspace, OdeSystem, ReduceError, Trajectory};
use crate::expr::{self, CompiledExpr, EvalPoint, Expr};
use crate::sampling::{measure, ResidualReport, SampleConfig, ScaledResidual, Window};
use crate::util::ser_sig17;

/// Right-hand side of the square-root diffusion equation in jet variables.
pub const SQRT_DIFFUSION_RHS: &str = "u0^(-1/2)*u2 - 1/2*u0^(-3/2)*u1^2 + m*u0 - 2*k*u0^(1/2)";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LiouvilleParams {
    pub s: f64,
    pub m: f64,
    pub k: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

/// Form of the third-order equation for `X`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum XEquation {
    /// Left side `e^(-c3) sqrt(s m / (2 c1)) (c1 - c2 - X)`.
    #[default]
    Corrected,
    /// Without the `e^(-c3)` factor; exact only for `c3 = 0`.
    Printed,
}

fn p(s: &str) -> Expr {
    expr::parse(s).expect("static formula")
}

fn bind(e: &Expr, values: &[(&str, f64)]) -> Expr {
    let m: BTreeMap<String, f64> = values.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    expr::bind_numbers(e, &m)
}

impl LiouvilleParams {
    fn values(&self) -> [(&'static str, f64); 6] {
        [
            ("s", self.s),
            ("m", self.m),
            ("k", self.k),
            ("c1", self.c1),
            ("c2", self.c2),
            ("c3", self.c3),
        ]
    }

    /// `T(t) = c1 tanh(m t / 4 + c3) + c2`.
    pub fn t_closed_form(&self) -> Expr {
        bind(&p("c1*tanh(m*t/4 + c3) + c2"), &self.values())
    }

    /// System for `(X, X', X'')` in the independent variable `t`, which
    /// stands for `x` here.
    pub fn x_system(&self, form: XEquation) -> Result<OdeSystem, ReduceError> {
        let factor = match form {
            XEquation::Corrected => "exp(-c3)*(s*m/(2*c1))^(1/2)",
            XEquation::Printed => "(s*m/(2*c1))^(1/2)",
        };
        let x3 = format!(
            "X1^(1/2)*(3/2*X1^(-3/2)*X2^2 - 2*k*X1^(1/2) - {factor}*(c1 - c2 - X0))"
        );
        let rhs = vec![p("X1"), p("X2"), bind(&p(&x3), &self.values())];
        OdeSystem::new(vec!["X0".into(), "X1".into(), "X2".into()], rhs)
    }

    fn check(&self, t_range: [f64; 2]) -> Result<(), ReduceError> {
        if self.m == 0.0 {
            return Err(ReduceError::Precondition("m = 0".into()));
        }
        if !(self.c1 * self.m > 0.0) {
            return Err(ReduceError::Precondition("T' > 0 needs c1*m > 0".into()));
        }
        if !(self.s > 0.0) {
            return Err(ReduceError::Precondition("u > 0 needs s > 0".into()));
        }
        if !(t_range[1] > t_range[0]) {
            return Err(ReduceError::Interval {
                t0: t_range[0],
                t1: t_range[1],
            });
        }
        Ok(())
    }
}

/// Residual of `2 T''' T' - 3 T''^2 + m^2/4 T'^2 = 0` for the closed form.
pub fn t_equation_check(
    params: &LiouvilleParams,
    t_range: [f64; 2],
    config: &SampleConfig,
) -> Result<ResidualReport, ReduceError> {
    let t = params.t_closed_form();
    let d1 = expr::differentiate(&t, "t");
    let d2 = expr::differentiate(&d1, "t");
    let d3 = expr::differentiate(&d2, "t");
    let sq = |e: &Expr| Expr::pow(e.clone(), Expr::num(2.0));
    let scaled = ScaledResidual::from_terms(vec![
        (2.0, Expr::mul(vec![d3, d1.clone()])),
        (-3.0, sq(&d2)),
        (params.m * params.m / 4.0, sq(&d1)),
    ]);
    let window = Window {
        t: t_range,
        x: [0.0, 0.0],
        y: None,
    };
    Ok(measure(&scaled, config, |rng| window.sample(rng))?)
}

/// Residuals of `a1'' + m/2 a1^2 - k a1 = 0` and
/// `a2'' + m/2 a1 a2 - k a2 = 0` for profiles in `x`, sampled on `x_range`.
pub fn profile_pair_check(
    a1: &Expr,
    a2: &Expr,
    m: f64,
    k: f64,
    x_range: [f64; 2],
    config: &SampleConfig,
) -> Result<(ResidualReport, ResidualReport), ReduceError> {
    let dd = |e: &Expr| expr::differentiate(&expr::differentiate(e, "x"), "x");
    let first = ScaledResidual::from_terms(vec![
        (1.0, dd(a1)),
        (m / 2.0, Expr::pow(a1.clone(), Expr::num(2.0))),
        (-k, a1.clone()),
    ]);
    let second = ScaledResidual::from_terms(vec![
        (1.0, dd(a2)),
        (m / 2.0, Expr::mul(vec![a1.clone(), a2.clone()])),
        (-k, a2.clone()),
    ]);
    let window = Window {
        t: [0.0, 0.0],
        x: x_range,
        y: None,
    };
    Ok((
        measure(&first, config, |rng| window.sample(rng))?,
        measure(&second, config, |rng| window.sample(rng))?,
    ))
}

/// Residual of `u_tt = u_t^2 / (2u) + m u_t / 2` for `u = (a + b e^(mt/2))^2`.
pub fn square_identity_check(
    a: f64,
    b: f64,
    m: f64,
    t_range: [f64; 2],
    config: &SampleConfig,
) -> Result<ResidualReport, ReduceError> {
    let u = bind(&p("(a + b*exp(m*t/2))^2"), &[("a", a), ("b", b), ("m", m)]);
    let ut = expr::differentiate(&u, "t");
    let utt = expr::differentiate(&ut, "t");
    let scaled = ScaledResidual::from_terms(vec![
        (1.0, utt),
        (
            -1.0,
            Expr::div(Expr::pow(ut.clone(), Expr::num(2.0)), Expr::mul(vec![Expr::num(2.0), u])),
        ),
        (-m / 2.0, ut),
    ]);
    let window = Window {
        t: t_range,
        x: [0.0, 0.0],
        y: None,
    };
    Ok(measure(&scaled, config, |rng| window.sample(rng))?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiouvilleConfig {
    pub params: LiouvilleParams,
    pub form: XEquation,
    pub x_range: [f64; 2],
    /// `(X, X', X'')` at `x_range[0]`.
    pub x_initial: [f64; 3],
    pub t_range: [f64; 2],
    pub step: f64,
    /// Sample times on `t_range`.
    pub times: usize,
    /// Sample nodes on `x_range`.
    pub nodes: usize,
}

impl LiouvilleConfig {
    pub fn new(params: LiouvilleParams, x_initial: [f64; 3]) -> Self {
        LiouvilleConfig {
            params,
            form: XEquation::Corrected,
            x_range: [0.0, 1.0],
            x_initial,
            t_range: [0.0, 0.5],
            step: 1e-3,
            times: 20,
            nodes: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiouvilleReport {
    pub form: XEquation,
    #[serde(serialize_with = "ser_sig17")]
    pub residual_max: f64,
    #[serde(serialize_with = "ser_sig17")]
    pub tolerance: f64,
    pub points: usize,
    pub blow_up: bool,
    pub pass: bool,
    #[serde(skip)]
    pub trajectory: Trajectory,
}

/// Build `u = s (T + X)^2 / (2 T' X') e^(mt/2)`, integrate `X` and
/// evaluate the PDE residual on a `(t, x)` grid. `u_xx` uses `X'''` from
/// the `X` equation.
pub fn liouville_pipeline(config: &LiouvilleConfig) -> Result<LiouvilleReport, ReduceError> {
    let lp = &config.params;
    lp.check(config.t_range)?;
    if !(config.x_initial[1] > 0.0) {
        return Err(ReduceError::Precondition("X' > 0 at the initial point".into()));
    }
    if config.times < 2 || config.nodes < 2 {
        return Err(ReduceError::Precondition("need at least 2 times and 2 nodes".into()));
    }
    let system = lp.x_system(config.form)?;
    let traj = integrate_rk4(
        &system,
        &config.x_initial,
        config.x_range[0],
        config.x_range[1],
        config.step,
    )?;
    if let Some(s) = traj.states.iter().find(|s| !(s[1] > 0.0)) {
        return Err(ReduceError::Domain(format!("X' = {} <= 0", s[1])));
    }

    let t = lp.t_closed_form();
    let tp = expr::differentiate(&t, "t");
    let u = Expr::mul(vec![
        Expr::num(lp.s / 2.0),
        Expr::pow(Expr::add(vec![t, Expr::sym("X0")]), Expr::num(2.0)),
        Expr::pow(Expr::mul(vec![tp, Expr::sym("X1")]), Expr::num(-1.0)),
        bind(&p("exp(m*t/2)"), &lp.values()),
    ]);
    let x3 = system.rhs()[2].clone();
    let d_x = |e: &Expr| {
        expr::simplify_basic(&Expr::add(vec![
            Expr::mul(vec![Expr::sym("X1"), expr::differentiate(e, "X0")]),
            Expr::mul(vec![Expr::sym("X2"), expr::differentiate(e, "X1")]),
            Expr::mul(vec![x3.clone(), expr::differentiate(e, "X2")]),
        ]))
    };
    let u1 = d_x(&u);
    let u2 = d_x(&u1);
    let rhs = bind(&p(SQRT_DIFFUSION_RHS), &lp.values());
    let jets: BTreeMap<String, Expr> =
        [("u0", u.clone()), ("u1", u1), ("u2", u2)].map(|(k, v)| (k.to_string(), v)).into();
    let mut roots = vec![expr::differentiate(&u, "t")];
    for (s, term) in rhs.additive_terms() {
        roots.push(Expr::mul(vec![Expr::num(-s), expr::substitute(&term, &jets)]));
    }
    let tape = CompiledExpr::new_multi(&roots);
    let u_tape = CompiledExpr::new(&u);

    let ts = linspace(config.t_range[0], config.t_range[1], config.times);
    let xs = linspace(traj.t0(), traj.t_end(), config.nodes);
    let mut worst = 0.0f64;
    let mut points = 0;
    for &x in &xs {
        let state = traj.state_at(&system, x)?;
        for &t in &ts {
            let pt = EvalPoint::new()
                .with("t", t)
                .with("X0", state[0])
                .with("X1", state[1])
                .with("X2", state[2]);
            let uv = u_tape.eval(&pt)?;
            if !(uv > 0.0) {
                return Err(ReduceError::Domain(format!("u = {uv} at t = {t}, x = {x}")));
            }
            let terms = tape.eval_many(&pt)?;
            let scale = terms.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            worst = worst.max(terms.iter().sum::<f64>().abs() / (1.0 + scale));
            points += 1;
        }
    }
    let tolerance = super::RESIDUAL_TOL;
    Ok(LiouvilleReport {
        form: config.form,
        residual_max: worst,
        tolerance,
        points,
        blow_up: traj.blow_up,
        pass: !traj.blow_up && worst <= tolerance,
        trajectory: traj,
    })
}

/// Form of the `T` equation of the orthogonality branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TEquation {
    /// `(T')^3 = A (-c3 T^3 + c2 T^2 - c1 T + c0)^2`.
    #[default]
    Corrected,
    /// `-c1 X` in place of `-c1 T`, with `X` frozen at its initial value.
    Printed,
}

/// Sign of the last term of `R(X)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RSign {
    /// `R = B X^2 + 8 X'' X'^(-1/2) X - 8 X'^(3/2)`.
    #[default]
    Single,
    /// Double minus read as `+ 8 X'^(3/2)`.
    Printed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrthogonalityConfig {
    pub m: f64,
    /// Must be negative.
    pub r: f64,
    /// `[c0, c1, c2, c3]`.
    pub c: [f64; 4],
    pub x_range: [f64; 2],
    pub x_initial: f64,
    pub t_range: [f64; 2],
    pub t_initial: f64,
    pub step: f64,
    pub t_equation: TEquation,
    pub r_sign: RSign,
    /// Grid points per axis.
    pub grid: usize,
}

impl OrthogonalityConfig {
    pub fn new(m: f64, r: f64, c: [f64; 4], x_initial: f64, t_initial: f64) -> Self {
        OrthogonalityConfig {
            m,
            r,
            c,
            x_range: [0.0, 0.5],
            x_initial,
            t_range: [0.0, 0.5],
            t_initial,
            step: 1e-3,
            t_equation: TEquation::Corrected,
            r_sign: RSign::Single,
            grid: 10,
        }
    }
}

/// Magnitudes of `C(T) X + D(X) T + B(X) T^2 + Q(T) + R(X)`. Diagnostic:
/// no pass/fail contract.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrthogonalityReport {
    pub t_equation: TEquation,
    pub r_sign: RSign,
    /// `max |(X')^3 - P(X)^2|` along the `X` trajectory.
    #[serde(serialize_with = "ser_sig17")]
    pub consistency: f64,
    #[serde(serialize_with = "ser_sig17")]
    pub max_abs: f64,
    #[serde(serialize_with = "ser_sig17")]
    pub rms: f64,
    pub points: usize,
    pub blow_up: bool,
}

/// `g = (P^2)^(1/3)` and its first two derivatives in the variable `v`.
fn cube_root_square(poly: Expr, v: &str) -> [Expr; 3] {
    let g = Expr::pow(Expr::pow(poly, Expr::num(2.0)), Expr::num(1.0 / 3.0));
    let g1 = expr::differentiate(&g, v);
    let g2 = expr::differentiate(&g1, v);
    [g, g1, g2]
}

pub fn orthogonality_check(config: &OrthogonalityConfig) -> Result<OrthogonalityReport, ReduceError> {
    let [c0, c1, c2, c3] = config.c;
    if !(config.r < 0.0) {
        return Err(ReduceError::Precondition("r < 0 required".into()));
    }
    let cubic_x = bind(
        &p("c3*X^3 + c2*X^2 + c1*X + c0"),
        &[("c0", c0), ("c1", c1), ("c2", c2), ("c3", c3)],
    );
    let a = (-2.0 * config.r).cbrt();
    let t_src = match config.t_equation {
        TEquation::Corrected => "-c3*T^3 + c2*T^2 - c1*T + c0".to_string(),
        TEquation::Printed => format!("-c3*T^3 + c2*T^2 - c1*({}) + c0", config.x_initial),
    };
    let cubic_t = bind(&p(&t_src), &[("c0", c0), ("c1", c1), ("c2", c2), ("c3", c3)]);

    let [gx, gx1, gx2] = cube_root_square(cubic_x.clone(), "X");
    let [gt, gt1, _] = cube_root_square(cubic_t, "T");
    let gt = Expr::mul(vec![Expr::num(a.cbrt()), gt]);
    let gt1 = Expr::mul(vec![Expr::num(a.cbrt()), gt1]);

    let rename = |e: &Expr, from: &str| {
        let mut b = BTreeMap::new();
        b.insert(from.to_string(), Expr::sym("y"));
        expr::substitute(e, &b)
    };
    for (g, name, v) in [(&gx, "X", config.x_initial), (&gt, "T", config.t_initial)] {
        match g.evaluate(&EvalPoint::new().with(name, v)) {
            Ok(d) if d > 0.0 => {}
            _ => {
                return Err(ReduceError::Precondition(format!(
                    "{name}' > 0 fails at {name} = {v}"
                )))
            }
        }
    }
    let x_sys = OdeSystem::new(vec!["y".into()], vec![rename(&gx, "X")])?;
    let t_sys = OdeSystem::new(vec!["y".into()], vec![rename(&gt, "T")])?;
    let x_traj = integrate_rk4(&x_sys, &[config.x_initial], config.x_range[0], config.x_range[1], config.step)?;
    let t_traj = integrate_rk4(&t_sys, &[config.t_initial], config.t_range[0], config.t_range[1], config.step)?;

    let eval = |e: &Expr, name: &str, v: f64| -> Result<f64, ReduceError> {
        Ok(e.evaluate(&EvalPoint::new().with(name, v))?)
    };
    let mut consistency = 0.0f64;
    for s in &x_traj.states {
        let xp = eval(&gx, "X", s[0])?;
        if !(xp > 0.0) {
            return Err(ReduceError::Precondition(format!("X' = {xp} <= 0 at X = {}", s[0])));
        }
        let pv = eval(&cubic_x, "X", s[0])?;
        consistency = consistency.max((xp.powi(3) - pv * pv).abs());
    }
    for s in &t_traj.states {
        let tp = eval(&gt, "T", s[0])?;
        if !(tp > 0.0) {
            return Err(ReduceError::Precondition(format!("T' = {tp} <= 0 at T = {}", s[0])));
        }
    }

    let k = (-2.0 / config.r).sqrt();
    let mut sum_sq = 0.0;
    let mut max_abs = 0.0f64;
    let mut points = 0;
    let n = config.grid.max(2);
    for &x in &linspace(x_traj.t0(), x_traj.t_end(), n) {
        let xv = x_traj.state_at(&x_sys, x)?[0];
        let x1 = eval(&gx, "X", xv)?;
        let g1 = eval(&gx1, "X", xv)?;
        let x2 = g1 * x1;
        let x3 = (eval(&gx2, "X", xv)? * x1 + g1 * g1) * x1;
        let b = x2 * x2 * x1.powf(-2.5) - 2.0 * x3 * x1.powf(-1.5);
        let d = 2.0 * xv * b + 8.0 * x2 * x1.powf(-0.5);
        let last = match config.r_sign {
            RSign::Single => -8.0 * x1.powf(1.5),
            RSign::Printed => 8.0 * x1.powf(1.5),
        };
        let r = b * xv * xv + 8.0 * x2 * x1.powf(-0.5) * xv + last;
        for &t in &linspace(t_traj.t0(), t_traj.t_end(), n) {
            let tv = t_traj.state_at(&t_sys, t)?[0];
            let t1 = eval(&gt, "T", tv)?;
            let t2 = eval(&gt1, "T", tv)? * t1;
            let e = k * (0.75 * config.m * t).exp();
            let c = e * (config.m * t1.sqrt() + 2.0 * t2 / t1.sqrt());
            let q = e * (config.m * t1.sqrt() * tv + 2.0 * t2 * tv / t1.sqrt() - 4.0 * t1.powf(1.5));
            let v = c * xv + d * tv + b * tv * tv + q + r;
            max_abs = max_abs.max(v.abs());
            sum_sq += v * v;
            points += 1;
        }
    }
    Ok(OrthogonalityReport {
        t_equation: config.t_equation,
        r_sign: config.r_sign,
        consistency,
        max_abs,
        rms: (sum_sq / points as f64).sqrt(),
        points,
        blow_up: x_traj.blow_up || t_traj.blow_up,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(c3: f64) -> LiouvilleParams {
        LiouvilleParams {
            s: 1.3,
            m: 2.0,
            k: 0.5,
            c1: 0.8,
            c2: 0.2,
            c3,
        }
    }

    #[test]
    fn t_closed_form_solves_its_equation() {
        let rep = t_equation_check(&params(0.3), [0.0, 1.0], &SampleConfig::new(2, 50, 1e-9)).unwrap();
        assert!(rep.pass && rep.max_abs < 1e-9, "{rep:?}");
    }

    #[test]
    fn pipeline_corrected_and_printed() {
        let mut cfg = LiouvilleConfig::new(params(0.3), [0.1, 1.0, 0.0]);
        cfg.x_range = [0.0, 0.5];
        let rep = liouville_pipeline(&cfg).unwrap();
        assert!(rep.pass, "{rep:?}");
        cfg.form = XEquation::Printed;
        let rep = liouville_pipeline(&cfg).unwrap();
        assert!(!rep.pass && rep.residual_max > 1e-3, "{rep:?}");
        cfg.params.c3 = 0.0;
        assert!(liouville_pipeline(&cfg).unwrap().pass);
    }

    #[test]
    fn pipeline_preconditions() {
        let mut cfg = LiouvilleConfig::new(params(0.0), [0.1, 1.0, 0.0]);
        cfg.params.m = 0.0;
        assert!(matches!(liouville_pipeline(&cfg), Err(ReduceError::Precondition(_))));
        let mut cfg = LiouvilleConfig::new(params(0.0), [0.1, -1.0, 0.0]);
        assert!(matches!(liouville_pipeline(&cfg), Err(ReduceError::Precondition(_))));
        cfg.x_initial[1] = 1.0;
        cfg.params.c1 = -0.8;
        assert!(matches!(liouville_pipeline(&cfg), Err(ReduceError::Precondition(_))));
    }

    #[test]
    fn square_identity() {
        let rep = square_identity_check(0.7, -0.3, 1.5, [0.0, 1.0], &SampleConfig::new(4, 100, 1e-10)).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn orthogonality_diagnostic() {
        let cfg = OrthogonalityConfig::new(1.0, -0.5, [1.0, 0.5, 0.2, 0.1], 0.3, 0.4);
        let rep = orthogonality_check(&cfg).unwrap();
        assert!(rep.consistency < 1e-8, "{rep:?}");
        assert_eq!(rep.points, 100);
        assert!(rep.max_abs.is_finite());
        // X = const: P vanishes at the initial value
        let flat = OrthogonalityConfig::new(1.0, -0.5, [0.0, 1.0, 0.0, 0.0], 0.0, 0.4);
        assert!(matches!(orthogonality_check(&flat), Err(ReduceError::Precondition(_))));
        let mut cfg = cfg;
        cfg.r = 0.5;
        assert!(orthogonality_check(&cfg).is_err());
    }
}
