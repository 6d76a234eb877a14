//! Representations with time-dependent coefficients: coefficient ODE
//! systems, fixed-step RK4 and assembly of PDE solutions.

mod liouville;

pub use liouville::*;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::catalog::{self, Catalog, CatalogError, Pde, Predicate, RepresentationSpec, Window};
use crate::expr::{self, CompiledExpr, EvalPoint, Expr, ExprError};
use crate::jet::EvolutionEquation;
use crate::pde::{self, FastDiffusion};
use crate::sampling::SampleError;
use crate::util::{ser_opt_sig17, ser_sig17};

pub const ORACLE_TOL: f64 = 1e-6;
pub const RESIDUAL_TOL: f64 = 1e-8;
pub const CONSTRAINT_TOL: f64 = 1e-7;
pub const INVARIANT_TOL: f64 = 1e-8;
/// Nodes per axis of the verification grid.
pub const GRID: usize = 20;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReduceError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error("`{0}` has no representation")]
    NotReducible(String),
    #[error("step must be positive and finite, got {0}")]
    Step(f64),
    #[error("need t1 > t0, got [{t0}, {t1}]")]
    Interval { t0: f64, t1: f64 },
    #[error("expected {expected} initial values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite initial value {0}")]
    Initial(f64),
    #[error("t = {t} outside trajectory range [{t0}, {t1}]")]
    OutOfRange { t: f64, t0: f64, t1: f64 },
    #[error("domain violation: {0}")]
    Domain(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// Autonomous or time-dependent system `c_i' = f_i(t, c)`.
#[derive(Debug, Clone)]
pub struct OdeSystem {
    names: Vec<String>,
    rhs: Vec<Expr>,
    tape: CompiledExpr,
    /// Tape symbol -> state slot, where slot 0 is `t`.
    map: Vec<usize>,
}

impl OdeSystem {
    /// Every free symbol of `rhs` must be `t` or one of `names`.
    pub fn new(names: Vec<String>, rhs: Vec<Expr>) -> Result<Self, ReduceError> {
        if names.len() != rhs.len() {
            return Err(ReduceError::Dimension {
                expected: names.len(),
                got: rhs.len(),
            });
        }
        let tape = CompiledExpr::new_multi(&rhs);
        let map = tape
            .symbols()
            .iter()
            .map(|s| {
                if s.name() == "t" {
                    return Ok(0);
                }
                names
                    .iter()
                    .position(|n| n == s.name())
                    .map(|i| i + 1)
                    .ok_or_else(|| ExprError::Unbound(s.name().to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(OdeSystem {
            names,
            rhs,
            tape,
            map,
        })
    }

    pub fn parse(names: &[&str], rhs: &[&str]) -> Result<Self, ReduceError> {
        let rhs = rhs.iter().map(|s| expr::parse(s)).collect::<Result<Vec<_>, _>>()?;
        Self::new(names.iter().map(|s| s.to_string()).collect(), rhs)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rhs(&self) -> &[Expr] {
        &self.rhs
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn eval(&self, t: f64, state: &[f64]) -> Result<Vec<f64>, ExprError> {
        let slots: Vec<f64> = self
            .map
            .iter()
            .map(|&i| if i == 0 { t } else { state[i - 1] })
            .collect();
        self.tape.eval_slots(&slots)
    }

    fn rk4_step(&self, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>, ExprError> {
        let axpy = |a: &[f64], k: &[f64], s: f64| -> Vec<f64> {
            a.iter().zip(k).map(|(a, k)| a + s * k).collect()
        };
        let k1 = self.eval(t, y)?;
        let k2 = self.eval(t + 0.5 * h, &axpy(y, &k1, 0.5 * h))?;
        let k3 = self.eval(t + 0.5 * h, &axpy(y, &k2, 0.5 * h))?;
        let k4 = self.eval(t + h, &axpy(y, &k3, h))?;
        Ok((0..y.len())
            .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect())
    }
}

/// Coefficient values on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub names: Vec<String>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub step: f64,
    pub method: &'static str,
    /// Integration stopped at a non-finite state or an evaluation error.
    pub blow_up: bool,
}

impl Trajectory {
    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn last(&self) -> &[f64] {
        &self.states[self.states.len() - 1]
    }

    /// Rows `t,c1,...,cm`.
    pub fn to_csv(&self) -> String {
        let mut out = format!("t,{}\n", self.names.join(","));
        for (t, s) in self.times.iter().zip(&self.states) {
            out.push_str(&format!("{t:.17e}"));
            for v in s {
                out.push_str(&format!(",{v:.17e}"));
            }
            out.push('\n');
        }
        out
    }

    /// State at `t`: a stored node, or one partial RK4 step from the node
    /// before it.
    pub fn state_at(&self, system: &OdeSystem, t: f64) -> Result<Vec<f64>, ReduceError> {
        let (t0, t1) = (self.t0(), self.t_end());
        let tol = 1e-12 * (1.0 + t.abs());
        if t < t0 - tol || t > t1 + tol {
            return Err(ReduceError::OutOfRange { t, t0, t1 });
        }
        let pos = (t - t0) / self.step;
        let near = pos.round();
        if (pos - near).abs() * self.step <= tol {
            return Ok(self.states[(near as usize).min(self.states.len() - 1)].clone());
        }
        let i = (pos.floor() as usize).min(self.states.len() - 1);
        Ok(system.rk4_step(self.times[i], &self.states[i], t - self.times[i])?)
    }
}

/// Classical fixed-step RK4 from `t0` to `t1`. The step is shortened so
/// the nodes divide the interval evenly.
pub fn integrate_rk4(
    system: &OdeSystem,
    initial: &[f64],
    t0: f64,
    t1: f64,
    step: f64,
) -> Result<Trajectory, ReduceError> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(ReduceError::Step(step));
    }
    if !(t1 > t0) {
        return Err(ReduceError::Interval { t0, t1 });
    }
    if initial.len() != system.dim() {
        return Err(ReduceError::Dimension {
            expected: system.dim(),
            got: initial.len(),
        });
    }
    if let Some(v) = initial.iter().find(|v| !v.is_finite()) {
        return Err(ReduceError::Initial(*v));
    }
    let n = (((t1 - t0) / step) - 1e-9).ceil().max(1.0) as usize;
    let h = (t1 - t0) / n as f64;
    let mut traj = Trajectory {
        names: system.names.clone(),
        times: vec![t0],
        states: vec![initial.to_vec()],
        step: h,
        method: "rk4",
        blow_up: false,
    };
    for i in 0..n {
        let t = t0 + h * i as f64;
        match system.rk4_step(t, traj.last(), h) {
            Ok(y) if y.iter().all(|v| v.is_finite()) => {
                traj.times.push(if i + 1 == n { t1 } else { t0 + h * (i + 1) as f64 });
                traj.states.push(y);
            }
            _ => {
                traj.blow_up = true;
                break;
            }
        }
    }
    Ok(traj)
}

/// A catalog representation with numeric parameters.
#[derive(Debug, Clone)]
pub struct Representation {
    pub id: String,
    pub constraint: String,
    pub ansatz: Expr,
    pub system: OdeSystem,
    pub pde: Pde,
    pub equation: Option<EvolutionEquation>,
    pub h: Option<Expr>,
    pub invariant: Option<Expr>,
    pub params: EvalPoint,
    pub t0: f64,
    pub initial: Vec<f64>,
    pub oracle: Option<String>,
    pub window: Window,
    pub provenance: String,
}

impl Representation {
    pub fn coefficients(&self) -> &[String] {
        self.system.names()
    }

    fn from_spec(spec: &RepresentationSpec, params: &EvalPoint) -> Result<Self, ReduceError> {
        let id = &spec.id;
        let mut p = EvalPoint::from(spec.params.clone());
        p.extend(params);
        let bind = |src: &str| -> Result<Expr, ReduceError> {
            Ok(expr::bind_numbers(&expr::parse(src)?, p.as_map()))
        };
        let odes = spec.odes.iter().map(|s| bind(s)).collect::<Result<Vec<_>, _>>()?;
        let system = OdeSystem::new(spec.coefficients.clone(), odes)?;
        let mut at_t0 = p.clone();
        at_t0.set("t", spec.t0);
        let initial = spec
            .initial
            .iter()
            .map(|s| catalog::instantiate_expr(id, s, &at_t0).map_err(ReduceError::from))
            .map(|e| e.and_then(|e| Ok(e.evaluate(&EvalPoint::new())?)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Representation {
            id: id.clone(),
            constraint: spec.constraint.clone(),
            ansatz: bind(&spec.ansatz)?,
            equation: catalog::evolution(id, &spec.pde, &p)?,
            pde: spec.pde.clone(),
            h: spec.h.as_deref().map(bind).transpose()?,
            invariant: spec.invariant.as_deref().map(bind).transpose()?,
            system,
            params: p,
            t0: spec.t0,
            initial,
            oracle: spec.oracle.clone(),
            window: spec.window.clone(),
            provenance: spec.provenance.clone(),
        })
    }

    pub fn integrate(&self, t1: f64, step: f64) -> Result<Trajectory, ReduceError> {
        integrate_rk4(&self.system, &self.initial, self.t0, t1, step)
    }

    fn two_dimensional(&self) -> bool {
        matches!(self.pde, Pde::VForm | Pde::UForm | Pde::Conformal { .. })
    }
}

/// The representation for a constraint id, one of its aliases or a
/// representation id. Where several branches exist, the first one whose
/// selector holds for the merged parameters wins.
pub fn representation_for(
    catalog: &Catalog,
    id: &str,
    params: &EvalPoint,
) -> Result<Representation, ReduceError> {
    let candidates: Vec<_> = catalog
        .list_representations()
        .into_iter()
        .filter(|r| r.id == id || r.constraint == id || r.aliases.iter().any(|a| a == id))
        .collect();
    if candidates.is_empty() {
        return Err(match catalog.get(id) {
            Some(_) => ReduceError::NotReducible(id.to_string()),
            None => CatalogError::UnknownId(id.to_string()).into(),
        });
    }
    for spec in candidates {
        let mut p = EvalPoint::from(spec.params.clone());
        p.extend(params);
        let selected = match &spec.when {
            Some(w) => Predicate::parse(w)?.holds(&p)?,
            None => true,
        };
        if selected {
            return Representation::from_spec(spec, params);
        }
    }
    Err(ReduceError::NotReducible(format!(
        "{id}: no branch matches the given parameters"
    )))
}

/// Symbolic pieces of an assembled solution, in `t`, `x`, `y` and the
/// coefficient symbols.
struct Assembly {
    u: CompiledExpr,
    ut: CompiledExpr,
    residual: CompiledExpr,
    constraint: Option<CompiledExpr>,
}

/// Jet values of an assembled solution at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Jets {
    pub u: f64,
    pub ux: f64,
    pub uxx: f64,
    pub ut: f64,
}

/// `u(t, x[, y])` from a representation and a trajectory of its
/// coefficients. `u_t` follows the chain rule through the ODEs.
pub struct AssembledSolution<'a> {
    rep: &'a Representation,
    traj: &'a Trajectory,
    jets: CompiledExpr,
    asm: Assembly,
}

fn chain_rule_t(rep: &Representation) -> Expr {
    let mut terms = vec![expr::differentiate(&rep.ansatz, "t")];
    for (name, rhs) in rep.coefficients().iter().zip(rep.system.rhs()) {
        terms.push(Expr::mul(vec![expr::differentiate(&rep.ansatz, name), rhs.clone()]));
    }
    expr::simplify_basic(&Expr::add(terms))
}

fn scaled(terms: &[(f64, Expr)]) -> Vec<Expr> {
    terms
        .iter()
        .map(|(s, e)| Expr::mul(vec![Expr::num(*s), e.clone()]))
        .collect()
}

pub fn assemble_solution<'a>(
    rep: &'a Representation,
    traj: &'a Trajectory,
) -> Result<AssembledSolution<'a>, ReduceError> {
    if traj.names != rep.coefficients() {
        return Err(ReduceError::Dimension {
            expected: rep.coefficients().len(),
            got: traj.names.len(),
        });
    }
    let ut = chain_rule_t(rep);
    let mut terms = match (&rep.pde, &rep.equation) {
        (Pde::Evolution { .. }, Some(eq)) => pde::residual_terms_1d(&rep.ansatz, eq),
        (Pde::VForm, _) => pde::residual_terms_2d(&rep.ansatz, FastDiffusion::VForm),
        (Pde::UForm, _) => pde::residual_terms_2d(&rep.ansatz, FastDiffusion::UForm),
        _ => return Err(ReduceError::NotReducible(format!("{}: unsupported equation", rep.id))),
    };
    terms[0].1 = ut.clone();
    let constraint = rep.h.as_ref().map(|h| {
        let order = h.max_jet_index().unwrap_or(0);
        let mut bind = BTreeMap::new();
        let mut d = rep.ansatz.clone();
        for k in 0..=order {
            bind.insert(format!("u{k}"), d.clone());
            d = expr::differentiate(&d, "x");
        }
        CompiledExpr::new(&expr::substitute(h, &bind))
    });
    let ux = expr::differentiate(&rep.ansatz, "x");
    let uxx = expr::differentiate(&ux, "x");
    Ok(AssembledSolution {
        rep,
        traj,
        jets: CompiledExpr::new_multi(&[rep.ansatz.clone(), ux, uxx, ut.clone()]),
        asm: Assembly {
            u: CompiledExpr::new(&rep.ansatz),
            ut: CompiledExpr::new(&ut),
            residual: CompiledExpr::new_multi(&scaled(&terms)),
            constraint,
        },
    })
}

impl AssembledSolution<'_> {
    fn point(&self, t: f64, x: f64, y: f64) -> Result<EvalPoint, ReduceError> {
        let state = self.traj.state_at(&self.rep.system, t)?;
        let mut p = EvalPoint::new().with("t", t).with("x", x).with("y", y);
        for (n, v) in self.rep.coefficients().iter().zip(state) {
            p.set(n, v);
        }
        Ok(p)
    }

    fn checked(&self, r: Result<f64, ExprError>, t: f64, x: f64) -> Result<f64, ReduceError> {
        match r {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(v) => Err(ReduceError::Domain(format!("u = {v} at t = {t}, x = {x}"))),
            Err(e) => Err(ReduceError::Domain(format!("{e} at t = {t}, x = {x}"))),
        }
    }

    pub fn u(&self, t: f64, x: f64, y: f64) -> Result<f64, ReduceError> {
        let p = self.point(t, x, y)?;
        self.checked(self.asm.u.eval(&p), t, x)
    }

    pub fn u_t(&self, t: f64, x: f64, y: f64) -> Result<f64, ReduceError> {
        let p = self.point(t, x, y)?;
        self.checked(self.asm.ut.eval(&p), t, x)
    }

    pub fn jets(&self, t: f64, x: f64, y: f64) -> Result<Jets, ReduceError> {
        let p = self.point(t, x, y)?;
        let v = self
            .jets
            .eval_many(&p)
            .map_err(|e| ReduceError::Domain(format!("{e} at t = {t}, x = {x}")))?;
        Ok(Jets {
            u: v[0],
            ux: v[1],
            uxx: v[2],
            ut: v[3],
        })
    }

    /// Relative PDE residual `|sum| / (1 + max |term|)`.
    pub fn residual(&self, t: f64, x: f64, y: f64) -> Result<f64, ReduceError> {
        let p = self.point(t, x, y)?;
        let terms = self
            .asm
            .residual
            .eval_many(&p)
            .map_err(|e| ReduceError::Domain(format!("{e} at t = {t}, x = {x}")))?;
        let sum: f64 = terms.iter().sum();
        let scale = terms.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(sum.abs() / (1.0 + scale))
    }

    /// `|h|` on the assembled jets.
    pub fn constraint(&self, t: f64, x: f64, y: f64) -> Result<Option<f64>, ReduceError> {
        let Some(c) = &self.asm.constraint else {
            return Ok(None);
        };
        let p = self.point(t, x, y)?;
        Ok(Some(self.checked(c.eval(&p), t, x)?.abs()))
    }
}

/// Outcome of integrating and verifying one representation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionReport {
    pub id: String,
    pub constraint: String,
    pub oracle: Option<String>,
    #[serde(serialize_with = "ser_opt_sig17")]
    pub oracle_max_abs: Option<f64>,
    #[serde(serialize_with = "ser_sig17")]
    pub residual_max: f64,
    #[serde(serialize_with = "ser_sig17")]
    pub residual_rms: f64,
    #[serde(serialize_with = "ser_opt_sig17")]
    pub constraint_max_abs: Option<f64>,
    #[serde(serialize_with = "ser_opt_sig17")]
    pub invariant_drift: Option<f64>,
    pub points: usize,
    pub steps: usize,
    pub blow_up: bool,
    pub pass: bool,
}


fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Relative drift `max |I(t) / I(t0) - 1|` of a first integral.
pub fn invariant_drift(
    invariant: &Expr,
    traj: &Trajectory,
) -> Result<f64, ReduceError> {
    let tape = CompiledExpr::new(invariant);
    let at = |i: usize| -> Result<f64, ReduceError> {
        let mut p = EvalPoint::new().with("t", traj.times[i]);
        for (n, v) in traj.names.iter().zip(&traj.states[i]) {
            p.set(n, *v);
        }
        Ok(tape.eval(&p)?)
    };
    let i0 = at(0)?;
    if i0 == 0.0 {
        return Err(ReduceError::Precondition("first integral vanishes initially".into()));
    }
    let mut worst = 0.0f64;
    for i in 0..traj.times.len() {
        worst = worst.max((at(i)? / i0 - 1.0).abs());
    }
    Ok(worst)
}

/// Integrate a representation over its window and check the assembled
/// solution on a grid: PDE residual, generating constraint, first
/// integral and closed-form oracle. `t1` defaults to the end of the
/// representation's window.
pub fn verify_representation(
    catalog: &Catalog,
    rep: &Representation,
    t1: Option<f64>,
    step: f64,
) -> Result<ReductionReport, ReduceError> {
    let t1 = t1.unwrap_or(rep.window.t[1]);
    let traj = rep.integrate(t1, step)?;
    let asm = assemble_solution(rep, &traj)?;
    let oracle = match &rep.oracle {
        Some(id) => {
            let fam = catalog.solution(id)?;
            Some(CompiledExpr::new(&fam.instantiate(&rep.params)?.u))
        }
        None => None,
    };
    let ts = linspace(rep.window.t[0].max(rep.t0).min(traj.t_end()), traj.t_end(), GRID);
    let xs = linspace(rep.window.x[0], rep.window.x[1], GRID);
    let ys = match (rep.two_dimensional(), rep.window.y) {
        (true, Some([a, b])) => linspace(a, b, 3),
        (true, None) => vec![-1.0, 0.0, 1.0],
        (false, _) => vec![0.0],
    };
    let (mut residual, mut worst_h, mut worst_o, mut points) = (0.0f64, 0.0f64, 0.0f64, 0);
    let mut sum_sq = 0.0;
    for &t in &ts {
        for &x in &xs {
            for &y in &ys {
                points += 1;
                let r = asm.residual(t, x, y)?;
                residual = residual.max(r);
                sum_sq += r * r;
                if let Some(h) = asm.constraint(t, x, y)? {
                    worst_h = worst_h.max(h);
                }
                if let Some(o) = &oracle {
                    let p = EvalPoint::new().with("t", t).with("x", x).with("y", y);
                    worst_o = worst_o.max((asm.u(t, x, y)? - o.eval(&p)?).abs());
                }
            }
        }
    }
    let invariant_drift = rep
        .invariant
        .as_ref()
        .map(|inv| invariant_drift(inv, &traj))
        .transpose()?;
    let constraint_max_abs = rep.h.as_ref().map(|_| worst_h);
    let oracle_max_abs = oracle.as_ref().map(|_| worst_o);
    let pass = !traj.blow_up
        && residual <= RESIDUAL_TOL
        && constraint_max_abs.is_none_or(|v| v <= CONSTRAINT_TOL)
        && oracle_max_abs.is_none_or(|v| v <= ORACLE_TOL)
        && invariant_drift.is_none_or(|v| v <= INVARIANT_TOL);
    Ok(ReductionReport {
        id: rep.id.clone(),
        constraint: rep.constraint.clone(),
        oracle: rep.oracle.clone(),
        oracle_max_abs,
        residual_max: residual,
        residual_rms: (sum_sq / points.max(1) as f64).sqrt(),
        constraint_max_abs,
        invariant_drift,
        points,
        steps: traj.times.len() - 1,
        blow_up: traj.blow_up,
        pass,
    })
}
