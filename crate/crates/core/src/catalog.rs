//! Registry of constraint families, closed-form solutions, coefficient
//! representations and compatibility setups.
//!
//! The catalog is a JSON-lines file, one record per line, tagged by `kind`.
//! Formulas use the expression grammar of [`crate::expr`]. The default
//! catalog is compiled in; `DIFFCON_CATALOG` or an explicit path overrides it.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::expr::{self, EvalPoint, Expr, ExprError};
use crate::jet::{EvolutionEquation, JetError};
pub use crate::sampling::Window;

pub const DEFAULT_CATALOG: &str = include_str!("../data/catalog.jsonl");
pub const CATALOG_ENV: &str = "DIFFCON_CATALOG";

const MAX_DRAW_ATTEMPTS: usize = 200;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CatalogError {
    #[error("unknown catalog id `{0}`")]
    UnknownId(String),
    #[error("`{id}`: inadmissible parameters, `{predicate}` is violated")]
    Inadmissible { id: String, predicate: String },
    #[error("`{id}`: missing parameter `{name}`")]
    MissingParameter { id: String, name: String },
    #[error("`{id}`: q is fixed at {fixed}, got {given}")]
    FixedQ { id: String, fixed: f64, given: f64 },
    #[error("`{id}`: no admissible parameter draw after {MAX_DRAW_ATTEMPTS} attempts")]
    NoAdmissibleDraw { id: String },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("duplicate id `{0}`")]
    Duplicate(String),
    #[error("cannot read catalog: {0}")]
    Io(String),
    #[error("`{id}`: {source}")]
    Expr { id: String, source: ExprError },
    #[error("`{id}`: {source}")]
    Jet { id: String, source: JetError },
}

/// A parameter's sampling law for seeded draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamSpec {
    Range { range: [f64; 2] },
    /// Values written in the expression grammar, e.g. `"-4/3"`.
    Choices { choices: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Erratum {
    /// The form that passes the residual checks.
    pub corrected: String,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintEntry {
    pub id: String,
    /// `q` as an expression; either a number or the parameter `q`.
    pub q: String,
    pub f: String,
    /// The printed `h`.
    pub h: String,
    /// Coefficients `(b1, b2, b3, b4)` stated in closed form, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<[String; 4]>,
    pub params: BTreeMap<String, ParamSpec>,
    /// Alternative parameter laws; draw `i` uses variant `i mod len`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variants: Vec<BTreeMap<String, ParamSpec>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub admissible: Vec<String>,
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub erratum: Option<Erratum>,
}

/// The equation a closed form is checked against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Pde {
    /// `u_t = rhs` in one space dimension.
    Evolution { rhs: String },
    /// `v_t = v^2 (ln v)_xx + v^2 (ln v)_yy`.
    VForm,
    /// `u_t = (ln u)_xx + (ln u)_yy`.
    UForm,
    /// The solution is the conformal image of the stored base solution
    /// of the u-form under the polynomial map with complex coefficients
    /// `map[k] = [re, im]` of `z^k`.
    Conformal { map: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrintedForm {
    pub u: String,
    /// Parameter values that differ from the verified ones.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFamily {
    pub id: String,
    pub pde: Pde,
    /// The verified form (for `conformal`, the base solution).
    pub u: String,
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub window: Window,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub printed: Option<PrintedForm>,
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub erratum: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationSpec {
    pub id: String,
    /// Reduction id accepted by `representation_for`.
    pub constraint: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
    /// Branch selector, e.g. `"q != -1"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when: Option<String>,
    pub ansatz: String,
    pub coefficients: Vec<String>,
    pub odes: Vec<String>,
    pub pde: Pde,
    /// The generating constraint in the ansatz's own jet variables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<String>,
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub t0: f64,
    /// Initial coefficient values as expressions in the parameters and `t`
    /// (bound to `t0`).
    pub initial: Vec<String>,
    /// Closed-form family used as an oracle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<String>,
    /// First integral of the coefficient system.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invariant: Option<String>,
    #[serde(default)]
    pub window: Window,
    pub provenance: String,
}

/// Setup of a constraint-preservation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatSpec {
    pub id: String,
    /// Constraint entry this run exercises, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry: Option<String>,
    pub rhs: String,
    pub h: String,
    pub params: BTreeMap<String, f64>,
    /// Initial profile in `x`, or a reference solution in `t`, `x`.
    pub initial: String,
    /// Use `initial` as the reference for Dirichlet boundary values.
    #[serde(default)]
    pub reference: bool,
    pub x: [f64; 2],
    pub nodes: usize,
    pub t1: f64,
    /// `false` for negative controls, which must drift.
    pub expect_pass: bool,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Record {
    Constraint(ConstraintEntry),
    Solution(SolutionFamily),
    Representation(RepresentationSpec),
    Compat(CompatSpec),
}

impl Record {
    pub fn id(&self) -> &str {
        match self {
            Record::Constraint(c) => &c.id,
            Record::Solution(s) => &s.id,
            Record::Representation(r) => &r.id,
            Record::Compat(c) => &c.id,
        }
    }

    pub fn provenance(&self) -> &str {
        match self {
            Record::Constraint(c) => &c.provenance,
            Record::Solution(s) => &s.provenance,
            Record::Representation(r) => &r.provenance,
            Record::Compat(c) => &c.provenance,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Record::Constraint(_) => "constraint",
            Record::Solution(_) => "solution",
            Record::Representation(_) => "representation",
            Record::Compat(_) => "compat",
        }
    }

    fn formulas(&self) -> Vec<&str> {
        match self {
            Record::Constraint(c) => {
                let mut v = vec![c.q.as_str(), &c.f, &c.h];
                v.extend(c.b.iter().flatten().map(String::as_str));
                v.extend(c.erratum.iter().map(|e| e.corrected.as_str()));
                for spec in c.params.values().chain(c.variants.iter().flat_map(|m| m.values())) {
                    if let ParamSpec::Choices { choices } = spec {
                        v.extend(choices.iter().map(String::as_str));
                    }
                }
                v
            }
            Record::Solution(s) => {
                let mut v = vec![s.u.as_str()];
                if let Pde::Evolution { rhs } = &s.pde {
                    v.push(rhs);
                }
                v.extend(s.printed.iter().map(|p| p.u.as_str()));
                v
            }
            Record::Representation(r) => {
                let mut v = vec![r.ansatz.as_str()];
                v.extend(r.odes.iter().map(String::as_str));
                v.extend(r.initial.iter().map(String::as_str));
                v.extend(r.h.iter().map(String::as_str));
                v.extend(r.invariant.iter().map(String::as_str));
                if let Pde::Evolution { rhs } = &r.pde {
                    v.push(rhs);
                }
                v
            }
            Record::Compat(c) => vec![c.rhs.as_str(), &c.h, &c.initial],
        }
    }

    fn predicates(&self) -> Vec<&str> {
        match self {
            Record::Constraint(c) => c.admissible.iter().map(String::as_str).collect(),
            Record::Representation(r) => r.when.iter().map(String::as_str).collect(),
            _ => Vec::new(),
        }
    }
}

/// Comparison operator of an admissibility predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cmp {
    Ne,
    Eq,
    Le,
    Ge,
    Lt,
    Gt,
}

/// `lhs <op> rhs` with both sides in the expression grammar.
#[derive(Debug, Clone)]
pub struct Predicate {
    source: String,
    lhs: Expr,
    op: Cmp,
    rhs: Expr,
}

impl Predicate {
    pub fn parse(source: &str) -> Result<Self, ExprError> {
        const OPS: [(&str, Cmp); 6] = [
            ("!=", Cmp::Ne),
            ("==", Cmp::Eq),
            ("<=", Cmp::Le),
            (">=", Cmp::Ge),
            ("<", Cmp::Lt),
            (">", Cmp::Gt),
        ];
        for (tok, op) in OPS {
            if let Some(pos) = source.find(tok) {
                return Ok(Predicate {
                    source: source.to_string(),
                    lhs: expr::parse(&source[..pos])?,
                    op,
                    rhs: expr::parse(&source[pos + tok.len()..])?,
                });
            }
        }
        Err(ExprError::Syntax {
            offset: 0,
            message: format!("predicate `{source}` has no comparison operator"),
        })
    }

    /// Whether every symbol of the predicate is bound in `p`.
    pub fn is_bound(&self, p: &EvalPoint) -> bool {
        self.lhs
            .free_symbols()
            .iter()
            .chain(self.rhs.free_symbols().iter())
            .all(|s| p.get(s.name()).is_some())
    }

    pub fn holds(&self, p: &EvalPoint) -> Result<bool, ExprError> {
        let (a, b) = (self.lhs.evaluate(p)?, self.rhs.evaluate(p)?);
        let close = (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
        Ok(match self.op {
            Cmp::Ne => !close,
            Cmp::Eq => close,
            Cmp::Le => a <= b || close,
            Cmp::Ge => a >= b || close,
            Cmp::Lt => a < b && !close,
            Cmp::Gt => a > b && !close,
        })
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    records: Vec<Record>,
}

/// A constraint entry with numeric parameters.
#[derive(Debug, Clone)]
pub struct ConstraintInstance {
    pub id: String,
    pub params: EvalPoint,
    pub q: f64,
    pub f: Expr,
    pub h: Expr,
    pub corrected: Option<Expr>,
    pub b: Option<[f64; 4]>,
    pub equation: EvolutionEquation,
}

impl ConstraintInstance {
    /// The form expected to pass: the corrected one when there is an erratum.
    pub fn verified_h(&self) -> &Expr {
        self.corrected.as_ref().unwrap_or(&self.h)
    }
}

fn parse_in(id: &str, s: &str) -> Result<Expr, CatalogError> {
    expr::parse(s).map_err(|source| CatalogError::Expr {
        id: id.to_string(),
        source,
    })
}

fn eval_in(id: &str, e: &Expr, p: &EvalPoint) -> Result<f64, CatalogError> {
    e.evaluate(p).map_err(|source| match source {
        ExprError::Unbound(name) => CatalogError::MissingParameter {
            id: id.to_string(),
            name,
        },
        source => CatalogError::Expr {
            id: id.to_string(),
            source,
        },
    })
}

/// Bind numbers and simplify; the result should have no parameters left.
pub(crate) fn instantiate_expr(id: &str, src: &str, p: &EvalPoint) -> Result<Expr, CatalogError> {
    let e = expr::bind_numbers(&parse_in(id, src)?, p.as_map());
    if let Some(s) = e.parameters().into_iter().next() {
        return Err(CatalogError::MissingParameter {
            id: id.to_string(),
            name: s.name().to_string(),
        });
    }
    Ok(e)
}

/// Check every bound predicate; unbound ones are skipped.
pub fn check_admissible(id: &str, predicates: &[String], p: &EvalPoint) -> Result<(), CatalogError> {
    for src in predicates {
        let pred = Predicate::parse(src).map_err(|source| CatalogError::Expr {
            id: id.to_string(),
            source,
        })?;
        if !pred.is_bound(p) {
            continue;
        }
        let ok = pred.holds(p).map_err(|source| CatalogError::Expr {
            id: id.to_string(),
            source,
        })?;
        if !ok {
            return Err(CatalogError::Inadmissible {
                id: id.to_string(),
                predicate: src.clone(),
            });
        }
    }
    Ok(())
}

fn stream_of(id: &str) -> u64 {
    // FNV-1a, so draws depend on the id rather than on catalog order
    id.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl ConstraintEntry {
    /// Whether `q` is a fixed number, and which.
    pub fn fixed_q(&self) -> Option<f64> {
        expr::parse(&self.q).ok()?.evaluate(&EvalPoint::new()).ok()
    }

    pub fn instantiate(&self, params: &EvalPoint) -> Result<ConstraintInstance, CatalogError> {
        let id = &self.id;
        let mut p = params.clone();
        if let Some(fixed) = self.fixed_q() {
            match p.get("q") {
                Some(given) if (given - fixed).abs() > 1e-12 * (1.0 + fixed.abs()) => {
                    return Err(CatalogError::FixedQ {
                        id: id.clone(),
                        fixed,
                        given,
                    })
                }
                _ => p.set("q", fixed),
            }
        }
        check_admissible(id, &self.admissible, &p)?;
        let q = eval_in(id, &parse_in(id, &self.q)?, &p)?;
        p.set("q", q);
        let f = instantiate_expr(id, &self.f, &p)?;
        let h = instantiate_expr(id, &self.h, &p)?;
        let corrected = match &self.erratum {
            Some(e) => Some(instantiate_expr(id, &e.corrected, &p)?),
            None => None,
        };
        let b = match &self.b {
            Some(srcs) => {
                let mut out = [0.0; 4];
                for (o, s) in out.iter_mut().zip(srcs) {
                    *o = eval_in(id, &parse_in(id, s)?, &p)?;
                }
                Some(out).filter(|b| b.iter().all(|v| v.is_finite()))
            }
            None => None,
        };
        let equation = EvolutionEquation::diffusion(q, &f).map_err(|source| CatalogError::Jet {
            id: id.clone(),
            source,
        })?;
        Ok(ConstraintInstance {
            id: id.clone(),
            params: p,
            q,
            f,
            h,
            corrected,
            b,
            equation,
        })
    }

    /// Draw admissible parameters; `index` selects the variant.
    pub fn draw_params(&self, seed: u64, index: usize) -> Result<EvalPoint, CatalogError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_of(&self.id).wrapping_add(index as u64));
        let mut laws = self.params.clone();
        if !self.variants.is_empty() {
            for (k, v) in &self.variants[index % self.variants.len()] {
                laws.insert(k.clone(), v.clone());
            }
        }
        for _ in 0..MAX_DRAW_ATTEMPTS {
            let mut p = EvalPoint::new();
            for (name, law) in &laws {
                let v = match law {
                    ParamSpec::Range { range: [lo, hi] } => {
                        if hi > lo {
                            rng.random_range(*lo..*hi)
                        } else {
                            *lo
                        }
                    }
                    ParamSpec::Choices { choices } => {
                        let pick = &choices[rng.random_range(0..choices.len())];
                        eval_in(&self.id, &parse_in(&self.id, pick)?, &EvalPoint::new())?
                    }
                };
                p.set(name, v);
            }
            if let Some(q) = self.fixed_q() {
                p.set("q", q);
            }
            match check_admissible(&self.id, &self.admissible, &p) {
                Ok(()) => return Ok(p),
                Err(CatalogError::Inadmissible { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(CatalogError::NoAdmissibleDraw {
            id: self.id.clone(),
        })
    }
}

/// A solution family with numeric parameters.
#[derive(Debug, Clone)]
pub struct SolutionInstance {
    pub id: String,
    pub pde: Pde,
    pub equation: Option<EvolutionEquation>,
    pub params: EvalPoint,
    pub u: Expr,
    pub printed: Option<PrintedInstance>,
}

#[derive(Debug, Clone)]
pub struct PrintedInstance {
    pub params: EvalPoint,
    pub equation: Option<EvolutionEquation>,
    pub u: Expr,
}

pub(crate) fn evolution(id: &str, pde: &Pde, p: &EvalPoint) -> Result<Option<EvolutionEquation>, CatalogError> {
    match pde {
        Pde::Evolution { rhs } => {
            let rhs = instantiate_expr(id, rhs, p)?;
            EvolutionEquation::new(rhs)
                .map(Some)
                .map_err(|source| CatalogError::Jet {
                    id: id.to_string(),
                    source,
                })
        }
        _ => Ok(None),
    }
}

/// A compatibility case with numeric parameters.
#[derive(Debug, Clone)]
pub struct CompatInstance {
    pub id: String,
    pub equation: EvolutionEquation,
    pub h: Expr,
    pub initial: Expr,
}

impl CompatSpec {
    pub fn instantiate(&self) -> Result<CompatInstance, CatalogError> {
        let id = &self.id;
        let p = EvalPoint::from(self.params.clone());
        let equation = evolution(id, &Pde::Evolution { rhs: self.rhs.clone() }, &p)?
            .expect("evolution equation");
        Ok(CompatInstance {
            id: id.clone(),
            equation,
            h: instantiate_expr(id, &self.h, &p)?,
            initial: instantiate_expr(id, &self.initial, &p)?,
        })
    }
}

impl SolutionFamily {
    pub fn instantiate(&self, overrides: &EvalPoint) -> Result<SolutionInstance, CatalogError> {
        let id = &self.id;
        let mut p = EvalPoint::from(self.params.clone());
        p.extend(overrides);
        let printed = match &self.printed {
            Some(pf) => {
                let mut pp = p.clone();
                pp.extend(&EvalPoint::from(pf.params.clone()));
                Some(PrintedInstance {
                    equation: evolution(id, &self.pde, &pp)?,
                    u: instantiate_expr(id, &pf.u, &pp)?,
                    params: pp,
                })
            }
            None => None,
        };
        Ok(SolutionInstance {
            id: id.clone(),
            pde: self.pde.clone(),
            equation: evolution(id, &self.pde, &p)?,
            u: instantiate_expr(id, &self.u, &p)?,
            params: p,
            printed,
        })
    }
}

impl Catalog {
    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let mut records: Vec<Record> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("//") {
                continue;
            }
            let rec: Record = serde_json::from_str(line).map_err(|e| CatalogError::Format {
                line: i + 1,
                message: e.to_string(),
            })?;
            for src in rec.formulas() {
                parse_in(rec.id(), src)?;
            }
            for src in rec.predicates() {
                Predicate::parse(src).map_err(|source| CatalogError::Expr {
                    id: rec.id().to_string(),
                    source,
                })?;
            }
            if records.iter().any(|r| r.id() == rec.id()) {
                return Err(CatalogError::Duplicate(rec.id().to_string()));
            }
            records.push(rec);
        }
        Ok(Catalog { records })
    }

    pub fn builtin() -> Self {
        Self::parse(DEFAULT_CATALOG).expect("built-in catalog is valid")
    }

    pub fn load(path: &Path) -> Result<Self, CatalogError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CatalogError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The catalog named by `DIFFCON_CATALOG`, else the built-in one.
    pub fn from_env() -> Result<Self, CatalogError> {
        match std::env::var_os(CATALOG_ENV) {
            Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
            _ => Ok(Self::builtin()),
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.id() == id)
    }

    pub fn list_constraints(&self) -> Vec<&ConstraintEntry> {
        self.records
            .iter()
            .filter_map(|r| match r {
                Record::Constraint(c) => Some(c),
                _ => None,
            })
            .collect()
    }

    pub fn list_solutions(&self) -> Vec<&SolutionFamily> {
        self.records
            .iter()
            .filter_map(|r| match r {
                Record::Solution(s) => Some(s),
                _ => None,
            })
            .collect()
    }

    pub fn list_representations(&self) -> Vec<&RepresentationSpec> {
        self.records
            .iter()
            .filter_map(|r| match r {
                Record::Representation(s) => Some(s),
                _ => None,
            })
            .collect()
    }

    pub fn list_compat(&self) -> Vec<&CompatSpec> {
        self.records
            .iter()
            .filter_map(|r| match r {
                Record::Compat(s) => Some(s),
                _ => None,
            })
            .collect()
    }

    pub fn constraint(&self, id: &str) -> Result<&ConstraintEntry, CatalogError> {
        self.list_constraints()
            .into_iter()
            .find(|c| c.id == id)
            .ok_or_else(|| CatalogError::UnknownId(id.to_string()))
    }

    pub fn solution(&self, id: &str) -> Result<&SolutionFamily, CatalogError> {
        self.list_solutions()
            .into_iter()
            .find(|c| c.id == id)
            .ok_or_else(|| CatalogError::UnknownId(id.to_string()))
    }

    /// Instantiate a constraint entry or a solution family by id.
    pub fn instantiate(&self, id: &str, params: &EvalPoint) -> Result<Instance, CatalogError> {
        match self.get(id) {
            Some(Record::Constraint(c)) => c.instantiate(params).map(Instance::Constraint),
            Some(Record::Solution(s)) => s.instantiate(params).map(Instance::Solution),
            _ => Err(CatalogError::UnknownId(id.to_string())),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Instance {
    Constraint(ConstraintInstance),
    Solution(SolutionInstance),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_catalog_loads() {
        let c = Catalog::builtin();
        assert_eq!(c.list_constraints().len(), 14);
        assert!(c.list_solutions().len() >= 10);
    }

    #[test]
    fn round_trip() {
        let c = Catalog::builtin();
        let again = Catalog::parse(&c.to_jsonl()).unwrap();
        assert_eq!(c, again);
        assert_eq!(again.to_jsonl(), c.to_jsonl());
    }

    #[test]
    fn printed_entries_are_stored_verbatim() {
        let c = Catalog::builtin();
        let so3 = c.constraint("so-3").unwrap();
        assert_eq!(so3.q, "-2");
        assert_eq!(so3.h, "u2 - 3*u1^2/(2*u0)");
        let to7 = c.constraint("to-7").unwrap();
        assert_eq!(to7.f, "m*u0");
        assert_eq!(
            to7.h,
            "u3 - 4*u1*u2/u0 + 3*u1^3/u0^2 + s*exp(-2*m*t)*u0^2*u1"
        );
    }

    #[test]
    fn inadmissible_parameters_name_the_predicate() {
        let c = Catalog::builtin();
        let err = c
            .instantiate("so-2", &EvalPoint::from([("q", -1.0)]))
            .unwrap_err();
        assert_eq!(
            err,
            CatalogError::Inadmissible {
                id: "so-2".into(),
                predicate: "q != -1".into()
            }
        );
        assert_eq!(
            c.instantiate("unknown", &EvalPoint::new()).unwrap_err(),
            CatalogError::UnknownId("unknown".into())
        );
    }

    #[test]
    fn instantiate_third_order_entry() {
        let c = Catalog::builtin();
        let Instance::Constraint(inst) = c
            .instantiate(
                "to-3",
                &EvalPoint::from([("q", -0.5), ("m", 1.0), ("r", 0.2), ("s", 0.3)]),
            )
            .unwrap()
        else {
            panic!("constraint expected")
        };
        assert_eq!(inst.q, -0.5);
        assert_eq!(inst.f.to_string(), "u0");
        let want = expr::parse(
            "u3 - 5*u1*u2/(2*u0) + 5*u1^3/(4*u0^2) + 0.2*exp(-1.5*t)*u0^(5/2) + 0.3*exp(0.5*t)*u0^(1/2)",
        )
        .unwrap();
        let p = EvalPoint::from([("t", 0.3), ("u0", 1.3), ("u1", 0.4), ("u2", -0.7), ("u3", 1.1)]);
        let (a, b) = (inst.h.evaluate(&p).unwrap(), want.evaluate(&p).unwrap());
        assert!((a - b).abs() < 1e-14);
        assert!(matches!(
            c.instantiate("to-3", &EvalPoint::from([("q", 2.0)])),
            Err(CatalogError::FixedQ { .. })
        ));
    }

    #[test]
    fn missing_parameter_is_named() {
        let c = Catalog::builtin();
        let err = c
            .instantiate("so-3", &EvalPoint::from([("s", 1.0)]))
            .unwrap_err();
        assert_eq!(
            err,
            CatalogError::MissingParameter {
                id: "so-3".into(),
                name: "r".into()
            }
        );
    }

    #[test]
    fn draws_are_admissible_and_seeded() {
        let c = Catalog::builtin();
        for entry in c.list_constraints() {
            for i in 0..3 {
                let p = entry.draw_params(7, i).unwrap();
                assert_eq!(p, entry.draw_params(7, i).unwrap());
                entry.instantiate(&p).unwrap();
            }
            assert_ne!(entry.draw_params(7, 0).unwrap(), entry.draw_params(8, 0).unwrap());
        }
    }

    #[test]
    fn merged_entry_covers_both_cases() {
        let c = Catalog::builtin();
        let e = c.constraint("to-2").unwrap();
        let draws: Vec<EvalPoint> = (0..3).map(|i| e.draw_params(1, i).unwrap()).collect();
        assert!(draws.iter().any(|p| p.get("m") == Some(0.0)));
        assert!(draws.iter().any(|p| p.get("m") != Some(0.0)));
    }

    #[test]
    fn predicates() {
        let p = Predicate::parse("m*(q+2)*(3*q+4) == 0").unwrap();
        assert!(p.holds(&EvalPoint::from([("m", 0.3), ("q", -4.0 / 3.0)])).unwrap());
        assert!(!p.holds(&EvalPoint::from([("m", 0.3), ("q", 3.0)])).unwrap());
        assert!(Predicate::parse("q").is_err());
        let lt = Predicate::parse("x < 1").unwrap();
        assert!(lt.holds(&EvalPoint::from([("x", 0.5)])).unwrap());
        assert!(!lt.holds(&EvalPoint::from([("x", 1.0)])).unwrap());
    }

    #[test]
    fn malformed_lines_are_reported() {
        let err = Catalog::parse("{\"kind\":\"constraint\"}").unwrap_err();
        assert!(matches!(err, CatalogError::Format { line: 1, .. }));
    }

    #[test]
    fn solution_families_instantiate() {
        let c = Catalog::builtin();
        for s in c.list_solutions() {
            let inst = s.instantiate(&EvalPoint::new()).unwrap();
            assert!(inst.u.parameters().is_empty(), "{}", s.id);
        }
    }
}
