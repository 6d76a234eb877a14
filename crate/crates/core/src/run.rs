//! Batch verification runs behind the command-line front end.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Serialize;
use serde_json::Value;

use crate::catalog::{Catalog, CatalogError, ConstraintEntry, Record};
use crate::expr::EvalPoint;
use crate::lde::{self, build_residual_diffusion, check_identity, fit_b_coefficients, FitConfig};
use crate::pde::{self, certify_solution};
use crate::reduce::{self, representation_for, verify_representation};
use crate::sampling::SampleConfig;
use crate::util::Sig17;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const CSV_HEADER: &str = "id,provenance,kind,max_abs,rms,pass,erratum";
/// Parameter draws per constraint entry.
pub const DRAWS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    CatalogList,
    VerifyLde,
    VerifySolution,
    Reduce {
        #[serde(serialize_with = "crate::util::ser_opt_sig17")]
        t1: Option<f64>,
        #[serde(serialize_with = "crate::util::ser_sig17")]
        step: f64,
    },
    Compat,
}

/// Which records a command runs on.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    All,
    Ids(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub catalog: Option<PathBuf>,
    pub selection: Selection,
    pub seed: u64,
    pub samples: usize,
    /// Overrides the default tolerance of the command.
    #[serde(serialize_with = "crate::util::ser_opt_sig17")]
    pub tol: Option<f64>,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        RunConfig {
            command,
            catalog: None,
            selection: Selection::All,
            seed: 0,
            samples: 100,
            tol: None,
            out: None,
            format: Format::Json,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Case {
    pub id: String,
    pub provenance: String,
    pub kind: String,
    pub params: Value,
    pub max_abs: Sig17,
    pub rms: Sig17,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub erratum: Option<String>,
    /// Command-specific data.
    #[serde(skip_serializing_if = "Value::is_null")]
    pub detail: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub pass: usize,
    pub fail: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub version: &'static str,
    pub config: RunConfig,
    pub cases: Vec<Case>,
    pub summary: Summary,
}

impl Report {
    pub fn new(config: RunConfig, mut cases: Vec<Case>) -> Self {
        cases.sort_by(|a, b| a.id.cmp(&b.id));
        let pass = cases.iter().filter(|c| c.pass).count();
        Report {
            version: VERSION,
            config,
            summary: Summary {
                pass,
                fail: cases.len() - pass,
            },
            cases,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.summary.fail == 0
    }

    pub fn exit_code(&self) -> i32 {
        if self.all_pass() {
            0
        } else {
            1
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("{id}: {message}")]
    Case { id: String, message: String },
    #[error("no records of kind `{0}` match the selection")]
    Empty(&'static str),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl RunError {
    fn case(id: &str, e: impl std::fmt::Display) -> Self {
        RunError::Case {
            id: id.to_string(),
            message: e.to_string(),
        }
    }
}

fn params_value(p: &EvalPoint) -> Value {
    let m: BTreeMap<&str, Sig17> = p.iter().map(|(k, v)| (k, Sig17(v))).collect();
    serde_json::to_value(m).expect("serializable")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn fmt_sig17(v: Sig17) -> String {
    if v.0.is_finite() {
        format!("{:.16e}", v.0)
    } else {
        String::new()
    }
}

/// Serialize a report. JSON keys are `version`, `config`, `cases` and
/// `summary`; CSV has one case per row under [`CSV_HEADER`].
pub fn emit(report: &Report, format: Format) -> Vec<u8> {
    match format {
        Format::Json => {
            let mut v = serde_json::to_vec_pretty(report).expect("serializable");
            v.push(b'\n');
            v
        }
        Format::Csv => {
            let mut out = String::from(CSV_HEADER);
            out.push('\n');
            for c in &report.cases {
                let row = [
                    csv_field(&c.id),
                    csv_field(&c.provenance),
                    csv_field(&c.kind),
                    fmt_sig17(c.max_abs),
                    fmt_sig17(c.rms),
                    c.pass.to_string(),
                    csv_field(c.erratum.as_deref().unwrap_or("")),
                ];
                out.push_str(&row.join(","));
                out.push('\n');
            }
            out.into_bytes()
        }
    }
}

/// Write to `config.out`, or return the bytes for standard output.
pub fn write_report(report: &Report) -> Result<Option<Vec<u8>>, RunError> {
    let bytes = emit(report, report.config.format);
    match &report.config.out {
        Some(path) => std::fs::write(path, &bytes)
            .map(|_| None)
            .map_err(|source| RunError::Write {
                path: path.clone(),
                source,
            }),
        None => Ok(Some(bytes)),
    }
}

pub fn load_catalog(config: &RunConfig) -> Result<Catalog, RunError> {
    Ok(match &config.catalog {
        Some(p) => Catalog::load(p)?,
        None => Catalog::from_env()?,
    })
}

fn select<'a, T>(
    items: Vec<&'a T>,
    selection: &Selection,
    id: impl Fn(&T) -> &str,
    kind: &'static str,
) -> Result<Vec<&'a T>, RunError> {
    let out: Vec<&T> = match selection {
        Selection::All => items,
        Selection::Ids(ids) => {
            for want in ids {
                if !items.iter().any(|t| id(t) == want) {
                    return Err(CatalogError::UnknownId(want.clone()).into());
                }
            }
            items.into_iter().filter(|t| ids.iter().any(|w| w == id(t))).collect()
        }
    };
    if out.is_empty() {
        return Err(RunError::Empty(kind));
    }
    Ok(out)
}

/// Execute a command against a catalog.
pub fn run(config: RunConfig, catalog: &Catalog) -> Result<Report, RunError> {
    let cases = match &config.command {
        Command::CatalogList => list_cases(catalog),
        Command::VerifyLde => lde_cases(&config, catalog)?,
        Command::VerifySolution => solution_cases(&config, catalog)?,
        Command::Reduce { t1, step } => reduce_cases(&config, catalog, *t1, *step)?,
        Command::Compat => compat_cases(&config, catalog)?,
    };
    Ok(Report::new(config, cases))
}

fn list_cases(catalog: &Catalog) -> Vec<Case> {
    catalog
        .records()
        .iter()
        .map(|r| {
            let erratum = match r {
                Record::Constraint(c) => c.erratum.as_ref().map(|e| e.note.clone()),
                Record::Solution(s) => s.erratum.clone(),
                _ => None,
            };
            Case {
                id: r.id().to_string(),
                provenance: r.provenance().to_string(),
                kind: r.kind().to_string(),
                params: Value::Null,
                max_abs: Sig17(f64::NAN),
                rms: Sig17(f64::NAN),
                pass: true,
                erratum,
                detail: Value::Null,
            }
        })
        .collect()
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn mix(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(index as u64)
}

fn lde_case(config: &RunConfig, entry: &ConstraintEntry) -> Result<Case, RunError> {
    let tol = config.tol.unwrap_or(lde::IDENTITY_TOL);
    let id = &entry.id;
    let (mut max_abs, mut sum_sq, mut n, mut pass) = (0.0f64, 0.0, 0usize, true);
    let mut printed_max = None::<f64>;
    let mut draws = Vec::new();
    for i in 0..DRAWS {
        let params = entry.draw_params(config.seed, i)?;
        let inst = entry.instantiate(&params)?;
        let seed = mix(config.seed, i);
        let h = inst.verified_h();
        let fit = fit_b_coefficients(h, inst.q, &inst.f, &FitConfig::with_seed(seed))
            .map_err(|e| RunError::case(id, e))?;
        let r = build_residual_diffusion(h, inst.q, &inst.f, fit.b).map_err(|e| RunError::case(id, e))?;
        let rep = check_identity(&r, &SampleConfig::new(seed, config.samples, tol))
            .map_err(|e| RunError::case(id, e))?;
        max_abs = max_abs.max(rep.max_abs);
        sum_sq += rep.rms * rep.rms * rep.num_samples as f64;
        n += rep.num_samples;
        pass &= rep.pass;
        if inst.corrected.is_some() {
            let fit = fit_b_coefficients(&inst.h, inst.q, &inst.f, &FitConfig::with_seed(seed))
                .map_err(|e| RunError::case(id, e))?;
            let r = build_residual_diffusion(&inst.h, inst.q, &inst.f, fit.b)
                .map_err(|e| RunError::case(id, e))?;
            let rep = check_identity(&r, &SampleConfig::new(seed, config.samples, tol))
                .map_err(|e| RunError::case(id, e))?;
            printed_max = Some(printed_max.unwrap_or(0.0).max(rep.max_abs));
        }
        draws.push(serde_json::json!({
            "params": params_value(&params),
            "b": fit.b.map(Sig17),
            "rank": fit.rank,
            "degenerate": fit.degenerate,
            "max_abs": Sig17(rep.max_abs),
        }));
    }
    let erratum = entry.erratum.as_ref().map(|e| match printed_max {
        Some(m) => format!("{} (printed form max_abs {:.3e})", e.note, m),
        None => e.note.clone(),
    });
    Ok(Case {
        id: id.clone(),
        provenance: entry.provenance.clone(),
        kind: "constraint".into(),
        params: Value::Array(draws.iter().map(|d| d["params"].clone()).collect()),
        max_abs: Sig17(max_abs),
        rms: Sig17((sum_sq / n.max(1) as f64).sqrt()),
        pass,
        erratum,
        detail: serde_json::json!({
            "tolerance": Sig17(tol),
            "draws": draws,
            "printed_max_abs": printed_max.map(Sig17),
        }),
    })
}

fn lde_cases(config: &RunConfig, catalog: &Catalog) -> Result<Vec<Case>, RunError> {
    select(catalog.list_constraints(), &config.selection, |c| &c.id, "constraint")?
        .into_iter()
        .map(|e| lde_case(config, e))
        .collect()
}

fn solution_cases(config: &RunConfig, catalog: &Catalog) -> Result<Vec<Case>, RunError> {
    let tol = config.tol.unwrap_or(lde::IDENTITY_TOL);
    let mut cases = Vec::new();
    for fam in select(catalog.list_solutions(), &config.selection, |s| &s.id, "solution")? {
        let sol = fam.instantiate(&EvalPoint::new())?;
        let sc = SampleConfig::new(mix(config.seed ^ fnv1a(&fam.id), 0), config.samples, tol);
        let rep = certify_solution(&sol, &fam.window, &sc).map_err(|e| RunError::case(&fam.id, e))?;
        let printed = rep.printed.as_ref();
        let erratum = fam.erratum.as_ref().map(|note| match printed {
            Some(p) => format!("{note} (printed form max_abs {:.3e})", p.max_abs),
            None => note.clone(),
        });
        cases.push(Case {
            id: fam.id.clone(),
            provenance: fam.provenance.clone(),
            kind: "solution".into(),
            params: params_value(&sol.params),
            max_abs: Sig17(rep.verified.max_abs),
            rms: Sig17(rep.verified.rms),
            pass: rep.verified.pass,
            erratum,
            detail: serde_json::json!({
                "tolerance": Sig17(tol),
                "samples": rep.verified.num_samples,
                "printed_max_abs": printed.map(|p| Sig17(p.max_abs)),
                "printed_pass": printed.map(|p| p.pass),
            }),
        });
    }
    Ok(cases)
}

fn reduce_cases(
    config: &RunConfig,
    catalog: &Catalog,
    t1: Option<f64>,
    step: f64,
) -> Result<Vec<Case>, RunError> {
    let ids: Vec<String> = match &config.selection {
        Selection::All => catalog.list_representations().iter().map(|r| r.id.clone()).collect(),
        Selection::Ids(ids) => ids.clone(),
    };
    let mut cases = Vec::new();
    for id in ids {
        let rep = representation_for(catalog, &id, &EvalPoint::new()).map_err(|e| match e {
            reduce::ReduceError::Catalog(c) => RunError::Catalog(c),
            e => RunError::case(&id, e),
        })?;
        let r = verify_representation(catalog, &rep, t1, step).map_err(|e| RunError::case(&id, e))?;
        let pass = match config.tol {
            None => r.pass,
            Some(tol) => {
                !r.blow_up
                    && r.residual_max <= tol
                    && r.constraint_max_abs.is_none_or(|v| v <= reduce::CONSTRAINT_TOL)
                    && r.oracle_max_abs.is_none_or(|v| v <= reduce::ORACLE_TOL)
                    && r.invariant_drift.is_none_or(|v| v <= reduce::INVARIANT_TOL)
            }
        };
        cases.push(Case {
            id: rep.id.clone(),
            provenance: rep.provenance.clone(),
            kind: "representation".into(),
            params: params_value(&rep.params),
            max_abs: Sig17(r.residual_max),
            rms: Sig17(r.residual_rms),
            pass,
            erratum: None,
            detail: serde_json::to_value(&r).expect("serializable"),
        });
    }
    Ok(cases)
}

fn compat_cases(config: &RunConfig, catalog: &Catalog) -> Result<Vec<Case>, RunError> {
    let all = catalog.list_compat();
    let specs: Vec<_> = match &config.selection {
        Selection::All => all,
        Selection::Ids(ids) => {
            let mut out = Vec::new();
            for want in ids {
                let hits: Vec<_> = all
                    .iter()
                    .filter(|c| &c.id == want || c.entry.as_deref() == Some(want))
                    .copied()
                    .collect();
                if hits.is_empty() {
                    return Err(CatalogError::UnknownId(want.clone()).into());
                }
                out.extend(hits);
            }
            out
        }
    };
    let mut cases = Vec::new();
    for spec in specs {
        let rep = pde::compat_drift(spec).map_err(|e| RunError::case(&spec.id, e))?;
        let rms = (rep.norms.iter().map(|v| v * v).sum::<f64>() / rep.norms.len() as f64).sqrt();
        cases.push(Case {
            id: spec.id.clone(),
            provenance: spec.provenance.clone(),
            kind: if spec.expect_pass { "compat" } else { "compat-negative-control" }.into(),
            params: params_value(&EvalPoint::from(spec.params.clone())),
            max_abs: Sig17(rep.max_norm()),
            rms: Sig17(rms),
            pass: rep.pass == spec.expect_pass,
            erratum: None,
            detail: serde_json::json!({
                "drift_pass": rep.pass,
                "expected": spec.expect_pass,
                "report": rep,
            }),
        });
    }
    Ok(cases)
}
