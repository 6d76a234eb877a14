use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use diffcon::catalog::{Catalog, CATALOG_ENV};
use diffcon::expr::EvalPoint;
use diffcon::reduce::representation_for;
use diffcon::run::{self, Command, Format, RunConfig, RunError, Selection};

#[derive(Parser)]
#[command(name = "diffcon", version, about = "Verify differential constraints and exact solutions of nonlinear diffusion equations")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Seed for parameter draws and sample points.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Samples per identity or residual check.
    #[arg(long, global = true, default_value_t = 100)]
    samples: usize,
    /// Override the default pass tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Fmt>,
    /// Catalog in JSON Lines form; the built-in one by default.
    #[arg(long, global = true, env = CATALOG_ENV)]
    catalog: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fmt {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Inspect the catalog.
    Catalog {
        #[command(subcommand)]
        action: CatalogCmd,
    },
    /// Fit b and check the linear determining equation for constraint entries.
    VerifyLde {
        #[arg(long = "entry", required_unless_present = "all")]
        entries: Vec<String>,
        #[arg(long, conflicts_with = "entries")]
        all: bool,
    },
    /// Check closed-form solution families and their printed forms.
    VerifySolution {
        #[arg(long = "family", required_unless_present = "all")]
        families: Vec<String>,
        #[arg(long, conflicts_with = "families")]
        all: bool,
    },
    /// Integrate a representation's coefficient system and check the assembled solution.
    Reduce {
        /// Constraint, alias or representation id.
        #[arg(long = "constraint", required_unless_present = "all")]
        constraints: Vec<String>,
        #[arg(long, conflicts_with = "constraints")]
        all: bool,
        /// End time; the representation's window by default.
        #[arg(long)]
        t1: Option<f64>,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        /// Write the coefficient trajectory of a single constraint as CSV.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Follow a constraint along a method-of-lines solution.
    Compat {
        /// Compat case id or constraint entry id.
        #[arg(long = "entry", required_unless_present = "all")]
        entries: Vec<String>,
        #[arg(long, conflicts_with = "entries")]
        all: bool,
    },
}

#[derive(Subcommand)]
enum CatalogCmd {
    /// List record ids.
    List,
}

fn selection(ids: Vec<String>, all: bool) -> Selection {
    if all {
        Selection::All
    } else {
        Selection::Ids(ids)
    }
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("diffcon: {msg}");
    ExitCode::from(code)
}

fn write_trajectory(catalog: &Catalog, id: &str, t1: Option<f64>, step: f64, path: &PathBuf) -> Result<(), String> {
    let rep = representation_for(catalog, id, &EvalPoint::new()).map_err(|e| e.to_string())?;
    let traj = rep
        .integrate(t1.unwrap_or(rep.window.t[1]), step)
        .map_err(|e| e.to_string())?;
    std::fs::write(path, traj.to_csv()).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let c = cli.common;
    let mut trajectory = None;
    let (command, sel) = match cli.command {
        Cmd::Catalog { action: CatalogCmd::List } => (Command::CatalogList, Selection::All),
        Cmd::VerifyLde { entries, all } => (Command::VerifyLde, selection(entries, all)),
        Cmd::VerifySolution { families, all } => (Command::VerifySolution, selection(families, all)),
        Cmd::Reduce {
            constraints,
            all,
            t1,
            step,
            trajectory: tpath,
        } => {
            if let Some(p) = tpath {
                if all || constraints.len() != 1 {
                    return fail(2, "--trajectory needs exactly one --constraint");
                }
                trajectory = Some((constraints[0].clone(), p));
            }
            (Command::Reduce { t1, step }, selection(constraints, all))
        }
        Cmd::Compat { entries, all } => (Command::Compat, selection(entries, all)),
    };
    if let Some(tol) = c.tol {
        if !(tol > 0.0) {
            return fail(2, format!("--tol must be positive, got {tol}"));
        }
    }
    if c.samples == 0 {
        return fail(2, "--samples must be positive");
    }
    let text_listing = matches!(command, Command::CatalogList) && c.format.is_none() && c.out.is_none();
    let config = RunConfig {
        command,
        catalog: c.catalog,
        selection: sel,
        seed: c.seed,
        samples: c.samples,
        tol: c.tol,
        out: c.out,
        format: match c.format {
            Some(Fmt::Csv) => Format::Csv,
            _ => Format::Json,
        },
    };
    let catalog = match run::load_catalog(&config) {
        Ok(cat) => cat,
        Err(e) => return fail(2, e),
    };
    if let Some((id, path)) = &trajectory {
        let Command::Reduce { t1, step } = config.command else {
            unreachable!("trajectory is only set for reduce")
        };
        if let Err(e) = write_trajectory(&catalog, id, t1, step, path) {
            return fail(2, e);
        }
    }
    let report = match run::run(config, &catalog) {
        Ok(r) => r,
        Err(e @ RunError::Case { .. }) => return fail(1, e),
        Err(e) => return fail(2, e),
    };
    let mut stdout = std::io::stdout().lock();
    if text_listing {
        for r in catalog.records() {
            let _ = writeln!(stdout, "{}\t{}\t{}", r.kind(), r.id(), r.provenance());
        }
        return ExitCode::SUCCESS;
    }
    match run::write_report(&report) {
        Ok(Some(bytes)) => {
            let _ = stdout.write_all(&bytes);
        }
        Ok(None) => {}
        Err(e) => return fail(2, e),
    }
    for case in report.cases.iter().filter(|c| !c.pass) {
        eprintln!("diffcon: {} failed (max_abs {:?})", case.id, case.max_abs.0);
    }
    ExitCode::from(report.exit_code() as u8)
}
