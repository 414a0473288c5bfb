//! `detline`: evaluates determinant-line scenarios from JSON files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod run;
mod scenario;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use run::{Entry, Overrides, Status, Table};
use scenario::{Scenario, SCHEMA_VERSION};

#[derive(Parser)]
#[command(name = "detline", version, about = "Eta invariants, tau elements, gluing and adiabatic transport checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eta invariant of a circle or interval operator.
    Eta(Common),
    /// Unit-normalized tau element.
    Tau(Common),
    /// Closed and interval gluing laws.
    GlueCheck(Common),
    /// Adiabatic transport along a path of operators.
    Transport(Common),
    /// Holonomy of the determinant line around a loop.
    Holonomy(Common),
    /// Small-loop curvature against the trace of the connection curvature.
    CurvatureCheck(Common),
    /// Integrality of the index density over a disk.
    Integrality(Common),
    /// Variation of tau along a one-parameter circle family.
    VariationCheck(Common),
    /// A list of scenarios, evaluated in parallel.
    Suite(Common),
    /// Any scenario, dispatched on its `kind`.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    file: PathBuf,
    /// Pass/fail tolerance for every residual.
    #[arg(long)]
    tol: Option<f64>,
    /// Comma-separated ε values for adiabatic limits, decreasing.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    eps_schedule: Option<Vec<f64>>,
    /// Spectral window cutoff Λ.
    #[arg(long)]
    lambda: Option<f64>,
    /// Relative tolerance of the ODE integrator.
    #[arg(long)]
    step: Option<f64>,
    /// Write `report.json` and CSV series here instead of printing the report.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Command {
    fn parts(&self) -> (Option<&'static str>, &Common) {
        match self {
            Command::Eta(c) => (Some("eta"), c),
            Command::Tau(c) => (Some("tau"), c),
            Command::GlueCheck(c) => (Some("glue"), c),
            Command::Transport(c) => (Some("transport"), c),
            Command::Holonomy(c) => (Some("holonomy"), c),
            Command::CurvatureCheck(c) => (Some("curvature"), c),
            Command::Integrality(c) => (Some("integrality"), c),
            Command::VariationCheck(c) => (Some("variation"), c),
            Command::Suite(c) => (Some("suite"), c),
            Command::Run(c) => (None, c),
        }
    }
}

#[derive(Serialize)]
struct Summary {
    total: usize,
    passed: usize,
    failed: usize,
    errors: usize,
}

#[derive(Serialize)]
struct Report<'a> {
    schema_version: u32,
    source: String,
    entries: &'a [Entry],
    summary: Summary,
}

const EXIT_FAIL: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn input_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_INPUT)
}

fn load(path: &Path) -> Result<Scenario, ExitCode> {
    let text = fs::read_to_string(path).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
    let scenario: Scenario = serde_json::from_str(&text)
        .map_err(|e| input_error(format!("{}: {e}", path.display())))?;
    let violations = scenario.validate();
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("error: {}: {}: {}", path.display(), v.location, v.message);
        }
        return Err(ExitCode::from(EXIT_INPUT));
    }
    Ok(scenario)
}

fn configure_threads() {
    if let Some(n) = std::env::var("DETLINE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn write_outputs(dir: &Path, report: &str, tables: &[Table]) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), report)?;
    for t in tables {
        let mut w = csv::Writer::from_path(dir.join(format!("{}.{}.csv", t.id, t.name)))?;
        w.write_record(&t.header)?;
        for row in &t.rows {
            w.write_record(row)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let (verb, common) = cli.command.parts();
    let scenario = match load(&common.file) {
        Ok(s) => s,
        Err(code) => return code,
    };
    if let Some(v) = verb {
        if v != scenario.payload.kind() {
            return input_error(format!(
                "{}: scenario kind `{}` does not match this command (expected `{v}`)",
                common.file.display(),
                scenario.payload.kind()
            ));
        }
    }
    let overrides = Overrides {
        tolerance: common.tol,
        eps_schedule: common.eps_schedule.clone(),
        cutoff: common.lambda,
        step: common.step,
        series: common.out.is_some(),
    };
    let outcome = run::run(&scenario, &overrides);
    let count = |s: Status| outcome.entries.iter().filter(|e| e.status == s).count();
    let summary = Summary {
        total: outcome.entries.len(),
        passed: count(Status::Pass),
        failed: count(Status::Fail),
        errors: count(Status::Error),
    };
    let report = Report {
        schema_version: SCHEMA_VERSION,
        source: common.file.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        entries: &outcome.entries,
        summary,
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    match &common.out {
        Some(dir) => {
            if let Err(e) = write_outputs(dir, &text, &outcome.tables) {
                eprintln!("error: writing {}: {e}", dir.display());
                return ExitCode::from(EXIT_FAIL);
            }
        }
        None => print!("{text}"),
    }
    for e in &outcome.entries {
        let detail = match &e.error {
            Some(err) => format!("{} error: {}", err.class, err.message),
            None => e.residuals.iter().map(|(k, v)| format!("{k}={v:.2e}")).collect::<Vec<_>>().join(" "),
        };
        eprintln!("{:<5} {:<12} {} {detail}", format!("{:?}", e.status).to_uppercase(), e.kind, e.id);
    }
    let s = &report.summary;
    eprintln!("{}/{} passed", s.passed, s.total);
    match run::worst_error(&outcome.entries) {
        Some("input") => ExitCode::from(EXIT_INPUT),
        Some(_) => ExitCode::from(EXIT_NUMERIC),
        None if s.failed > 0 => ExitCode::from(EXIT_FAIL),
        None => ExitCode::SUCCESS,
    }
}
