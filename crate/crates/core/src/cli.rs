//! Configuration documents and command dispatch for the command-line tool.
//!
//! Exit codes: 0 when the command's checks pass, 1 when a check fails, 2 for
//! configuration errors and unknown commands, 3 when a solve does not converge.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::boundary::BoundarySpec;
use crate::error::{Error, Result};
use crate::experiments::{
    probe_problem, run_cont_dep, run_lemma_checks, run_vv_rate, ContDepStudy, LemmaStudy, Problem, RateStudy, Report, Table,
};
use crate::geometry::Domain;
use crate::operators::OperatorSpec;
use crate::solver::{holder_estimate, BoundaryMode, SolveParams};

pub const COMMANDS: [&str; 6] = ["solve", "vv-rate", "cont-dep", "lemma-check", "holder", "probe"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_policy_iters: usize,
    pub linear_tol: f64,
    pub damping: f64,
    pub max_outer_iters: usize,
    pub viscosity: f64,
    pub boundary_mode: BoundaryMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let p = SolveParams::default();
        Self {
            tol: p.tol,
            max_policy_iters: p.max_policy_iters,
            linear_tol: p.linear_tol,
            damping: p.damping,
            max_outer_iters: p.max_outer_iters,
            viscosity: 0.0,
            boundary_mode: BoundaryMode::Strong,
        }
    }
}

impl SolverConfig {
    pub fn params(&self) -> SolveParams {
        SolveParams {
            tol: self.tol,
            max_policy_iters: self.max_policy_iters,
            linear_tol: self.linear_tol,
            damping: self.damping,
            max_outer_iters: self.max_outer_iters,
        }
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// One run: the problem, solver settings, study sections, seed and output
/// directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub domain: Domain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    pub operator: OperatorSpec,
    pub boundary: BoundarySpec,
    pub cells: Vec<usize>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vv_rate: Option<RateStudy>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cont_dep: Vec<ContDepStudy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma: Option<LemmaStudy>,
}

impl Config {
    pub fn problem(&self) -> Problem {
        Problem {
            domain: self.domain,
            r0: self.r0,
            operator: self.operator.clone(),
            boundary: self.boundary.clone(),
            cells: self.cells.clone(),
            viscosity: self.solver.viscosity,
            boundary_mode: self.solver.boundary_mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let as_config = |e: Error| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(other.to_string()),
        };
        self.problem().validate().map_err(as_config)?;
        self.solver.params().validate()?;
        if !(self.solver.viscosity >= 0.0 && self.solver.viscosity.is_finite()) {
            return Err(Error::Config(format!("viscosity {} must be nonnegative", self.solver.viscosity)));
        }
        Ok(())
    }
}

/// Parses and validates a JSON configuration; errors name the offending path.
pub fn parse_config(text: &str) -> Result<Config> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: Config = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config(format!("at `{path}`: {}", e.into_inner()))
    })?;
    config.validate()?;
    Ok(config)
}

pub fn serialize_config(config: &Config) -> Result<String> {
    Ok(serde_json::to_string_pretty(config)?)
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Json(_) | Error::Domain(_) | Error::Argument(_) => 2,
        Error::Nonconvergence { .. } => 3,
        _ => 1,
    }
}

fn report_code(r: &Report) -> i32 {
    if r.aborted.is_some() {
        3
    } else if r.pass {
        0
    } else {
        1
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn write_report(dir: &Path, stem: &str, report: &Report) -> Result<()> {
    write(dir, &format!("{stem}.json"), &serde_json::to_string_pretty(report)?)?;
    for t in &report.tables {
        write(dir, &format!("{stem}_{}.csv", t.name), &t.to_csv())?;
    }
    Ok(())
}

fn summary(report: &Report) -> String {
    let mut s = format!("{}: {}", report.kind, if report.pass { "pass" } else { "FAIL" });
    for (k, v) in &report.values {
        s.push_str(&format!("\n  {k} = {v:.6e}"));
    }
    for (k, v) in &report.flags {
        s.push_str(&format!("\n  {k}: {v}"));
    }
    if let Some(a) = &report.aborted {
        s.push_str(&format!("\n  aborted: {a}"));
    }
    s
}

/// Runs `command` for `config`, writing artifacts into `config.out`, and
/// returns the exit code.
pub fn dispatch(command: &str, config: &Config) -> Result<i32> {
    if !COMMANDS.contains(&command) {
        return Err(Error::Config(format!("unknown command `{command}`; expected one of {}", COMMANDS.join(", "))));
    }
    let out = &config.out;
    fs::create_dir_all(out)?;
    let problem = config.problem();
    let params = config.solver.params();
    match command {
        "solve" | "holder" => {
            let u = problem.solve(&params)?;
            let est = holder_estimate(&u.grid, &u.values)?;
            let mut report = Report::new(command);
            report.values.insert("residual".into(), u.residual_norm);
            report.values.insert("iterations".into(), u.iterations as f64);
            report.values.insert("outer_iterations".into(), u.outer_iterations as f64);
            report.values.insert("beta_hat".into(), est.beta);
            report.values.insert("holder_seminorm".into(), est.seminorm);
            report.pass = u.residual_norm <= params.tol;
            if command == "solve" {
                let dim = u.grid.domain().dim();
                let cols: Vec<&str> = ["x1", "x2"][..dim].iter().copied().chain(["value"]).collect();
                let mut t = Table::new("solution", &cols);
                for (x, v) in u.grid.nodes().iter().zip(&u.values) {
                    let mut row = x.as_slice().to_vec();
                    row.push(*v);
                    t.rows.push(row);
                }
                write(out, "solution.csv", &t.to_csv())?;
            }
            write(out, &format!("{command}.json"), &serde_json::to_string_pretty(&report)?)?;
            println!("{}", summary(&report));
            Ok(report_code(&report))
        }
        "vv-rate" => {
            let study = config.vv_rate.clone().unwrap_or_default();
            let report = run_vv_rate(&problem, &study, &params)?;
            write_report(out, "vv_rate", &report)?;
            println!("{}", summary(&report));
            Ok(report_code(&report))
        }
        "cont-dep" => {
            if config.cont_dep.is_empty() {
                return Err(Error::Config("`cont_dep` lists no perturbation studies".into()));
            }
            let mut code = 0;
            for study in &config.cont_dep {
                let report = run_cont_dep(&problem, study, &params, config.seed)?;
                let stem = format!("cont_dep_{}", serde_json::to_value(study.family)?.as_str().unwrap_or("study"));
                write_report(out, &stem, &report)?;
                println!("{stem}\n{}", summary(&report));
                code = code.max(report_code(&report));
            }
            Ok(code)
        }
        "lemma-check" => {
            let study = config.lemma.clone().unwrap_or_default();
            let outcomes = run_lemma_checks(&problem, &study, config.seed)?;
            let json = serde_json::to_string_pretty(&outcomes)?;
            write(out, "lemma_check.json", &json)?;
            for o in &outcomes {
                println!(
                    "{:?}: {} ({} violations over {} samples, drift {:.3})",
                    o.lemma,
                    if o.pass { "pass" } else { "FAIL" },
                    o.violations,
                    o.samples,
                    o.max_drift
                );
            }
            Ok(if outcomes.iter().all(|o| o.pass) { 0 } else { 1 })
        }
        "probe" => {
            let report = probe_problem(&problem, config.seed)?;
            write(out, "probe.json", &serde_json::to_string_pretty(&report)?)?;
            println!("{}", summary(&report));
            Ok(report_code(&report))
        }
        _ => unreachable!(),
    }
}

/// Full command-line flow: read the configuration, apply `--seed` and
/// `--out` overrides, dispatch, and map errors to exit codes.
pub fn execute(command: &str, config_path: &Path, seed: Option<u64>, out: Option<&Path>) -> i32 {
    if !COMMANDS.contains(&command) {
        eprintln!("unknown command `{command}`; expected one of {}", COMMANDS.join(", "));
        return 2;
    }
    let text = match fs::read_to_string(config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", config_path.display());
            return 2;
        }
    };
    let mut config = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return 2;
        }
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(o) = out {
        config.out = o.to_path_buf();
    }
    let start = Instant::now();
    let code = match dispatch(command, &config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            exit_code(&e)
        }
    };
    eprintln!("{command} finished in {:.2?}", start.elapsed());
    code
}
