//! Measured structure constants of whole problems, including one whose
//! declared zeroth-order constant is too optimistic.

use neumann_lab::cli::parse_config;
use neumann_lab::experiments::probe_problem;

fn main() -> neumann_lab::Result<()> {
    for (name, text) in [
        ("continuous_dependence", include_str!("../configs/continuous_dependence.json")),
        ("strip_capillary", include_str!("../configs/strip_capillary.json")),
        ("probe_lambda_violation", include_str!("../configs/probe_lambda_violation.json")),
    ] {
        let config = parse_config(text)?;
        let report = probe_problem(&config.problem(), config.seed)?;
        println!("{name}: pass {}", report.pass);
        for (key, value) in &report.values {
            println!("  {key} = {value:.4}");
        }
        println!("  {:?}", report.flags);
    }
    Ok(())
}
