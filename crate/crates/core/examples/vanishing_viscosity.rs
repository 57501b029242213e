//! Convergence of viscous approximations `u_μ` to the inviscid solution of a
//! first-order problem with Neumann data.

use neumann_lab::cli::parse_config;
use neumann_lab::experiments::{run_vv_rate, RateStudy};

fn main() -> neumann_lab::Result<()> {
    let config = parse_config(include_str!("../configs/vanishing_viscosity.json"))?;
    let report = run_vv_rate(&config.problem(), &RateStudy::default(), &config.solver.params())?;
    let table = report.table("errors").expect("error table");
    println!("{:>12} {:>12}", "mu", "|u - u_mu|");
    for row in &table.rows {
        println!("{:>12.4e} {:>12.4e}", row[0], row[1]);
    }
    let beta = report.value("beta_hat").unwrap_or(f64::NAN);
    let slope = report.value("slope").unwrap_or(f64::NAN);
    println!("holder exponent of the reference {beta:.3}; fitted slope {slope:.3} (needs >= {:.3})", beta / 2.0 - 0.1);
    println!("flags {:?}, pass {}", report.flags, report.pass);
    Ok(())
}
