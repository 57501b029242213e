//! Policy iteration for a Bellman and an Isaacs operator, with a monotonicity
//! check and a refinement comparison.

use neumann_lab::cli::parse_config;
use neumann_lab::solver::{sup_difference, SolveParams};

fn main() -> neumann_lab::Result<()> {
    let params = SolveParams::default();
    for (name, text) in [
        ("bellman", include_str!("../configs/bellman.json")),
        ("isaacs", include_str!("../configs/isaacs.json")),
    ] {
        let problem = parse_config(text)?.problem();
        let disc = problem.discretization(1, 0.0)?;
        let u = disc.solve(&params)?;
        disc.check_monotone(&u.values)?;
        println!(
            "{name}: {} linear solves, {} outer iterations, residual {:.2e}, max |u| {:.6}",
            u.iterations,
            u.outer_iterations,
            u.residual_norm,
            u.max_abs()
        );
        let lo = u.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = u.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        println!("  range [{lo:.6}, {hi:.6}], scheme residual at u {:.2e}", disc.residual(&u.values)?);

        let refined = problem.discretization(2, 0.0)?.solve(&params)?;
        let coarse = refined.restrict_to(&u.grid)?;
        println!("  change under refinement {:.3e}", sup_difference(&coarse, &u.values).1);
    }
    Ok(())
}
