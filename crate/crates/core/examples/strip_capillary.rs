//! Capillary contact-angle condition on a periodic strip, solved with the
//! damped outer loop, in both boundary modes.

use neumann_lab::cli::parse_config;
use neumann_lab::solver::{holder_estimate, sup_difference, BoundaryMode};

fn main() -> neumann_lab::Result<()> {
    let config = parse_config(include_str!("../configs/strip_capillary.json"))?;
    let params = config.solver.params();
    let mut problem = config.problem();
    let strong = problem.solve(&params)?;
    println!(
        "strong: {} outer iterations, {} linear solves, residual {:.2e}",
        strong.outer_iterations, strong.iterations, strong.residual_norm
    );
    for (k, r) in strong.history.iter().enumerate() {
        println!("  outer {k}: residual {r:.3e}");
    }
    let grid = &strong.grid;
    let nx = grid.cells()[0] + 1;
    for j in [0, grid.cells()[1] / 4, grid.cells()[1] / 2] {
        let row: Vec<String> = (0..nx).step_by(nx / 6).map(|i| format!("{:+.4}", strong.values[grid.index(i, j)])).collect();
        println!("  x2 = {:.3}: {}", j as f64 * grid.spacing()[1], row.join(" "));
    }
    let holder = holder_estimate(grid, &strong.values)?;
    println!("holder estimate: beta {:.3}, seminorm {:.4}", holder.beta, holder.seminorm);

    problem.boundary_mode = BoundaryMode::Weak;
    let weak = problem.solve(&params)?;
    println!(
        "weak: {} outer iterations, residual {:.2e}, sup distance to strong {:.3e}",
        weak.outer_iterations,
        weak.residual_norm,
        sup_difference(&weak.values, &strong.values).1
    );
    Ok(())
}
