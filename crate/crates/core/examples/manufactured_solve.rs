//! Grid convergence on `-u'' + u = (π² + 1) cos(πx)` with homogeneous
//! Neumann data, whose solution is `cos(πx)`.

use std::f64::consts::PI;
use std::time::Instant;

use neumann_lab::cli::parse_config;
use neumann_lab::solver::SolveParams;

fn main() -> neumann_lab::Result<()> {
    let mut problem = parse_config(include_str!("../configs/manufactured.json"))?.problem();
    let start = Instant::now();
    let mut previous: Option<f64> = None;
    for n in [64, 128, 256, 512] {
        problem.cells = vec![n];
        let u = problem.solve(&SolveParams::default())?;
        let err = u
            .grid
            .nodes()
            .iter()
            .zip(&u.values)
            .map(|(x, v)| (v - (PI * x[0]).cos()).abs())
            .fold(0.0, f64::max);
        match previous {
            Some(e) => println!("N = {n:4}: error {err:.3e}, ratio {:.3}", e / err),
            None => println!("N = {n:4}: error {err:.3e}"),
        }
        previous = Some(err);
    }
    println!("total {:.2?}", start.elapsed());
    Ok(())
}
