//! Discrete comparison: ordered data give ordered discrete solutions.

use neumann_lab::cli::parse_config;
use neumann_lab::experiments::{ordered_pairs, perturb, Perturbation};
use neumann_lab::solver::{discrete_comparison_check, sup_difference, SolveParams};

fn main() -> neumann_lab::Result<()> {
    let params = SolveParams::default();
    for (name, text) in [
        ("bellman", include_str!("../configs/bellman.json")),
        ("isaacs", include_str!("../configs/isaacs.json")),
        ("controlled reflection", include_str!("../configs/continuous_dependence.json")),
    ] {
        let mut problem = parse_config(text)?.problem();
        problem.cells = vec![64];
        let pairs = ordered_pairs(&problem, 40, 17)?
            .into_iter()
            .map(|(a, b)| Ok((a.discretization(1, 0.0)?, b.discretization(1, 0.0)?)))
            .collect::<neumann_lab::Result<Vec<_>>>()?;
        let violations = discrete_comparison_check(&pairs, &params)?;
        println!("{name}: {violations} ordering violations over {} pairs", pairs.len());
    }

    let problem = parse_config(include_str!("../configs/vanishing_viscosity.json"))?.problem();
    let u = problem.solve(&params)?;
    let v = perturb(&problem, Perturbation::FShift, 1.0)?.solve(&params)?;
    let (above, _) = sup_difference(&v.values, &u.values);
    let (below, _) = sup_difference(&u.values, &v.values);
    println!("f + 1 with c = 1: u_super - u_sub lies in [{:.15}, {:.15}]", -below, above);
    Ok(())
}
