//! Continuous dependence of the solution on the data, for shifts of `f`, `σ`
//! and the reflection direction.

use neumann_lab::cli::parse_config;
use neumann_lab::experiments::run_cont_dep;

fn main() -> neumann_lab::Result<()> {
    let config = parse_config(include_str!("../configs/continuous_dependence.json"))?;
    let problem = config.problem();
    for study in &config.cont_dep {
        let report = run_cont_dep(&problem, study, &config.solver.params(), config.seed)?;
        println!("{:?} (lambda {:.4}):", study.family, report.value("lambda").unwrap_or(f64::NAN));
        let table = report.table("ratios").expect("ratio table");
        let col = |name: &str| table.column(name).expect("column");
        for ((s, diff), ratio) in col("magnitude").iter().zip(col("sup_diff")).zip(col("ratio")) {
            println!("  s = {s:<6} |u1 - u2| = {diff:.4e}  R = {ratio:.4}");
        }
        println!(
            "  max R {:.4}, median R {:.4}, pass {}",
            report.value("max_ratio").unwrap_or(f64::NAN),
            report.value("median_ratio").unwrap_or(f64::NAN),
            report.pass
        );
        if let Some(gap) = report.value("shift_identity_gap") {
            println!("  |u1 - u2| - s / lambda = {gap:.2e}");
        }
    }
    Ok(())
}
