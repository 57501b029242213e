//! Regularized shift, the test function built from it, and the fitted
//! constants of its structural inequalities.

use std::sync::Arc;

use neumann_lab::boundary::{BoundaryOp, BoundarySpec};
use neumann_lab::cli::parse_config;
use neumann_lab::experiments::{run_lemma_checks, LemmaStudy};
use neumann_lab::geometry::{DistanceField, Domain};
use neumann_lab::linalg::Vector;
use neumann_lab::testfn::{LemmaSetup, RegularizedShift};

fn main() -> neumann_lab::Result<()> {
    let field = DistanceField::with_radius(Domain::Interval { a: 0.0, b: 1.0 }, 0.1)?;
    let op = BoundaryOp::new(BoundarySpec::capillary(0.5), field)?;
    let shift = RegularizedShift::new(Arc::new(op.clone()), field, 0.05)?;
    println!("regularized shift, a = {}:", shift.a());
    for x in [0.0, 0.04, 0.08, 0.5] {
        let (x, p) = (Vector::new1(x), Vector::new1(0.7));
        println!("  C_a({:.2}, 0.7) = {:.8}  (extended shift {:.8})", x[0], shift.eval(&x, &p)?, op.extended_shift(&x, &p)?);
    }

    let setup = LemmaSetup::for_boundary(&op, 1.0)?;
    let phi = setup.test_function(0.1, 1.0, 0.05)?;
    println!("test function, eps = {}, eta = {:.4}:", phi.eps(), phi.eta());
    for (x, y) in [(0.3, 0.3), (0.3, 0.32), (0.01, 0.0), (0.0, 0.02)] {
        let (x, y) = (Vector::new1(x), Vector::new1(y));
        println!("  phi({}, {}) = {:.6}", x[0], y[0], phi.eval_phi(&x, &y)?);
    }

    let config = parse_config(include_str!("../configs/lemma_capillary.json"))?;
    let study = LemmaStudy { samples: 2000, ..LemmaStudy::default() };
    for outcome in run_lemma_checks(&config.problem(), &study, config.seed)? {
        println!(
            "{:?}: pass {}, {} violations on {} samples, drift {:.3}",
            outcome.lemma, outcome.pass, outcome.violations, outcome.samples, outcome.max_drift
        );
        for (name, value) in &outcome.fitted_constants {
            println!("    {name} = {value:.4}");
        }
    }
    Ok(())
}
