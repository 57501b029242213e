//! Evaluating a Bellman operator and measuring its structure constants.

use neumann_lab::coeffs::{MatrixFn, ScalarFn, VectorFn};
use neumann_lab::geometry::Domain;
use neumann_lab::linalg::{Matrix, Vector};
use neumann_lab::operators::{h3_samples, probe_h2bar, probe_h3, CoefficientSet, H2Params, OperatorSpec};

fn main() -> neumann_lab::Result<()> {
    let domain = Domain::Interval { a: 0.0, b: 1.0 };
    let diffuse = CoefficientSet {
        sigma: MatrixFn::Scalar(ScalarFn::Affine { value: 0.3, slope: vec![0.4] }),
        b: VectorFn::constant(&[0.0]),
        c: ScalarFn::constant(1.0),
        f: ScalarFn::Sin { amplitude: 1.0, wavenumber: vec![1.0], phase: 0.0, offset: 0.0 },
    };
    let drift = CoefficientSet {
        sigma: MatrixFn::Scalar(ScalarFn::constant(0.0)),
        b: VectorFn::constant(&[1.0]),
        c: ScalarFn::constant(2.0),
        f: ScalarFn::constant(0.5),
    };
    let op = OperatorSpec::bellman(vec![diffuse, drift])?;

    let x = Vector::new1(0.25);
    for (r, p, xx) in [(0.0, 0.0, 0.0), (1.0, 2.0, -1.0), (-0.5, -3.0, 4.0)] {
        let (p, xx) = (Vector::new1(p), Matrix::scalar(xx));
        let value = op.eval_f(&x, r, &p, &xx)?;
        let (i, _) = op.eval_argcontrols(&x, r, &p, &xx)?;
        println!("F(0.25, {r}, {:?}, {:?}) = {value:.6} (control {i})", p.as_slice(), xx.get(0, 0));
    }

    let lambda = probe_h3(&op, &h3_samples(&domain, 2000, 1.0, 11))?;
    println!("monotonicity in r: lambda = {lambda:.6}");

    let schedule = [(0.2, 0.45), (0.1, 0.32), (0.05, 0.22)];
    let h2 = probe_h2bar(&op, &domain, &schedule, 2000, H2Params::default(), 12)?;
    println!(
        "structure constant: K = {:.4}, refined {:.4}, drift {:.3}, stable {}",
        h2.k_hat, h2.k_hat_refined, h2.drift, h2.pass
    );
    Ok(())
}
