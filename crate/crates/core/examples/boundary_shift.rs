//! The normal shift `C(x, p)` solving `G(x, p + C n) = 0` for each boundary
//! condition type, against closed forms where they exist.

use neumann_lab::boundary::{
    probe_hb1, BoundaryCondition, BoundaryOp, BoundarySpec, Direction, ReflectionControl,
};
use neumann_lab::coeffs::ScalarFn;
use neumann_lab::experiments::boundary_samples;
use neumann_lab::geometry::{DistanceField, Domain};
use neumann_lab::linalg::Vector;

fn main() -> neumann_lab::Result<()> {
    let interval = DistanceField::new(Domain::Interval { a: 0.0, b: 1.0 })?;
    let disc = DistanceField::new(Domain::Disc { radius: 1.0 })?;
    let reflection = BoundarySpec::new(BoundaryCondition::ControlledReflection {
        controls: vec![
            vec![
                ReflectionControl { gamma: Direction::normal(1.0), g: ScalarFn::constant(0.3) },
                ReflectionControl { gamma: Direction::normal(1.5), g: ScalarFn::constant(0.4) },
            ],
            vec![
                ReflectionControl { gamma: Direction::normal(0.8), g: ScalarFn::constant(0.5) },
                ReflectionControl { gamma: Direction::normal(1.2), g: ScalarFn::constant(0.2) },
            ],
        ],
    });
    let cases = [
        ("neumann g = 0.2", BoundarySpec::neumann(0.2), disc),
        ("oblique", BoundarySpec::oblique(Direction::frame(1.0, 0.5), 0.1), disc),
        ("capillary theta = 0.5", BoundarySpec::capillary(0.5), interval),
        ("capillary theta = 0.5", BoundarySpec::capillary(0.5), disc),
        ("controlled reflection", reflection, interval),
    ];
    for (name, spec, field) in cases {
        let op = BoundaryOp::new(spec, field)?;
        println!("{name} on {:?}: nu = {:.4}, lipschitz = {:.4}", field.domain(), op.nu(), op.lipschitz());
        let x = match field.domain().dim() {
            1 => Vector::new1(0.0),
            _ => Vector::new2(0.6, 0.8),
        };
        let ps = match x.dim() {
            1 => vec![Vector::new1(0.0), Vector::new1(1.5)],
            _ => vec![Vector::new2(0.0, 0.0), Vector::new2(1.0, -2.0)],
        };
        for p in ps {
            let c = op.normal_shift(&x, &p)?;
            let (_, n) = op.frame(&x)?;
            let residual = op.eval_g(&x, &(p + n * c))?;
            let closed = match op.closed_form_shift(&x, &p)? {
                Some(v) => format!("{v:.12}"),
                None => "none".into(),
            };
            println!("  p = {:?}: C = {c:.12}, closed form {closed}, |G| = {:.1e}", p.as_slice(), residual.abs());
        }
        let samples = boundary_samples(field.domain(), 64, 4.0, 5);
        println!("  measured nu = {:.4}", probe_hb1(&op, &samples, &[1e-3, 0.1, 1.0, 10.0])?);
    }
    println!("1/sqrt(3) = {:.12}", 1.0 / 3f64.sqrt());
    Ok(())
}
