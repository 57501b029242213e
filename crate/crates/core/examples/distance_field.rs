//! Regularized distance to the boundary on the three supported domains, and
//! the third-order expansion inequality it satisfies.

use neumann_lab::geometry::{check_w3_inequality, DistanceField, Domain};
use neumann_lab::linalg::Vector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> neumann_lab::Result<()> {
    let domains = [
        Domain::Interval { a: 0.0, b: 1.0 },
        Domain::PeriodicStrip { period: 1.0, height: 1.0 },
        Domain::Disc { radius: 1.0 },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for domain in domains {
        let field = DistanceField::new(domain)?;
        println!("{domain:?}");
        println!("  exact zone {:.3}, saturation radius {:.3}", field.exact_zone(), field.saturation_radius());
        for t in [0.0, 0.02, 0.06, 0.09, 0.5] {
            let x = match domain {
                Domain::Interval { .. } => Vector::new1(t),
                Domain::PeriodicStrip { .. } => Vector::new2(0.3, t),
                Domain::Disc { radius } => Vector::new2(radius - 2.0 * t, 0.0),
            };
            let e = field.eval(&x)?;
            println!("  d({:?}) = {:.6}, |Dd| = {:.6}", x.as_slice(), e.d, e.grad.norm());
        }
        let pairs: Vec<(Vector, Vector)> = (0..2000)
            .map(|_| (domain.sample_interior(&mut rng), domain.sample_interior(&mut rng)))
            .collect();
        let w3 = check_w3_inequality(&field, &pairs)?;
        println!(
            "  expansion inequality: {} violations in {} pairs, fitted constant {:.3} <= declared {:.3}",
            w3.violations, w3.samples, w3.fitted_bound, w3.declared_bound
        );
    }
    Ok(())
}
