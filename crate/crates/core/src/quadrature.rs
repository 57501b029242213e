//! Gauss–Legendre rules and the tensor-product mollifier quadrature.

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Unnormalized bump `exp(-1 / (1 - |s|²))` on the open unit ball.
pub fn bump(s: &Vector) -> f64 {
    let r2 = s.norm_sq();
    if r2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r2)).exp()
    }
}

/// Even, nonnegative bump supported in the unit ball, discretized by a tensor
/// Gauss–Legendre rule over `[-1, 1]^N`. The normalizing constant is computed
/// with the same rule, so the discrete mass is 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Mollifier {
    dim: usize,
    order: usize,
    /// Quadrature points with their weights already multiplied by `ρ`.
    points: Vec<(Vector, f64)>,
    normalization: f64,
}

impl Mollifier {
    /// Points per axis: 64 in one dimension, 16 in two.
    pub fn default_order(dim: usize) -> usize {
        if dim == 1 {
            64
        } else {
            16
        }
    }

    pub fn new(dim: usize, order: usize) -> Result<Self> {
        if order < 4 {
            return Err(Error::Config(format!("quadrature order {order} below 4")));
        }
        if !(1..=2).contains(&dim) {
            return Err(Error::Config(format!("dimension {dim} unsupported")));
        }
        let (x, w) = gauss_legendre(order);
        let mut points = Vec::new();
        if dim == 1 {
            for i in 0..order {
                let s = Vector::new1(x[i]);
                points.push((s, w[i] * bump(&s)));
            }
        } else {
            for i in 0..order {
                for j in 0..order {
                    let s = Vector::new2(x[i], x[j]);
                    let v = w[i] * w[j] * bump(&s);
                    if v > 0.0 {
                        points.push((s, v));
                    }
                }
            }
        }
        let total: f64 = points.iter().map(|p| p.1).sum();
        for p in &mut points {
            p.1 /= total;
        }
        Ok(Self { dim, order, points, normalization: 1.0 / total })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Normalized density `ρ(s)`.
    pub fn density(&self, s: &Vector) -> f64 {
        self.normalization * bump(s)
    }

    pub fn points(&self) -> &[(Vector, f64)] {
        &self.points
    }

    /// Discrete mass of `ρ` under the rule.
    pub fn mass(&self) -> f64 {
        self.points.iter().map(|p| p.1).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in [4, 7, 16, 32] {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn mollifier_mass_and_symmetry() {
        for dim in [1, 2] {
            let m = Mollifier::new(dim, Mollifier::default_order(dim)).unwrap();
            assert!((m.mass() - 1.0).abs() < 1e-10);
            let first: Vector = m.points().iter().fold(Vector::zeros(dim), |acc, (s, w)| acc + *s * *w);
            assert!(first.norm() < 1e-15);
            assert!(m.points().iter().all(|p| p.1 >= 0.0));
        }
        assert!(Mollifier::new(1, 3).is_err());
        // in one dimension the default rule alone integrates the bump to 1e-10
        let m = Mollifier::new(1, Mollifier::default_order(1)).unwrap();
        assert!((m.density(&Vector::new1(0.0)) * (-1.0f64).exp().recip() * 0.443_993_816_168_079_4 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn bump_integral_converges_to_reference() {
        // ∫ exp(-1/(1-s²)) ds over (-1, 1)
        let reference = 0.443_993_816_168_079_4;
        let (x, w) = gauss_legendre(256);
        let q: f64 = x.iter().zip(&w).map(|(x, w)| w * bump(&Vector::new1(*x))).sum();
        assert!((q - reference).abs() < 1e-13);
    }
}
