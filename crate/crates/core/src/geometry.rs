//! Bounded smooth domains, a three-times differentiable extension of the
//! distance to the boundary, outward normals and Cartesian grids.
//!
//! The extension is `d(x) = r0 * S(dist(x) / r0)` where `S(t) = t` for
//! `t <= 1/2`, `S` is constant (`3/4`) for `t >= 1`, and on `[1/2, 1]` the
//! slope `S'` falls from 1 to 0 along the quintic smoothstep
//! `1 - (6u^5 - 15u^4 + 10u^3)`, `u = 2t - 1`. `S` is therefore a degree-six
//! polynomial on the transition band with continuous third derivative, so
//! `d` equals the exact distance within `r0 / 2` of the boundary, saturates at
//! `3 r0 / 4` deep inside, and has `0 <= d <= 1`, `|Dd| <= 1`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// Points this far outside the closed domain are still accepted.
pub const CONTAINMENT_TOL: f64 = 1e-12;

/// Plateau of the blend profile, `S(t)` for `t >= 1`.
pub const BLEND_PLATEAU: f64 = 0.75;
/// `max |S''|` over the transition band.
const BLEND_S2_MAX: f64 = 3.75;
/// `max |S'''|` over the transition band, `40 / sqrt(3)`.
const BLEND_S3_MAX: f64 = 23.094_010_767_585_03;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Domain {
    /// `(a, b)` in one dimension.
    Interval { a: f64, b: f64 },
    /// `[0, period) x (0, height)`, periodic in the first coordinate, so the
    /// boundary is the two lines `x2 = 0` and `x2 = height`.
    #[serde(rename = "strip")]
    PeriodicStrip { period: f64, height: f64 },
    /// Disc of the given radius centred at the origin.
    Disc { radius: f64 },
}

impl Domain {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Domain::Interval { a, b } => a.is_finite() && b.is_finite() && a < b,
            Domain::PeriodicStrip { period, height } => {
                period.is_finite() && height.is_finite() && period > 0.0 && height > 0.0
            }
            Domain::Disc { radius } => radius.is_finite() && radius > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("degenerate domain {self:?}")))
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            _ => 2,
        }
    }

    pub fn inradius(&self) -> f64 {
        match *self {
            Domain::Interval { a, b } => 0.5 * (b - a),
            Domain::PeriodicStrip { height, .. } => 0.5 * height,
            Domain::Disc { radius } => radius,
        }
    }

    /// Largest distance between two points of the closed domain (periodic
    /// distance on the strip).
    pub fn diameter(&self) -> f64 {
        match *self {
            Domain::Interval { a, b } => b - a,
            Domain::PeriodicStrip { period, height } => (0.25 * period * period + height * height).sqrt(),
            Domain::Disc { radius } => 2.0 * radius,
        }
    }

    /// Whether the solver can discretize this domain with Cartesian stencils.
    pub fn solver_capable(&self) -> bool {
        !matches!(self, Domain::Disc { .. })
    }

    /// Distance between two points, wrapping the periodic direction.
    pub fn metric(&self, x: &Vector, y: &Vector) -> f64 {
        match *self {
            Domain::PeriodicStrip { period, .. } => {
                let mut dx = (x[0] - y[0]).rem_euclid(period);
                if dx > 0.5 * period {
                    dx = period - dx;
                }
                let dy = x[1] - y[1];
                (dx * dx + dy * dy).sqrt()
            }
            _ => (*x - *y).norm(),
        }
    }

    /// Signed distance to the boundary, positive inside.
    pub fn signed_distance(&self, x: &Vector) -> f64 {
        match *self {
            Domain::Interval { a, b } => (x[0] - a).min(b - x[0]),
            Domain::PeriodicStrip { height, .. } => x[1].min(height - x[1]),
            Domain::Disc { radius } => radius - x.norm(),
        }
    }

    pub fn contains(&self, x: &Vector) -> bool {
        x.dim() == self.dim() && x.is_finite() && self.signed_distance(x) >= -CONTAINMENT_TOL
    }

    pub fn check_contains(&self, x: &Vector) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::Domain(format!("point {:?} outside closed domain", x.as_slice())))
        }
    }

    /// Closest boundary point.
    pub fn project(&self, x: &Vector) -> Vector {
        match *self {
            Domain::Interval { a, b } => Vector::new1(if x[0] - a <= b - x[0] { a } else { b }),
            Domain::PeriodicStrip { period, height } => {
                let x1 = x[0].rem_euclid(period);
                Vector::new2(x1, if x[1] <= height - x[1] { 0.0 } else { height })
            }
            Domain::Disc { radius } => {
                let r = x.norm();
                if r == 0.0 {
                    Vector::new2(radius, 0.0)
                } else {
                    *x * (radius / r)
                }
            }
        }
    }

    /// Outward unit normal at a boundary point (or at the projection of `x`).
    pub fn boundary_normal(&self, x: &Vector) -> Vector {
        let p = self.project(x);
        match *self {
            Domain::Interval { a, .. } => Vector::new1(if p[0] == a { -1.0 } else { 1.0 }),
            Domain::PeriodicStrip { .. } => Vector::new2(0.0, if p[1] == 0.0 { -1.0 } else { 1.0 }),
            Domain::Disc { radius } => p * (1.0 / radius),
        }
    }

    /// Gradient and Hessian of the exact distance away from the medial axis.
    fn distance_derivatives(&self, x: &Vector) -> (Vector, Matrix) {
        match *self {
            Domain::Interval { .. } | Domain::PeriodicStrip { .. } => {
                (-self.boundary_normal(x), Matrix::zeros(self.dim()))
            }
            Domain::Disc { .. } => {
                let r = x.norm();
                let xh = *x * (1.0 / r);
                let hess = (Matrix::identity(2) - Matrix::outer(&xh, &xh)) * (-1.0 / r);
                (-xh, hess)
            }
        }
    }

    pub fn sample_interior<R: Rng>(&self, rng: &mut R) -> Vector {
        match *self {
            Domain::Interval { a, b } => Vector::new1(rng.gen_range(a..=b)),
            Domain::PeriodicStrip { period, height } => {
                Vector::new2(rng.gen_range(0.0..period), rng.gen_range(0.0..=height))
            }
            Domain::Disc { radius } => {
                let r = radius * rng.gen::<f64>().sqrt();
                let th = rng.gen_range(0.0..std::f64::consts::TAU);
                Vector::new2(r * th.cos(), r * th.sin())
            }
        }
    }

    pub fn sample_boundary<R: Rng>(&self, rng: &mut R) -> Vector {
        match *self {
            Domain::Interval { a, b } => Vector::new1(if rng.gen_bool(0.5) { a } else { b }),
            Domain::PeriodicStrip { period, height } => {
                Vector::new2(rng.gen_range(0.0..period), if rng.gen_bool(0.5) { 0.0 } else { height })
            }
            Domain::Disc { radius } => {
                let th = rng.gen_range(0.0..std::f64::consts::TAU);
                Vector::new2(radius * th.cos(), radius * th.sin())
            }
        }
    }
}

/// Value, gradient and Hessian of the distance extension at a point.
#[derive(Clone, Copy, Debug)]
pub struct DistanceEval {
    pub d: f64,
    pub grad: Vector,
    pub hess: Matrix,
}

/// Blend profile `S` and its first three derivatives at `t >= 0`.
pub fn blend(t: f64) -> [f64; 4] {
    if t <= 0.5 {
        [t, 1.0, 0.0, 0.0]
    } else if t >= 1.0 {
        [BLEND_PLATEAU, 0.0, 0.0, 0.0]
    } else {
        let u = 2.0 * t - 1.0;
        let big_q = u.powi(4) * (u * u - 3.0 * u + 2.5);
        let q = u.powi(3) * (6.0 * u * u - 15.0 * u + 10.0);
        let dq = 30.0 * u * u * (1.0 - u) * (1.0 - u);
        let ddq = 60.0 * u * (2.0 * u - 1.0) * (u - 1.0);
        [t - 0.5 * big_q, 1.0 - q, -2.0 * dq, -4.0 * ddq]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistanceField {
    domain: Domain,
    r0: f64,
    d3_bound: f64,
}

impl DistanceField {
    /// Saturation radius defaults to a fifth of the inradius.
    pub fn new(domain: Domain) -> Result<Self> {
        Self::with_radius(domain, 0.2 * domain.inradius())
    }

    pub fn with_radius(domain: Domain, r0: f64) -> Result<Self> {
        domain.validate()?;
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(Error::Config(format!("saturation radius {r0} must be positive")));
        }
        if r0 > domain.inradius() {
            return Err(Error::Config(format!(
                "saturation radius {r0} exceeds the inradius {}",
                domain.inradius()
            )));
        }
        if BLEND_PLATEAU * r0 > 1.0 {
            return Err(Error::Config(format!("saturation radius {r0} puts the plateau above 1")));
        }
        let flat = BLEND_S3_MAX / (r0 * r0);
        let d3_bound = match domain {
            Domain::Disc { radius } => {
                let rho = radius - r0;
                if rho <= 0.0 {
                    return Err(Error::Config("saturation radius must be below the disc radius".into()));
                }
                flat + 3.0 * BLEND_S2_MAX / (r0 * rho) + 3.0 / (rho * rho)
            }
            _ => flat,
        };
        Ok(Self { domain, r0, d3_bound })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn saturation_radius(&self) -> f64 {
        self.r0
    }

    /// Upper bound for `|D^3 d|` over the closed domain.
    pub fn d3_bound(&self) -> f64 {
        self.d3_bound
    }

    /// Distance to the boundary below which `d` is the exact distance.
    pub fn exact_zone(&self) -> f64 {
        0.5 * self.r0
    }

    pub fn plateau(&self) -> f64 {
        BLEND_PLATEAU * self.r0
    }

    pub fn eval(&self, x: &Vector) -> Result<DistanceEval> {
        self.domain.check_contains(x)?;
        let dist = self.domain.signed_distance(x).max(0.0);
        let [s, s1, s2, _] = blend(dist / self.r0);
        let dim = self.domain.dim();
        if s1 == 0.0 && s2 == 0.0 {
            return Ok(DistanceEval { d: self.r0 * s, grad: Vector::zeros(dim), hess: Matrix::zeros(dim) });
        }
        let (g, h) = self.domain.distance_derivatives(x);
        Ok(DistanceEval {
            d: self.r0 * s,
            grad: g * s1,
            hess: Matrix::outer(&g, &g) * (s2 / self.r0) + h * s1,
        })
    }

    /// Same formula as [`Self::eval`] but without the containment check; outside
    /// the domain `d` continues as the negative signed distance.
    pub fn eval_extended(&self, x: &Vector) -> DistanceEval {
        let dist = self.domain.signed_distance(x);
        let [s, s1, s2, _] = blend(dist / self.r0);
        let dim = self.domain.dim();
        if s1 == 0.0 && s2 == 0.0 {
            return DistanceEval { d: self.r0 * s, grad: Vector::zeros(dim), hess: Matrix::zeros(dim) };
        }
        let (g, h) = self.domain.distance_derivatives(x);
        DistanceEval { d: self.r0 * s, grad: g * s1, hess: Matrix::outer(&g, &g) * (s2 / self.r0) + h * s1 }
    }

    pub fn d(&self, x: &Vector) -> Result<f64> {
        self.eval(x).map(|e| e.d)
    }

    /// `n(x) = -Dd(x)`; the outward unit normal on the boundary.
    pub fn outward_normal(&self, x: &Vector) -> Result<Vector> {
        self.eval(x).map(|e| -e.grad)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct W3Report {
    pub samples: usize,
    pub violations: usize,
    /// Smallest constant replacing `|D^3 d|_0 / 24` that makes every sample pass.
    pub fitted_bound: f64,
    pub declared_bound: f64,
}

/// Checks `±[d(x) - d(y)] <= ±(y - x)·n((x+y)/2) + |D^3 d|_0 |x - y|^3 / 24`.
pub fn check_w3_inequality(field: &DistanceField, samples: &[(Vector, Vector)]) -> Result<W3Report> {
    if samples.is_empty() {
        return Err(Error::Argument("empty sample list".into()));
    }
    let declared = field.d3_bound() / 24.0;
    let mut violations = 0;
    let mut fitted: f64 = 0.0;
    for (x, y) in samples {
        let dx = field.d(x)?;
        let dy = field.d(y)?;
        let mid = (*x + *y) * 0.5;
        let n_mid = field.outward_normal(&mid)?;
        let h = *x - *y;
        let gap = (dx - dy - (*y - *x).dot(&n_mid)).abs();
        // rounding in d and in the inner product
        let slack = 8.0 * f64::EPSILON * (dx.abs() + dy.abs() + h.norm());
        let h3 = h.norm().powi(3);
        if gap > declared * h3 + slack {
            violations += 1;
        }
        if h3 > 0.0 {
            fitted = fitted.max((gap - slack).max(0.0) / h3);
        }
    }
    Ok(W3Report { samples: samples.len(), violations, fitted_bound: fitted, declared_bound: declared })
}

/// Cartesian grid on a solver-capable domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    domain: Domain,
    cells: Vec<usize>,
    spacing: Vec<f64>,
    nodes: Vec<Vector>,
    boundary: Vec<usize>,
}

impl Grid {
    /// `cells` holds one entry per axis: intervals in 1D; `[nx, ny]` on the
    /// strip, with `nx` periodic columns and `ny + 1` rows.
    pub fn new(domain: Domain, cells: &[usize]) -> Result<Self> {
        domain.validate()?;
        if cells.len() != domain.dim() || cells.iter().any(|&c| c < 2) {
            return Err(Error::Config(format!(
                "grid needs {} cell counts >= 2, got {cells:?}",
                domain.dim()
            )));
        }
        match domain {
            Domain::Interval { a, b } => {
                let n = cells[0];
                let h = (b - a) / n as f64;
                let nodes = (0..=n).map(|i| Vector::new1(if i == n { b } else { a + i as f64 * h })).collect();
                Ok(Self { domain, cells: vec![n], spacing: vec![h], nodes, boundary: vec![0, n] })
            }
            Domain::PeriodicStrip { period, height } => {
                let (nx, ny) = (cells[0], cells[1]);
                let (h1, h2) = (period / nx as f64, height / ny as f64);
                let mut nodes = Vec::with_capacity(nx * (ny + 1));
                for j in 0..=ny {
                    let x2 = if j == ny { height } else { j as f64 * h2 };
                    for i in 0..nx {
                        nodes.push(Vector::new2(i as f64 * h1, x2));
                    }
                }
                let boundary = (0..nx).chain(ny * nx..(ny + 1) * nx).collect();
                Ok(Self { domain, cells: vec![nx, ny], spacing: vec![h1, h2], nodes, boundary })
            }
            Domain::Disc { .. } => Err(Error::Config("the disc is not a solver domain".into())),
        }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Largest spacing over the axes.
    pub fn h(&self) -> f64 {
        self.spacing.iter().copied().fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, k: usize) -> Vector {
        self.nodes[k]
    }

    pub fn nodes(&self) -> &[Vector] {
        &self.nodes
    }

    pub fn boundary_indices(&self) -> &[usize] {
        &self.boundary
    }

    pub fn is_boundary(&self, k: usize) -> bool {
        self.boundary.binary_search(&k).is_ok()
    }

    /// Same domain with every cell count multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        let cells: Vec<usize> = self.cells.iter().map(|c| c * factor).collect();
        Self::new(self.domain, &cells)
    }

    /// Column/row of node `k` on the strip.
    pub fn ij(&self, k: usize) -> (usize, usize) {
        let nx = self.cells[0];
        if self.cells.len() == 1 {
            (k, 0)
        } else {
            (k % nx, k / nx)
        }
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        if self.cells.len() == 1 {
            i
        } else {
            j * self.cells[0] + i
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_interval() -> DistanceField {
        DistanceField::with_radius(Domain::Interval { a: 0.0, b: 1.0 }, 0.2).unwrap()
    }

    #[test]
    fn exact_zone_near_left_endpoint() {
        let e = unit_interval().eval(&Vector::new1(0.05)).unwrap();
        assert!((e.d - 0.05).abs() < 1e-15);
        assert_eq!(e.grad[0], 1.0);
    }

    #[test]
    fn disc_near_boundary() {
        let f = DistanceField::with_radius(Domain::Disc { radius: 1.0 }, 0.2).unwrap();
        let e = f.eval(&Vector::new2(0.9, 0.0)).unwrap();
        assert!((e.d - 0.1).abs() < 1e-15);
        assert!((e.grad[0] + 1.0).abs() < 1e-15 && e.grad[1].abs() < 1e-15);
        let n = f.outward_normal(&Vector::new2(0.0, 1.0)).unwrap();
        assert!(n[0].abs() < 1e-15 && (n[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn plateau_value_from_blend_polynomial() {
        let f = unit_interval();
        let t: f64 = 0.5 / 0.2;
        // S(t) for t >= 1: t - Q(1)/2 at the end of the band, Q(1) = 1 - 3 + 2.5
        let s_at_one = 1.0 - 0.5 * (1.0 - 3.0 + 2.5);
        assert!(t >= 1.0);
        assert!((f.d(&Vector::new1(0.5)).unwrap() - 0.2 * s_at_one).abs() < 1e-15);
        assert!((f.plateau() - 0.15).abs() < 1e-15);
    }

    #[test]
    fn interval_normals() {
        let f = unit_interval();
        assert_eq!(f.outward_normal(&Vector::new1(0.0)).unwrap()[0], -1.0);
        assert_eq!(f.outward_normal(&Vector::new1(1.0)).unwrap()[0], 1.0);
    }

    #[test]
    fn outside_point_is_domain_error() {
        assert!(matches!(unit_interval().eval(&Vector::new1(1.1)), Err(Error::Domain(_))));
        assert!(matches!(unit_interval().eval(&Vector::new2(0.1, 0.1)), Err(Error::Domain(_))));
    }

    #[test]
    fn blend_derivatives_match_finite_differences() {
        let h = 1e-5;
        for k in 1..50 {
            let t = 0.5 + 0.5 * k as f64 / 50.0;
            let b = blend(t);
            let (p, m) = (blend(t + h), blend(t - h));
            for order in 0..3 {
                let fd = (p[order] - m[order]) / (2.0 * h);
                assert!((fd - b[order + 1]).abs() < 1e-6, "order {order} at t={t}");
            }
        }
        // continuity at the band ends
        for t in [0.5, 1.0] {
            let (l, r) = (blend(t - 1e-12), blend(t + 1e-12));
            for o in 0..4 {
                assert!((l[o] - r[o]).abs() < 1e-9);
            }
        }
        let s3 = (0..=10000).map(|k| blend(0.5 + 0.5 * k as f64 / 10000.0)[3].abs()).fold(0.0, f64::max);
        assert!(s3 <= BLEND_S3_MAX && s3 > BLEND_S3_MAX * 0.999);
    }

    #[test]
    fn disc_hessian_matches_finite_differences() {
        let f = DistanceField::with_radius(Domain::Disc { radius: 1.0 }, 0.3).unwrap();
        let x = Vector::new2(0.6, 0.25);
        let e = f.eval(&x).unwrap();
        let h = 1e-6;
        for k in 0..2 {
            let ek = Vector::unit(2, k) * h;
            let gp = f.eval(&(x + ek)).unwrap().grad;
            let gm = f.eval(&(x - ek)).unwrap().grad;
            for i in 0..2 {
                assert!(((gp[i] - gm[i]) / (2.0 * h) - e.hess.get(i, k)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn w3_degenerate_and_flat_pairs() {
        let f = unit_interval();
        let same = vec![(Vector::new1(0.3), Vector::new1(0.3))];
        assert_eq!(check_w3_inequality(&f, &same).unwrap().violations, 0);
        let flat = vec![(Vector::new1(0.01), Vector::new1(0.03))];
        let r = check_w3_inequality(&f, &flat).unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.fitted_bound < 1e-9);
        assert!(check_w3_inequality(&f, &[]).is_err());
    }

    #[test]
    fn w3_random_pairs_on_every_domain() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for domain in [
            Domain::Interval { a: 0.0, b: 1.0 },
            Domain::PeriodicStrip { period: 1.0, height: 1.0 },
            Domain::Disc { radius: 1.0 },
        ] {
            let f = DistanceField::new(domain).unwrap();
            let pairs: Vec<_> = (0..10_000)
                .map(|_| {
                    let x = domain.sample_interior(&mut rng);
                    let mut y = domain.sample_interior(&mut rng);
                    if let Domain::PeriodicStrip { .. } = domain {
                        // keep the segment inside one period
                        y[0] = x[0] + (y[0] - x[0]) * 0.5;
                    }
                    (x, y)
                })
                .collect();
            let r = check_w3_inequality(&f, &pairs).unwrap();
            assert_eq!(r.violations, 0, "{domain:?}");
            assert!(r.fitted_bound <= r.declared_bound);
        }
    }

    #[test]
    fn grid_layout() {
        let g = Grid::new(Domain::Interval { a: 0.0, b: 1.0 }, &[4]).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g.boundary_indices(), &[0, 4]);
        let s = Grid::new(Domain::PeriodicStrip { period: 2.0, height: 1.0 }, &[4, 2]).unwrap();
        assert_eq!(s.len(), 12);
        assert_eq!(s.boundary_indices(), &[0, 1, 2, 3, 8, 9, 10, 11]);
        assert_eq!(s.ij(9), (1, 2));
        assert_eq!(s.node(9).as_slice(), &[0.5, 1.0]);
        assert!(Grid::new(Domain::Disc { radius: 1.0 }, &[4, 4]).is_err());
    }

    #[test]
    fn config_rejects_oversized_radius() {
        assert!(DistanceField::with_radius(Domain::Interval { a: 0.0, b: 1.0 }, 0.6).is_err());
    }
}
