//! Neumann-type boundary nonlinearities `G(x, p)`, the normal shift
//! `C(x, p)` solving `G(x, p + C n(x)) = 0`, and sample-based probes.
//!
//! `G` is extended off the boundary to the band `|dist| <= r0 / 2` by
//! evaluating the coefficients at the closest boundary point and using the
//! normal of that point. `C` is further extended to all of space by a smooth
//! cutoff in the distance to the boundary (see [`BoundaryOp::extended_shift`]).

use serde::{Deserialize, Serialize};

use crate::coeffs::{ScalarFn, VectorFn};
use crate::error::{Error, Result};
use crate::geometry::{DistanceField, Domain};
use crate::linalg::Vector;
use crate::operators::inf_sup;

/// Oblique direction, either in Cartesian components or as normal and
/// tangential components `γ = γ_n n + γ_t n⊥` relative to the boundary frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Direction {
    Frame(FrameDirection),
    Cartesian(VectorFn),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameDirection {
    pub normal: ScalarFn,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tangential: Option<ScalarFn>,
}

impl Direction {
    pub fn normal(value: f64) -> Self {
        Direction::Frame(FrameDirection { normal: ScalarFn::constant(value), tangential: None })
    }

    pub fn frame(normal: f64, tangential: f64) -> Self {
        Direction::Frame(FrameDirection {
            normal: ScalarFn::constant(normal),
            tangential: Some(ScalarFn::constant(tangential)),
        })
    }

    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Direction::Frame(f) => {
                f.normal.validate(dim)?;
                if let Some(t) = &f.tangential {
                    if dim == 1 {
                        return Err(Error::Config("a tangential component needs two dimensions".into()));
                    }
                    t.validate(dim)?;
                }
                Ok(())
            }
            Direction::Cartesian(v) => v.validate(dim),
        }
    }

    pub fn eval(&self, xb: &Vector, n: &Vector) -> Vector {
        match self {
            Direction::Frame(f) => {
                let mut g = *n * f.normal.eval(xb);
                if let Some(t) = &f.tangential {
                    g += n.perp() * t.eval(xb);
                }
                g
            }
            Direction::Cartesian(v) => v.eval(xb),
        }
    }

    /// Adds `s` to the normal component (frame form) or to every Cartesian component.
    pub fn with_normal_shift(&self, s: f64) -> Self {
        match self {
            Direction::Frame(f) => Direction::Frame(FrameDirection { normal: f.normal.plus(s), tangential: f.tangential.clone() }),
            Direction::Cartesian(v) => {
                let dim = match v {
                    VectorFn::Const(c) => c.len(),
                    VectorFn::Components(c) => c.len(),
                };
                Direction::Cartesian(v.plus(&vec![s; dim]))
            }
        }
    }

    /// Adds `s` to the tangential component; requires the frame form.
    pub fn with_tangential_shift(&self, s: f64) -> Result<Self> {
        match self {
            Direction::Frame(f) => Ok(Direction::Frame(FrameDirection {
                normal: f.normal.clone(),
                tangential: Some(f.tangential.as_ref().map_or(ScalarFn::constant(s), |t| t.plus(s))),
            })),
            Direction::Cartesian(_) => Err(Error::Argument("tangential shift needs a frame direction".into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReflectionControl {
    pub gamma: Direction,
    pub g: ScalarFn,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryCondition {
    /// `p·n - g`
    Neumann { g: ScalarFn },
    /// `γ·p - g`
    Oblique { gamma: Direction, g: ScalarFn },
    /// `p·n - θ (1 + |p|²)^{1/2}`
    Capillary { theta: ScalarFn },
    /// `inf_θ1 sup_θ2 { γ·p - g }`, controls indexed `[θ1][θ2]`
    ControlledReflection { controls: Vec<Vec<ReflectionControl>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum BoundaryRepr {
    Neumann {
        g: ScalarFn,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nu: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lipschitz: Option<f64>,
    },
    Oblique {
        gamma: Direction,
        g: ScalarFn,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nu: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lipschitz: Option<f64>,
    },
    Capillary {
        theta: ScalarFn,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nu: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lipschitz: Option<f64>,
    },
    ControlledReflection {
        controls: Vec<Vec<ReflectionControl>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nu: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lipschitz: Option<f64>,
    },
}

/// Boundary condition with optional declared monotonicity constant `nu` and
/// Lipschitz constant `lipschitz`; undeclared constants are measured.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoundaryRepr", into = "BoundaryRepr")]
pub struct BoundarySpec {
    pub condition: BoundaryCondition,
    pub nu: Option<f64>,
    pub lipschitz: Option<f64>,
}

impl TryFrom<BoundaryRepr> for BoundarySpec {
    type Error = Error;

    fn try_from(r: BoundaryRepr) -> Result<Self> {
        let (condition, nu, lipschitz) = match r {
            BoundaryRepr::Neumann { g, nu, lipschitz } => (BoundaryCondition::Neumann { g }, nu, lipschitz),
            BoundaryRepr::Oblique { gamma, g, nu, lipschitz } => (BoundaryCondition::Oblique { gamma, g }, nu, lipschitz),
            BoundaryRepr::Capillary { theta, nu, lipschitz } => (BoundaryCondition::Capillary { theta }, nu, lipschitz),
            BoundaryRepr::ControlledReflection { controls, nu, lipschitz } => {
                if controls.is_empty() || controls.iter().any(|r| r.len() != controls[0].len()) || controls[0].is_empty() {
                    return Err(Error::Config("reflection controls must form a nonempty rectangular grid".into()));
                }
                (BoundaryCondition::ControlledReflection { controls }, nu, lipschitz)
            }
        };
        for (name, v) in [("nu", nu), ("lipschitz", lipschitz)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!("declared {name} = {v} must be positive")));
                }
            }
        }
        Ok(Self { condition, nu, lipschitz })
    }
}

impl From<BoundarySpec> for BoundaryRepr {
    fn from(s: BoundarySpec) -> Self {
        let (nu, lipschitz) = (s.nu, s.lipschitz);
        match s.condition {
            BoundaryCondition::Neumann { g } => BoundaryRepr::Neumann { g, nu, lipschitz },
            BoundaryCondition::Oblique { gamma, g } => BoundaryRepr::Oblique { gamma, g, nu, lipschitz },
            BoundaryCondition::Capillary { theta } => BoundaryRepr::Capillary { theta, nu, lipschitz },
            BoundaryCondition::ControlledReflection { controls } => {
                BoundaryRepr::ControlledReflection { controls, nu, lipschitz }
            }
        }
    }
}

impl BoundarySpec {
    pub fn new(condition: BoundaryCondition) -> Self {
        Self { condition, nu: None, lipschitz: None }
    }

    pub fn neumann(g: f64) -> Self {
        Self::new(BoundaryCondition::Neumann { g: ScalarFn::constant(g) })
    }

    pub fn capillary(theta: f64) -> Self {
        Self::new(BoundaryCondition::Capillary { theta: ScalarFn::constant(theta) })
    }

    pub fn oblique(gamma: Direction, g: f64) -> Self {
        Self::new(BoundaryCondition::Oblique { gamma, g: ScalarFn::constant(g) })
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match &self.condition {
            BoundaryCondition::Neumann { g } => g.validate(dim),
            BoundaryCondition::Oblique { gamma, g } => {
                gamma.validate(dim)?;
                g.validate(dim)
            }
            BoundaryCondition::Capillary { theta } => theta.validate(dim),
            BoundaryCondition::ControlledReflection { controls } => {
                let width = controls.first().map_or(0, |r| r.len());
                if width == 0 || controls.iter().any(|r| r.len() != width) {
                    return Err(Error::Config("reflection controls must form a nonempty rectangular table".into()));
                }
                controls.iter().flatten().try_for_each(|c| {
                    c.gamma.validate(dim)?;
                    c.g.validate(dim)
                })
            }
        }
    }
}

/// Deterministic set of boundary points used to measure structural constants.
pub fn boundary_points(domain: &Domain, count: usize) -> Vec<Vector> {
    let count = count.max(2);
    match *domain {
        Domain::Interval { a, b } => vec![Vector::new1(a), Vector::new1(b)],
        Domain::PeriodicStrip { period, height } => {
            let half = count / 2;
            (0..half)
                .flat_map(|i| {
                    let x1 = period * i as f64 / half as f64;
                    [Vector::new2(x1, 0.0), Vector::new2(x1, height)]
                })
                .collect()
        }
        Domain::Disc { radius } => (0..count)
            .map(|i| {
                let th = std::f64::consts::TAU * i as f64 / count as f64;
                Vector::new2(radius * th.cos(), radius * th.sin())
            })
            .collect(),
    }
}

/// Weight equal to 1 for `dist <= lo` (including outside the domain), 0 for
/// `dist >= hi`, with a `C^∞` transition in between.
fn cutoff(dist: f64, lo: f64, hi: f64) -> f64 {
    if dist <= lo {
        return 1.0;
    }
    if dist >= hi {
        return 0.0;
    }
    let u = (dist - lo) / (hi - lo);
    let psi = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let (a, b) = (psi(1.0 - u), psi(u));
    a / (a + b)
}

/// A boundary condition bound to a domain, with measured or declared constants.
#[derive(Clone, Debug)]
pub struct BoundaryOp {
    spec: BoundarySpec,
    field: DistanceField,
    nu: f64,
    lipschitz: f64,
}

impl BoundaryOp {
    pub fn new(spec: BoundarySpec, field: DistanceField) -> Result<Self> {
        let domain = *field.domain();
        spec.validate(domain.dim())?;
        let pts = boundary_points(&domain, 512);
        let mut nu = f64::INFINITY;
        let mut k: f64 = 1.0;
        for xb in &pts {
            let n = domain.boundary_normal(xb);
            match &spec.condition {
                BoundaryCondition::Neumann { g } => {
                    nu = nu.min(1.0);
                    k = k.max(1.0 + g.eval(xb).abs());
                }
                BoundaryCondition::Oblique { gamma, g } => {
                    let gm = gamma.eval(xb, &n);
                    nu = nu.min(gm.dot(&n));
                    k = k.max(gm.norm() + g.eval(xb).abs());
                }
                BoundaryCondition::Capillary { theta } => {
                    let t = theta.eval(xb).abs();
                    if t >= 1.0 {
                        return Err(Error::Assumption(format!("|theta| = {t} at {:?} must stay below 1", xb.as_slice())));
                    }
                    nu = nu.min(1.0 - t);
                    k = k.max(1.0 + t);
                }
                BoundaryCondition::ControlledReflection { controls } => {
                    for c in controls.iter().flatten() {
                        let gm = c.gamma.eval(xb, &n);
                        nu = nu.min(gm.dot(&n));
                        k = k.max(gm.norm() + c.g.eval(xb).abs());
                    }
                }
            }
        }
        if !(nu > 0.0) {
            return Err(Error::Assumption(format!("boundary monotonicity constant {nu} is not positive")));
        }
        let nu = spec.nu.unwrap_or(nu);
        let lipschitz = spec.lipschitz.unwrap_or(k);
        Ok(Self { spec, field, nu, lipschitz })
    }

    pub fn spec(&self) -> &BoundarySpec {
        &self.spec
    }

    pub fn field(&self) -> &DistanceField {
        &self.field
    }

    pub fn domain(&self) -> &Domain {
        self.field.domain()
    }

    /// Monotonicity constant in the normal direction.
    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Half-width of the band around the boundary where `G` is defined.
    pub fn band(&self) -> f64 {
        0.5 * self.field.saturation_radius()
    }

    pub fn in_neighborhood(&self, x: &Vector) -> bool {
        x.dim() == self.domain().dim() && x.is_finite() && self.domain().signed_distance(x).abs() <= self.band() * (1.0 + 1e-12)
    }

    /// Closest boundary point and the normal used at `x`.
    pub fn frame(&self, x: &Vector) -> Result<(Vector, Vector)> {
        if !self.in_neighborhood(x) {
            return Err(Error::Domain(format!("point {:?} outside the boundary neighborhood", x.as_slice())));
        }
        let d = self.domain();
        Ok((d.project(x), d.boundary_normal(x)))
    }

    fn g_frame(&self, xb: &Vector, n: &Vector, p: &Vector) -> f64 {
        match &self.spec.condition {
            BoundaryCondition::Neumann { g } => p.dot(n) - g.eval(xb),
            BoundaryCondition::Oblique { gamma, g } => gamma.eval(xb, n).dot(p) - g.eval(xb),
            BoundaryCondition::Capillary { theta } => p.dot(n) - theta.eval(xb) * (1.0 + p.norm_sq()).sqrt(),
            BoundaryCondition::ControlledReflection { controls } => {
                let shape = (controls.len(), controls[0].len());
                inf_sup(shape, |i, j| {
                    let c = &controls[i][j];
                    c.gamma.eval(xb, n).dot(p) - c.g.eval(xb)
                })
                .0
            }
        }
    }

    pub fn eval_g(&self, x: &Vector, p: &Vector) -> Result<f64> {
        let (xb, n) = self.frame(x)?;
        check_dim(p, x)?;
        Ok(self.g_frame(&xb, &n, p))
    }

    /// Tolerance on `|G(x, p + C n)|` guaranteed by [`Self::normal_shift`].
    pub fn shift_tolerance(p: &Vector) -> f64 {
        1e-12 * (1.0 + p.norm())
    }

    /// Root of `t -> G(x, p + t n(x))` by bracket expansion and a safeguarded
    /// regula falsi iterated to machine precision.
    pub fn normal_shift(&self, x: &Vector, p: &Vector) -> Result<f64> {
        let (xb, n) = self.frame(x)?;
        check_dim(p, x)?;
        self.shift_root(&xb, &n, p)
    }

    fn shift_root(&self, xb: &Vector, n: &Vector, p: &Vector) -> Result<f64> {
        let tol = Self::shift_tolerance(p);
        let scale = 1.0 + p.norm();
        let limit = 4.0 * self.lipschitz * scale / self.nu;
        let h = |t: f64| self.g_frame(xb, n, &(*p + *n * t));
        find_increasing_root(h, scale, limit, tol)
    }

    /// Closed form of the normal shift where one exists.
    pub fn closed_form_shift(&self, x: &Vector, p: &Vector) -> Result<Option<f64>> {
        let (xb, n) = self.frame(x)?;
        check_dim(p, x)?;
        Ok(self.closed_form_frame(&xb, &n, p))
    }

    fn closed_form_frame(&self, xb: &Vector, n: &Vector, p: &Vector) -> Option<f64> {
        let pn = p.dot(n);
        match &self.spec.condition {
            BoundaryCondition::Neumann { g } => Some(g.eval(xb) - pn),
            BoundaryCondition::Oblique { gamma, g } => {
                let gm = gamma.eval(xb, n);
                Some((g.eval(xb) - gm.dot(p)) / gm.dot(n))
            }
            BoundaryCondition::Capillary { theta } => {
                let th = theta.eval(xb);
                let tang_sq = (p.norm_sq() - pn * pn).max(0.0);
                Some(th * (1.0 + tang_sq).sqrt() / (1.0 - th * th).sqrt() - pn)
            }
            BoundaryCondition::ControlledReflection { .. } => None,
        }
    }

    /// `C` on the band, using the closed form when available.
    fn shift_fast(&self, xb: &Vector, n: &Vector, p: &Vector) -> Result<f64> {
        match self.closed_form_frame(xb, n, p) {
            Some(c) => Ok(c),
            None => self.shift_root(xb, n, p),
        }
    }

    /// Weight `χ(y)` of the extension: 1 within `r0/2` of the boundary and
    /// outside the domain, 0 from the inradius on.
    pub fn extension_weight(&self, y: &Vector) -> f64 {
        let dom = self.domain();
        cutoff(dom.signed_distance(y), 0.5 * self.field.saturation_radius(), dom.inradius())
    }

    /// Normal shift extended to every `y` as `χ(y) C(π(y), q)`.
    pub fn extended_shift(&self, y: &Vector, q: &Vector) -> Result<f64> {
        check_dim(q, y)?;
        if !y.is_finite() || !q.is_finite() {
            return Err(Error::Argument("non-finite argument".into()));
        }
        let chi = self.extension_weight(y);
        if chi == 0.0 {
            return Ok(0.0);
        }
        let dom = self.domain();
        let xb = dom.project(y);
        let n = dom.boundary_normal(y);
        Ok(chi * self.shift_fast(&xb, &n, q)?)
    }

    /// `(c0, v)` with `extended_shift(y, q) = c0 + v·q` for every `q`, when the
    /// shift is affine in `q` (Neumann, oblique, and capillary in 1D).
    pub fn extended_affine(&self, y: &Vector) -> Result<Option<(f64, Vector)>> {
        if !y.is_finite() {
            return Err(Error::Argument("non-finite argument".into()));
        }
        let chi = self.extension_weight(y);
        let dom = self.domain();
        if chi == 0.0 {
            return Ok(Some((0.0, Vector::zeros(dom.dim()))));
        }
        let xb = dom.project(y);
        let n = dom.boundary_normal(y);
        Ok(match &self.spec.condition {
            BoundaryCondition::Neumann { g } => Some((chi * g.eval(&xb), n * (-chi))),
            BoundaryCondition::Oblique { gamma, g } => {
                let gm = gamma.eval(&xb, &n);
                let gn = gm.dot(&n);
                Some((chi * g.eval(&xb) / gn, gm * (-chi / gn)))
            }
            BoundaryCondition::Capillary { theta } if dom.dim() == 1 => {
                let th = theta.eval(&xb);
                Some((chi * th / (1.0 - th * th).sqrt(), n * (-chi)))
            }
            _ => None,
        })
    }

    /// Derivative of `C(x, p)` along the tangent `n⊥`, by central differences.
    pub fn shift_tangential_slope(&self, x: &Vector, p: &Vector) -> Result<f64> {
        let (xb, n) = self.frame(x)?;
        if x.dim() == 1 {
            return Ok(0.0);
        }
        let tau = n.perp();
        let h = 1e-6 * (1.0 + p.norm());
        let cp = self.shift_fast(&xb, &n, &(*p + tau * h))?;
        let cm = self.shift_fast(&xb, &n, &(*p - tau * h))?;
        Ok((cp - cm) / (2.0 * h))
    }
}

fn check_dim(p: &Vector, x: &Vector) -> Result<()> {
    if p.dim() != x.dim() {
        return Err(Error::Argument(format!("gradient has dimension {}, point {}", p.dim(), x.dim())));
    }
    Ok(())
}

/// Root of a nondecreasing function. Brackets by doubling from `scale` up to
/// `limit`, then runs the Illinois variant of regula falsi with a bisection
/// fallback until the bracket collapses; the best iterate must satisfy
/// `|h| <= tol`.
pub fn find_increasing_root(h: impl Fn(f64) -> f64, scale: f64, limit: f64, tol: f64) -> Result<f64> {
    let h0 = h(0.0);
    if h0 == 0.0 {
        return Ok(0.0);
    }
    let dir = if h0 < 0.0 { 1.0 } else { -1.0 };
    let (mut lo, mut flo, mut hi, mut fhi);
    let mut prev = (0.0, h0);
    let mut w = scale;
    loop {
        let t = dir * w;
        let f = h(t);
        if !f.is_finite() {
            return Err(Error::Assumption(format!("boundary function not finite at t = {t}")));
        }
        if (f >= 0.0) == (dir > 0.0) {
            if dir > 0.0 {
                (lo, flo, hi, fhi) = (prev.0, prev.1, t, f);
            } else {
                (lo, flo, hi, fhi) = (t, f, prev.0, prev.1);
            }
            break;
        }
        prev = (t, f);
        if w > limit {
            return Err(Error::Assumption(format!(
                "no sign change of G along the normal within |t| <= {limit:.3e}"
            )));
        }
        w *= 2.0;
    }
    let mut best = if flo.abs() < fhi.abs() { (lo, flo) } else { (hi, fhi) };
    let mut side = 0i8;
    for it in 0..200 {
        if best.1 == 0.0 {
            break;
        }
        let mut t = if it % 8 == 7 { 0.5 * (lo + hi) } else { hi - fhi * (hi - lo) / (fhi - flo) };
        if !(t > lo && t < hi) {
            t = 0.5 * (lo + hi);
        }
        if !(t > lo && t < hi) {
            break;
        }
        let f = h(t);
        if f.abs() < best.1.abs() {
            best = (t, f);
        }
        if f < 0.0 {
            lo = t;
            flo = f;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = t;
            fhi = f;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    if best.1.abs() <= tol {
        Ok(best.0)
    } else {
        Err(Error::Assumption(format!("normal shift residual {:.3e} above tolerance {tol:.3e}", best.1.abs())))
    }
}

/// `min (G(x, p + μ n) - G(x, p)) / μ` over boundary samples and `μ` values.
pub fn probe_hb1(op: &BoundaryOp, samples: &[(Vector, Vector)], mus: &[f64]) -> Result<f64> {
    if samples.is_empty() || mus.is_empty() {
        return Err(Error::Argument("empty samples or μ schedule".into()));
    }
    if let Some(m) = mus.iter().find(|m| !(**m > 0.0)) {
        return Err(Error::Argument(format!("μ = {m} must be positive")));
    }
    let mut nu = f64::INFINITY;
    for (x, p) in samples {
        let (_, n) = op.frame(x)?;
        let g0 = op.eval_g(x, p)?;
        for &mu in mus {
            nu = nu.min((op.eval_g(x, &(*p + n * mu))? - g0) / mu);
        }
    }
    Ok(nu)
}

/// Smallest `K` with `|G(x,p) - G(y,q)| <= K[(1+|p|+|q|)|x-y| + |p-q|]`.
pub fn probe_hb2(op: &BoundaryOp, samples: &[((Vector, Vector), (Vector, Vector))]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Argument("empty sample list".into()));
    }
    let mut k: f64 = 0.0;
    for ((x, p), (y, q)) in samples {
        let diff = (op.eval_g(x, p)? - op.eval_g(y, q)?).abs();
        let env = (1.0 + p.norm() + q.norm()) * op.domain().metric(x, y) + (*p - *q).norm();
        if env > 0.0 {
            k = k.max(diff / env);
        } else if diff > 1e-14 {
            return Ok(f64::INFINITY);
        }
    }
    Ok(k)
}

/// Smallest `K` with `ν |C(x,p)| <= K (1 + |p|)`.
pub fn fit_shift_bound(op: &BoundaryOp, samples: &[(Vector, Vector)]) -> Result<f64> {
    let mut k: f64 = 0.0;
    for (x, p) in samples {
        let c = op.normal_shift(x, p)?;
        k = k.max(op.nu() * c.abs() / (1.0 + p.norm()));
    }
    Ok(k)
}

/// Smallest `K` with `ν |C(x,p) - C(y,q)| <= K (1+|p|+|q|)|x-y| + K|p-q|`.
pub fn fit_shift_regularity(op: &BoundaryOp, samples: &[((Vector, Vector), (Vector, Vector))]) -> Result<f64> {
    let mut k: f64 = 0.0;
    for ((x, p), (y, q)) in samples {
        let diff = (op.normal_shift(x, p)? - op.normal_shift(y, q)?).abs();
        let env = (1.0 + p.norm() + q.norm()) * op.domain().metric(x, y) + (*p - *q).norm();
        if env > 0.0 {
            k = k.max(op.nu() * diff / env);
        }
    }
    Ok(k)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryDistance {
    pub mu1: f64,
    pub mu2: f64,
    /// Smallest `K_G` with `G2 - G1 <= K_G (μ1 + μ2 |p|)` on the samples.
    pub k_g: f64,
    /// No finite envelope was found.
    pub unbounded: bool,
}

/// Oblique data `(γ, g)` per control of a linear-in-`p` condition.
fn oblique_data(op: &BoundaryOp, xb: &Vector, n: &Vector) -> Option<Vec<(Vector, f64)>> {
    match &op.spec.condition {
        BoundaryCondition::Neumann { g } => Some(vec![(*n, g.eval(xb))]),
        BoundaryCondition::Oblique { gamma, g } => Some(vec![(gamma.eval(xb, n), g.eval(xb))]),
        BoundaryCondition::ControlledReflection { controls } => {
            Some(controls.iter().flatten().map(|c| (c.gamma.eval(xb, n), c.g.eval(xb))).collect())
        }
        BoundaryCondition::Capillary { .. } => None,
    }
}

/// `(μ1, μ2)` between two boundary conditions on the same domain.
///
/// Linear-in-`p` pairs with matching control grids use `μ1 = sup |g1 - g2|`,
/// `μ2 = sup |γ1 - γ2|`; capillary pairs use `μ1 = μ2 = sup |θ1 - θ2|`.
/// Other pairs get the envelope `μ1 + μ2 |p|` over the samples minimizing
/// `μ1 + μ2 p_max / 2`.
pub fn boundary_distance(op1: &BoundaryOp, op2: &BoundaryOp, samples: &[(Vector, Vector)]) -> Result<BoundaryDistance> {
    if samples.is_empty() {
        return Err(Error::Argument("empty sample list".into()));
    }
    let mut diffs = Vec::with_capacity(samples.len());
    for (x, p) in samples {
        diffs.push((op2.eval_g(x, p)? - op1.eval_g(x, p)?, p.norm()));
    }
    let structural = structural_distance(op1, op2, samples)?;
    let (mu1, mu2) = match structural {
        Some(m) => m,
        None => {
            let (mu1, mu2) = envelope_fit(&diffs);
            let unbounded = !(mu1.is_finite() && mu2.is_finite());
            return Ok(BoundaryDistance { mu1, mu2, k_g: if unbounded { f64::INFINITY } else { 1.0 }, unbounded });
        }
    };
    let mut k_g: f64 = 0.0;
    let mut unbounded = false;
    for (d, pn) in diffs {
        let env = mu1 + mu2 * pn;
        if env > 0.0 {
            k_g = k_g.max(d / env);
        } else if d > 1e-12 {
            unbounded = true;
        }
    }
    Ok(BoundaryDistance { mu1, mu2, k_g: if unbounded { f64::INFINITY } else { k_g }, unbounded })
}

fn structural_distance(op1: &BoundaryOp, op2: &BoundaryOp, samples: &[(Vector, Vector)]) -> Result<Option<(f64, f64)>> {
    let mut mu1: f64 = 0.0;
    let mut mu2: f64 = 0.0;
    for (x, _) in samples {
        let (xb, n) = op1.frame(x)?;
        match (&op1.spec.condition, &op2.spec.condition) {
            (BoundaryCondition::Capillary { theta: t1 }, BoundaryCondition::Capillary { theta: t2 }) => {
                let d = (t1.eval(&xb) - t2.eval(&xb)).abs();
                mu1 = mu1.max(d);
                mu2 = mu2.max(d);
            }
            _ => {
                let (Some(a), Some(b)) = (oblique_data(op1, &xb, &n), oblique_data(op2, &xb, &n)) else {
                    return Ok(None);
                };
                if a.len() != b.len() {
                    return Ok(None);
                }
                for ((g1, v1), (g2, v2)) in a.iter().zip(&b) {
                    mu1 = mu1.max((v1 - v2).abs());
                    mu2 = mu2.max((*g1 - *g2).norm());
                }
            }
        }
    }
    Ok(Some((mu1, mu2)))
}

/// Envelope `μ1 + μ2 s` above the points `(d, s)` minimizing `μ1 + μ2 s_max / 2`.
fn envelope_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let s_max = points.iter().map(|p| p.1).fold(0.0, f64::max);
    let mu1_for = |mu2: f64| points.iter().map(|(d, s)| d - mu2 * s).fold(0.0, f64::max);
    let cost = |mu2: f64| mu1_for(mu2) + 0.5 * mu2 * s_max;
    let upper = points
        .iter()
        .filter(|(_, s)| *s > 0.0)
        .map(|(d, s)| d / s)
        .fold(0.0, f64::max);
    if !upper.is_finite() {
        return (f64::INFINITY, f64::INFINITY);
    }
    // cost is convex and piecewise linear in μ2
    let (mut lo, mut hi) = (0.0, upper);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if cost(m1) <= cost(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let mu2 = 0.5 * (lo + hi);
    (mu1_for(mu2), mu2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftDifference {
    pub violations: usize,
    pub k_c: f64,
}

/// Fits `K_C` in `C1 - C2 <= K_C / (ν1 ∨ ν2) (μ1 + μ2 (1 + |p|))` and counts
/// samples above the fitted constant plus 10%.
pub fn check_shift_difference(
    op1: &BoundaryOp,
    op2: &BoundaryOp,
    samples: &[(Vector, Vector)],
    mu1: f64,
    mu2: f64,
) -> Result<ShiftDifference> {
    let nu = op1.nu().max(op2.nu());
    let mut rows = Vec::with_capacity(samples.len());
    for (x, p) in samples {
        let diff = op1.normal_shift(x, p)? - op2.normal_shift(x, p)?;
        let tol = BoundaryOp::shift_tolerance(p) / op1.nu().min(op2.nu());
        rows.push((diff, (mu1 + mu2 * (1.0 + p.norm())) / nu, tol));
    }
    let mut k_c: f64 = 0.0;
    for &(diff, env, tol) in &rows {
        if env > 0.0 {
            k_c = k_c.max((diff - 2.0 * tol) / env);
        }
    }
    let violations = rows
        .iter()
        .filter(|&&(diff, env, tol)| diff > 1.1 * k_c * env + 2.0 * tol)
        .count();
    Ok(ShiftDifference { violations, k_c })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval_op(spec: BoundarySpec) -> BoundaryOp {
        let f = DistanceField::with_radius(Domain::Interval { a: 0.0, b: 1.0 }, 0.2).unwrap();
        BoundaryOp::new(spec, f).unwrap()
    }

    fn strip_op(spec: BoundarySpec) -> BoundaryOp {
        let f = DistanceField::new(Domain::PeriodicStrip { period: 1.0, height: 1.0 }).unwrap();
        BoundaryOp::new(spec, f).unwrap()
    }

    #[test]
    fn g_formulas() {
        let neu = strip_op(BoundarySpec::neumann(0.0));
        assert_eq!(neu.eval_g(&Vector::new2(0.3, 0.0), &Vector::new2(2.0, 0.0)).unwrap(), 0.0);
        let cap = interval_op(BoundarySpec::capillary(0.5));
        assert_eq!(cap.eval_g(&Vector::new1(0.0), &Vector::new1(0.0)).unwrap(), -0.5);
        let ctrl = interval_op(BoundarySpec::new(BoundaryCondition::ControlledReflection {
            controls: vec![
                vec![ReflectionControl { gamma: Direction::normal(1.0), g: ScalarFn::constant(0.0) }],
                vec![ReflectionControl { gamma: Direction::normal(2.0), g: ScalarFn::constant(0.0) }],
            ],
        }));
        assert_eq!(ctrl.eval_g(&Vector::new1(0.0), &Vector::new1(-1.0)).unwrap(), 1.0);
        assert!(matches!(cap.eval_g(&Vector::new1(0.5), &Vector::new1(0.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn shift_examples() {
        // γ = -1 at the left end, +1 at the right end
        let gamma = VectorFn::Components(vec![ScalarFn::Step { left: -1.0, right: 1.0, at: 0.5, axis: 0 }]);
        let obl = interval_op(BoundarySpec::oblique(Direction::Cartesian(gamma), 2.0));
        let c = obl.normal_shift(&Vector::new1(0.0), &Vector::new1(0.5)).unwrap();
        assert!((c - 2.5).abs() <= 1e-12 * 1.5);
        let cap = interval_op(BoundarySpec::capillary(0.5));
        let c = cap.normal_shift(&Vector::new1(0.0), &Vector::new1(0.0)).unwrap();
        assert!((c - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        let neu = strip_op(BoundarySpec::neumann(0.0));
        let p = Vector::new2(0.7, -1.3);
        let x = Vector::new2(0.2, 1.0);
        let c = neu.normal_shift(&x, &p).unwrap();
        assert!((c + p.dot(&Vector::new2(0.0, 1.0))).abs() < 1e-12 * (1.0 + p.norm()));
    }

    #[test]
    fn capillary_closed_form_in_two_dimensions() {
        let cap = strip_op(BoundarySpec::capillary(-0.4));
        for p in [Vector::new2(0.0, 0.0), Vector::new2(3.0, -2.0), Vector::new2(-10.0, 40.0)] {
            let x = Vector::new2(0.4, 0.0);
            let root = cap.normal_shift(&x, &p).unwrap();
            let closed = cap.closed_form_shift(&x, &p).unwrap().unwrap();
            assert!((root - closed).abs() < 1e-11 * (1.0 + p.norm()), "{root} {closed}");
            let n = Vector::new2(0.0, -1.0);
            assert!(cap.eval_g(&x, &(p + n * root)).unwrap().abs() <= BoundaryOp::shift_tolerance(&p));
        }
    }

    #[test]
    fn hb1_values() {
        let pts: Vec<_> = [0.0, 1.0]
            .iter()
            .flat_map(|&x| (-20..=20).map(move |k| (Vector::new1(x), Vector::new1(k as f64 * 0.5))))
            .collect();
        let mus = [1e-3, 0.1, 1.0, 10.0];
        let neu = interval_op(BoundarySpec::neumann(0.3));
        assert!((probe_hb1(&neu, &pts, &mus).unwrap() - 1.0).abs() < 1e-9);
        let cap = interval_op(BoundarySpec::capillary(0.5));
        assert!(probe_hb1(&cap, &pts, &mus).unwrap() >= 0.5);
        let obl = strip_op(BoundarySpec::oblique(Direction::frame(0.3, 0.8), 0.0));
        let s = vec![(Vector::new2(0.1, 0.0), Vector::new2(1.0, 2.0))];
        assert!((probe_hb1(&obl, &s, &mus).unwrap() - 0.3).abs() < 1e-12);
        assert!(probe_hb1(&neu, &pts, &[0.0]).is_err());
    }

    #[test]
    fn nonmonotone_oblique_rejected() {
        let f = DistanceField::with_radius(Domain::Interval { a: 0.0, b: 1.0 }, 0.2).unwrap();
        let bad = BoundarySpec::oblique(Direction::normal(-1.0), 0.0);
        assert!(matches!(BoundaryOp::new(bad, f), Err(Error::Assumption(_))));
    }

    #[test]
    fn shift_difference_neumann_pair() {
        let op1 = interval_op(BoundarySpec::neumann(0.2));
        let op2 = interval_op(BoundarySpec::neumann(0.0));
        let samples: Vec<_> = (-5..=5).map(|k| (Vector::new1(0.0), Vector::new1(k as f64))).collect();
        let dist = boundary_distance(&op1, &op2, &samples).unwrap();
        assert!((dist.mu1 - 0.2).abs() < 1e-15 && dist.mu2 == 0.0);
        let r = check_shift_difference(&op1, &op2, &samples, dist.mu1, dist.mu2).unwrap();
        assert_eq!(r.violations, 0);
        assert!((r.k_c - 1.0).abs() < 1e-9, "{}", r.k_c);
    }

    #[test]
    fn envelope_fit_for_mixed_pair() {
        let op1 = interval_op(BoundarySpec::neumann(0.0));
        let op2 = interval_op(BoundarySpec::capillary(0.3));
        let samples: Vec<_> = (-20..=20).map(|k| (Vector::new1(1.0), Vector::new1(k as f64 * 0.25))).collect();
        let d = boundary_distance(&op1, &op2, &samples).unwrap();
        assert!(!d.unbounded);
        // G2 - G1 = -0.3 sqrt(1+p^2) <= 0: the zero envelope suffices
        assert!(d.mu1 < 1e-12 && d.mu2 < 1e-9);
        let op3 = interval_op(BoundarySpec::capillary(-0.3));
        let d = boundary_distance(&op1, &op3, &samples).unwrap();
        for (x, p) in &samples {
            let diff = op3.eval_g(x, p).unwrap() - op1.eval_g(x, p).unwrap();
            assert!(diff <= d.mu1 + d.mu2 * p.norm() + 1e-9);
        }
    }

    #[test]
    fn extended_shift_cutoff() {
        let cap = interval_op(BoundarySpec::capillary(0.5));
        let q = Vector::new1(0.0);
        let c0 = cap.extended_shift(&Vector::new1(0.0), &q).unwrap();
        assert_eq!(cap.extended_shift(&Vector::new1(-0.05), &q).unwrap(), c0);
        assert_eq!(cap.extended_shift(&Vector::new1(0.09), &q).unwrap(), c0);
        assert_eq!(cap.extended_shift(&Vector::new1(0.5), &q).unwrap(), 0.0);
        let mid = cap.extended_shift(&Vector::new1(0.15), &q).unwrap();
        assert!(mid > 0.0 && mid < c0);
        for y in [-0.02, 0.03, 0.15, 0.4, 0.97] {
            let y = Vector::new1(y);
            let (c0, v) = cap.extended_affine(&y).unwrap().unwrap();
            for q in [-2.0, 0.5, 3.0] {
                let q = Vector::new1(q);
                assert!((c0 + v.dot(&q) - cap.extended_shift(&y, &q).unwrap()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn config_forms() {
        let s: BoundarySpec = serde_json::from_str(r#"{"type":"capillary","theta":{"preset":"const","value":0.5}}"#).unwrap();
        assert_eq!(s, BoundarySpec::capillary(0.5));
        let o: BoundarySpec = serde_json::from_str(
            r#"{"type":"oblique","gamma":{"normal":{"preset":"const","value":1.0},"tangential":{"preset":"const","value":0.2}},"g":{"preset":"const","value":0.0},"nu":1.0}"#,
        )
        .unwrap();
        assert_eq!(o.nu, Some(1.0));
        let back: BoundarySpec = serde_json::from_value(serde_json::to_value(&o).unwrap()).unwrap();
        assert_eq!(back, o);
        let c: BoundarySpec = serde_json::from_str(r#"{"type":"oblique","gamma":[1.0, 0.0],"g":{"preset":"const","value":0.0}}"#).unwrap();
        assert!(matches!(c.condition, BoundaryCondition::Oblique { gamma: Direction::Cartesian(_), .. }));
        assert!(serde_json::from_str::<BoundarySpec>(r#"{"type":"neumann"}"#).is_err());
    }
}
