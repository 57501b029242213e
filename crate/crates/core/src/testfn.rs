//! Regularized normal shift `C_a`, the doubled-variable test function `φ_a`
//! and sample-based checks of their estimates.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{boundary_distance, boundary_points, BoundaryOp};
use crate::error::{Error, Result};
use crate::geometry::{DistanceEval, DistanceField, Domain};
use crate::linalg::{Matrix, Vector};
use crate::operators::{random_direction, relative_drift};
use crate::quadrature::Mollifier;

/// Factor applied to fitted constants when counting violations.
pub const SLACK: f64 = 1.1;

/// A function `C(y, q)` defined for every `y`, to be regularized.
pub trait ShiftFunction: Send + Sync {
    fn dim(&self) -> usize;
    fn shift(&self, y: &Vector, q: &Vector) -> Result<f64>;

    /// `(c0, v)` with `shift(y, q) = c0 + v·q` for all `q`, if the shift is
    /// affine in `q` at `y`.
    fn affine_in_q(&self, _y: &Vector) -> Result<Option<(f64, Vector)>> {
        Ok(None)
    }
}

impl ShiftFunction for BoundaryOp {
    fn dim(&self) -> usize {
        self.domain().dim()
    }

    fn shift(&self, y: &Vector, q: &Vector) -> Result<f64> {
        self.extended_shift(y, q)
    }

    fn affine_in_q(&self, y: &Vector) -> Result<Option<(f64, Vector)>> {
        self.extended_affine(y)
    }
}

/// Shift given by a closure.
pub struct FnShift<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&Vector, &Vector) -> f64 + Send + Sync> FnShift<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&Vector, &Vector) -> f64 + Send + Sync> ShiftFunction for FnShift<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn shift(&self, y: &Vector, q: &Vector) -> Result<f64> {
        Ok((self.f)(y, q))
    }
}

/// Value and derivatives of `C_a` at one point. `dxp[i][j]` is `∂x_i ∂p_j`.
#[derive(Clone, Copy, Debug)]
pub struct ShiftDerivatives {
    pub value: f64,
    pub dx: Vector,
    pub dp: Vector,
    pub dxx: Matrix,
    pub dxp: Matrix,
    pub dpp: Matrix,
}

/// Anisotropic mollification of a shift function with scales `Λ/Γ` in `x`
/// and `Λ` in `p`.
#[derive(Clone)]
pub struct RegularizedShift {
    base: Arc<dyn ShiftFunction>,
    field: DistanceField,
    a: f64,
    mollifier: Arc<Mollifier>,
}

impl fmt::Debug for RegularizedShift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RegularizedShift")
            .field("a", &self.a)
            .field("order", &self.mollifier.order())
            .field("domain", self.field.domain())
            .finish()
    }
}

impl RegularizedShift {
    pub fn new(base: Arc<dyn ShiftFunction>, field: DistanceField, a: f64) -> Result<Self> {
        Self::with_order(base, field, a, Mollifier::default_order(field.domain().dim()))
    }

    pub fn with_order(base: Arc<dyn ShiftFunction>, field: DistanceField, a: f64, order: usize) -> Result<Self> {
        let mollifier = Arc::new(Mollifier::new(field.domain().dim(), order)?);
        Self::from_parts(base, field, a, mollifier)
    }

    pub fn from_parts(
        base: Arc<dyn ShiftFunction>,
        field: DistanceField,
        a: f64,
        mollifier: Arc<Mollifier>,
    ) -> Result<Self> {
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::Argument(format!("regularization parameter a = {a} outside (0, 1]")));
        }
        let dim = field.domain().dim();
        if base.dim() != dim || mollifier.dim() != dim {
            return Err(Error::Argument("shift, mollifier and domain dimensions differ".into()));
        }
        Ok(Self { base, field, a, mollifier })
    }

    pub fn with_a(&self, a: f64) -> Result<Self> {
        Self::from_parts(self.base.clone(), self.field, a, self.mollifier.clone())
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn order(&self) -> usize {
        self.mollifier.order()
    }

    pub fn field(&self) -> &DistanceField {
        &self.field
    }

    pub fn base(&self) -> &Arc<dyn ShiftFunction> {
        &self.base
    }

    pub fn mollifier(&self) -> &Arc<Mollifier> {
        &self.mollifier
    }

    /// `n(x) = -Dd(x)`, continued outside the domain.
    pub fn normal(&self, x: &Vector) -> Vector {
        -self.field.eval_extended(x).grad
    }

    /// `(Λ, Γ)` at `(x, p)`.
    pub fn scales(&self, x: &Vector, p: &Vector) -> (f64, f64) {
        let pn = p.dot(&self.normal(x));
        ((self.a * self.a + pn * pn).sqrt(), (1.0 + p.norm_sq()).sqrt())
    }

    fn check(&self, x: &Vector, p: &Vector) -> Result<()> {
        let dim = self.field.domain().dim();
        if x.dim() != dim || p.dim() != dim {
            return Err(Error::Argument("argument dimension does not match the domain".into()));
        }
        if !x.is_finite() || !p.is_finite() {
            return Err(Error::Argument("non-finite argument".into()));
        }
        Ok(())
    }

    /// `C_a(x, p)` by tensor quadrature after `y = x - (Λ/Γ) s`, `q = p - Λ t`.
    pub fn eval(&self, x: &Vector, p: &Vector) -> Result<f64> {
        self.check(x, p)?;
        let (lam, gam) = self.scales(x, p);
        let rx = lam / gam;
        let pts = self.mollifier.points();
        let mut acc = 0.0;
        for (s, ws) in pts {
            let y = *x - *s * rx;
            let inner = match self.base.affine_in_q(&y)? {
                // the even rule integrates affine functions exactly
                Some((c0, v)) => c0 + v.dot(p),
                None => {
                    let mut inner = 0.0;
                    for (t, wt) in pts {
                        inner += wt * self.base.shift(&y, &(*p - *t * lam))?;
                    }
                    inner
                }
            };
            acc += ws * inner;
        }
        Ok(acc)
    }

    /// Finite-difference steps `(h_x, h_p)`: `max(1e-5, 1e-3 a)`, capped at a
    /// hundredth of the kernel widths.
    pub fn fd_steps(&self, x: &Vector, p: &Vector) -> Result<(f64, f64)> {
        let (lam, gam) = self.scales(x, p);
        let base = (1e-3 * self.a).max(1e-5);
        let hx = base.min(1e-2 * lam / gam);
        let hp = base.min(1e-2 * lam);
        if hx < 1e-9 || hp < 1e-9 {
            return Err(Error::Config(format!("finite-difference step underflow ({hx:e}, {hp:e})")));
        }
        Ok((hx, hp))
    }

    /// Central finite differences of [`Self::eval`]; second derivatives are
    /// skipped (left zero) unless `second` is set.
    pub fn derivatives(&self, x: &Vector, p: &Vector, second: bool) -> Result<ShiftDerivatives> {
        self.check(x, p)?;
        let dim = x.dim();
        let (hx, hp) = self.fd_steps(x, p)?;
        let n = 2 * dim;
        let step = |k: usize| if k < dim { hx } else { hp };
        let at = |moves: &[(usize, f64)]| -> Result<f64> {
            let mut xs = *x;
            let mut ps = *p;
            for &(k, sgn) in moves {
                if k < dim {
                    xs[k] += sgn * hx;
                } else {
                    ps[k - dim] += sgn * hp;
                }
            }
            self.eval(&xs, &ps)
        };
        let f0 = self.eval(x, p)?;
        let mut grad = [0.0; 4];
        let mut hess = [[0.0; 4]; 4];
        for k in 0..n {
            let fp = at(&[(k, 1.0)])?;
            let fm = at(&[(k, -1.0)])?;
            let h = step(k);
            grad[k] = (fp - fm) / (2.0 * h);
            if second {
                hess[k][k] = (fp - 2.0 * f0 + fm) / (h * h);
            }
        }
        if second {
            for i in 0..n {
                for j in (i + 1)..n {
                    let v = (at(&[(i, 1.0), (j, 1.0)])? - at(&[(i, 1.0), (j, -1.0)])? - at(&[(i, -1.0), (j, 1.0)])?
                        + at(&[(i, -1.0), (j, -1.0)])?)
                        / (4.0 * step(i) * step(j));
                    hess[i][j] = v;
                    hess[j][i] = v;
                }
            }
        }
        let mut out = ShiftDerivatives {
            value: f0,
            dx: Vector::zeros(dim),
            dp: Vector::zeros(dim),
            dxx: Matrix::zeros(dim),
            dxp: Matrix::zeros(dim),
            dpp: Matrix::zeros(dim),
        };
        for i in 0..dim {
            out.dx[i] = grad[i];
            out.dp[i] = grad[dim + i];
            for j in 0..dim {
                out.dxx.set(i, j, hess[i][j]);
                out.dxp.set(i, j, hess[i][dim + j]);
                out.dpp.set(i, j, hess[dim + i][dim + j]);
            }
        }
        Ok(out)
    }
}

/// `η = ε^{ᾱ/(2-ᾱ)}` and `a = εη`.
pub fn coupling(eps: f64, alpha_bar: f64) -> Result<(f64, f64)> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Argument(format!("ε = {eps} outside (0, 1]")));
    }
    if !(alpha_bar > 0.0 && alpha_bar <= 1.0) {
        return Err(Error::Argument(format!("exponent {alpha_bar} outside (0, 1]")));
    }
    let eta = eps.powf(alpha_bar / (2.0 - alpha_bar));
    Ok((eta, eps * eta))
}

/// `φ_a(x, y) = |x-y|²/ε² + A (d(x)-d(y))²/ε² - B (d(x)+d(y)) - C_{2,a}((x+y)/2, 2(x-y)/ε²) (d(x)-d(y))`.
#[derive(Clone, Debug)]
pub struct TestFunction {
    eps: f64,
    eta: f64,
    alpha_bar: f64,
    big_a: f64,
    big_b: f64,
    shift: RegularizedShift,
}

impl TestFunction {
    pub fn new(
        base: Arc<dyn ShiftFunction>,
        field: DistanceField,
        eps: f64,
        alpha_bar: f64,
        big_a: f64,
        big_b: f64,
    ) -> Result<Self> {
        let mollifier = Arc::new(Mollifier::new(field.domain().dim(), Mollifier::default_order(field.domain().dim()))?);
        Self::from_parts(base, field, mollifier, eps, alpha_bar, big_a, big_b)
    }

    pub fn from_parts(
        base: Arc<dyn ShiftFunction>,
        field: DistanceField,
        mollifier: Arc<Mollifier>,
        eps: f64,
        alpha_bar: f64,
        big_a: f64,
        big_b: f64,
    ) -> Result<Self> {
        let (eta, a) = coupling(eps, alpha_bar)?;
        check_ab(big_a, big_b)?;
        let shift = RegularizedShift::from_parts(base, field, a, mollifier)?;
        Ok(Self { eps, eta, alpha_bar, big_a, big_b, shift })
    }

    pub fn with_constants(&self, big_a: f64, big_b: f64) -> Result<Self> {
        check_ab(big_a, big_b)?;
        Ok(Self { big_a, big_b, ..self.clone() })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn a(&self) -> f64 {
        self.shift.a()
    }

    pub fn alpha_bar(&self) -> f64 {
        self.alpha_bar
    }

    pub fn big_a(&self) -> f64 {
        self.big_a
    }

    pub fn big_b(&self) -> f64 {
        self.big_b
    }

    pub fn shift(&self) -> &RegularizedShift {
        &self.shift
    }

    fn check_points(&self, x: &Vector, y: &Vector) -> Result<()> {
        let dom = self.shift.field().domain();
        dom.check_contains(x)?;
        dom.check_contains(y)
    }

    pub fn eval_phi(&self, x: &Vector, y: &Vector) -> Result<f64> {
        self.check_points(x, y)?;
        let e2 = self.eps * self.eps;
        let dx = self.shift.field().eval_extended(x).d;
        let dy = self.shift.field().eval_extended(y).d;
        let big_y = *x - *y;
        let c = self.shift.eval(&((*x + *y) * 0.5), &(big_y * (2.0 / e2)))?;
        let z = dx - dy;
        Ok(big_y.norm_sq() / e2 + self.big_a * z * z / e2 - self.big_b * (dx + dy) - c * z)
    }

    /// Everything `φ_a` needs at `(x, y)` apart from `A` and `B`.
    pub fn local(&self, x: &Vector, y: &Vector, second: bool) -> Result<PhiLocal> {
        self.check_points(x, y)?;
        let e2 = self.eps * self.eps;
        let big_y = *x - *y;
        let p = big_y * (2.0 / e2);
        let c = self.shift.derivatives(&((*x + *y) * 0.5), &p, second)?;
        Ok(PhiLocal {
            eps: self.eps,
            eta: self.eta,
            big_y,
            dx: self.shift.field().eval_extended(x),
            dy: self.shift.field().eval_extended(y),
            c,
        })
    }

    pub fn grad_hess_phi(&self, x: &Vector, y: &Vector) -> Result<PhiDerivatives> {
        let local = self.local(x, y, true)?;
        let (dx_phi, dy_phi) = local.gradients(self.big_a, self.big_b);
        Ok(PhiDerivatives { dx_phi, dy_phi, hess: local.hessian(self.big_a, self.big_b) })
    }
}

fn check_ab(big_a: f64, big_b: f64) -> Result<()> {
    if !(big_a >= 0.0 && big_a.is_finite() && big_b >= 0.0 && big_b.is_finite()) {
        return Err(Error::Argument(format!("constants A = {big_a}, B = {big_b} must be finite and nonnegative")));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct PhiDerivatives {
    pub dx_phi: Vector,
    pub dy_phi: Vector,
    /// Hessian in `(x, y)`, size `2N × 2N`.
    pub hess: DMatrix<f64>,
}

/// `φ_a` ingredients at one pair, reusable across values of `A` and `B`.
#[derive(Clone, Debug)]
pub struct PhiLocal {
    pub eps: f64,
    pub eta: f64,
    pub big_y: Vector,
    pub dx: DistanceEval,
    pub dy: DistanceEval,
    pub c: ShiftDerivatives,
}

impl PhiLocal {
    fn z(&self) -> f64 {
        self.dx.d - self.dy.d
    }

    pub fn value(&self, big_a: f64, big_b: f64) -> f64 {
        let e2 = self.eps * self.eps;
        let z = self.z();
        self.big_y.norm_sq() / e2 + big_a * z * z / e2 - big_b * (self.dx.d + self.dy.d) - self.c.value * z
    }

    pub fn gradients(&self, big_a: f64, big_b: f64) -> (Vector, Vector) {
        let e2 = self.eps * self.eps;
        let k = 2.0 / e2;
        let z = self.z();
        let phi_x = self.c.dx * (-z);
        let phi_y = self.big_y * k - self.c.dp * (k * z);
        let phi_z = -self.c.value + 2.0 * big_a * z / e2;
        let phi_t = -big_b;
        let gx = phi_x * 0.5 + phi_y + self.dx.grad * (phi_z + phi_t);
        let gy = phi_x * 0.5 - phi_y + self.dy.grad * (phi_t - phi_z);
        (gx, gy)
    }

    /// Chain rule through `X = (x+y)/2`, `Y = x-y`, `Z = d(x)-d(y)`, `T = d(x)+d(y)`.
    pub fn hessian(&self, big_a: f64, big_b: f64) -> DMatrix<f64> {
        let n = self.big_y.dim();
        let e2 = self.eps * self.eps;
        let k = 2.0 / e2;
        let z = self.z();
        let m = 2 * n + 2;
        let (iz, it) = (2 * n, 2 * n + 1);
        let mut h = DMatrix::<f64>::zeros(m, m);
        for i in 0..n {
            for j in 0..n {
                h[(i, j)] = -self.c.dxx.get(i, j) * z;
                let xy = -k * self.c.dxp.get(i, j) * z;
                h[(i, n + j)] = xy;
                h[(n + j, i)] = xy;
                h[(n + i, n + j)] = if i == j { k } else { 0.0 } - k * k * self.c.dpp.get(i, j) * z;
            }
            h[(i, iz)] = -self.c.dx[i];
            h[(iz, i)] = -self.c.dx[i];
            h[(n + i, iz)] = -k * self.c.dp[i];
            h[(iz, n + i)] = -k * self.c.dp[i];
        }
        h[(iz, iz)] = 2.0 * big_a / e2;
        let mut jac = DMatrix::<f64>::zeros(m, 2 * n);
        for i in 0..n {
            jac[(i, i)] = 0.5;
            jac[(i, n + i)] = 0.5;
            jac[(n + i, i)] = 1.0;
            jac[(n + i, n + i)] = -1.0;
            jac[(iz, i)] = self.dx.grad[i];
            jac[(iz, n + i)] = -self.dy.grad[i];
            jac[(it, i)] = self.dx.grad[i];
            jac[(it, n + i)] = self.dy.grad[i];
        }
        let mut out = jac.transpose() * h * &jac;
        let phi_z = -self.c.value + 2.0 * big_a * z / e2;
        let phi_t = -big_b;
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += (phi_z + phi_t) * self.dx.hess.get(i, j);
                out[(n + i, n + j)] += (phi_t - phi_z) * self.dy.hess.get(i, j);
            }
        }
        out
    }
}

/// `A = K` and `B = K(η² + ε² + a) + K/(ν1 ∨ ν2) (μ1 + μ2 η/ε)`.
#[allow(clippy::too_many_arguments)]
pub fn choose_ab(eps: f64, eta: f64, a: f64, nu1: f64, nu2: f64, mu1: f64, mu2: f64, k: f64) -> Result<(f64, f64)> {
    if !(nu1 > 0.0 && nu2 > 0.0) {
        return Err(Error::Assumption(format!("monotonicity constants ν1 = {nu1}, ν2 = {nu2} must be positive")));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Argument(format!("constant K = {k} must be positive")));
    }
    let b = k * (eta * eta + eps * eps + a) + k / nu1.max(nu2) * (mu1 + mu2 * eta / eps);
    Ok((k, b))
}

/// Outcome of fitting a constant on one sample set and checking it on another.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ConstantFit {
    pub name: String,
    pub fitted: f64,
    pub refitted: f64,
    pub drift: f64,
    /// Samples of the second set exceeding `SLACK × fitted`.
    pub violations: usize,
    pub samples: usize,
}

fn max_needed(values: &[f64]) -> Result<f64> {
    let mut m: f64 = 0.0;
    for v in values {
        if v.is_nan() {
            return Err(Error::Argument("NaN in a fitted quantity".into()));
        }
        m = m.max(*v);
    }
    Ok(m)
}

/// Counts entries of `needed` above `SLACK × constant` (plus a rounding floor).
pub fn count_violations(needed: &[f64], constant: f64) -> usize {
    let limit = SLACK * constant + 1e-12;
    needed.iter().filter(|v| **v > limit).count()
}

/// Fits the smallest constant on `fit` and verifies it on `verify`.
pub fn fit_constant(name: &str, fit: &[f64], verify: &[f64]) -> Result<ConstantFit> {
    let fitted = max_needed(fit)?;
    let refitted = max_needed(verify)?;
    Ok(ConstantFit {
        name: name.to_string(),
        fitted,
        refitted,
        drift: relative_drift(fitted, refitted),
        violations: count_violations(verify, fitted),
        samples: verify.len(),
    })
}

/// Names of the seven bounds on `C_a`, in report order.
pub const LEMGUY_BOUNDS: [&str; 7] = [
    "|C_a| <= K Gamma",
    "|C_a - C| <= K (a + |p.n|)",
    "|D_x C_a| <= K Gamma",
    "|D_p C_a| <= K",
    "|D_xx C_a| <= K Gamma^2 / Lambda",
    "|D_xp C_a| <= K Gamma / Lambda",
    "|D_pp C_a| <= K / Lambda",
];

/// Sample grid over `(x, p, a)`: points at `depths` distances inward from
/// each of `boundary` boundary points (up to `1.25 r0`), momenta on a
/// `p_count`-point grid of radius `p_max`, and the listed `a` values.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ShiftGridSpec {
    pub boundary: usize,
    pub depths: usize,
    pub p_count: usize,
    pub p_max: f64,
    pub a_values: Vec<f64>,
}

impl ShiftGridSpec {
    /// 10⁴ points on an interval: 2 endpoints × 25 depths × 20 momenta × 10 values of `a`.
    pub fn interval_default() -> Self {
        Self {
            boundary: 2,
            depths: 25,
            p_count: 20,
            p_max: 8.0,
            a_values: (0..10).map(|k| 0.5f64.powi(k)).collect(),
        }
    }

    /// A coarser grid for planar domains, where each evaluation of `C_a`
    /// costs a two-dimensional double integral.
    pub fn planar_default() -> Self {
        Self { boundary: 4, depths: 5, p_count: 9, p_max: 4.0, a_values: vec![1.0, 0.25, 0.0625] }
    }

    pub fn default_for(domain: &Domain) -> Self {
        if domain.dim() == 1 {
            Self::interval_default()
        } else {
            Self::planar_default()
        }
    }

    pub fn doubled(&self) -> Self {
        Self { depths: 2 * self.depths, p_count: 2 * self.p_count, ..self.clone() }
    }

    pub fn a_halved(&self) -> Self {
        Self { a_values: self.a_values.iter().map(|a| 0.5 * a).collect(), ..self.clone() }
    }

    pub fn points(&self, field: &DistanceField) -> Result<Vec<(Vector, Vector, f64)>> {
        if self.depths < 2 || self.p_count < 2 || self.boundary == 0 || self.a_values.is_empty() {
            return Err(Error::Argument("shift grid needs at least two depths and momenta".into()));
        }
        let dom = field.domain();
        let dim = dom.dim();
        let reach = (1.25 * field.saturation_radius()).min(dom.inradius());
        let mut xs = Vec::new();
        for xb in boundary_points(dom, self.boundary) {
            let n = dom.boundary_normal(&xb);
            for k in 0..self.depths {
                xs.push(xb - n * (reach * k as f64 / (self.depths - 1) as f64));
            }
        }
        let mut ps = Vec::new();
        if dim == 1 {
            for k in 0..self.p_count {
                ps.push(Vector::new1(-self.p_max + 2.0 * self.p_max * k as f64 / (self.p_count - 1) as f64));
            }
        } else {
            let rings = (self.p_count as f64).sqrt().ceil() as usize;
            let angles = self.p_count.div_ceil(rings);
            for r in 0..rings {
                let rad = self.p_max * r as f64 / (rings - 1).max(1) as f64;
                for q in 0..angles {
                    let th = std::f64::consts::TAU * (q as f64 + 0.5 * (r % 2) as f64) / angles as f64;
                    ps.push(Vector::new2(rad * th.cos(), rad * th.sin()));
                }
            }
        }
        let mut out = Vec::with_capacity(xs.len() * ps.len() * self.a_values.len());
        for x in &xs {
            for p in &ps {
                for a in &self.a_values {
                    out.push((*x, *p, *a));
                }
            }
        }
        Ok(out)
    }
}

/// Per-sample constants needed by each of the seven bounds.
pub fn lemguy_needed(shift: &RegularizedShift, grid: &[(Vector, Vector, f64)]) -> Result<Vec<[f64; 7]>> {
    grid.par_iter()
        .map(|(x, p, a)| {
            let s = shift.with_a(*a)?;
            let d = s.derivatives(x, p, true)?;
            let (lam, gam) = s.scales(x, p);
            let c = shift.base().shift(x, p)?;
            let pn = p.dot(&s.normal(x)).abs();
            Ok([
                d.value.abs() / gam,
                (d.value - c).abs() / (a + pn),
                d.dx.norm() / gam,
                d.dp.norm(),
                d.dxx.norm() * lam / (gam * gam),
                d.dxp.norm() * lam / gam,
                d.dpp.norm() * lam,
            ])
        })
        .collect()
}

fn column<const M: usize>(rows: &[[f64; M]], k: usize) -> Vec<f64> {
    rows.iter().map(|r| r[k]).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LemguyReport {
    pub samples: usize,
    pub constants: Vec<f64>,
    /// Violations on the fitting grid at the fitted constants.
    pub violations: Vec<usize>,
    /// Fits checked on the grid with every `a` halved.
    pub a_halved: Vec<ConstantFit>,
    /// Fits checked on the grid with doubled depth and momentum resolution.
    pub doubled: Vec<ConstantFit>,
}

impl LemguyReport {
    pub fn max_drift(&self) -> f64 {
        self.a_halved.iter().chain(&self.doubled).map(|f| f.drift).fold(0.0, f64::max)
    }

    pub fn total_violations(&self) -> usize {
        self.violations.iter().sum::<usize>() + self.a_halved.iter().chain(&self.doubled).map(|f| f.violations).sum::<usize>()
    }
}

/// Fits the seven constants on `grid` and checks them on the `a`-halved and
/// doubled grids.
pub fn check_lemguy(shift: &RegularizedShift, grid: &ShiftGridSpec) -> Result<LemguyReport> {
    let field = *shift.field();
    let base = lemguy_needed(shift, &grid.points(&field)?)?;
    let halved = lemguy_needed(shift, &grid.a_halved().points(&field)?)?;
    let doubled = lemguy_needed(shift, &grid.doubled().points(&field)?)?;
    let mut report = LemguyReport {
        samples: base.len(),
        constants: Vec::new(),
        violations: Vec::new(),
        a_halved: Vec::new(),
        doubled: Vec::new(),
    };
    for (k, name) in LEMGUY_BOUNDS.iter().enumerate() {
        let fit = column(&base, k);
        let kk = max_needed(&fit)?;
        report.constants.push(kk);
        report.violations.push(count_violations(&fit, kk));
        report.a_halved.push(fit_constant(name, &fit, &column(&halved, k))?);
        report.doubled.push(fit_constant(name, &fit, &column(&doubled, k))?);
    }
    Ok(report)
}

/// Which member of a pair is placed on the boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Anchor {
    Free,
    X,
    Y,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairSample {
    pub x: Vector,
    pub y: Vector,
    pub eps: f64,
}

/// Random pairs with `ε` cycling through `eps`, `|x - y| ≤ radius(ε)`. Free
/// anchors put half the `x` within `1.25 r0` of the boundary; one pair in
/// sixteen has `x = y`.
pub fn sample_pairs(
    field: &DistanceField,
    count: usize,
    eps: &[f64],
    radius: impl Fn(f64) -> f64,
    anchor: Anchor,
    seed: u64,
) -> Result<Vec<PairSample>> {
    if eps.is_empty() {
        return Err(Error::Argument("empty ε schedule".into()));
    }
    let dom = field.domain();
    let dim = dom.dim();
    let reach = (1.25 * field.saturation_radius()).min(dom.inradius());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let e = eps[i % eps.len()];
        let r_max = radius(e);
        let on_boundary = anchor != Anchor::Free;
        let x = if on_boundary {
            dom.sample_boundary(&mut rng)
        } else if rng.gen_bool(0.5) {
            let xb = dom.sample_boundary(&mut rng);
            let depth = reach * rng.gen::<f64>();
            xb - dom.boundary_normal(&xb) * depth
        } else {
            dom.sample_interior(&mut rng)
        };
        let mut y = x;
        if i % 16 != 15 {
            for _ in 0..64 {
                let mut dir = random_direction(&mut rng, dim);
                if on_boundary && dir.dot(&dom.boundary_normal(&x)) > 0.0 {
                    dir = -dir;
                }
                let cand = x + dir * (r_max * rng.gen::<f64>());
                if dom.contains(&cand) {
                    y = cand;
                    break;
                }
            }
        }
        out.push(if anchor == Anchor::Y { PairSample { x: y, y: x, eps: e } } else { PairSample { x, y, eps: e } });
    }
    Ok(out)
}

/// Shared ingredients for building test functions at several `ε`.
#[derive(Clone)]
pub struct LemmaSetup {
    pub base: Arc<dyn ShiftFunction>,
    pub field: DistanceField,
    pub alpha_bar: f64,
    pub mollifier: Arc<Mollifier>,
}

impl fmt::Debug for LemmaSetup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LemmaSetup")
            .field("domain", self.field.domain())
            .field("alpha_bar", &self.alpha_bar)
            .field("order", &self.mollifier.order())
            .finish()
    }
}

impl LemmaSetup {
    pub fn new(base: Arc<dyn ShiftFunction>, field: DistanceField, alpha_bar: f64) -> Result<Self> {
        coupling(1.0, alpha_bar)?;
        let mollifier = Arc::new(Mollifier::new(field.domain().dim(), Mollifier::default_order(field.domain().dim()))?);
        Ok(Self { base, field, alpha_bar, mollifier })
    }

    /// Setup regularizing the shift of `op`.
    pub fn for_boundary(op: &BoundaryOp, alpha_bar: f64) -> Result<Self> {
        Self::new(Arc::new(op.clone()), *op.field(), alpha_bar)
    }

    pub fn domain(&self) -> &Domain {
        self.field.domain()
    }

    pub fn test_function(&self, eps: f64, big_a: f64, big_b: f64) -> Result<TestFunction> {
        TestFunction::from_parts(self.base.clone(), self.field, self.mollifier.clone(), eps, self.alpha_bar, big_a, big_b)
    }

    /// `K1 η ε` at `ε`.
    pub fn local_radius(&self, k1: f64, eps: f64) -> f64 {
        let (eta, _) = coupling(eps, self.alpha_bar).unwrap_or((1.0, eps));
        k1 * eta * eps
    }

    pub fn locals(&self, samples: &[PairSample], second: bool) -> Result<Vec<PhiLocal>> {
        samples
            .par_iter()
            .map(|s| self.test_function(s.eps, 0.0, 0.0)?.local(&s.x, &s.y, second))
            .collect()
    }
}

/// `K0` needed by one pair: `(|x-y|²/(2ε²) - B T - φ_a) / ε²`, which does not
/// depend on `B`.
fn lem_pos_needed(local: &PhiLocal, big_a: f64) -> f64 {
    let e2 = local.eps * local.eps;
    let lower = local.big_y.norm_sq() / (2.0 * e2);
    let phi = local.value(big_a, 0.0);
    ((lower - phi) / e2).max(0.0)
}

/// Violations of the positivity bound at `(A, K0)` and the fitted `K0`.
pub fn check_lem_pos(setup: &LemmaSetup, big_a: f64, samples: &[PairSample], k0: Option<f64>) -> Result<(usize, f64)> {
    let locals = setup.locals(samples, false)?;
    let needed: Vec<f64> = locals.iter().map(|l| lem_pos_needed(l, big_a)).collect();
    let fitted = max_needed(&needed)?;
    let k0 = k0.unwrap_or(fitted);
    let violations = needed.iter().filter(|v| **v > k0 * (1.0 + 1e-12) + 1e-12).count();
    Ok((violations, fitted))
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LemPosReport {
    pub big_a: f64,
    pub k0: f64,
    /// `(A, violations)` for each tried `A`.
    pub sweep: Vec<(f64, usize)>,
    pub check: ConstantFit,
}

/// Doubles `A` from 1 until a `K0` fitted on the coarse-`ε` half of
/// `samples` (larger `ε`) holds with `SLACK` on the fine half, then fits `K0`
/// on all of `samples` and checks it on `verify`.
pub fn calibrate_lem_pos(setup: &LemmaSetup, samples: &[PairSample], verify: &[PairSample]) -> Result<LemPosReport> {
    let locals = setup.locals(samples, false)?;
    let verify_locals = setup.locals(verify, false)?;
    let split = eps_split(samples)?;
    let mut sweep = Vec::new();
    for k in 0..=20 {
        let big_a = 2f64.powi(k);
        let needed: Vec<f64> = locals.iter().map(|l| lem_pos_needed(l, big_a)).collect();
        let coarse: Vec<f64> = needed.iter().zip(samples).filter(|(_, s)| s.eps > split).map(|(v, _)| *v).collect();
        let fine: Vec<f64> = needed.iter().zip(samples).filter(|(_, s)| s.eps <= split).map(|(v, _)| *v).collect();
        let v = count_violations(&fine, max_needed(&coarse)?);
        sweep.push((big_a, v));
        if v == 0 {
            let check: Vec<f64> = verify_locals.iter().map(|l| lem_pos_needed(l, big_a)).collect();
            let score = |l: &PhiLocal| Ok(lem_pos_needed(l, big_a));
            let mut fit_all = needed.clone();
            fit_all.extend(refine_top(setup, samples, &needed, REFINED_STARTS, false, &score)?);
            let mut check_all = check.clone();
            check_all.extend(refine_top(setup, verify, &check, REFINED_STARTS, false, &score)?);
            let mut fit = fit_constant("K0", &fit_all, &check_all)?;
            fit.samples = verify.len();
            return Ok(LemPosReport { big_a, k0: fit.fitted, sweep, check: fit });
        }
    }
    Err(Error::Calibration("positivity sweep exceeded A = 2^20".into()))
}

/// Largest sampled pairs per `ε` refined by local search in each fit.
pub const REFINED_STARTS: usize = 32;

/// Compass search from `start` for larger values of `score`, with both points
/// kept in the closed domain and `|x - y| <= radius`.
fn climb(
    setup: &LemmaSetup,
    start: &PairSample,
    radius: f64,
    second: bool,
    score: &(impl Fn(&PhiLocal) -> Result<f64> + Sync),
) -> Result<f64> {
    let dom = *setup.domain();
    let dim = dom.dim();
    let tf = setup.test_function(start.eps, 0.0, 0.0)?;
    let eval = |x: &Vector, y: &Vector| -> Result<f64> { score(&tf.local(x, y, second)?) };
    let (mut x, mut y) = (start.x, start.y);
    let mut best = eval(&x, &y)?;
    let mut step = 0.25 * radius;
    while step > 1e-6 * radius.max(1e-3) {
        let mut improved = false;
        for k in 0..4 * dim {
            for sign in [1.0, -1.0] {
                let (mut cx, mut cy) = (x, y);
                let (i, (wx, wy)) = (k % dim, [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, -1.0)][k / dim]);
                cx[i] += sign * wx * step;
                cy[i] += sign * wy * step;
                if dom.signed_distance(&cx) < 0.0 {
                    cx = dom.project(&cx);
                }
                if dom.signed_distance(&cy) < 0.0 {
                    cy = dom.project(&cy);
                }
                if (cx - cy).norm() > radius {
                    continue;
                }
                let v = eval(&cx, &cy)?;
                if v > best {
                    best = v;
                    x = cx;
                    y = cy;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(best)
}

/// Local maxima of `score` reached from the `top` largest entries of
/// `needed` at each `ε`; the radius at each `ε` is the largest pair distance sampled there.
fn refine_top(
    setup: &LemmaSetup,
    samples: &[PairSample],
    needed: &[f64],
    top: usize,
    second: bool,
    score: &(impl Fn(&PhiLocal) -> Result<f64> + Sync),
) -> Result<Vec<f64>> {
    let mut levels: Vec<f64> = samples.iter().map(|s| s.eps).collect();
    levels.sort_by(|a, b| b.total_cmp(a));
    levels.dedup();
    let mut starts = Vec::new();
    for e in levels {
        let mut order: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].eps == e).collect();
        order.sort_by(|&a, &b| needed[b].total_cmp(&needed[a]).then(a.cmp(&b)));
        starts.extend(order.into_iter().take(top));
    }
    starts
        .par_iter()
        .map(|&i| {
            let s = &samples[i];
            let radius = samples.iter().filter(|t| t.eps == s.eps).map(|t| (t.x - t.y).norm()).fold(0.0, f64::max);
            climb(setup, s, radius, second, score)
        })
        .collect()
}

fn eps_split(samples: &[PairSample]) -> Result<f64> {
    let lo = samples.iter().map(|s| s.eps).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|s| s.eps).fold(0.0, f64::max);
    if !(lo < hi) {
        return Err(Error::Argument("calibration needs at least two values of ε".into()));
    }
    Ok((lo * hi).sqrt())
}

/// Boundary-pair data for the boundary-condition lemma.
#[derive(Clone, Debug)]
pub struct BoundaryPair {
    pub op1: BoundaryOp,
    pub op2: BoundaryOp,
    pub nu1: f64,
    pub nu2: f64,
    pub mu1: f64,
    pub mu2: f64,
}

impl BoundaryPair {
    /// Measures `μ1, μ2` between the two conditions on boundary samples.
    pub fn new(op1: BoundaryOp, op2: BoundaryOp) -> Result<Self> {
        let dom = *op1.domain();
        let dim = dom.dim();
        let mut samples = Vec::new();
        for xb in boundary_points(&dom, 16) {
            for k in 0..=16 {
                let mag = 0.25 * k as f64;
                samples.push((xb, Vector::unit(dim, 0) * mag));
                samples.push((xb, Vector::unit(dim, dim - 1) * (-mag)));
                if dim == 2 {
                    samples.push((xb, Vector::new2(mag, mag)));
                }
            }
        }
        let dist = boundary_distance(&op1, &op2, &samples)?;
        if dist.unbounded {
            return Err(Error::Assumption("boundary conditions are not within a finite distance".into()));
        }
        Ok(Self { nu1: op1.nu(), nu2: op2.nu(), mu1: dist.mu1 * dist.k_g, mu2: dist.mu2 * dist.k_g, op1, op2 })
    }

    pub fn constants(&self, setup: &LemmaSetup, eps: f64, k: f64) -> Result<(f64, f64)> {
        let (eta, a) = coupling(eps, setup.alpha_bar)?;
        choose_ab(eps, eta, a, self.nu1, self.nu2, self.mu1, self.mu2, k)
    }
}

/// Sign violations `(x on ∂Ω with G1(x, D_xφ) ≤ 0, y on ∂Ω with G2(y, -D_yφ) ≥ 0)`.
pub fn count_lem_bc(
    pair: &BoundaryPair,
    samples: &[PairSample],
    locals: &[PhiLocal],
    constants: impl Fn(f64) -> Result<(f64, f64)>,
) -> Result<(usize, usize)> {
    let dom = *pair.op1.domain();
    let (mut vx, mut vy) = (0, 0);
    for (s, l) in samples.iter().zip(locals) {
        let (big_a, big_b) = constants(s.eps)?;
        let (gx, gy) = l.gradients(big_a, big_b);
        if dom.signed_distance(&s.x).abs() <= 1e-12 && pair.op1.eval_g(&s.x, &gx)? <= 0.0 {
            vx += 1;
        }
        if dom.signed_distance(&s.y).abs() <= 1e-12 && pair.op2.eval_g(&s.y, &(-gy))? >= 0.0 {
            vy += 1;
        }
    }
    Ok((vx, vy))
}

fn check_local_radius(setup: &LemmaSetup, samples: &[PairSample], k1: f64) -> Result<()> {
    for s in samples {
        if (s.x - s.y).norm() > setup.local_radius(k1, s.eps) * (1.0 + 1e-12) {
            return Err(Error::Argument(format!(
                "pair at distance {} exceeds K1 η ε = {}",
                (s.x - s.y).norm(),
                setup.local_radius(k1, s.eps)
            )));
        }
    }
    Ok(())
}

/// Boundary-condition check with `A, B` from [`choose_ab`] at constant `k`.
pub fn check_lem_bc(
    setup: &LemmaSetup,
    pair: &BoundaryPair,
    samples: &[PairSample],
    k1: f64,
    k: f64,
) -> Result<(usize, usize)> {
    check_local_radius(setup, samples, k1)?;
    let locals = setup.locals(samples, false)?;
    count_lem_bc(pair, samples, &locals, |e| pair.constants(setup, e, k))
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LemBcReport {
    pub k: f64,
    pub sweep: Vec<(f64, usize, usize)>,
    pub violations_x: usize,
    pub violations_y: usize,
    pub samples: usize,
}

/// Smallest `K = 2^j`, `j ≤ 20`, with no sign violations on `samples`, then
/// checked on `verify`.
pub fn calibrate_lem_bc(
    setup: &LemmaSetup,
    pair: &BoundaryPair,
    samples: &[PairSample],
    verify: &[PairSample],
    k1: f64,
) -> Result<LemBcReport> {
    check_local_radius(setup, samples, k1)?;
    check_local_radius(setup, verify, k1)?;
    let locals = setup.locals(samples, false)?;
    let mut sweep = Vec::new();
    for j in 0..=20 {
        let k = 2f64.powi(j);
        let (vx, vy) = count_lem_bc(pair, samples, &locals, |e| pair.constants(setup, e, k))?;
        sweep.push((k, vx, vy));
        if vx + vy == 0 {
            let verify_locals = setup.locals(verify, false)?;
            let (violations_x, violations_y) =
                count_lem_bc(pair, verify, &verify_locals, |e| pair.constants(setup, e, k))?;
            return Ok(LemBcReport { k, sweep, violations_x, violations_y, samples: verify.len() });
        }
    }
    Err(Error::Calibration("boundary-condition sweep exceeded K = 2^20".into()))
}

/// Names of the four derivative displays, in report order.
pub const LEM_DERIV_BOUNDS: [&str; 4] = ["pmqest", "pmqest2", "lwrbd", "scnd"];

/// Constants needed by one pair for each derivative display.
pub fn lem_deriv_needed(local: &PhiLocal, big_a: f64, big_b: f64) -> Result<[f64; 4]> {
    let e2 = local.eps * local.eps;
    let r = local.big_y.norm();
    let (gx, gy) = local.gradients(big_a, big_b);
    let pmq = ((gx + gy).norm() - 2.0 * big_b) / (r * r / e2 + e2);
    let pmq2 = (gx.norm() + gy.norm() - 2.0 * big_b) / (e2 + r * r / e2 + r / e2);
    let alpha = r / (2.0 * e2) * (1.0 - e2 * big_b);
    let beta = r * (1.0 + big_a) / 2.0 + e2 + big_b;
    let lwr = (alpha - gx.norm().min(gy.norm())) / beta;
    let scnd = scnd_needed(local, big_a, big_b)?;
    Ok([pmq.max(0.0), pmq2.max(0.0), lwr.max(0.0), scnd.max(0.0)])
}

/// Smallest `K` with `D²φ ≤ K P`, where `P = (1+η²)/ε² [[I, -I], [-I, I]] + ((1+η²)(η²+ε²) + B) I`.
fn scnd_needed(local: &PhiLocal, big_a: f64, big_b: f64) -> Result<f64> {
    let n = local.big_y.dim();
    let e2 = local.eps * local.eps;
    let eta2 = local.eta * local.eta;
    let c1 = (1.0 + eta2) / e2;
    let c2 = (1.0 + eta2) * (eta2 + e2) + big_b;
    let mut p = DMatrix::<f64>::identity(2 * n, 2 * n) * c2;
    for i in 0..n {
        p[(i, i)] += c1;
        p[(n + i, n + i)] += c1;
        p[(i, n + i)] -= c1;
        p[(n + i, i)] -= c1;
    }
    let chol = p.cholesky().ok_or_else(|| Error::Argument("comparison matrix not positive definite".into()))?;
    let l_inv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::Argument("singular comparison factor".into()))?;
    let h = local.hessian(big_a, big_b);
    let m = &l_inv * h * l_inv.transpose();
    let sym = (&m + m.transpose()) * 0.5;
    Ok(sym.symmetric_eigenvalues().max())
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LemDerivReport {
    pub constants: Vec<f64>,
    /// Violations on the fitting samples at the fitted constants.
    pub violations: Vec<usize>,
    pub resampled: Vec<ConstantFit>,
}

/// Fits the four derivative constants on `samples` and checks them on `verify`.
pub fn check_lem_deriv(
    setup: &LemmaSetup,
    samples: &[PairSample],
    verify: &[PairSample],
    constants: impl Fn(f64) -> Result<(f64, f64)> + Sync,
) -> Result<LemDerivReport> {
    let needed = |set: &[PairSample]| -> Result<Vec<[f64; 4]>> {
        let locals = setup.locals(set, true)?;
        locals
            .par_iter()
            .map(|l| {
                let (big_a, big_b) = constants(l.eps)?;
                lem_deriv_needed(l, big_a, big_b)
            })
            .collect()
    };
    let fit = needed(samples)?;
    let check = needed(verify)?;
    let mut report = LemDerivReport { constants: Vec::new(), violations: Vec::new(), resampled: Vec::new() };
    for (k, name) in LEM_DERIV_BOUNDS.iter().enumerate() {
        let score = |l: &PhiLocal| -> Result<f64> {
            let (big_a, big_b) = constants(l.eps)?;
            Ok(lem_deriv_needed(l, big_a, big_b)?[k])
        };
        let mut col = column(&fit, k);
        col.extend(refine_top(setup, samples, &column(&fit, k), REFINED_STARTS, true, &score)?);
        let mut check_col = column(&check, k);
        check_col.extend(refine_top(setup, verify, &column(&check, k), REFINED_STARTS, true, &score)?);
        let kk = max_needed(&col)?;
        report.constants.push(kk);
        report.violations.push(count_violations(&col, kk));
        let mut resampled = fit_constant(name, &col, &check_col)?;
        resampled.samples = verify.len();
        report.resampled.push(resampled);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::BoundarySpec;

    fn unit_interval() -> DistanceField {
        DistanceField::new(Domain::Interval { a: 0.0, b: 1.0 }).unwrap()
    }

    fn constant_shift(dim: usize, v: f64) -> Arc<dyn ShiftFunction> {
        Arc::new(FnShift::new(dim, move |_: &Vector, _: &Vector| v))
    }

    #[test]
    fn constant_and_linear_shifts_are_reproduced() {
        let field = unit_interval();
        let c = RegularizedShift::new(constant_shift(1, 7.0), field, 0.3).unwrap();
        let lin = RegularizedShift::new(Arc::new(FnShift::new(1, |_: &Vector, q: &Vector| 2.5 * q[0])), field, 0.3).unwrap();
        for (x, p) in [(0.0, 0.0), (0.03, -4.0), (0.5, 1.5), (1.0, 9.0)] {
            let (x, p) = (Vector::new1(x), Vector::new1(p));
            assert!((c.eval(&x, &p).unwrap() - 7.0).abs() < 1e-8);
            assert!((lin.eval(&x, &p).unwrap() - 2.5 * p[0]).abs() < 1e-8);
            let d = c.derivatives(&x, &p, true).unwrap();
            assert!(d.dx.norm() + d.dp.norm() + d.dxx.norm() + d.dxp.norm() + d.dpp.norm() < 1e-6);
            let d = lin.derivatives(&x, &p, true).unwrap();
            assert!((d.dp[0] - 2.5).abs() < 1e-6);
            assert!(d.dxx.norm() < 1e-6);
        }
    }

    #[test]
    fn capillary_quadrature_refinement() {
        let field = unit_interval();
        let op = BoundaryOp::new(BoundarySpec::capillary(0.5), field).unwrap();
        let base: Arc<dyn ShiftFunction> = Arc::new(op);
        let x = Vector::new1(0.0);
        let p = Vector::new1(0.0);
        let order = Mollifier::default_order(1);
        let q = RegularizedShift::with_order(base.clone(), field, 0.1, order).unwrap().eval(&x, &p).unwrap();
        let q2 = RegularizedShift::with_order(base, field, 0.1, 2 * order).unwrap().eval(&x, &p).unwrap();
        assert!((q - q2).abs() < 1e-6);
        assert!(Mollifier::new(1, 3).is_err());
    }

    #[test]
    fn choose_ab_arithmetic() {
        let (a, b) = choose_ab(0.1, 0.1, 0.01, 1.0, 1.0, 0.2, 0.0, 1.0).unwrap();
        assert_eq!(a, 1.0);
        assert!((b - 0.23).abs() < 1e-15);
        let (_, b) = choose_ab(0.1, 0.1, 0.01, 1.0, 1.0, 0.0, 0.0, 1.0).unwrap();
        assert!((b - 0.03).abs() < 1e-15);
        assert!(matches!(choose_ab(0.1, 0.1, 0.01, 0.0, 1.0, 0.0, 0.0, 1.0), Err(Error::Assumption(_))));
    }

    #[test]
    fn phi_trivial_cases() {
        let field = unit_interval();
        let tf = TestFunction::new(constant_shift(1, 0.0), field, 0.2, 1.0, 3.0, 0.0).unwrap();
        let x = Vector::new1(0.01);
        let y = Vector::new1(0.04);
        let expected = 0.03f64.powi(2) / 0.04 + 3.0 * 0.03f64.powi(2) / 0.04;
        assert!((tf.eval_phi(&x, &y).unwrap() - expected).abs() < 1e-12);
        let tf = tf.with_constants(3.0, 0.5).unwrap();
        assert!((tf.eval_phi(&x, &x).unwrap() + 2.0 * 0.5 * 0.01).abs() < 1e-14);
        let d = tf.with_constants(3.0, 0.0).unwrap().grad_hess_phi(&x, &x).unwrap();
        assert!(d.dx_phi.norm() + d.dy_phi.norm() < 1e-14);
        // plateau: Dd = 0 there
        let mid = Vector::new1(0.5);
        let d = tf.grad_hess_phi(&mid, &mid).unwrap();
        assert!(d.dx_phi.norm() < 1e-14);
    }

    #[test]
    fn quadratic_hessian_passes_scnd_with_two_one_plus_a() {
        let field = unit_interval();
        let setup = LemmaSetup::new(constant_shift(1, 0.0), field, 1.0).unwrap();
        let big_a = 3.0;
        for x in [0.0, 0.02, 0.3, 0.5] {
            let x = Vector::new1(x);
            let l = setup.test_function(0.2, big_a, 0.0).unwrap().local(&x, &x, true).unwrap();
            let k = scnd_needed(&l, big_a, 0.0).unwrap();
            assert!(k <= 2.0 * (1.0 + big_a) + 1e-9, "{k}");
            let n = lem_deriv_needed(&l, big_a, 0.0).unwrap();
            assert!(n[0] < 1e-12);
        }
    }

    #[test]
    fn phi_gradient_matches_finite_differences() {
        let field = DistanceField::new(Domain::Disc { radius: 1.0 }).unwrap();
        let op = BoundaryOp::new(BoundarySpec::capillary(0.4), field).unwrap();
        let setup = LemmaSetup::for_boundary(&op, 0.7).unwrap();
        let samples = sample_pairs(&field, 40, &[0.3, 0.5], |e| 2.0 * e, Anchor::Free, 11).unwrap();
        for s in samples {
            let tf = setup.test_function(s.eps, 2.0, 0.3).unwrap();
            let margin = field.domain().signed_distance(&s.x).min(field.domain().signed_distance(&s.y));
            if margin < 1e-3 {
                continue;
            }
            let d = tf.grad_hess_phi(&s.x, &s.y).unwrap();
            let h = 1e-5;
            for k in 0..4 {
                let shifted = |sg: f64| {
                    let (mut x, mut y) = (s.x, s.y);
                    if k < 2 {
                        x[k] += sg * h;
                    } else {
                        y[k - 2] += sg * h;
                    }
                    tf.eval_phi(&x, &y).unwrap()
                };
                let fd = (shifted(1.0) - shifted(-1.0)) / (2.0 * h);
                let an = if k < 2 { d.dx_phi[k] } else { d.dy_phi[k - 2] };
                let scale = d.dx_phi.norm().max(d.dy_phi.norm()).max(1.0);
                assert!((fd - an).abs() <= 1e-5 * scale, "k={k} fd={fd} an={an}");
            }
        }
    }
}
