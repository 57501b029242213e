//! Bellman–Isaacs operators
//! `F(x,r,p,X) = inf_θ1 sup_θ2 { -tr[σσᵀ(x) X] - b(x)·p + c(x) r - f(x) }`
//! over finite control lists, and sample-based probes of their structure.
//!
//! The zeroth-order term enters as `+c r`, so `F` is increasing in `r` with
//! rate `min c`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coeffs::{MatrixFn, ScalarFn, VectorFn};
use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::linalg::{Matrix, Vector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSet {
    pub sigma: MatrixFn,
    pub b: VectorFn,
    pub c: ScalarFn,
    pub f: ScalarFn,
}

impl CoefficientSet {
    pub fn validate(&self, dim: usize) -> Result<()> {
        self.sigma.validate(dim)?;
        self.b.validate(dim)?;
        self.c.validate(dim)?;
        self.f.validate(dim)
    }

    pub fn at(&self, x: &Vector) -> PointCoefficients {
        let sigma = self.sigma.eval(x);
        PointCoefficients {
            a: sigma.matmul(&sigma.transpose()),
            sigma,
            b: self.b.eval(x),
            c: self.c.eval(x),
            f: self.f.eval(x),
        }
    }
}

/// Coefficients of one control pair frozen at a point; `a = σσᵀ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointCoefficients {
    pub sigma: Matrix,
    pub a: Matrix,
    pub b: Vector,
    pub c: f64,
    pub f: f64,
}

impl PointCoefficients {
    pub fn apply(&self, r: f64, p: &Vector, x: &Matrix) -> f64 {
        -self.a.trace_product(x) - self.b.dot(p) + self.c * r - self.f
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Linear,
    Bellman,
    Isaacs,
}

fn default_alpha() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum OperatorRepr {
    Linear {
        sigma: MatrixFn,
        b: VectorFn,
        c: ScalarFn,
        f: ScalarFn,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda: Option<f64>,
    },
    Bellman {
        controls: Vec<CoefficientSet>,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda: Option<f64>,
    },
    Isaacs {
        controls: Vec<Vec<CoefficientSet>>,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lambda: Option<f64>,
    },
}

/// Equation family with controls indexed `[θ1][θ2]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OperatorRepr", into = "OperatorRepr")]
pub struct OperatorSpec {
    kind: OperatorKind,
    controls: Vec<Vec<CoefficientSet>>,
    /// Declared Hölder exponent of `c`, `f` (and Lipschitz regularity of `σ`, `b`).
    pub alpha: f64,
    /// Declared lower bound for `c`.
    pub lambda: Option<f64>,
}

impl TryFrom<OperatorRepr> for OperatorSpec {
    type Error = Error;

    fn try_from(r: OperatorRepr) -> Result<Self> {
        let (kind, controls, alpha, lambda) = match r {
            OperatorRepr::Linear { sigma, b, c, f, alpha, lambda } => {
                (OperatorKind::Linear, vec![vec![CoefficientSet { sigma, b, c, f }]], alpha, lambda)
            }
            OperatorRepr::Bellman { controls, alpha, lambda } => {
                (OperatorKind::Bellman, controls.into_iter().map(|c| vec![c]).collect(), alpha, lambda)
            }
            OperatorRepr::Isaacs { controls, alpha, lambda } => (OperatorKind::Isaacs, controls, alpha, lambda),
        };
        Self::new(kind, controls, alpha, lambda)
    }
}

impl From<OperatorSpec> for OperatorRepr {
    fn from(s: OperatorSpec) -> Self {
        let OperatorSpec { kind, mut controls, alpha, lambda } = s;
        match kind {
            OperatorKind::Linear => {
                let CoefficientSet { sigma, b, c, f } = controls.remove(0).remove(0);
                OperatorRepr::Linear { sigma, b, c, f, alpha, lambda }
            }
            OperatorKind::Bellman => OperatorRepr::Bellman {
                controls: controls.into_iter().map(|mut row| row.remove(0)).collect(),
                alpha,
                lambda,
            },
            OperatorKind::Isaacs => OperatorRepr::Isaacs { controls, alpha, lambda },
        }
    }
}

impl OperatorSpec {
    pub fn new(kind: OperatorKind, controls: Vec<Vec<CoefficientSet>>, alpha: f64, lambda: Option<f64>) -> Result<Self> {
        if controls.is_empty() || controls.iter().any(|row| row.is_empty()) {
            return Err(Error::Config("control grids must be nonempty".into()));
        }
        let n2 = controls[0].len();
        if controls.iter().any(|row| row.len() != n2) {
            return Err(Error::Config("every θ1 row needs the same number of θ2 controls".into()));
        }
        match kind {
            OperatorKind::Linear if controls.len() != 1 || n2 != 1 => {
                return Err(Error::Config("a linear operator has a single control".into()))
            }
            OperatorKind::Bellman if n2 != 1 => {
                return Err(Error::Config("a Bellman operator has a single θ2 control".into()))
            }
            _ => {}
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Config(format!("alpha = {alpha} must lie in (0, 1]")));
        }
        if let Some(l) = lambda {
            if !(l > 0.0) {
                return Err(Error::Config(format!("declared lambda = {l} must be positive")));
            }
        }
        Ok(Self { kind, controls, alpha, lambda })
    }

    pub fn linear(set: CoefficientSet) -> Self {
        Self { kind: OperatorKind::Linear, controls: vec![vec![set]], alpha: 1.0, lambda: None }
    }

    pub fn bellman(sets: Vec<CoefficientSet>) -> Result<Self> {
        Self::new(OperatorKind::Bellman, sets.into_iter().map(|s| vec![s]).collect(), 1.0, None)
    }

    pub fn isaacs(sets: Vec<Vec<CoefficientSet>>) -> Result<Self> {
        Self::new(OperatorKind::Isaacs, sets, 1.0, None)
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.controls.len(), self.controls[0].len())
    }

    pub fn control(&self, i: usize, j: usize) -> &CoefficientSet {
        &self.controls[i][j]
    }

    pub fn controls(&self) -> &[Vec<CoefficientSet>] {
        &self.controls
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        self.controls.iter().flatten().try_for_each(|c| c.validate(dim))
    }

    /// Applies `edit` to every control's coefficient set.
    pub fn map_controls(&self, mut edit: impl FnMut(&CoefficientSet) -> CoefficientSet) -> Self {
        let controls = self.controls.iter().map(|row| row.iter().map(&mut edit).collect()).collect();
        Self { controls, ..self.clone() }
    }

    /// Coefficients of every control pair at `x`, indexed `[θ1][θ2]`.
    pub fn coefficients(&self, x: &Vector) -> Vec<Vec<PointCoefficients>> {
        self.controls.iter().map(|row| row.iter().map(|c| c.at(x)).collect()).collect()
    }

    pub fn eval_f(&self, x: &Vector, r: f64, p: &Vector, xx: &Matrix) -> Result<f64> {
        self.eval_with_controls(x, r, p, xx).map(|(v, _)| v)
    }

    pub fn eval_argcontrols(&self, x: &Vector, r: f64, p: &Vector, xx: &Matrix) -> Result<(usize, usize)> {
        self.eval_with_controls(x, r, p, xx).map(|(_, c)| c)
    }

    fn eval_with_controls(&self, x: &Vector, r: f64, p: &Vector, xx: &Matrix) -> Result<(f64, (usize, usize))> {
        let dim = x.dim();
        if p.dim() != dim || xx.dim() != dim {
            return Err(Error::Argument(format!("dimension mismatch: x {dim}, p {}, X {}", p.dim(), xx.dim())));
        }
        if !xx.is_symmetric(1e-12 * (1.0 + xx.norm())) {
            return Err(Error::Argument("X must be symmetric".into()));
        }
        let coeffs = self.coefficients(x);
        Ok(inf_sup(self.shape(), |i, j| coeffs[i][j].apply(r, p, xx)))
    }
}

/// `inf_i sup_j value(i, j)` with the attaining pair; ties go to the lowest index.
pub fn inf_sup(shape: (usize, usize), mut value: impl FnMut(usize, usize) -> f64) -> (f64, (usize, usize)) {
    let mut best = (f64::INFINITY, (0, 0));
    for i in 0..shape.0 {
        let mut inner = (f64::NEG_INFINITY, 0);
        for j in 0..shape.1 {
            let v = value(i, j);
            if v > inner.0 {
                inner = (v, j);
            }
        }
        if inner.0 < best.0 || i == 0 {
            best = (inner.0, (i, inner.1));
        }
    }
    best
}

#[derive(Clone, Copy, Debug)]
pub struct H3Sample {
    pub x: Vector,
    pub p: Vector,
    pub xx: Matrix,
    pub r: f64,
    pub s: f64,
}

/// Smallest observed `(F(x,r,p,X) - F(x,s,p,X)) / (r - s)`.
pub fn probe_h3(spec: &OperatorSpec, samples: &[H3Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Argument("empty sample list".into()));
    }
    let mut lambda = f64::INFINITY;
    for s in samples {
        if !(s.r > s.s) {
            return Err(Error::Argument(format!("sample needs r > s, got r = {}, s = {}", s.r, s.s)));
        }
        let fr = spec.eval_f(&s.x, s.r, &s.p, &s.xx)?;
        let fs = spec.eval_f(&s.x, s.s, &s.p, &s.xx)?;
        lambda = lambda.min((fr - fs) / (s.r - s.s));
    }
    Ok(lambda)
}

/// Random H3 samples over a domain, with gradients and Hessians of size up to `scale`.
pub fn h3_samples(domain: &Domain, count: usize, scale: f64, seed: u64) -> Vec<H3Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = domain.dim();
    (0..count)
        .map(|_| {
            let x = domain.sample_interior(&mut rng);
            let p = random_vector(&mut rng, dim, scale);
            let xx = random_symmetric(&mut rng, dim, scale);
            let s = rng.gen_range(-scale..scale);
            let r = s + rng.gen_range(1e-3..scale.max(2e-3));
            H3Sample { x, p, xx, r, s }
        })
        .collect()
}

/// `(δ1, δ2)`: `δ1 = sup_θ (|c1 - c2|_0 + |f1 - f2|_0)`,
/// `δ2² = sup_θ (|σ1 - σ2|_0² + |b1 - b2|_0²)`, sup-norms taken over `points`.
pub fn coefficient_distance(spec1: &OperatorSpec, spec2: &OperatorSpec, points: &[Vector]) -> Result<(f64, f64)> {
    if spec1.shape() != spec2.shape() {
        return Err(Error::Argument(format!(
            "control grids differ: {:?} vs {:?}",
            spec1.shape(),
            spec2.shape()
        )));
    }
    if points.is_empty() {
        return Err(Error::Argument("empty sampling grid".into()));
    }
    let (n1, n2) = spec1.shape();
    let mut delta1: f64 = 0.0;
    let mut delta2_sq: f64 = 0.0;
    for i in 0..n1 {
        for j in 0..n2 {
            let (c1, c2) = (spec1.control(i, j), spec2.control(i, j));
            let mut sup = [0.0f64; 4];
            for x in points {
                let (a, b) = (c1.at(x), c2.at(x));
                sup[0] = sup[0].max((a.c - b.c).abs());
                sup[1] = sup[1].max((a.f - b.f).abs());
                sup[2] = sup[2].max((a.sigma - b.sigma).norm());
                sup[3] = sup[3].max((a.b - b.b).norm());
            }
            delta1 = delta1.max(sup[0] + sup[1]);
            delta2_sq = delta2_sq.max(sup[2] * sup[2] + sup[3] * sup[3]);
        }
    }
    Ok((delta1, delta2_sq.sqrt()))
}

/// One admissible tuple for the structure condition on `F`.
#[derive(Clone, Copy, Debug)]
pub struct H2Sample {
    pub x: Vector,
    pub y: Vector,
    pub r: f64,
    pub p: Vector,
    pub q: Vector,
    pub xx: Matrix,
    pub yy: Matrix,
    pub eps: f64,
    pub eta: f64,
    pub b: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct H2Report {
    pub k_hat: f64,
    /// Fit on four times as many samples with the schedule extended to smaller `ε`.
    pub k_hat_refined: f64,
    pub drift: f64,
    pub pass: bool,
}

/// Side-condition constant `K` and bound `R` on `|r|` used by the sampler.
#[derive(Clone, Copy, Debug)]
pub struct H2Params {
    pub k: f64,
    pub r_max: f64,
}

impl Default for H2Params {
    fn default() -> Self {
        Self { k: 1.0, r_max: 1.0 }
    }
}

/// Draws tuples satisfying `|x-y| <= Kηε`, `|p-q| <= K(η²+ε²+B)`,
/// `|p|+|q| <= K(η/ε+η²+ε²+B)` and the block matrix inequality on `(X, Y)`.
///
/// `X = M + κ/2 I - P1`, `Y = M - κ/2 I + P2` with `P1, P2 >= 0` and
/// `|M| <= sqrt(Kκ)/ε` satisfy the matrix inequality, `κ = K(η²+ε²+B)`.
pub fn h2_samples(domain: &Domain, schedule: &[(f64, f64)], per_entry: usize, params: H2Params, seed: u64) -> Vec<H2Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = domain.dim();
    let k = params.k;
    let mut out = Vec::with_capacity(schedule.len() * per_entry);
    for &(eps, eta) in schedule {
        for _ in 0..per_entry {
            let b = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..eta * eta) };
            let kappa = k * (eta * eta + eps * eps + b);
            let x = domain.sample_interior(&mut rng);
            let y = loop {
                let t = if rng.gen_bool(0.25) { 1.0 } else { rng.gen::<f64>() };
                let cand = x + random_direction(&mut rng, dim) * (t * k * eta * eps);
                if domain.contains(&cand) {
                    break cand;
                }
            };
            let grad_budget = k * (eta / eps + eta * eta + eps * eps + b);
            let w = random_direction(&mut rng, dim) * (rng.gen::<f64>() * kappa.min(0.5 * grad_budget));
            let p_len = extreme_biased(&mut rng) * 0.5 * (grad_budget - w.norm());
            let p = random_direction(&mut rng, dim) * p_len;
            let q = p + w;
            let m_bound = (k * kappa).sqrt() / eps;
            let m_len = extreme_biased(&mut rng) * m_bound;
            let m = random_symmetric_bounded(&mut rng, dim, m_len);
            let p1_len = if rng.gen_bool(0.5) { 0.0 } else { m_bound };
            let p1 = random_psd(&mut rng, dim, p1_len);
            let p2_len = if rng.gen_bool(0.5) { 0.0 } else { m_bound };
            let p2 = random_psd(&mut rng, dim, p2_len);
            let half = Matrix::scaled_identity(dim, 0.5 * kappa);
            let r = rng.gen_range(-params.r_max..=params.r_max);
            out.push(H2Sample { x, y, r, p, q, xx: m + half - p1, yy: m - half + p2, eps, eta, b });
        }
    }
    out
}

/// Smallest `K` with `F(y,r,q,Y) - F(x,r,p,X) <= K(|x-y|^α + |x-y|²/ε² + η² + ε² + B)`.
pub fn fit_h2bar(spec: &OperatorSpec, samples: &[H2Sample]) -> Result<f64> {
    let mut k_hat: f64 = 0.0;
    for s in samples {
        let diff = spec.eval_f(&s.y, s.r, &s.q, &s.yy)? - spec.eval_f(&s.x, s.r, &s.p, &s.xx)?;
        let dxy = (s.x - s.y).norm();
        let envelope = dxy.powf(spec.alpha) + dxy * dxy / (s.eps * s.eps) + s.eta * s.eta + s.eps * s.eps + s.b;
        k_hat = k_hat.max(diff / envelope);
    }
    Ok(k_hat)
}

/// Fits the structure constant on `samples_per_entry` tuples per schedule entry,
/// then refits on four times as many with the schedule extended by `ε_min/2`
/// and `ε_min/4`; passes when the fit is finite and drifts by at most 20%.
pub fn probe_h2bar(
    spec: &OperatorSpec,
    domain: &Domain,
    schedule: &[(f64, f64)],
    samples_per_entry: usize,
    params: H2Params,
    seed: u64,
) -> Result<H2Report> {
    if schedule.is_empty() {
        return Err(Error::Argument("empty (ε, η) schedule".into()));
    }
    for &(eps, eta) in schedule {
        if !(eps > 0.0 && eps <= eta && eta <= 1.0) {
            return Err(Error::Argument(format!("schedule entry needs 0 < ε <= η <= 1, got ({eps}, {eta})")));
        }
    }
    let k_hat = fit_h2bar(spec, &h2_samples(domain, schedule, samples_per_entry, params, seed))?;
    let mut extended = schedule.to_vec();
    let &(eps_min, eta_min) = schedule
        .iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("nonempty");
    // keep the ε–η coupling of the smallest entry
    let expo = eta_min.ln() / eps_min.ln();
    for div in [2.0, 4.0] {
        let e = eps_min / div;
        let n = if expo.is_finite() { e.powf(expo) } else { 1.0 };
        extended.push((e, n.max(e)));
    }
    let k_ref = fit_h2bar(spec, &h2_samples(domain, &extended, 4 * samples_per_entry, params, seed ^ 0x9e37_79b9))?;
    let drift = relative_drift(k_hat, k_ref);
    Ok(H2Report { k_hat, k_hat_refined: k_ref, drift, pass: k_hat.is_finite() && k_ref.is_finite() && drift <= 0.2 })
}

/// `|b - a| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_drift(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (b - a).abs() / scale
    }
}

fn extreme_biased<R: Rng>(rng: &mut R) -> f64 {
    if rng.gen_bool(0.4) {
        1.0
    } else {
        rng.gen()
    }
}

pub(crate) fn random_direction<R: Rng>(rng: &mut R, dim: usize) -> Vector {
    if dim == 1 {
        return Vector::new1(if rng.gen_bool(0.5) { 1.0 } else { -1.0 });
    }
    let th = rng.gen_range(0.0..std::f64::consts::TAU);
    Vector::new2(th.cos(), th.sin())
}

pub(crate) fn random_vector<R: Rng>(rng: &mut R, dim: usize, scale: f64) -> Vector {
    let mut v = Vector::zeros(dim);
    for k in 0..dim {
        v[k] = rng.gen_range(-scale..=scale);
    }
    v
}

pub(crate) fn random_symmetric<R: Rng>(rng: &mut R, dim: usize, scale: f64) -> Matrix {
    let mut m = Matrix::zeros(dim);
    for i in 0..dim {
        for j in i..dim {
            let v = rng.gen_range(-scale..=scale);
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    m
}

/// Symmetric matrix with spectral norm at most `bound`.
fn random_symmetric_bounded<R: Rng>(rng: &mut R, dim: usize, bound: f64) -> Matrix {
    let m = random_symmetric(rng, dim, 1.0);
    let spec = m.min_eigenvalue_sym().abs().max((m * -1.0).min_eigenvalue_sym().abs());
    if spec == 0.0 {
        m
    } else {
        m * (bound / spec)
    }
}

fn random_psd<R: Rng>(rng: &mut R, dim: usize, bound: f64) -> Matrix {
    let v = random_vector(rng, dim, 1.0);
    let n = v.norm_sq();
    if n == 0.0 || bound == 0.0 {
        return Matrix::zeros(dim);
    }
    Matrix::outer(&v, &v) * (rng.gen::<f64>() * bound / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(sigma: f64, b: f64, c: f64, f: f64) -> CoefficientSet {
        CoefficientSet {
            sigma: MatrixFn::Scalar(ScalarFn::constant(sigma)),
            b: VectorFn::constant(&[b]),
            c: ScalarFn::constant(c),
            f: ScalarFn::constant(f),
        }
    }

    fn eval1(spec: &OperatorSpec, x: f64, r: f64, p: f64, xx: f64) -> f64 {
        spec.eval_f(&Vector::new1(x), r, &Vector::new1(p), &Matrix::scalar(xx)).unwrap()
    }

    #[test]
    fn linear_arithmetic() {
        assert_eq!(eval1(&OperatorSpec::linear(set(0.0, 0.0, 1.0, 0.0)), 0.3, 0.0, 0.7, 2.0), 0.0);
        assert_eq!(eval1(&OperatorSpec::linear(set(1.0, 0.0, 1.0, 1.0)), 0.3, 3.0, 0.0, 2.0), 0.0);
    }

    #[test]
    fn bellman_takes_inf() {
        let spec = OperatorSpec::bellman(vec![set(0.0, 0.0, 0.0, 1.0), set(0.0, 0.0, 0.0, 2.0)]).unwrap();
        assert_eq!(eval1(&spec, 0.5, 0.0, 0.0, 0.0), -2.0);
        let x = Vector::new1(0.5);
        assert_eq!(spec.eval_argcontrols(&x, 0.0, &Vector::new1(0.0), &Matrix::scalar(0.0)).unwrap(), (1, 0));
        let single = OperatorSpec::linear(set(1.0, 0.0, 1.0, 0.0));
        assert_eq!(single.eval_argcontrols(&x, 0.0, &Vector::new1(0.0), &Matrix::scalar(0.0)).unwrap(), (0, 0));
    }

    #[test]
    fn ties_pick_lowest_index() {
        let spec = OperatorSpec::bellman(vec![set(0.0, 0.0, 1.0, 1.0), set(0.0, 0.0, 1.0, 1.0)]).unwrap();
        let x = Vector::new1(0.5);
        assert_eq!(spec.eval_argcontrols(&x, 0.0, &Vector::new1(0.0), &Matrix::scalar(0.0)).unwrap(), (0, 0));
    }

    #[test]
    fn asymmetric_hessian_rejected() {
        let spec = OperatorSpec::linear(CoefficientSet {
            sigma: MatrixFn::Scalar(ScalarFn::constant(1.0)),
            b: VectorFn::constant(&[0.0, 0.0]),
            c: ScalarFn::constant(1.0),
            f: ScalarFn::constant(0.0),
        });
        let x = Vector::new2(0.1, 0.1);
        let bad = Matrix::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]);
        assert!(matches!(spec.eval_f(&x, 0.0, &x, &bad), Err(Error::Argument(_))));
    }

    #[test]
    fn config_round_trip_and_shapes() {
        let text = r#"{"type":"bellman","controls":[
            {"sigma":{"preset":"const","value":1.0},"b":[0.0],"c":{"preset":"const","value":1.0},"f":{"preset":"const","value":1.0}},
            {"sigma":{"preset":"const","value":0.0},"b":[1.0],"c":{"preset":"const","value":2.0},"f":{"preset":"const","value":0.5}}]}"#;
        let spec: OperatorSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.shape(), (2, 1));
        assert_eq!(spec.alpha, 1.0);
        let back: OperatorSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
        let ragged = r#"{"type":"isaacs","controls":[[
            {"sigma":{"preset":"const","value":1.0},"b":[0.0],"c":{"preset":"const","value":1.0},"f":{"preset":"const","value":1.0}}],[]]}"#;
        assert!(serde_json::from_str::<OperatorSpec>(ragged).is_err());
    }

    #[test]
    fn h3_constant_and_two_controls() {
        let domain = Domain::Interval { a: 0.0, b: 1.0 };
        let samples = h3_samples(&domain, 200, 2.0, 1);
        let lin = OperatorSpec::linear(set(1.0, 0.5, 1.0, 0.0));
        assert!((probe_h3(&lin, &samples).unwrap() - 1.0).abs() < 1e-12);
        let two = OperatorSpec::bellman(vec![set(0.0, 0.0, 1.0, 0.0), set(0.0, 0.0, 2.0, 0.0)]).unwrap();
        assert!((probe_h3(&two, &samples).unwrap() - 1.0).abs() < 1e-12);
        let bad = H3Sample { r: 0.0, s: 1.0, ..samples[0] };
        assert!(probe_h3(&lin, &[bad]).is_err());
    }

    #[test]
    fn h3_affine_c_attained_near_left_end() {
        let spec = OperatorSpec::linear(CoefficientSet {
            sigma: MatrixFn::Scalar(ScalarFn::constant(0.0)),
            b: VectorFn::constant(&[0.0]),
            c: ScalarFn::Affine { value: 1.0, slope: vec![1.0] },
            f: ScalarFn::constant(0.0),
        });
        let samples = h3_samples(&Domain::Interval { a: 0.0, b: 1.0 }, 5000, 1.0, 3);
        let oracle = samples.iter().map(|s| 1.0 + s.x[0]).fold(f64::INFINITY, f64::min);
        let lam = probe_h3(&spec, &samples).unwrap();
        assert!((lam - oracle).abs() < 1e-9 && (lam - 1.0).abs() < 1e-2);
    }

    #[test]
    fn coefficient_distance_examples() {
        let pts: Vec<Vector> = (0..=16).map(|i| Vector::new1(i as f64 / 16.0)).collect();
        let base = OperatorSpec::linear(set(1.0, 0.0, 1.0, 0.0));
        assert_eq!(coefficient_distance(&base, &base, &pts).unwrap(), (0.0, 0.0));
        let f_shift = OperatorSpec::linear(set(1.0, 0.0, 1.0, 0.3));
        let (d1, d2) = coefficient_distance(&base, &f_shift, &pts).unwrap();
        assert!((d1 - 0.3).abs() < 1e-15 && d2 == 0.0);
        let moved = OperatorSpec::linear(set(1.1, 0.2, 1.0, 0.0));
        let (_, d2) = coefficient_distance(&base, &moved, &pts).unwrap();
        let oracle = (0.1f64 * 0.1 + 0.2 * 0.2).sqrt();
        assert!((d2 - oracle).abs() < 1e-12);
        let two = OperatorSpec::bellman(vec![set(1.0, 0.0, 1.0, 0.0), set(1.0, 0.0, 1.0, 0.0)]).unwrap();
        assert!(coefficient_distance(&base, &two, &pts).is_err());
    }

    #[test]
    fn h2_samples_respect_side_conditions() {
        let domain = Domain::PeriodicStrip { period: 1.0, height: 1.0 };
        let params = H2Params { k: 2.0, r_max: 1.0 };
        for s in h2_samples(&domain, &[(0.1, 0.3), (0.02, 0.1)], 500, params, 5) {
            let (k, e, n, b) = (params.k, s.eps, s.eta, s.b);
            let kappa = k * (n * n + e * e + b);
            assert!((s.x - s.y).norm() <= k * n * e * (1.0 + 1e-12));
            assert!((s.p - s.q).norm() <= kappa * (1.0 + 1e-12));
            assert!(s.p.norm() + s.q.norm() <= k * (n / e + n * n + e * e + b) * (1.0 + 1e-12));
            // block inequality: (K/ε²)[[I,-I],[-I,I]] + κI - diag(X, -Y) >= 0
            let mut big = nalgebra::DMatrix::<f64>::zeros(4, 4);
            for i in 0..2 {
                for j in 0..2 {
                    let id = if i == j { 1.0 } else { 0.0 };
                    big[(i, j)] = k / (e * e) * id + kappa * id - s.xx.get(i, j);
                    big[(i + 2, j + 2)] = k / (e * e) * id + kappa * id + s.yy.get(i, j);
                    big[(i, j + 2)] = -k / (e * e) * id;
                    big[(i + 2, j)] = -k / (e * e) * id;
                }
            }
            let min_eig = big.symmetric_eigenvalues().min();
            assert!(min_eig >= -1e-9 * (k / (e * e)), "{min_eig}");
        }
    }

    #[test]
    fn h2bar_identity_tuple_and_regular_spec() {
        let spec = OperatorSpec::linear(CoefficientSet {
            sigma: MatrixFn::Scalar(ScalarFn::Affine { value: 0.5, slope: vec![0.3] }),
            b: VectorFn::Components(vec![ScalarFn::Cos { amplitude: 1.0, wavenumber: vec![1.0], phase: 0.0, offset: 0.0 }]),
            c: ScalarFn::Affine { value: 1.0, slope: vec![0.5] },
            f: ScalarFn::Sin { amplitude: 1.0, wavenumber: vec![2.0], phase: 0.0, offset: 0.0 },
        });
        let x = Vector::new1(0.4);
        let same = H2Sample {
            x,
            y: x,
            r: 0.2,
            p: Vector::new1(1.0),
            q: Vector::new1(1.0),
            xx: Matrix::scalar(3.0),
            yy: Matrix::scalar(3.0),
            eps: 0.1,
            eta: 0.1,
            b: 0.0,
        };
        assert_eq!(fit_h2bar(&spec, &[same]).unwrap(), 0.0);
        let domain = Domain::Interval { a: 0.0, b: 1.0 };
        let sched: Vec<(f64, f64)> = [0.2, 0.1, 0.05].iter().map(|&e: &f64| (e, e.sqrt())).collect();
        let rep = probe_h2bar(&spec, &domain, &sched, 2000, H2Params::default(), 11).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(probe_h2bar(&spec, &domain, &[], 10, H2Params::default(), 1).is_err());
    }

    #[test]
    fn h2bar_flags_discontinuous_source() {
        let spec = OperatorSpec::linear(CoefficientSet {
            sigma: MatrixFn::Scalar(ScalarFn::constant(0.0)),
            b: VectorFn::constant(&[0.0]),
            c: ScalarFn::constant(1.0),
            f: ScalarFn::Step { left: 0.0, right: 1.0, at: 0.5, axis: 0 },
        });
        let domain = Domain::Interval { a: 0.0, b: 1.0 };
        let sched: Vec<(f64, f64)> = [0.2, 0.1, 0.05].iter().map(|&e: &f64| (e, e.sqrt())).collect();
        let rep = probe_h2bar(&spec, &domain, &sched, 2000, H2Params::default(), 11).unwrap();
        assert!(!rep.pass, "{rep:?}");
    }
}
