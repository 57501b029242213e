//! Monotone finite differences for `F(x, u, Du, D²u) = μ Δu` with
//! Neumann-type boundary conditions, solved by policy iteration.
//!
//! Interior rows use the Kushner–Dupuis stencil for the diffusion and
//! upwinded first differences for the drift. At a boundary node the same
//! stencil is used with every point outside the grid eliminated as
//! `u_ghost = u_mirror + 2 h_n C(x_b, p_τ)`, where `C` is the normal shift of
//! the boundary condition and `p_τ` the tangential slope, upwinded by the sign
//! of `∂C/∂p_τ`. Every row therefore reads
//! `Σ_m w_m (u_k - u_m) + c u_k - f` with `w_m ≥ 0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::BoundaryOp;
use crate::error::{Error, Result};
use crate::geometry::{Domain, Grid};
use crate::linalg::{BandMatrix, Vector};
use crate::operators::{inf_sup, OperatorSpec, PointCoefficients};

/// How boundary nodes are discretized.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// The equation with ghost points eliminated through the boundary condition.
    #[default]
    Strong,
    /// Pointwise minimum of the strong row and a first-order boundary row.
    Weak,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SolveParams {
    pub tol: f64,
    pub max_policy_iters: usize,
    /// Bound on the scaled residual of each linear solve.
    pub linear_tol: f64,
    /// Relaxation of the outer loop for nonlinear boundary conditions.
    pub damping: f64,
    pub max_outer_iters: usize,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self { tol: 1e-10, max_policy_iters: 200, linear_tol: 1e-12, damping: 0.5, max_outer_iters: 200 }
    }
}

impl SolveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.linear_tol > 0.0) {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config(format!("damping {} outside (0, 1]", self.damping)));
        }
        if self.max_policy_iters == 0 || self.max_outer_iters == 0 {
            return Err(Error::Config("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

/// A discrete row `diag u_k + Σ off_m u_m - rhs`, with `off_m ≤ 0`.
#[derive(Clone, Debug, Default)]
struct Row {
    diag: f64,
    off: Vec<(usize, f64)>,
    rhs: f64,
}

impl Row {
    fn link(&mut self, m: usize, w: f64) {
        self.diag += w;
        self.off.push((m, -w));
    }

    fn value(&self, k: usize, u: &[f64]) -> f64 {
        self.diag * u[k] + self.off.iter().map(|(m, v)| v * u[*m]).sum::<f64>() - self.rhs
    }
}

/// Linearized boundary data `C ≈ c0 + κ (p̂ - p0)` at one boundary node;
/// `dir` is +1 (forward tangential difference), -1 (backward) or 0 (frozen).
#[derive(Clone, Copy, Debug, PartialEq)]
struct BoundaryLin {
    c0: f64,
    kappa: f64,
    p0: f64,
    dir: i8,
}

/// Which row is active at a node: an equation control pair, or the boundary
/// row in weak mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Choice {
    Control(usize, usize),
    BoundaryRow,
}

#[derive(Clone, Debug)]
pub struct Discretization {
    grid: Grid,
    operator: OperatorSpec,
    boundary: BoundaryOp,
    mu: f64,
    mode: BoundaryMode,
    /// Node-major, control pair `i * n2 + j`.
    coeffs: Vec<Vec<PointCoefficients>>,
    /// Interior rows per node and control (empty for boundary nodes).
    interior: Vec<Vec<Row>>,
}

impl Discretization {
    pub fn new(grid: Grid, operator: OperatorSpec, boundary: BoundaryOp, mu: f64, mode: BoundaryMode) -> Result<Self> {
        let domain = *grid.domain();
        if !domain.solver_capable() {
            return Err(Error::Domain(format!("{domain:?} has no finite-difference discretization")));
        }
        if *boundary.domain() != domain {
            return Err(Error::Argument("boundary condition and grid live on different domains".into()));
        }
        operator.validate(domain.dim())?;
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::Argument(format!("viscosity {mu} must be nonnegative")));
        }
        let coeffs: Vec<Vec<PointCoefficients>> = grid
            .nodes()
            .par_iter()
            .map(|x| operator.coefficients(x).into_iter().flatten().collect())
            .collect();
        for (k, cs) in coeffs.iter().enumerate() {
            for pc in cs {
                if !(pc.c > 0.0) {
                    return Err(Error::Assumption(format!(
                        "c = {} at node {k} {:?}; the scheme needs c > 0",
                        pc.c,
                        grid.node(k).as_slice()
                    )));
                }
            }
        }
        let mut disc = Self { grid, operator, boundary, mu, mode, coeffs, interior: Vec::new() };
        let interior: Result<Vec<Vec<Row>>> = (0..disc.grid.len())
            .into_par_iter()
            .map(|k| {
                if disc.grid.is_boundary(k) {
                    return Ok(Vec::new());
                }
                (0..disc.coeffs[k].len()).map(|c| disc.equation_row(k, c, None)).collect()
            })
            .collect();
        disc.interior = interior?;
        Ok(disc)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn operator(&self) -> &OperatorSpec {
        &self.operator
    }

    pub fn boundary(&self) -> &BoundaryOp {
        &self.boundary
    }

    pub fn viscosity(&self) -> f64 {
        self.mu
    }

    pub fn mode(&self) -> BoundaryMode {
        self.mode
    }

    /// Same discretization with another viscosity.
    pub fn with_viscosity(&self, mu: f64) -> Result<Self> {
        Self::new(self.grid.clone(), self.operator.clone(), self.boundary.clone(), mu, self.mode)
    }

    fn shape(&self) -> (usize, usize) {
        self.operator.shape()
    }

    fn normal_spacing(&self) -> f64 {
        *self.grid.spacing().last().expect("nonempty spacing")
    }

    /// Neighbor of node `k` at offset `(di, dj)`: `Ok(m)` on the grid, or
    /// `Err(mirror)` for a ghost point reflected across the boundary.
    fn neighbor(&self, k: usize, di: i64, dj: i64) -> std::result::Result<usize, usize> {
        match self.grid.domain() {
            Domain::Interval { .. } => {
                let n = self.grid.cells()[0] as i64;
                let t = k as i64 + di;
                if t < 0 || t > n {
                    Err((k as i64 - di) as usize)
                } else {
                    Ok(t as usize)
                }
            }
            _ => {
                let nx = self.grid.cells()[0] as i64;
                let ny = self.grid.cells()[1] as i64;
                let (i, j) = self.grid.ij(k);
                let ii = (i as i64 + di).rem_euclid(nx) as usize;
                let jj = j as i64 + dj;
                if jj < 0 || jj > ny {
                    Err(self.grid.index(ii, (j as i64 - dj) as usize))
                } else {
                    Ok(self.grid.index(ii, jj as usize))
                }
            }
        }
    }

    /// Tangential neighbors `(forward, backward)` of a boundary node.
    fn tangential(&self, k: usize) -> Option<(usize, usize)> {
        match self.grid.domain() {
            Domain::Interval { .. } => None,
            _ => {
                let nx = self.grid.cells()[0];
                let (i, j) = self.grid.ij(k);
                Some((self.grid.index((i + 1) % nx, j), self.grid.index((i + nx - 1) % nx, j)))
            }
        }
    }

    /// Weighted stencil terms `(di, dj, w)` of control `c` at node `k`.
    fn stencil(&self, k: usize, c: usize) -> Result<(Vec<(i64, i64, f64)>, f64, f64)> {
        let pc = &self.coeffs[k][c];
        let sp = self.grid.spacing();
        let scheme_err = |detail: String| Error::Scheme { node: k, detail };
        let mut terms = Vec::new();
        if sp.len() == 1 {
            let h = sp[0];
            let a = pc.a.get(0, 0) + self.mu;
            if a < 0.0 {
                return Err(scheme_err(format!("negative diffusion {a}")));
            }
            terms.push((1, 0, a / (h * h)));
            terms.push((-1, 0, a / (h * h)));
            let b = pc.b[0];
            if b > 0.0 {
                terms.push((1, 0, b / h));
            } else if b < 0.0 {
                terms.push((-1, 0, -b / h));
            }
        } else {
            let (h1, h2) = (sp[0], sp[1]);
            let a11 = pc.a.get(0, 0) + self.mu;
            let a22 = pc.a.get(1, 1) + self.mu;
            let a12 = 0.5 * (pc.a.get(0, 1) + pc.a.get(1, 0));
            if a12 != 0.0 && (h1 - h2).abs() > 1e-12 * h1.max(h2) {
                return Err(scheme_err("cross diffusion needs equal spacings".into()));
            }
            let w1 = a11 - a12.abs();
            let w2 = a22 - a12.abs();
            let floor = -1e-14 * (a11.abs() + a22.abs());
            if w1 < floor || w2 < floor {
                return Err(scheme_err(format!(
                    "diffusion is not diagonally dominant (a11 = {a11}, a22 = {a22}, a12 = {a12})"
                )));
            }
            for s in [-1, 1] {
                terms.push((s, 0, w1.max(0.0) / (h1 * h1)));
                terms.push((0, s, w2.max(0.0) / (h2 * h2)));
                terms.push((s, s, a12.max(0.0) / (h1 * h2)));
                terms.push((s, -s, (-a12).max(0.0) / (h1 * h2)));
            }
            for (axis, h) in [(0usize, h1), (1, h2)] {
                let b = pc.b[axis];
                let (di, dj) = if axis == 0 { (1, 0) } else { (0, 1) };
                if b > 0.0 {
                    terms.push((di, dj, b / h));
                } else if b < 0.0 {
                    terms.push((-di, -dj, -b / h));
                }
            }
        }
        terms.retain(|t| t.2 != 0.0);
        Ok((terms, pc.c, pc.f))
    }

    /// Equation row of control `c` at node `k`; `lin` is required at
    /// boundary nodes.
    fn equation_row(&self, k: usize, c: usize, lin: Option<&BoundaryLin>) -> Result<Row> {
        let (terms, cc, f) = self.stencil(k, c)?;
        let mut row = Row { diag: cc, off: Vec::with_capacity(terms.len() + 2), rhs: f };
        let hn = self.normal_spacing();
        for (di, dj, w) in terms {
            match self.neighbor(k, di, dj) {
                Ok(m) => row.link(m, w),
                Err(mirror) => {
                    let lin = lin.ok_or_else(|| Error::Scheme { node: k, detail: "ghost point without boundary data".into() })?;
                    row.link(mirror, w);
                    row.rhs += 2.0 * hn * w * (lin.c0 - lin.kappa * lin.p0);
                    self.link_tangential(&mut row, k, lin, 2.0 * hn * w)?;
                }
            }
        }
        Ok(row)
    }

    /// Adds `-scale κ p̂(u)` to the row, with `p̂` the upwinded tangential difference.
    fn link_tangential(&self, row: &mut Row, k: usize, lin: &BoundaryLin, scale: f64) -> Result<()> {
        if lin.dir == 0 || lin.kappa == 0.0 {
            return Ok(());
        }
        let (fwd, bwd) = self.tangential(k).ok_or_else(|| Error::Scheme { node: k, detail: "no tangent".into() })?;
        let h1 = self.grid.spacing()[0];
        let w = scale * lin.kappa.abs() / h1;
        if (lin.dir > 0) != (lin.kappa > 0.0) {
            return Err(Error::Scheme { node: k, detail: "tangential difference against the upwind direction".into() });
        }
        row.link(if lin.dir > 0 { fwd } else { bwd }, w);
        Ok(())
    }

    /// First-order boundary row `∂_n u - C(x_b, p_τ)` for the weak mode.
    fn boundary_row(&self, k: usize, lin: &BoundaryLin) -> Result<Row> {
        let hn = self.normal_spacing();
        let inward = match self.neighbor(k, 0, 0) {
            Ok(_) => self.inward_neighbor(k),
            Err(_) => unreachable!(),
        };
        let mut row = Row { diag: 0.0, off: Vec::with_capacity(2), rhs: lin.c0 - lin.kappa * lin.p0 };
        row.link(inward, 1.0 / hn);
        self.link_tangential(&mut row, k, lin, 1.0)?;
        Ok(row)
    }

    fn inward_neighbor(&self, k: usize) -> usize {
        match self.grid.domain() {
            Domain::Interval { .. } => {
                if k == 0 {
                    1
                } else {
                    k - 1
                }
            }
            _ => {
                let (i, j) = self.grid.ij(k);
                self.grid.index(i, if j == 0 { 1 } else { j - 1 })
            }
        }
    }

    /// Normal shift at a boundary node for tangential slope `q`.
    fn shift_at(&self, k: usize, q: f64) -> Result<f64> {
        let x = self.grid.node(k);
        let p = if x.dim() == 1 { Vector::zeros(1) } else { Vector::new2(q, 0.0) };
        match self.boundary.closed_form_shift(&x, &p)? {
            Some(c) => Ok(c),
            None => self.boundary.normal_shift(&x, &p),
        }
    }

    fn shift_slope(&self, k: usize, q: f64) -> Result<f64> {
        let d = 1e-6 * (1.0 + q.abs());
        Ok((self.shift_at(k, q + d)? - self.shift_at(k, q - d)?) / (2.0 * d))
    }

    /// Linearizes the boundary condition at `u` for every boundary node.
    fn linearize(&self, u: &[f64]) -> Result<Vec<BoundaryLin>> {
        self.grid
            .boundary_indices()
            .par_iter()
            .map(|&k| {
                let Some((fwd, bwd)) = self.tangential(k) else {
                    return Ok(BoundaryLin { c0: self.shift_at(k, 0.0)?, kappa: 0.0, p0: 0.0, dir: 0 });
                };
                let h1 = self.grid.spacing()[0];
                let pf = (u[fwd] - u[k]) / h1;
                let pb = (u[k] - u[bwd]) / h1;
                let kf = self.shift_slope(k, pf)?;
                if kf > 0.0 {
                    return Ok(BoundaryLin { c0: self.shift_at(k, pf)?, kappa: kf, p0: pf, dir: 1 });
                }
                let kb = self.shift_slope(k, pb)?;
                if kb < 0.0 {
                    return Ok(BoundaryLin { c0: self.shift_at(k, pb)?, kappa: kb, p0: pb, dir: -1 });
                }
                Ok(BoundaryLin { c0: self.shift_at(k, 0.5 * (pf + pb))?, kappa: 0.0, p0: 0.0, dir: 0 })
            })
            .collect()
    }

    /// All candidate rows at every node for the given boundary linearization.
    fn rows(&self, lin: &[BoundaryLin]) -> Result<Vec<NodeRows>> {
        let mut slot = vec![usize::MAX; self.grid.len()];
        for (s, &k) in self.grid.boundary_indices().iter().enumerate() {
            slot[k] = s;
        }
        (0..self.grid.len())
            .into_par_iter()
            .map(|k| {
                if slot[k] == usize::MAX {
                    return Ok(NodeRows { equation: self.interior[k].clone(), boundary: None });
                }
                let l = &lin[slot[k]];
                let equation = (0..self.coeffs[k].len()).map(|c| self.equation_row(k, c, Some(l))).collect::<Result<_>>()?;
                let boundary = match self.mode {
                    BoundaryMode::Strong => None,
                    BoundaryMode::Weak => Some(self.boundary_row(k, l)?),
                };
                Ok(NodeRows { equation, boundary })
            })
            .collect()
    }

    /// Checks the sign condition of every candidate row at `u` (the boundary
    /// linearization depends on `u` in two dimensions).
    pub fn check_monotone(&self, u: &[f64]) -> Result<()> {
        let rows = self.rows(&self.linearize(u)?)?;
        for (k, nr) in rows.iter().enumerate() {
            for row in nr.equation.iter().chain(nr.boundary.iter()) {
                if row.off.iter().any(|(_, v)| *v > 0.0) || row.diag < 0.0 {
                    return Err(Error::Scheme { node: k, detail: "positive off-diagonal weight".into() });
                }
            }
        }
        Ok(())
    }

    fn band(&self) -> usize {
        match self.grid.domain() {
            Domain::Interval { .. } => 1,
            _ => (2 * self.grid.cells()[0]).saturating_sub(1).max(1),
        }
    }

    fn solve_policy(&self, rows: &[NodeRows], policy: &[Choice], params: &SolveParams) -> Result<Vec<f64>> {
        let n = self.grid.len();
        let band = self.band();
        let mut mat = BandMatrix::new(n, band, band);
        let mut rhs = vec![0.0; n];
        for k in 0..n {
            let row = rows[k].pick(policy[k], self.shape());
            mat.add(k, k, row.diag)?;
            for &(m, v) in &row.off {
                mat.add(k, m, v)?;
            }
            rhs[k] = row.rhs;
        }
        let check = mat.clone();
        let mut u = mat.clone().solve(&rhs)?;
        for _ in 0..2 {
            let au = check.mul_vec(&u);
            let r: Vec<f64> = au.iter().zip(&rhs).map(|(a, b)| b - a).collect();
            let scaled = (0..n).map(|k| (r[k] / check.get(k, k)).abs()).fold(0.0, f64::max);
            if scaled <= params.linear_tol * (1.0 + u.iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
                return Ok(u);
            }
            let du = mat.clone().solve(&r)?;
            for (ui, di) in u.iter_mut().zip(&du) {
                *ui += di;
            }
        }
        Err(Error::Nonconvergence { residuals: vec![f64::NAN] })
    }

    /// Nested policy iteration: outer improvement of the minimizing control,
    /// inner Howard iteration for the maximizing control.
    fn solve_frozen(&self, rows: &[NodeRows], u0: &[f64], params: &SolveParams, solves: &mut usize) -> Result<Vec<f64>> {
        let shape = self.shape();
        let n = self.grid.len();
        let mut u = u0.to_vec();
        let mut first: Vec<Choice> = (0..n).map(|k| rows[k].best(k, &u, shape).1).collect();
        for _ in 0..params.max_policy_iters {
            let mut policy: Vec<Choice> = (0..n).map(|k| rows[k].best_response(k, &u, shape, first[k])).collect();
            let mut inner_done = false;
            for _ in 0..params.max_policy_iters {
                u = self.solve_policy(rows, &policy, params)?;
                *solves += 1;
                let next: Vec<Choice> = (0..n).map(|k| rows[k].best_response(k, &u, shape, first[k])).collect();
                if next == policy {
                    inner_done = true;
                    break;
                }
                policy = next;
            }
            if !inner_done {
                return Err(Error::Nonconvergence { residuals: vec![self.residual_with(rows, &u)] });
            }
            let next_first: Vec<Choice> = (0..n).map(|k| rows[k].best(k, &u, shape).1).collect();
            if next_first == first {
                return Ok(u);
            }
            first = next_first;
        }
        Err(Error::Nonconvergence { residuals: vec![self.residual_with(rows, &u)] })
    }

    fn residual_with(&self, rows: &[NodeRows], u: &[f64]) -> f64 {
        let shape = self.shape();
        (0..u.len())
            .map(|k| {
                let (v, choice) = rows[k].best(k, u, shape);
                (v / rows[k].pick(choice, shape).diag).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Residual of the discrete equations at `u`, each row divided by its
    /// diagonal entry.
    pub fn residual(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.grid.len() {
            return Err(Error::Argument("field does not match the grid".into()));
        }
        let rows = self.rows(&self.linearize(u)?)?;
        Ok(self.residual_with(&rows, u))
    }

    /// Value of the discrete equation at every node for the grid function `u`.
    pub fn scheme(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.grid.len() {
            return Err(Error::Argument("field does not match the grid".into()));
        }
        let rows = self.rows(&self.linearize(u)?)?;
        let shape = self.shape();
        Ok((0..u.len()).map(|k| rows[k].best(k, u, shape).0).collect())
    }

    pub fn solve(&self, params: &SolveParams) -> Result<SolutionField> {
        self.solve_from(&vec![0.0; self.grid.len()], params)
    }

    pub fn solve_from(&self, guess: &[f64], params: &SolveParams) -> Result<SolutionField> {
        params.validate()?;
        if guess.len() != self.grid.len() {
            return Err(Error::Argument("initial guess does not match the grid".into()));
        }
        let mut u = guess.to_vec();
        let mut history = Vec::new();
        let mut solves = 0;
        let mut current = self.residual(&u)?;
        for outer in 0..params.max_outer_iters {
            let lin = self.linearize(&u)?;
            let rows = self.rows(&lin)?;
            let trial = match self.solve_frozen(&rows, &u, params, &mut solves) {
                Ok(t) => t,
                Err(Error::Nonconvergence { residuals }) => {
                    history.extend(residuals);
                    return Err(Error::Nonconvergence { residuals: history });
                }
                Err(e) => return Err(e),
            };
            let r = self.residual(&trial)?;
            history.push(r);
            if r <= params.tol {
                return Ok(SolutionField {
                    grid: self.grid.clone(),
                    values: trial,
                    residual_norm: r,
                    iterations: solves,
                    outer_iterations: outer + 1,
                    history,
                });
            }
            if r < current {
                u = trial;
                current = r;
            } else {
                for (ui, ti) in u.iter_mut().zip(&trial) {
                    *ui += params.damping * (ti - *ui);
                }
                current = self.residual(&u)?;
            }
        }
        Err(Error::Nonconvergence { residuals: history })
    }
}

/// Candidate rows at one node.
#[derive(Clone, Debug)]
struct NodeRows {
    equation: Vec<Row>,
    boundary: Option<Row>,
}

impl NodeRows {
    fn pick(&self, choice: Choice, shape: (usize, usize)) -> &Row {
        match choice {
            Choice::Control(i, j) => &self.equation[i * shape.1 + j],
            Choice::BoundaryRow => self.boundary.as_ref().expect("boundary row"),
        }
    }

    /// `min(inf sup equation rows, boundary row)` and the attaining choice.
    fn best(&self, k: usize, u: &[f64], shape: (usize, usize)) -> (f64, Choice) {
        let (v, (i, j)) = inf_sup(shape, |i, j| self.equation[i * shape.1 + j].value(k, u));
        match &self.boundary {
            Some(b) => {
                let g = b.value(k, u);
                if g < v {
                    (g, Choice::BoundaryRow)
                } else {
                    (v, Choice::Control(i, j))
                }
            }
            None => (v, Choice::Control(i, j)),
        }
    }

    /// Maximizing second control for the first-player choice `first`.
    fn best_response(&self, k: usize, u: &[f64], shape: (usize, usize), first: Choice) -> Choice {
        match first {
            Choice::BoundaryRow => Choice::BoundaryRow,
            Choice::Control(i, _) => {
                let mut best = (f64::NEG_INFINITY, 0);
                for j in 0..shape.1 {
                    let v = self.equation[i * shape.1 + j].value(k, u);
                    if v > best.0 {
                        best = (v, j);
                    }
                }
                Choice::Control(i, best.1)
            }
        }
    }
}

/// Discrete solution with solver diagnostics.
#[derive(Clone, Debug)]
pub struct SolutionField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub residual_norm: f64,
    /// Linear solves performed.
    pub iterations: usize,
    pub outer_iterations: usize,
    /// Residual after each outer iteration.
    pub history: Vec<f64>,
}

impl SolutionField {
    /// Values at the nodes of `coarse`, which must be a coarsening of this grid
    /// by an integer factor.
    pub fn restrict_to(&self, coarse: &Grid) -> Result<Vec<f64>> {
        if coarse.domain() != self.grid.domain() || coarse.cells().len() != self.grid.cells().len() {
            return Err(Error::Argument("grids differ in domain or dimension".into()));
        }
        let fc = self.grid.cells();
        let cc = coarse.cells();
        if fc[0] % cc[0] != 0 || fc.iter().zip(cc).any(|(f, c)| f % c != 0 || f / c != fc[0] / cc[0]) {
            return Err(Error::Argument("grid is not an integer refinement".into()));
        }
        let r = fc[0] / cc[0];
        Ok((0..coarse.len())
            .map(|k| {
                if cc.len() == 1 {
                    self.values[k * r]
                } else {
                    let (i, j) = coarse.ij(k);
                    self.values[self.grid.index(i * r, j * r)]
                }
            })
            .collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Largest difference `max(a - b)` and `max |a - b|` between fields.
pub fn sup_difference(a: &[f64], b: &[f64]) -> (f64, f64) {
    a.iter().zip(b).fold((f64::NEG_INFINITY, 0.0), |(s, m), (x, y)| (s.max(x - y), m.max((x - y).abs())))
}

/// Solves each `(sub, super)` pair and counts nodes with `u_sub > u_super + 1e-10`.
pub fn discrete_comparison_check(pairs: &[(Discretization, Discretization)], params: &SolveParams) -> Result<usize> {
    let counts: Result<Vec<usize>> = pairs
        .par_iter()
        .map(|(sub, sup)| {
            if sub.grid() != sup.grid() {
                return Err(Error::Argument("comparison pair on different grids".into()));
            }
            let u = sub.solve(params)?;
            let v = sup.solve(params)?;
            Ok(u.values.iter().zip(&v.values).filter(|(a, b)| **a > **b + 1e-10).count())
        })
        .collect();
    Ok(counts?.into_iter().sum())
}

/// Hölder exponent estimate of a grid function.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct HolderEstimate {
    pub beta: f64,
    pub seminorm: f64,
}

/// Fits `log ω(r)` against `log r` on `[4h, diam/4]`, where `ω` is the
/// discrete modulus of continuity; `β` is clamped to `(0, 1]` and the
/// seminorm is taken over node pairs at distance at most `diam/4`.
pub fn holder_estimate(grid: &Grid, values: &[f64]) -> Result<HolderEstimate> {
    if values.len() != grid.len() {
        return Err(Error::Argument("field does not match the grid".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("non-finite field value".into()));
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo == 0.0 {
        return Ok(HolderEstimate { beta: 1.0, seminorm: 0.0 });
    }
    let h = grid.h();
    let r_max = 0.25 * grid.domain().diameter();
    let offsets = offset_moduli(grid, values, r_max);
    let mut radii = Vec::new();
    let (r0, r1) = (4.0 * h, r_max);
    if !(r1 > r0) {
        return Err(Error::Argument("grid too coarse for a Hölder fit".into()));
    }
    let steps = 16;
    for s in 0..=steps {
        radii.push(r0 * (r1 / r0).powf(s as f64 / steps as f64));
    }
    let mut pts = Vec::new();
    for r in &radii {
        let w = offsets.iter().filter(|(d, _)| *d <= r * (1.0 + 1e-12)).map(|(_, m)| *m).fold(0.0, f64::max);
        if w > 0.0 {
            pts.push((r.ln(), w.ln()));
        }
    }
    let beta = if pts.len() < 2 {
        1.0
    } else {
        let (slope, _) = least_squares(&pts);
        slope.clamp(1e-6, 1.0)
    };
    let seminorm = offsets.iter().map(|(d, m)| m / d.powf(beta)).fold(0.0, f64::max);
    Ok(HolderEstimate { beta, seminorm })
}

/// `(distance, max |u(x) - u(y)|)` for each node offset up to `r_max`.
fn offset_moduli(grid: &Grid, values: &[f64], r_max: f64) -> Vec<(f64, f64)> {
    let sp = grid.spacing();
    if sp.len() == 1 {
        let n = values.len();
        let m_max = ((r_max / sp[0]).floor() as usize).min(n - 1);
        return (1..=m_max)
            .into_par_iter()
            .map(|m| {
                let w = (0..n - m).map(|i| (values[i + m] - values[i]).abs()).fold(0.0, f64::max);
                (m as f64 * sp[0], w)
            })
            .collect();
    }
    let (nx, ny) = (grid.cells()[0], grid.cells()[1]);
    let mi = ((r_max / sp[0]).floor() as i64).min(nx as i64 / 2);
    let mj = ((r_max / sp[1]).floor() as i64).min(ny as i64);
    let mut offs = Vec::new();
    for dj in 0..=mj {
        for di in -mi..=mi {
            if dj == 0 && di <= 0 {
                continue;
            }
            let d = ((di as f64 * sp[0]).powi(2) + (dj as f64 * sp[1]).powi(2)).sqrt();
            if d <= r_max {
                offs.push((di, dj, d));
            }
        }
    }
    offs.par_iter()
        .map(|&(di, dj, d)| {
            let mut w: f64 = 0.0;
            for j in 0..=(ny - dj as usize) {
                for i in 0..nx {
                    let ii = (i as i64 + di).rem_euclid(nx as i64) as usize;
                    let a = values[grid.index(i, j)];
                    let b = values[grid.index(ii, j + dj as usize)];
                    w = w.max((a - b).abs());
                }
            }
            (d, w)
        })
        .collect()
}

/// Least-squares line `(slope, intercept)` through the points.
pub fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::BoundarySpec;
    use crate::coeffs::{MatrixFn, ScalarFn, VectorFn};
    use crate::geometry::DistanceField;
    use crate::operators::CoefficientSet;

    fn unit() -> Domain {
        Domain::Interval { a: 0.0, b: 1.0 }
    }

    fn set(a: f64, b: f64, c: f64, f: ScalarFn) -> CoefficientSet {
        CoefficientSet {
            sigma: MatrixFn::Scalar(ScalarFn::constant(a.sqrt())),
            b: VectorFn::constant(&[b]),
            c: ScalarFn::constant(c),
            f,
        }
    }

    fn disc1(op: OperatorSpec, bc: BoundarySpec, n: usize, mu: f64) -> Discretization {
        let field = DistanceField::new(unit()).unwrap();
        let grid = Grid::new(unit(), &[n]).unwrap();
        Discretization::new(grid, op, BoundaryOp::new(bc, field).unwrap(), mu, BoundaryMode::Strong).unwrap()
    }

    #[test]
    fn constant_data_gives_constant_solution() {
        let d = disc1(OperatorSpec::linear(set(1.0, 0.3, 2.0, ScalarFn::constant(3.0))), BoundarySpec::neumann(0.0), 32, 0.0);
        let u = d.solve(&SolveParams::default()).unwrap();
        assert!(u.values.iter().all(|v| (v - 1.5).abs() < 1e-12));
        assert_eq!(u.outer_iterations, 1);
    }

    #[test]
    fn interior_row_is_textbook_stencil() {
        let d = disc1(OperatorSpec::linear(set(1.0, 0.0, 1.0, ScalarFn::constant(0.0))), BoundarySpec::neumann(0.0), 4, 0.0);
        let row = &d.interior[2][0];
        assert!((row.diag - (2.0 * 16.0 + 1.0)).abs() < 1e-12);
        let mut off = row.off.clone();
        off.sort_by(|a, b| a.0.cmp(&b.0));
        assert_eq!(off, vec![(1, -16.0), (3, -16.0)]);
        let d = disc1(OperatorSpec::linear(set(0.0, 1.0, 1.0, ScalarFn::constant(0.0))), BoundarySpec::neumann(0.0), 4, 0.0);
        assert!(d.interior[2][0].off.iter().all(|(_, v)| *v <= 0.0));
        d.check_monotone(&[0.0; 5]).unwrap();
    }

    #[test]
    fn manufactured_second_order() {
        let f = ScalarFn::Cos { amplitude: std::f64::consts::PI.powi(2) + 1.0, wavenumber: vec![1.0], phase: 0.0, offset: 0.0 };
        let mut errs = Vec::new();
        for n in [64, 128, 256] {
            let d = disc1(OperatorSpec::linear(set(1.0, 0.0, 1.0, f.clone())), BoundarySpec::neumann(0.0), n, 0.0);
            let u = d.solve(&SolveParams::default()).unwrap();
            assert!(u.residual_norm <= 1e-10);
            let e = d.grid().nodes().iter().zip(&u.values).map(|(x, v)| (v - (std::f64::consts::PI * x[0]).cos()).abs()).fold(0.0, f64::max);
            errs.push(e);
        }
        for w in errs.windows(2) {
            let r = w[0] / w[1];
            assert!((3.5..=4.5).contains(&r), "{errs:?}");
        }
    }

    #[test]
    fn bellman_matches_value_iteration() {
        let f1 = ScalarFn::Sin { amplitude: 1.0, wavenumber: vec![1.0], phase: 0.0, offset: 0.0 };
        let op = OperatorSpec::bellman(vec![set(0.5, 0.5, 1.0, f1), set(0.2, -0.3, 1.5, ScalarFn::constant(0.5))]).unwrap();
        let d = disc1(op, BoundarySpec::neumann(0.1), 40, 0.0);
        let u = d.solve(&SolveParams::default()).unwrap();
        // explicit fixed point u <- u - S(u)/D with D a common upper bound on the diagonals
        let rows = d.rows(&d.linearize(&u.values).unwrap()).unwrap();
        let dmax = rows.iter().flat_map(|r| r.equation.iter().map(|q| q.diag)).fold(0.0, f64::max);
        let mut v = vec![0.0; u.values.len()];
        for _ in 0..200_000 {
            let next: Vec<f64> = (0..v.len()).map(|k| v[k] - rows[k].best(k, &v, (2, 1)).0 / dmax).collect();
            let delta = sup_difference(&next, &v).1;
            v = next;
            if delta < 1e-14 {
                break;
            }
        }
        assert!(sup_difference(&u.values, &v).1 < 1e-8);
    }

    #[test]
    fn holder_examples() {
        let grid = Grid::new(unit(), &[1024]).unwrap();
        let lin: Vec<f64> = grid.nodes().iter().map(|x| x[0]).collect();
        let e = holder_estimate(&grid, &lin).unwrap();
        assert!((e.beta - 1.0).abs() < 1e-9 && (e.seminorm - 1.0).abs() < 1e-9);
        let sq: Vec<f64> = grid.nodes().iter().map(|x| x[0].sqrt()).collect();
        assert!((holder_estimate(&grid, &sq).unwrap().beta - 0.5).abs() < 0.05);
        let c = vec![2.0; grid.len()];
        assert_eq!(holder_estimate(&grid, &c).unwrap(), HolderEstimate { beta: 1.0, seminorm: 0.0 });
    }

    #[test]
    fn strip_capillary_converges() {
        let dom = Domain::PeriodicStrip { period: 1.0, height: 1.0 };
        let field = DistanceField::new(dom).unwrap();
        let theta = ScalarFn::Cos { amplitude: 0.4, wavenumber: vec![2.0, 0.0], phase: 0.0, offset: 0.0 };
        let bc = BoundarySpec::new(crate::boundary::BoundaryCondition::Capillary { theta });
        let op = OperatorSpec::linear(CoefficientSet {
            sigma: MatrixFn::Scalar(ScalarFn::constant(1.0)),
            b: VectorFn::constant(&[0.0, 0.0]),
            c: ScalarFn::constant(1.0),
            f: ScalarFn::constant(0.0),
        });
        let grid = Grid::new(dom, &[16, 16]).unwrap();
        let d = Discretization::new(grid, op, BoundaryOp::new(bc, field).unwrap(), 0.0, BoundaryMode::Strong).unwrap();
        let u = d.solve(&SolveParams::default()).unwrap();
        assert!(u.residual_norm <= 1e-10);
        assert!(u.max_abs() > 1e-3);
        assert!(u.outer_iterations > 1);
        d.check_monotone(&u.values).unwrap();
    }
}
