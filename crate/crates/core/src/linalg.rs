//! Fixed-capacity vectors and matrices for dimensions one and two, plus a
//! banded LU factorization used by the finite-difference solver.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use crate::error::{Error, Result};

/// Largest spatial dimension handled by the crate.
pub const MAX_DIM: usize = 2;

/// A point or vector in R^1 or R^2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vector {
    dim: usize,
    c: [f64; MAX_DIM],
}

impl Vector {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} unsupported");
        Self { dim, c: [0.0; MAX_DIM] }
    }

    pub fn new1(x: f64) -> Self {
        Self { dim: 1, c: [x, 0.0] }
    }

    pub fn new2(x: f64, y: f64) -> Self {
        Self { dim: 2, c: [x, y] }
    }

    pub fn from_slice(s: &[f64]) -> Self {
        let mut v = Self::zeros(s.len());
        v.c[..s.len()].copy_from_slice(s);
        v
    }

    /// Unit vector along `axis`.
    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.c[axis] = 1.0;
        v
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.c[..self.dim]
    }

    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        self.as_slice().iter().zip(other.as_slice()).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|v| v.is_finite())
    }

    /// Rotation by +90 degrees in 2D; zero in 1D.
    pub fn perp(&self) -> Self {
        match self.dim {
            2 => Self::new2(-self.c[1], self.c[0]),
            _ => Self::zeros(self.dim),
        }
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.as_slice()[i]
    }
}

impl IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.c[..self.dim][i]
    }
}

impl Add for Vector {
    type Output = Vector;
    fn add(mut self, rhs: Vector) -> Vector {
        self += rhs;
        self
    }
}

impl AddAssign for Vector {
    fn add_assign(&mut self, rhs: Vector) {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..self.dim {
            self.c[i] += rhs.c[i];
        }
    }
}

impl Sub for Vector {
    type Output = Vector;
    fn sub(mut self, rhs: Vector) -> Vector {
        self -= rhs;
        self
    }
}

impl SubAssign for Vector {
    fn sub_assign(&mut self, rhs: Vector) {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..self.dim {
            self.c[i] -= rhs.c[i];
        }
    }
}

impl Neg for Vector {
    type Output = Vector;
    fn neg(self) -> Vector {
        self * -1.0
    }
}

impl Mul<f64> for Vector {
    type Output = Vector;
    fn mul(mut self, s: f64) -> Vector {
        for i in 0..self.dim {
            self.c[i] *= s;
        }
        self
    }
}

impl Mul<Vector> for f64 {
    type Output = Vector;
    fn mul(self, v: Vector) -> Vector {
        v * self
    }
}

/// Square matrix of size one or two.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matrix {
    dim: usize,
    m: [[f64; MAX_DIM]; MAX_DIM],
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} unsupported");
        Self { dim, m: [[0.0; MAX_DIM]; MAX_DIM] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        let mut a = Self::zeros(dim);
        for i in 0..dim {
            a.m[i][i] = s;
        }
        a
    }

    pub fn scalar(s: f64) -> Self {
        Self::scaled_identity(1, s)
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let dim = rows.len();
        let mut a = Self::zeros(dim);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), dim, "matrix must be square");
            a.m[i][..dim].copy_from_slice(r);
        }
        a
    }

    pub fn outer(u: &Vector, v: &Vector) -> Self {
        let mut a = Self::zeros(u.dim());
        for i in 0..u.dim() {
            for j in 0..v.dim() {
                a.m[i][j] = u[i] * v[j];
            }
        }
        a
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.dim && j < self.dim);
        self.m[i][j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(i < self.dim && j < self.dim);
        self.m[i][j] = v;
    }

    pub fn transpose(&self) -> Self {
        let mut t = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                t.m[i][j] = self.m[j][i];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let mut r = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                r.m[i][j] = (0..self.dim).map(|k| self.m[i][k] * other.m[k][j]).sum();
            }
        }
        r
    }

    pub fn mul_vec(&self, v: &Vector) -> Vector {
        let mut r = Vector::zeros(self.dim);
        for i in 0..self.dim {
            r[i] = (0..self.dim).map(|k| self.m[i][k] * v[k]).sum();
        }
        r
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.m[i][i]).sum()
    }

    /// tr(self * other)
    pub fn trace_product(&self, other: &Self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for k in 0..self.dim {
                s += self.m[i][k] * other.m[k][i];
            }
        }
        s
    }

    /// Euclidean (Frobenius) norm.
    pub fn norm(&self) -> f64 {
        self.trace_product(&self.transpose()).sqrt()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.dim).all(|i| (0..i).all(|j| (self.m[i][j] - self.m[j][i]).abs() <= tol))
    }

    pub fn is_finite(&self) -> bool {
        (0..self.dim).all(|i| (0..self.dim).all(|j| self.m[i][j].is_finite()))
    }

    /// Smallest eigenvalue of a symmetric matrix.
    pub fn min_eigenvalue_sym(&self) -> f64 {
        match self.dim {
            1 => self.m[0][0],
            _ => {
                let (a, b, c) = (self.m[0][0], 0.5 * (self.m[0][1] + self.m[1][0]), self.m[1][1]);
                let mean = 0.5 * (a + c);
                let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
                mean - rad
            }
        }
    }
}

impl Add for Matrix {
    type Output = Matrix;
    fn add(mut self, rhs: Matrix) -> Matrix {
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.m[i][j] += rhs.m[i][j];
            }
        }
        self
    }
}

impl Sub for Matrix {
    type Output = Matrix;
    fn sub(self, rhs: Matrix) -> Matrix {
        self + rhs * -1.0
    }
}

impl Mul<f64> for Matrix {
    type Output = Matrix;
    fn mul(mut self, s: f64) -> Matrix {
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.m[i][j] *= s;
            }
        }
        self
    }
}

/// Square matrix stored by diagonals, `lower` sub- and `upper` super-diagonals.
///
/// Factorized in place without pivoting; callers only hand in M-matrices
/// (nonpositive off-diagonals, strictly dominant diagonal), for which
/// elimination without pivoting is stable.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    lower: usize,
    upper: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn new(n: usize, lower: usize, upper: usize) -> Self {
        let lower = lower.min(n.saturating_sub(1));
        let upper = upper.min(n.saturating_sub(1));
        let width = lower + upper + 1;
        Self { n, lower, upper, width, data: vec![0.0; n * width] }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if j + self.lower < i || j > i + self.upper {
            None
        } else {
            Some(i * self.width + (j + self.lower - i))
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |k| self.data[k])
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        match self.slot(i, j) {
            Some(k) => {
                self.data[k] += v;
                Ok(())
            }
            None => Err(Error::Argument(format!("entry ({i},{j}) outside band"))),
        }
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.lower);
                let hi = (i + self.upper).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// Solves A x = b, consuming the matrix.
    pub fn solve(mut self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        assert_eq!(b.len(), n);
        for k in 0..n {
            let pivot = self.get(k, k);
            if pivot.abs() < f64::MIN_POSITIVE || !pivot.is_finite() {
                return Err(Error::Argument(format!("zero pivot at row {k}")));
            }
            let imax = (k + self.lower).min(n - 1);
            let jmax = (k + self.upper).min(n - 1);
            for i in k + 1..=imax {
                let ik = self.slot(i, k).expect("in band");
                let factor = self.data[ik] / pivot;
                if factor == 0.0 {
                    continue;
                }
                self.data[ik] = factor;
                for j in k + 1..=jmax {
                    let kj = self.get(k, j);
                    if kj != 0.0 {
                        let ij = self.slot(i, j).expect("fill stays in band");
                        self.data[ij] -= factor * kj;
                    }
                }
            }
        }
        let mut x = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(self.lower);
            let s: f64 = (lo..i).map(|j| self.get(i, j) * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let hi = (i + self.upper).min(n - 1);
            let s: f64 = (i + 1..=hi).map(|j| self.get(i, j) * x[j]).sum();
            x[i] = (x[i] - s) / self.get(i, i);
        }
        Ok(x)
    }
}
