//! Coefficient functions described by named presets in config files.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

fn zero() -> f64 {
    0.0
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

fn is_zero_usize(v: &usize) -> bool {
    *v == 0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarFn {
    Const {
        value: f64,
    },
    /// `value + slope · x`
    Affine {
        value: f64,
        slope: Vec<f64>,
    },
    /// `offset + amplitude * cos(pi k·x + phase)`
    Cos {
        amplitude: f64,
        wavenumber: Vec<f64>,
        #[serde(default = "zero", skip_serializing_if = "is_zero")]
        phase: f64,
        #[serde(default = "zero", skip_serializing_if = "is_zero")]
        offset: f64,
    },
    /// `offset + amplitude * sin(pi k·x + phase)`
    Sin {
        amplitude: f64,
        wavenumber: Vec<f64>,
        #[serde(default = "zero", skip_serializing_if = "is_zero")]
        phase: f64,
        #[serde(default = "zero", skip_serializing_if = "is_zero")]
        offset: f64,
    },
    /// `left` for `x[axis] < at`, `right` otherwise.
    Step {
        left: f64,
        right: f64,
        at: f64,
        #[serde(default, skip_serializing_if = "is_zero_usize")]
        axis: usize,
    },
    /// `offset + amplitude * |x[axis] - center|^exponent`
    Power {
        #[serde(default = "zero", skip_serializing_if = "is_zero")]
        offset: f64,
        amplitude: f64,
        center: f64,
        exponent: f64,
        #[serde(default, skip_serializing_if = "is_zero_usize")]
        axis: usize,
    },
    /// Multilinear interpolation of node values on a tensor grid spanning
    /// `[lower, upper]`; `values` is row-major with the last axis fastest.
    Table {
        lower: Vec<f64>,
        upper: Vec<f64>,
        shape: Vec<usize>,
        values: Vec<f64>,
    },
    Sum {
        terms: Vec<ScalarFn>,
    },
}

impl ScalarFn {
    pub fn constant(value: f64) -> Self {
        ScalarFn::Const { value }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match self {
            ScalarFn::Const { value } if !value.is_finite() => bad(format!("non-finite constant {value}")),
            ScalarFn::Affine { slope, .. } if slope.len() != dim => {
                bad(format!("affine slope has {} entries, expected {dim}", slope.len()))
            }
            ScalarFn::Cos { wavenumber, .. } | ScalarFn::Sin { wavenumber, .. } if wavenumber.len() != dim => {
                bad(format!("wavenumber has {} entries, expected {dim}", wavenumber.len()))
            }
            ScalarFn::Step { axis, .. } | ScalarFn::Power { axis, .. } if *axis >= dim => {
                bad(format!("axis {axis} out of range for dimension {dim}"))
            }
            ScalarFn::Power { exponent, .. } if !(*exponent > 0.0) => bad(format!("exponent {exponent} must be positive")),
            ScalarFn::Table { lower, upper, shape, values } => {
                if lower.len() != dim || upper.len() != dim || shape.len() != dim {
                    return bad(format!("table axes must have {dim} entries"));
                }
                if shape.iter().any(|&s| s < 2) || lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
                    return bad("table needs at least two nodes per axis and lower < upper".into());
                }
                if values.len() != shape.iter().product::<usize>() {
                    return bad(format!("table has {} values for shape {shape:?}", values.len()));
                }
                Ok(())
            }
            ScalarFn::Sum { terms } => terms.iter().try_for_each(|t| t.validate(dim)),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &Vector) -> f64 {
        match self {
            ScalarFn::Const { value } => *value,
            ScalarFn::Affine { value, slope } => value + Vector::from_slice(slope).dot(x),
            ScalarFn::Cos { amplitude, wavenumber, phase, offset } => {
                offset + amplitude * (std::f64::consts::PI * Vector::from_slice(wavenumber).dot(x) + phase).cos()
            }
            ScalarFn::Sin { amplitude, wavenumber, phase, offset } => {
                offset + amplitude * (std::f64::consts::PI * Vector::from_slice(wavenumber).dot(x) + phase).sin()
            }
            ScalarFn::Step { left, right, at, axis } => {
                if x[*axis] < *at {
                    *left
                } else {
                    *right
                }
            }
            ScalarFn::Power { offset, amplitude, center, exponent, axis } => {
                offset + amplitude * (x[*axis] - center).abs().powf(*exponent)
            }
            ScalarFn::Table { lower, upper, shape, values } => multilinear(lower, upper, shape, values, x),
            ScalarFn::Sum { terms } => terms.iter().map(|t| t.eval(x)).sum(),
        }
    }

    /// `self + s`, folding into constants where possible.
    pub fn plus(&self, s: f64) -> Self {
        match self {
            ScalarFn::Const { value } => ScalarFn::Const { value: value + s },
            ScalarFn::Affine { value, slope } => ScalarFn::Affine { value: value + s, slope: slope.clone() },
            _ if s == 0.0 => self.clone(),
            _ => ScalarFn::Sum { terms: vec![self.clone(), ScalarFn::constant(s)] },
        }
    }
}

fn multilinear(lower: &[f64], upper: &[f64], shape: &[usize], values: &[f64], x: &Vector) -> f64 {
    let dim = shape.len();
    let mut base = [0usize; 2];
    let mut frac = [0.0; 2];
    for k in 0..dim {
        let cells = shape[k] - 1;
        let t = ((x[k] - lower[k]) / (upper[k] - lower[k])).clamp(0.0, 1.0) * cells as f64;
        let i = (t.floor() as usize).min(cells - 1);
        base[k] = i;
        frac[k] = t - i as f64;
    }
    let mut acc = 0.0;
    for corner in 0..(1usize << dim) {
        let mut w = 1.0;
        let mut idx = 0;
        for k in 0..dim {
            let bit = (corner >> k) & 1;
            w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
            idx = idx * shape[k] + base[k] + bit;
        }
        acc += w * values[idx];
    }
    acc
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorFn {
    Const(Vec<f64>),
    Components(Vec<ScalarFn>),
}

impl VectorFn {
    pub fn constant(v: &[f64]) -> Self {
        VectorFn::Const(v.to_vec())
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            VectorFn::Const(v) if v.len() != dim || v.iter().any(|c| !c.is_finite()) => {
                Err(Error::Config(format!("vector {v:?} must have {dim} finite entries")))
            }
            VectorFn::Components(c) if c.len() != dim => {
                Err(Error::Config(format!("vector function has {} components, expected {dim}", c.len())))
            }
            VectorFn::Components(c) => c.iter().try_for_each(|f| f.validate(dim)),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &Vector) -> Vector {
        match self {
            VectorFn::Const(v) => Vector::from_slice(v),
            VectorFn::Components(c) => {
                let vals: Vec<f64> = c.iter().map(|f| f.eval(x)).collect();
                Vector::from_slice(&vals)
            }
        }
    }

    pub fn plus(&self, s: &[f64]) -> Self {
        match self {
            VectorFn::Const(v) => VectorFn::Const(v.iter().zip(s).map(|(a, b)| a + b).collect()),
            VectorFn::Components(c) => VectorFn::Components(c.iter().zip(s).map(|(f, b)| f.plus(*b)).collect()),
        }
    }
}

/// Square matrix function; a single scalar preset means `s(x) I`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixFn {
    Scalar(ScalarFn),
    Const(Vec<Vec<f64>>),
    Entries(Vec<Vec<ScalarFn>>),
}

impl MatrixFn {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let shape_ok = |rows: usize, cols: Vec<usize>| rows == dim && cols.iter().all(|&c| c == dim);
        match self {
            MatrixFn::Scalar(f) => f.validate(dim),
            MatrixFn::Const(m) => {
                if shape_ok(m.len(), m.iter().map(|r| r.len()).collect()) && m.iter().flatten().all(|v| v.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::Config(format!("matrix must be {dim}x{dim} with finite entries")))
                }
            }
            MatrixFn::Entries(m) => {
                if !shape_ok(m.len(), m.iter().map(|r| r.len()).collect()) {
                    return Err(Error::Config(format!("matrix function must be {dim}x{dim}")));
                }
                m.iter().flatten().try_for_each(|f| f.validate(dim))
            }
        }
    }

    pub fn eval(&self, x: &Vector) -> Matrix {
        let dim = x.dim();
        match self {
            MatrixFn::Scalar(f) => Matrix::scaled_identity(dim, f.eval(x)),
            MatrixFn::Const(m) => {
                let rows: Vec<&[f64]> = m.iter().map(|r| r.as_slice()).collect();
                Matrix::from_rows(&rows)
            }
            MatrixFn::Entries(m) => {
                let mut out = Matrix::zeros(dim);
                for (i, row) in m.iter().enumerate() {
                    for (j, f) in row.iter().enumerate() {
                        out.set(i, j, f.eval(x));
                    }
                }
                out
            }
        }
    }

    /// `self + s I`.
    pub fn plus_identity(&self, s: f64) -> Self {
        match self {
            MatrixFn::Scalar(f) => MatrixFn::Scalar(f.plus(s)),
            MatrixFn::Const(m) => MatrixFn::Const(
                m.iter()
                    .enumerate()
                    .map(|(i, r)| r.iter().enumerate().map(|(j, v)| if i == j { v + s } else { *v }).collect())
                    .collect(),
            ),
            MatrixFn::Entries(m) => MatrixFn::Entries(
                m.iter()
                    .enumerate()
                    .map(|(i, r)| r.iter().enumerate().map(|(j, f)| if i == j { f.plus(s) } else { f.clone() }).collect())
                    .collect(),
            ),
        }
    }
}
