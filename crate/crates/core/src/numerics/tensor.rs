//! Dense row-major matrices and vectors over `f64`.

use std::fmt;

use crate::error::{Error, Result};

/// Slope of the negative half-line of the leaky rectifier.
pub const LREL_SLOPE: f64 = 0.1;

#[derive(Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RealMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                op: "matrix",
                left: format!("{}x{}", rows, cols),
                right: format!("{} values", data.len()),
            });
        }
        Ok(RealMatrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        RealMatrix { rows, cols, data }
    }

    /// A `dim x 1` matrix holding the vector's entries.
    pub fn column_vector(v: &RealVector) -> Self {
        RealMatrix {
            rows: v.dim(),
            cols: 1,
            data: v.as_slice().to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> RealVector {
        RealVector::from((0..self.rows).map(|r| self.get(r, c)).collect::<Vec<_>>())
    }

    pub fn set_column(&mut self, c: usize, values: &[f64]) {
        debug_assert_eq!(values.len(), self.rows);
        for (r, &v) in values.iter().enumerate() {
            self.set(r, c, v);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn matvec(&self, x: &[f64]) -> Result<RealVector> {
        if x.len() != self.cols {
            return Err(Error::Dimension {
                op: "matvec",
                left: format!("{}x{}", self.rows, self.cols),
                right: format!("{}", x.len()),
            });
        }
        Ok(RealVector::from(matvec_raw(self, x)))
    }
}

impl fmt::Debug for RealMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RealMatrix({}x{}) ", self.rows, self.cols)?;
        f.debug_list()
            .entries((0..self.rows).map(|r| self.row(r)))
            .finish()
    }
}

pub(crate) fn matvec_raw(m: &RealMatrix, x: &[f64]) -> Vec<f64> {
    m.data
        .chunks_exact(m.cols.max(1))
        .take(m.rows)
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct RealVector {
    data: Vec<f64>,
}

impl RealVector {
    pub fn zeros(dim: usize) -> Self {
        RealVector {
            data: vec![0.0; dim],
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &RealVector) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension {
                op: "dot",
                left: self.dim().to_string(),
                right: other.dim().to_string(),
            });
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    /// Index of the largest entry; ties go to the smallest index.
    pub fn argmax(&self) -> Option<usize> {
        argmax(&self.data)
    }
}

impl From<Vec<f64>> for RealVector {
    fn from(data: Vec<f64>) -> Self {
        RealVector { data }
    }
}

impl From<&[f64]> for RealVector {
    fn from(data: &[f64]) -> Self {
        RealVector {
            data: data.to_vec(),
        }
    }
}

impl std::ops::Index<usize> for RealVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

/// Smallest index of the maximum entry.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if v <= values[b] => {}
            _ => best = Some(i),
        }
    }
    best
}

#[inline]
pub fn lrel_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        LREL_SLOPE * x
    }
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn lrel(x: &RealVector) -> RealVector {
    x.data.iter().map(|&v| lrel_scalar(v)).collect::<Vec<_>>().into()
}

pub fn sigmoid(x: &RealVector) -> RealVector {
    x.data
        .iter()
        .map(|&v| sigmoid_scalar(v))
        .collect::<Vec<_>>()
        .into()
}

pub fn tanh(x: &RealVector) -> RealVector {
    x.data.iter().map(|v| v.tanh()).collect::<Vec<_>>().into()
}

pub(crate) fn softmax_raw(s: &[f64]) -> Vec<f64> {
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = s.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = out.iter().sum();
    for v in &mut out {
        *v /= z;
    }
    out
}

/// Max-shifted softmax.
pub fn softmax(s: &RealVector) -> Result<RealVector> {
    if s.dim() == 0 {
        return Err(Error::InvalidDimension(
            "softmax of an empty vector".to_owned(),
        ));
    }
    Ok(softmax_raw(&s.data).into())
}
