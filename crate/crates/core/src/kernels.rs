//! Positive-definite kernels and their Gram matrices.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major `n × d` point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Points {
    data: Vec<f64>,
    dim: usize,
}

impl Points {
    pub fn new(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("point dimension must be at least 1".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: data.len() % dim,
            });
        }
        Ok(Self { data, dim })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(data, dim)
    }

    /// One-dimensional points.
    pub fn from_scalars(values: &[f64]) -> Self {
        Self {
            data: values.to_vec(),
            dim: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            data,
            dim: self.dim,
        }
    }

    /// Index of the first row exactly equal to `x`.
    pub fn position(&self, x: &[f64]) -> Option<usize> {
        self.rows().position(|r| r == x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    /// `exp(-‖x − x'‖² / γ²)`
    Gaussian { lengthscale: f64 },
    /// `(xᵀx' + c)^m`
    Polynomial { degree: u32, offset: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub family: KernelFamily,
    pub input_dim: usize,
}

impl Kernel {
    pub fn gaussian(lengthscale: f64, input_dim: usize) -> Result<Self> {
        if !(lengthscale > 0.0 && lengthscale.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "gaussian lengthscale must be positive, got {lengthscale}"
            )));
        }
        Self::with_family(KernelFamily::Gaussian { lengthscale }, input_dim)
    }

    pub fn polynomial(degree: u32, offset: f64, input_dim: usize) -> Result<Self> {
        if degree == 0 || !(offset >= 0.0 && offset.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "polynomial kernel needs degree >= 1 and offset >= 0, got ({degree}, {offset})"
            )));
        }
        Self::with_family(KernelFamily::Polynomial { degree, offset }, input_dim)
    }

    /// Validating constructor for either family.
    pub fn new(family: KernelFamily, input_dim: usize) -> Result<Self> {
        match family {
            KernelFamily::Gaussian { lengthscale } => Self::gaussian(lengthscale, input_dim),
            KernelFamily::Polynomial { degree, offset } => Self::polynomial(degree, offset, input_dim),
        }
    }

    fn with_family(family: KernelFamily, input_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidInput("kernel input dimension must be at least 1".into()));
        }
        Ok(Self { family, input_dim })
    }

    pub fn eval(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        self.check_dim(x2.len())?;
        Ok(self.eval_unchecked(x, x2))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64], x2: &[f64]) -> f64 {
        match self.family {
            KernelFamily::Gaussian { lengthscale } => {
                let sq: f64 = x.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum();
                (-sq / (lengthscale * lengthscale)).exp()
            }
            KernelFamily::Polynomial { degree, offset } => {
                let dot: f64 = x.iter().zip(x2).map(|(a, b)| a * b).sum();
                (dot + offset).powi(degree as i32)
            }
        }
    }

    /// `k(A, B)`, entry `(i, j) = k(a_i, b_j)`.
    pub fn gram(&self, a: &Points, b: &Points) -> Result<DMatrix<f64>> {
        self.check_dim(a.dim())?;
        self.check_dim(b.dim())?;
        if std::ptr::eq(a, b) || a == b {
            return Ok(self.gram_sym(a));
        }
        Ok(DMatrix::from_fn(a.len(), b.len(), |i, j| {
            self.eval_unchecked(a.row(i), b.row(j))
        }))
    }

    /// `k(A, A)`, filled from the upper triangle so it is exactly symmetric.
    pub(crate) fn gram_sym(&self, a: &Points) -> DMatrix<f64> {
        let n = a.len();
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.eval_unchecked(a.row(i), a.row(j));
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }

    /// The column `k_A(x) = (k(a_1, x), …, k(a_n, x))ᵀ`.
    pub fn column(&self, a: &Points, x: &[f64]) -> Result<DVector<f64>> {
        self.check_dim(a.dim())?;
        self.check_dim(x.len())?;
        Ok(DVector::from_iterator(
            a.len(),
            a.rows().map(|r| self.eval_unchecked(r, x)),
        ))
    }

    pub fn diag(&self, a: &Points) -> DVector<f64> {
        DVector::from_iterator(a.len(), a.rows().map(|r| self.eval_unchecked(r, r)))
    }

    /// `∂_j ∂'_j k(x, x')` at `x' = x`.
    pub fn mixed_second_derivative(&self, j: usize, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        if j >= self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: j,
            });
        }
        match self.family {
            // ∂_j∂'_j exp(-‖x-x'‖²/γ²) = (2/γ² − 4(x_j−x'_j)²/γ⁴) k(x,x'); constant on the diagonal
            KernelFamily::Gaussian { lengthscale } => Ok(2.0 / (lengthscale * lengthscale)),
            KernelFamily::Polynomial { .. } => Err(Error::UnsupportedKernel("mixed second derivatives")),
        }
    }

    pub(crate) fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: d,
            });
        }
        Ok(())
    }
}
