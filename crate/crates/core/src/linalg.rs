//! Dense symmetric positive-definite linear algebra.
//!
//! Every inverse that appears in the regression formulas is applied through an
//! [`SpdFactor`] (Cholesky factor plus the diagonal jitter that made it
//! succeed). Nothing in the crate forms an explicit inverse.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative rungs of the default jitter ladder, scaled by the mean diagonal.
pub const DEFAULT_JITTER_RUNGS: [f64; 5] = [0.0, 1e-12, 1e-10, 1e-8, 1e-6];

/// Default ladder for `a`: `DEFAULT_JITTER_RUNGS * mean(diag a)`.
pub fn default_jitter_ladder(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows().max(1);
    let scale = a.diagonal().iter().sum::<f64>() / n as f64;
    let scale = if scale.is_finite() && scale > 0.0 { scale } else { 1.0 };
    DEFAULT_JITTER_RUNGS.iter().map(|r| r * scale).collect()
}

/// Cholesky factor `L` with `L Lᵀ = A + jitter_used · I`.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    lower: DMatrix<f64>,
    jitter_used: f64,
}

impl SpdFactor {
    /// Wraps an existing lower-triangular factor; the diagonal must be positive.
    pub fn from_lower(lower: DMatrix<f64>) -> Result<Self> {
        if !lower.is_square() {
            return Err(Error::DimensionMismatch {
                expected: lower.nrows(),
                found: lower.ncols(),
            });
        }
        let n = lower.nrows();
        if !lower.diagonal().iter().all(|d| d.is_finite() && *d > 0.0) {
            return Err(Error::FactorizationFailed { dim: n, max_jitter: 0.0 });
        }
        Ok(Self {
            lower: lower.lower_triangle(),
            jitter_used: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    /// `(A + jitter·I)⁻¹ B` via two triangular solves.
    pub fn solve(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_rows(b.nrows())?;
        let y = self.solve_lower(b)?;
        Ok(self
            .lower
            .tr_solve_lower_triangular(&y)
            .expect("factor has a strictly positive diagonal"))
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_rows(b.len())?;
        let y = self
            .lower
            .solve_lower_triangular(b)
            .expect("factor has a strictly positive diagonal");
        Ok(self
            .lower
            .tr_solve_lower_triangular(&y)
            .expect("factor has a strictly positive diagonal"))
    }

    /// `L⁻¹ B`, the half solve. `(L⁻¹B)ᵀ(L⁻¹C) = Bᵀ (A+jitter·I)⁻¹ C`.
    pub fn solve_lower(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_rows(b.nrows())?;
        Ok(self
            .lower
            .solve_lower_triangular(b)
            .expect("factor has a strictly positive diagonal"))
    }

    pub fn solve_lower_vec(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_rows(b.len())?;
        Ok(self
            .lower
            .solve_lower_triangular(b)
            .expect("factor has a strictly positive diagonal"))
    }

    /// `bᵀ (A + jitter·I)⁻¹ b`.
    pub fn quad_form(&self, b: &DVector<f64>) -> Result<f64> {
        Ok(self.solve_lower_vec(b)?.norm_squared())
    }

    /// `log det(A + jitter·I) = 2 Σ log L_ii`.
    pub fn logdet(&self) -> f64 {
        2.0 * self.lower.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// `L Lᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.lower * self.lower.transpose()
    }

    fn check_rows(&self, rows: usize) -> Result<()> {
        if rows != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: rows,
            });
        }
        Ok(())
    }
}

/// Cholesky-factor the symmetric part of `a`, walking `ladder` (absolute
/// jitters, ascending) until a rung succeeds.
///
/// A rung succeeds when the factorization completes and every pivot satisfies
/// `L_ii² > n·ε·max(diag A)`; smaller pivots mean the input is numerically
/// singular at that jitter.
pub fn factor_spd(a: &DMatrix<f64>, ladder: &[f64]) -> Result<SpdFactor> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    let n = a.nrows();
    let sym = symmetrize(a);
    let max_diag = sym.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let pivot_floor = n as f64 * f64::EPSILON * max_diag;

    for &jitter in ladder {
        let mut shifted = sym.clone();
        for i in 0..n {
            shifted[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(shifted) {
            let lower = chol.unpack();
            let ok = lower
                .diagonal()
                .iter()
                .all(|d| d.is_finite() && d * d > pivot_floor && *d > 0.0);
            if ok {
                return Ok(SpdFactor {
                    lower,
                    jitter_used: jitter,
                });
            }
        }
    }
    Err(Error::FactorizationFailed {
        dim: n,
        max_jitter: ladder.last().copied().unwrap_or(0.0),
    })
}

/// [`factor_spd`] with [`default_jitter_ladder`].
pub fn factor_spd_auto(a: &DMatrix<f64>) -> Result<SpdFactor> {
    factor_spd(a, &default_jitter_ladder(a))
}

/// Factor with no jitter at all.
pub fn factor_spd_exact(a: &DMatrix<f64>) -> Result<SpdFactor> {
    factor_spd(a, &[0.0])
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Largest absolute eigenvalue of the symmetric part of `a`.
///
/// Uses a symmetric eigensolve; power iteration is the fallback when the
/// eigensolve produces non-finite values.
pub fn operator_norm(a: &DMatrix<f64>) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    let sym = symmetrize(a);
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|v| v.is_finite()) {
        return Ok(eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs())));
    }
    power_iteration(&sym, 1e-10, 10_000)
}

/// Dominant |eigenvalue| of a symmetric matrix by power iteration.
pub fn power_iteration(a: &DMatrix<f64>, rel_tol: f64, max_iters: usize) -> Result<f64> {
    let n = a.nrows();
    // deterministic non-degenerate start
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 + 1.0).sqrt().fract());
    v /= v.norm();
    let mut estimate = 0.0_f64;
    let mut last_change = f64::INFINITY;
    for _ in 0..max_iters {
        // iterate on A² so that ±λ pairs do not oscillate
        let w = a * (a * &v);
        let norm = w.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let next = norm.sqrt();
        last_change = (next - estimate).abs();
        v = w / norm;
        if last_change <= rel_tol * next {
            return Ok(next);
        }
        estimate = next;
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
        last_change,
    })
}

/// `tr(A)`.
pub fn trace(a: &DMatrix<f64>) -> f64 {
    a.diagonal().iter().sum()
}

/// Max-abs entry of `a - b`.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}
