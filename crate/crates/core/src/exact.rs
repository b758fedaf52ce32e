//! Exact kernel ridge regression and the exact Gaussian-process posterior.
//!
//! These are the ground truths that the sparse methods are compared against.
//! Both use a zero prior mean.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{Kernel, Points};
use crate::linalg::{factor_spd_auto, SpdFactor};

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be positive, got {v}")))
    }
}

/// `k_XX + shift · I`, factored.
pub(crate) fn shifted_gram_factor(kernel: &Kernel, x: &Points, shift: f64) -> Result<(DMatrix<f64>, SpdFactor)> {
    let kxx = kernel.gram(x, x)?;
    let mut shifted = kxx.clone();
    for i in 0..shifted.nrows() {
        shifted[(i, i)] += shift;
    }
    let factor = factor_spd_auto(&shifted)?;
    Ok((kxx, factor))
}

/// `f̂ = k_X(·)ᵀ α` with `α = (k_XX + nλI)⁻¹ y`.
#[derive(Debug, Clone)]
pub struct KrrModel {
    kernel: Kernel,
    train_inputs: Points,
    coefficients: DVector<f64>,
    ridge: f64,
}

impl KrrModel {
    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn train_inputs(&self) -> &Points {
        &self.train_inputs
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.kernel.column(&self.train_inputs, x)?.dot(&self.coefficients))
    }

    /// `‖f̂‖²_{H_k} = αᵀ k_XX α`.
    pub fn rkhs_norm_sq(&self) -> f64 {
        let kxx = self.kernel.gram_sym(&self.train_inputs);
        self.coefficients.dot(&(kxx * &self.coefficients))
    }

    /// Fitted values at the training inputs.
    pub fn fitted(&self) -> DVector<f64> {
        self.kernel.gram_sym(&self.train_inputs) * &self.coefficients
    }
}

pub fn fit_krr(kernel: &Kernel, data: &Dataset, ridge: f64) -> Result<KrrModel> {
    check_positive("ridge", ridge)?;
    kernel.check_dim(data.dim())?;
    let n = data.len() as f64;
    let (_, factor) = shifted_gram_factor(kernel, data.inputs(), n * ridge)?;
    let coefficients = factor.solve_vec(data.targets())?;
    Ok(KrrModel {
        kernel: *kernel,
        train_inputs: data.inputs().clone(),
        coefficients,
        ridge,
    })
}

pub fn predict_krr(model: &KrrModel, x: &[f64]) -> Result<f64> {
    model.predict(x)
}

/// Exact GP posterior `GP(m̄, k̄)` under a zero-mean prior.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    kernel: Kernel,
    train_inputs: Points,
    noise_var: f64,
    alpha: DVector<f64>,
    factor: SpdFactor,
}

impl GpPosterior {
    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn factor(&self) -> &SpdFactor {
        &self.factor
    }

    /// `m̄(x) = k_X(x)ᵀ (k_XX + σ²I)⁻¹ y`.
    pub fn mean(&self, x: &[f64]) -> Result<f64> {
        Ok(self.kernel.column(&self.train_inputs, x)?.dot(&self.alpha))
    }

    /// `k̄(x, x') = k(x, x') − k_X(x)ᵀ (k_XX + σ²I)⁻¹ k_X(x')`.
    pub fn cov(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        let prior = self.kernel.eval(x, x2)?;
        let a = self.factor.solve_lower_vec(&self.kernel.column(&self.train_inputs, x)?)?;
        if x == x2 {
            return Ok(prior - a.norm_squared());
        }
        let b = self.factor.solve_lower_vec(&self.kernel.column(&self.train_inputs, x2)?)?;
        Ok(prior - a.dot(&b))
    }
}

pub fn fit_gpr(kernel: &Kernel, data: &Dataset, noise_var: f64) -> Result<GpPosterior> {
    check_positive("noise variance", noise_var)?;
    kernel.check_dim(data.dim())?;
    let (_, factor) = shifted_gram_factor(kernel, data.inputs(), noise_var)?;
    let alpha = factor.solve_vec(data.targets())?;
    Ok(GpPosterior {
        kernel: *kernel,
        train_inputs: data.inputs().clone(),
        noise_var,
        alpha,
        factor,
    })
}

pub fn posterior_cov(post: &GpPosterior, x: &[f64], x2: &[f64]) -> Result<f64> {
    post.cov(x, x2)
}

/// `log p(y) = −½ log det(k_XX+σ²I) − ½ yᵀ(k_XX+σ²I)⁻¹y − (n/2) log 2π`.
pub fn log_marginal_likelihood(kernel: &Kernel, data: &Dataset, noise_var: f64) -> Result<f64> {
    check_positive("noise variance", noise_var)?;
    kernel.check_dim(data.dim())?;
    let (_, factor) = shifted_gram_factor(kernel, data.inputs(), noise_var)?;
    let n = data.len() as f64;
    Ok(-0.5 * factor.logdet() - 0.5 * factor.quad_form(data.targets())? - 0.5 * n * (2.0 * PI).ln())
}

/// `R_n(f; y) = (1/n) Σ (y_i − f(x_i))² + λ ‖f‖²_{H_k}`.
pub fn regularized_risk(f_at_x: &DVector<f64>, rkhs_norm_sq: f64, data: &Dataset, ridge: f64) -> Result<f64> {
    if f_at_x.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            found: f_at_x.len(),
        });
    }
    check_positive("ridge", ridge)?;
    if !(rkhs_norm_sq >= 0.0) {
        return Err(Error::InvalidInput(format!("RKHS norm must be nonnegative, got {rkhs_norm_sq}")));
    }
    let n = data.len() as f64;
    Ok((data.targets() - f_at_x).norm_squared() / n + ridge * rkhs_norm_sq)
}
