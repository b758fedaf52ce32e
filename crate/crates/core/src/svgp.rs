//! Sparse variational GP: the family indexed by `(Z, μ, Σ)`, its ELBO, the
//! closed-form optimum and a fixed-point solver that reaches it.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{factor_spd_auto, max_abs_diff, trace, SpdFactor};
use crate::nystrom::{regularized_cross_factor, InducingSet};

/// Variational parameters `ν = (Z, μ, Σ)`; `Σ` is kept with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct SvgpState {
    inducing: InducingSet,
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    sigma_factor: SpdFactor,
}

impl SvgpState {
    pub fn new(inducing: &InducingSet, mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let m = inducing.len();
        check_len(m, mu.len())?;
        check_len(m, sigma.nrows())?;
        check_len(m, sigma.ncols())?;
        let sigma_factor = factor_spd_auto(&sigma)?;
        Ok(Self {
            inducing: inducing.clone(),
            mu,
            sigma,
            sigma_factor,
        })
    }

    /// `Σ = L Lᵀ` from a lower-triangular `L`.
    pub fn from_factor(inducing: &InducingSet, mu: DVector<f64>, lower: DMatrix<f64>) -> Result<Self> {
        let m = inducing.len();
        check_len(m, mu.len())?;
        check_len(m, lower.nrows())?;
        let sigma_factor = SpdFactor::from_lower(lower)?;
        Ok(Self {
            inducing: inducing.clone(),
            mu,
            sigma: sigma_factor.reconstruct(),
            sigma_factor,
        })
    }

    /// `μ = 0, Σ = k_ZZ`.
    pub fn prior(inducing: &InducingSet) -> Self {
        Self {
            inducing: inducing.clone(),
            mu: DVector::zeros(inducing.len()),
            sigma: inducing.kzz().clone(),
            sigma_factor: inducing.kzz_factor().clone(),
        }
    }

    pub fn inducing(&self) -> &InducingSet {
        &self.inducing
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn sigma_factor(&self) -> &SpdFactor {
        &self.sigma_factor
    }

    /// `ψ(μ)` as span coefficients `k_ZZ⁻¹ μ`.
    pub fn span_coefficients(&self) -> Result<DVector<f64>> {
        psi_map(&self.inducing, &self.mu)
    }

    /// `m^ν(x) = k_Z(x)ᵀ k_ZZ⁻¹ μ`.
    pub fn variational_mean(&self, x: &[f64]) -> Result<f64> {
        let f = self.inducing.kzz_factor();
        let a = f.solve_lower_vec(&self.inducing.kz(x)?)?;
        Ok(a.dot(&f.solve_lower_vec(&self.mu)?))
    }

    /// `k^ν(x,x') = k(x,x') − q(x,x') + k_Z(x)ᵀ k_ZZ⁻¹ Σ k_ZZ⁻¹ k_Z(x')`.
    pub fn variational_cov(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        let k = self.inducing.kernel().eval(x, x2)?;
        let q = self.inducing.q(x, x2)?;
        let s = self.feature_map_phi(x)?.dot(&self.feature_map_phi(x2)?);
        Ok(k - q + s)
    }

    /// `φ^Σ(x) = Lᵀ k_ZZ⁻¹ k_Z(x)` with `Σ = L Lᵀ`, so `⟨φ(x), φ(x')⟩ = k_Zᵀ k_ZZ⁻¹ Σ k_ZZ⁻¹ k_Z`.
    pub fn feature_map_phi(&self, x: &[f64]) -> Result<DVector<f64>> {
        let c = self.inducing.kzz_factor().solve_vec(&self.inducing.kz(x)?)?;
        Ok(self.sigma_factor.lower().tr_mul(&c))
    }

    /// `KL(N(μ, Σ) ‖ N(0, k_ZZ))`.
    pub fn kl_to_prior(&self) -> Result<f64> {
        let kf = self.inducing.kzz_factor();
        let m = self.mu.len() as f64;
        let tr = kf.solve_lower(self.sigma_factor.lower())?.norm_squared();
        let quad = kf.quad_form(&self.mu)?;
        Ok(0.5 * (tr + quad - m + kf.logdet() - self.sigma_factor.logdet()))
    }

    /// Closed-form ELBO: Gaussian expected log-likelihood minus KL to the prior.
    pub fn elbo(&self, data: &Dataset, noise_var: f64) -> Result<f64> {
        check_positive(noise_var)?;
        let kf = self.inducing.kzz_factor();
        let v = self.inducing.whitened(data.inputs())?;
        let means = v.tr_mul(&kf.solve_lower_vec(&self.mu)?);
        let w = kf.solve(&self.inducing.kzx(data.inputs())?)?;
        let sw = self.sigma_factor.lower().tr_mul(&w);
        let kd = self.inducing.kernel().diag(data.inputs());
        let n = data.len();
        let mut sq = 0.0;
        for i in 0..n {
            let var = kd[i] - v.column(i).norm_squared() + sw.column(i).norm_squared();
            let r = data.targets()[i] - means[i];
            sq += r * r + var;
        }
        let ell = -0.5 * n as f64 * (2.0 * PI * noise_var).ln() - sq / (2.0 * noise_var);
        Ok(ell - self.kl_to_prior()?)
    }

    /// The four terms of `−2σ² L(ν)`, each computed from its own ingredients.
    pub fn elbo_breakdown(&self, data: &Dataset, noise_var: f64) -> Result<ElboBreakdown> {
        check_positive(noise_var)?;
        let ind = &self.inducing;
        let x = data.inputs();
        let alpha = self.span_coefficients()?;
        let kxz = ind.kzx(x)?.transpose();
        let f_x = &kxz * &alpha;
        let norm_sq = alpha.dot(&(ind.kzz() * &alpha));
        let fit_plus_norm = (data.targets() - f_x).norm_squared() + noise_var * norm_sq;

        let mut sigma_quadratic = 0.0;
        for row in x.rows() {
            sigma_quadratic += self.feature_map_phi(row)?.norm_squared();
        }

        let m = ind.len() as f64;
        let tr_kinv_sigma = trace(&ind.kzz_factor().solve(&self.sigma)?);
        let kl_regularizer =
            noise_var * (tr_kinv_sigma + ind.kzz_factor().logdet() - self.sigma_factor.logdet() - m);

        let n = data.len() as f64;
        Ok(ElboBreakdown {
            fit_plus_norm,
            sigma_quadratic,
            kl_regularizer,
            residual_trace: ind.trace_gap(x)?,
            log_normalizer: n * noise_var * (2.0 * PI * noise_var).ln(),
            total_check: -2.0 * noise_var * self.elbo(data, noise_var)?,
        })
    }
}

/// Terms of `−2σ² L(ν)`. The four named terms add up to `total_check` once the
/// `ν`-independent `log_normalizer = nσ² log(2πσ²)` is included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElboBreakdown {
    /// `Σ (y_i − f(x_i))² + σ² ‖f‖²_{H_k}` with `f = ψ(μ)`.
    pub fit_plus_norm: f64,
    /// `Σ k_Z(x_i)ᵀ k_ZZ⁻¹ Σ k_ZZ⁻¹ k_Z(x_i)`.
    pub sigma_quadratic: f64,
    /// `σ² [tr(k_ZZ⁻¹Σ) + log det k_ZZ − log det Σ − m]`.
    pub kl_regularizer: f64,
    /// `tr(k_XX − q_XX)`.
    pub residual_trace: f64,
    pub log_normalizer: f64,
    /// `−2σ² L(ν)`.
    pub total_check: f64,
}

impl ElboBreakdown {
    pub fn four_term_sum(&self) -> f64 {
        self.fit_plus_norm + self.sigma_quadratic + self.kl_regularizer + self.residual_trace
    }

    /// `four_term_sum + log_normalizer − total_check`.
    pub fn residual(&self) -> f64 {
        self.four_term_sum() + self.log_normalizer - self.total_check
    }
}

pub fn elbo(state: &SvgpState, data: &Dataset, noise_var: f64) -> Result<f64> {
    state.elbo(data, noise_var)
}

pub fn elbo_breakdown(state: &SvgpState, data: &Dataset, noise_var: f64) -> Result<ElboBreakdown> {
    state.elbo_breakdown(data, noise_var)
}

/// `ψ(μ) = k_Z(·)ᵀ k_ZZ⁻¹ μ`, returned as its span coefficients.
pub fn psi_map(ind: &InducingSet, mu: &DVector<f64>) -> Result<DVector<f64>> {
    ind.project(mu)
}

/// `ψ⁻¹(f) = f_Z` for `f = k_Z(·)ᵀ α ∈ M`.
pub fn psi_inverse(ind: &InducingSet, alpha: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(ind.len(), alpha.len())?;
    Ok(ind.kzz() * alpha)
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn check_positive(noise_var: f64) -> Result<()> {
    if noise_var > 0.0 && noise_var.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("noise variance must be positive, got {noise_var}")))
    }
}

/// `B = k_ZZ + σ⁻² k_ZX k_XZ`, factored, and `k_ZX`.
fn b_factor(data: &Dataset, ind: &InducingSet, noise_var: f64) -> Result<(DMatrix<f64>, SpdFactor)> {
    let kzx = ind.kzx(data.inputs())?;
    let b = ind.kzz() + (&kzx * kzx.transpose()) / noise_var;
    Ok((kzx, factor_spd_auto(&b)?))
}

/// Lower factor of `RᵀR` via QR of `R`.
fn gram_lower_factor(r: DMatrix<f64>) -> DMatrix<f64> {
    let mut upper = r.qr().r();
    for i in 0..upper.nrows() {
        if upper[(i, i)] < 0.0 {
            upper.row_mut(i).neg_mut();
        }
    }
    upper.transpose()
}

/// `Σ* = k_ZZ B⁻¹ k_ZZ`, as a lower factor.
fn optimal_sigma_lower(ind: &InducingSet, b: &SpdFactor) -> Result<DMatrix<f64>> {
    Ok(gram_lower_factor(b.solve_lower(ind.kzz())?))
}

/// `μ* = k_ZZ (σ² k_ZZ + k_ZX k_XZ)⁻¹ k_ZX y`, `Σ* = k_ZZ (k_ZZ + σ⁻² k_ZX k_XZ)⁻¹ k_ZZ`.
pub fn optimal_parameters(data: &Dataset, ind: &InducingSet, noise_var: f64) -> Result<SvgpState> {
    check_positive(noise_var)?;
    let (kzx, a) = regularized_cross_factor(ind, data, noise_var)?;
    let mu = ind.kzz() * a.solve_vec(&(kzx * data.targets()))?;
    let (_, b) = b_factor(data, ind, noise_var)?;
    SvgpState::from_factor(ind, mu, optimal_sigma_lower(ind, &b)?)
}

/// `m*` and `k*` in closed form.
#[derive(Debug, Clone)]
pub struct OptimalPosterior {
    inducing: InducingSet,
    mean_weights: DVector<f64>,
    b_factor: SpdFactor,
}

impl OptimalPosterior {
    /// `m*(x) = k_Z(x)ᵀ (σ² k_ZZ + k_ZX k_XZ)⁻¹ k_ZX y`.
    pub fn mean(&self, x: &[f64]) -> Result<f64> {
        Ok(self.inducing.kz(x)?.dot(&self.mean_weights))
    }

    /// `k*(x,x') = k(x,x') − q(x,x') + k_Z(x)ᵀ (k_ZZ + σ⁻² k_ZX k_XZ)⁻¹ k_Z(x')`.
    pub fn cov(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        let k = self.inducing.kernel().eval(x, x2)?;
        let q = self.inducing.q(x, x2)?;
        let a = self.b_factor.solve_lower_vec(&self.inducing.kz(x)?)?;
        let b = self.b_factor.solve_lower_vec(&self.inducing.kz(x2)?)?;
        Ok(k - q + a.dot(&b))
    }
}

pub fn optimal_posterior(data: &Dataset, ind: &InducingSet, noise_var: f64) -> Result<OptimalPosterior> {
    check_positive(noise_var)?;
    let (kzx, a) = regularized_cross_factor(ind, data, noise_var)?;
    let mean_weights = a.solve_vec(&(kzx * data.targets()))?;
    let (_, b) = b_factor(data, ind, noise_var)?;
    Ok(OptimalPosterior {
        inducing: ind.clone(),
        mean_weights,
        b_factor: b,
    })
}

/// `L* = −½ log det(q_XX+σ²I) − ½ yᵀ(q_XX+σ²I)⁻¹y − (n/2) log 2π − tr(k_XX−q_XX)/(2σ²)`.
pub fn optimal_elbo(data: &Dataset, ind: &InducingSet, noise_var: f64) -> Result<f64> {
    check_positive(noise_var)?;
    let n = data.len();
    let mut q = ind.q_gram(data.inputs())?;
    for i in 0..n {
        q[(i, i)] += noise_var;
    }
    let f = factor_spd_auto(&q)?;
    let gap = ind.trace_gap(data.inputs())?;
    Ok(-0.5 * f.logdet() - 0.5 * f.quad_form(data.targets())? - 0.5 * n as f64 * (2.0 * PI).ln()
        - gap / (2.0 * noise_var))
}

/// `∇_μ ℓ̄ = k_ZZ⁻¹ [σ⁻² (k_ZX k_XZ k_ZZ⁻¹ μ − k_ZX y) + μ]`, where `ℓ̄` is the
/// negative ELBO as a function of `μ`.
pub fn mu_gradient(data: &Dataset, ind: &InducingSet, noise_var: f64, mu: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(ind.len(), mu.len())?;
    let kzx = ind.kzx(data.inputs())?;
    let r = mu_residual(&kzx, ind, noise_var, data.targets(), mu)?;
    ind.kzz_factor().solve_vec(&r)
}

fn mu_residual(
    kzx: &DMatrix<f64>,
    ind: &InducingSet,
    noise_var: f64,
    y: &DVector<f64>,
    mu: &DVector<f64>,
) -> Result<DVector<f64>> {
    let fitted = kzx.tr_mul(&ind.kzz_factor().solve_vec(mu)?);
    Ok((kzx * (fitted - y)) / noise_var + mu)
}

#[derive(Debug, Clone)]
pub struct FixedPointOutcome {
    pub state: SvgpState,
    pub iterations: usize,
    pub last_change: f64,
}

/// Bayesian-learning-rule iteration from the prior `(0, k_ZZ)`.
///
/// Each step sets the precision to the Hessian of `ℓ̄`, giving
/// `Σ ← (σ⁻² k_ZZ⁻¹ k_ZX k_XZ k_ZZ⁻¹ + k_ZZ⁻¹)⁻¹ = k_ZZ B⁻¹ k_ZZ`, then takes the
/// natural-gradient step `μ ← μ − Σ ∇_μ ℓ̄`. Stops once the max-abs change in
/// `(μ, Σ)` falls below `tol`.
pub fn fixed_point_solver(
    data: &Dataset,
    ind: &InducingSet,
    noise_var: f64,
    max_iters: usize,
    tol: f64,
) -> Result<FixedPointOutcome> {
    check_positive(noise_var)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let (kzx, b) = b_factor(data, ind, noise_var)?;
    let mut state = SvgpState::prior(ind);
    let mut last_change = f64::INFINITY;
    for it in 1..=max_iters {
        let sigma_lower = optimal_sigma_lower(ind, &b)?;
        // Σ_new ∇ℓ̄ = k_ZZ B⁻¹ k_ZZ k_ZZ⁻¹ r = k_ZZ B⁻¹ r
        let r = mu_residual(&kzx, ind, noise_var, data.targets(), state.mu())?;
        let mu = state.mu() - ind.kzz() * b.solve_vec(&r)?;
        let next = SvgpState::from_factor(ind, mu, sigma_lower)?;
        let dmu = (next.mu() - state.mu()).amax();
        let dsigma = max_abs_diff(next.sigma(), state.sigma());
        last_change = dmu.max(dsigma);
        state = next;
        if last_change < tol {
            return Ok(FixedPointOutcome {
                state,
                iterations: it,
                last_change,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
        last_change,
    })
}
