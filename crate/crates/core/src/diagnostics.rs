//! Approximation-quality diagnostics: KL to the exact posterior, excess risk,
//! RKHS distance, and the bounds that control them through `tr(k_XX − q_XX)`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exact::{fit_gpr, fit_krr, log_marginal_likelihood, regularized_risk, shifted_gram_factor};
use crate::kernels::Points;
use crate::linalg::{factor_spd_auto, operator_norm, trace, SpdFactor};
use crate::nystrom::{fit_nystrom, InducingSet};
use crate::svgp::{optimal_parameters, optimal_posterior};

/// Default relative slack allowed on deterministic inequalities.
pub const INEQUALITY_RTOL: f64 = 1e-8;
/// Central finite-difference step for derivative checks.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapDiagnostics {
    pub trace_gap: f64,
    pub opnorm_gap: f64,
    /// `log det(k_XX + shift·I)`.
    pub logdet_k: f64,
    /// `log det(q_XX + shift·I)`.
    pub logdet_q: f64,
}

pub fn gap_diagnostics(inputs: &Points, ind: &InducingSet, shift: f64) -> Result<GapDiagnostics> {
    let (kxx, kf) = shifted_gram_factor(ind.kernel(), inputs, shift)?;
    let qxx = ind.q_gram(inputs)?;
    let gap = &kxx - &qxx;
    let qf = factor_spd_auto(&shifted(&qxx, shift))?;
    Ok(GapDiagnostics {
        trace_gap: trace(&gap),
        opnorm_gap: operator_norm(&gap)?,
        logdet_k: kf.logdet(),
        logdet_q: qf.logdet(),
    })
}

fn shifted(a: &DMatrix<f64>, s: f64) -> DMatrix<f64> {
    let mut out = a.clone();
    for i in 0..out.nrows() {
        out[(i, i)] += s;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// `lhs ≤ rhs`, passing when `slack ≥ −tolerance`.
    Inequality,
    /// `lhs = rhs`, passing when `|slack| ≤ tolerance`.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    pub name: String,
    pub kind: BoundKind,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`.
    pub slack: f64,
    pub tolerance: f64,
    pub holds: bool,
}

impl BoundRecord {
    pub fn inequality(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self::inequality_with_tolerance(name, lhs, rhs, INEQUALITY_RTOL * rhs.abs().max(1.0))
    }

    pub fn inequality_with_tolerance(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let slack = rhs - lhs;
        Self {
            name: name.into(),
            kind: BoundKind::Inequality,
            lhs,
            rhs,
            slack,
            tolerance,
            holds: slack >= -tolerance,
        }
    }

    pub fn identity(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let slack = rhs - lhs;
        Self {
            name: name.into(),
            kind: BoundKind::Identity,
            lhs,
            rhs,
            slack,
            tolerance,
            holds: slack.abs() <= tolerance,
        }
    }
}

/// Both evaluations of `KL(Q^{ν*} ‖ P^{F|y})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlTwoPath {
    /// `log p(y) − L(μ*, Σ*)` with the generic ELBO.
    pub via_elbo: f64,
    /// Half of the log-det, quadratic-form and trace expression.
    pub explicit: f64,
}

impl KlTwoPath {
    pub fn mismatch(&self) -> f64 {
        (self.via_elbo - self.explicit).abs()
    }

    pub fn tolerance(&self) -> f64 {
        1e-8 * self.via_elbo.abs().max(1.0)
    }
}

/// Shared pieces of `2 KL`: factors of `k_XX + σ²I` and `q_XX + σ²I`, and the trace gap.
struct KlParts {
    k_factor: SpdFactor,
    q_factor: SpdFactor,
    trace_gap: f64,
    noise_var: f64,
}

impl KlParts {
    fn new(inputs: &Points, ind: &InducingSet, noise_var: f64) -> Result<Self> {
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::InvalidInput(format!("noise variance must be positive, got {noise_var}")));
        }
        let (_, k_factor) = shifted_gram_factor(ind.kernel(), inputs, noise_var)?;
        let q_factor = factor_spd_auto(&shifted(&ind.q_gram(inputs)?, noise_var))?;
        Ok(Self {
            k_factor,
            q_factor,
            trace_gap: ind.trace_gap(inputs)?,
            noise_var,
        })
    }

    /// `yᵀ(q_XX+σ²I)⁻¹y − yᵀ(k_XX+σ²I)⁻¹y`.
    fn quad_gap(&self, y: &DVector<f64>) -> Result<f64> {
        Ok(self.q_factor.quad_form(y)? - self.k_factor.quad_form(y)?)
    }

    fn logdet_gap(&self) -> f64 {
        self.q_factor.logdet() - self.k_factor.logdet()
    }

    fn two_kl(&self, y: &DVector<f64>) -> Result<f64> {
        Ok(self.logdet_gap() + self.quad_gap(y)? + self.trace_gap / self.noise_var)
    }
}

pub fn kl_two_path(data: &Dataset, ind: &InducingSet, noise_var: f64) -> Result<KlTwoPath> {
    let lml = log_marginal_likelihood(ind.kernel(), data, noise_var)?;
    let elbo = optimal_parameters(data, ind, noise_var)?.elbo(data, noise_var)?;
    let parts = KlParts::new(data.inputs(), ind, noise_var)?;
    Ok(KlTwoPath {
        via_elbo: lml - elbo,
        explicit: 0.5 * parts.two_kl(data.targets())?,
    })
}

/// KL from the optimal SVGP posterior to the exact GP posterior, cross-checked
/// against the explicit expression.
pub fn kl_to_exact_posterior(data: &Dataset, ind: &InducingSet, noise_var: f64) -> Result<f64> {
    let kl = kl_two_path(data, ind, noise_var)?;
    if kl.mismatch() > kl.tolerance() {
        return Err(Error::InternalInconsistency(format!(
            "KL paths disagree: {} vs {}",
            kl.via_elbo, kl.explicit
        )));
    }
    Ok(kl.via_elbo)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurtBounds {
    /// `2KL ≤ (t/σ²)(‖y‖²/σ² + 1)`.
    pub bound: BoundRecord,
    /// `2KL ≤ (t/σ²)(‖y‖²/(t+σ²) + 1)`.
    pub intermediate: BoundRecord,
    /// Quadratic-form gap `≤ ‖y‖² o/(σ²(o+σ²))` with `o` the operator-norm gap.
    pub quadratic_op: BoundRecord,
    /// Quadratic-form gap `≤ ‖y‖² t/(σ²(t+σ²))`.
    pub quadratic_trace: BoundRecord,
}

impl BurtBounds {
    pub fn records(&self) -> [&BoundRecord; 4] {
        [&self.bound, &self.intermediate, &self.quadratic_op, &self.quadratic_trace]
    }
}

pub fn burt_upper_bound(data: &Dataset, ind: &InducingSet, noise_var: f64) -> Result<BurtBounds> {
    let two_kl = 2.0 * kl_to_exact_posterior(data, ind, noise_var)?;
    let parts = KlParts::new(data.inputs(), ind, noise_var)?;
    let gaps = gap_diagnostics(data.inputs(), ind, noise_var)?;
    let s2 = noise_var;
    let y2 = data.targets().norm_squared();
    let (t, o) = (gaps.trace_gap, gaps.opnorm_gap);
    let quad = parts.quad_gap(data.targets())?;
    Ok(BurtBounds {
        bound: BoundRecord::inequality("burt_kl", two_kl, t / s2 * (y2 / s2 + 1.0)),
        intermediate: BoundRecord::inequality("burt_kl_intermediate", two_kl, t / s2 * (y2 / (t + s2) + 1.0)),
        quadratic_op: BoundRecord::inequality("quadratic_gap_opnorm", quad, y2 * o / (s2 * (o + s2))),
        quadratic_trace: BoundRecord::inequality("quadratic_gap_trace", quad, y2 * t / (s2 * (t + s2))),
    })
}

fn check_ridge(ridge: f64) -> Result<()> {
    if ridge > 0.0 && ridge.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("ridge must be positive, got {ridge}")))
    }
}

/// `R_n(f̄; y) − R_n(f̂; y)` from the fitted coefficient vectors.
pub fn excess_risk(data: &Dataset, ind: &InducingSet, ridge: f64) -> Result<f64> {
    check_ridge(ridge)?;
    let krr = fit_krr(ind.kernel(), data, ridge)?;
    let nys = fit_nystrom(data, ind, ridge)?;
    let r_exact = regularized_risk(&krr.fitted(), krr.rkhs_norm_sq(), data, ridge)?;
    let r_nys = regularized_risk(&nys.fitted(data.inputs())?, nys.rkhs_norm_sq(), data, ridge)?;
    Ok(r_nys - r_exact)
}

/// `n·excess = nλ·[yᵀ(q_XX+nλI)⁻¹y − yᵀ(k_XX+nλI)⁻¹y]`.
///
/// Each quadratic form is `1/λ` times the minimal regularized risk over its
/// hypothesis space, hence the `nλ` factor.
pub fn excess_risk_identity(data: &Dataset, ind: &InducingSet, ridge: f64) -> Result<BoundRecord> {
    let n = data.len() as f64;
    let lhs = n * excess_risk(data, ind, ridge)?;
    let rhs = n * ridge * KlParts::new(data.inputs(), ind, n * ridge)?.quad_gap(data.targets())?;
    Ok(BoundRecord::identity("excess_risk_identity", lhs, rhs, 1e-8 * rhs.abs().max(1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcessRiskBounds {
    /// `excess ≤ ‖y‖² t/(n(t+nλ))`.
    pub trace: BoundRecord,
    /// `excess ≤ ‖y‖² o/(n(o+nλ))`.
    pub opnorm: BoundRecord,
}

pub fn excess_risk_upper_bound(data: &Dataset, ind: &InducingSet, ridge: f64) -> Result<ExcessRiskBounds> {
    let lhs = excess_risk(data, ind, ridge)?;
    let n = data.len() as f64;
    let nl = n * ridge;
    let gaps = gap_diagnostics(data.inputs(), ind, nl)?;
    let y2 = data.targets().norm_squared();
    let (t, o) = (gaps.trace_gap, gaps.opnorm_gap);
    Ok(ExcessRiskBounds {
        trace: BoundRecord::inequality("excess_risk_trace", lhs, y2 * t / (n * (t + nl))),
        opnorm: BoundRecord::inequality("excess_risk_opnorm", lhs, y2 * o / (n * (o + nl))),
    })
}

/// `‖f̂ − f̄‖²_{H_k} = αᵀk_XXα − 2αᵀk_XZβ̃ + β̃ᵀk_ZZβ̃`.
pub fn rkhs_distance_sq(data: &Dataset, ind: &InducingSet, ridge: f64) -> Result<f64> {
    check_ridge(ridge)?;
    let krr = fit_krr(ind.kernel(), data, ridge)?;
    let nys = fit_nystrom(data, ind, ridge)?;
    let alpha = krr.coefficients();
    let beta = nys.beta();
    let kxz = ind.kzx(data.inputs())?.transpose();
    Ok(krr.rkhs_norm_sq() - 2.0 * alpha.dot(&(kxz * beta)) + nys.rkhs_norm_sq())
}

/// `‖f̂ − f̄‖² ≤ 2 t ‖y‖²/(nλ)²`.
pub fn rkhs_distance_bound(data: &Dataset, ind: &InducingSet, ridge: f64) -> Result<BoundRecord> {
    let lhs = rkhs_distance_sq(data, ind, ridge)?;
    let nl = data.len() as f64 * ridge;
    let t = ind.trace_gap(data.inputs())?;
    let y2 = data.targets().norm_squared();
    Ok(BoundRecord::inequality("rkhs_distance", lhs, 2.0 * t * y2 / (nl * nl)))
}

/// `(f̄(x) − f̂(x))² ≤ ‖f̂ − f̄‖²_{H_k} k(x,x)` at each of `points`.
pub fn sup_norm_consequence(data: &Dataset, ind: &InducingSet, ridge: f64, points: &Points) -> Result<Vec<BoundRecord>> {
    let dist = rkhs_distance_sq(data, ind, ridge)?;
    let krr = fit_krr(ind.kernel(), data, ridge)?;
    let nys = fit_nystrom(data, ind, ridge)?;
    points
        .rows()
        .map(|x| {
            let d = nys.predict(x)? - krr.predict(x)?;
            let kxx = ind.kernel().eval(x, x)?;
            Ok(BoundRecord::inequality("sup_norm_consequence", d * d, dist * kxx))
        })
        .collect()
}

/// `(∂_j m*(x) − ∂_j m̄(x))² ≤ 2 t ‖y‖² ∂_j∂'_j k(x,x)/σ⁴`, lhs by central differences.
pub fn derivative_gap_bound(data: &Dataset, ind: &InducingSet, noise_var: f64, x: &[f64], j: usize) -> Result<BoundRecord> {
    let dkk = ind.kernel().mixed_second_derivative(j, x)?;
    let exact = fit_gpr(ind.kernel(), data, noise_var)?;
    let approx = optimal_posterior(data, ind, noise_var)?;
    let gap = |p: &[f64]| -> Result<f64> { Ok(approx.mean(p)? - exact.mean(p)?) };
    let mut up = x.to_vec();
    up[j] += FD_STEP;
    let mut dn = x.to_vec();
    dn[j] -= FD_STEP;
    let deriv = (gap(&up)? - gap(&dn)?) / (2.0 * FD_STEP);
    let t = ind.trace_gap(data.inputs())?;
    let y2 = data.targets().norm_squared();
    let rhs = 2.0 * t * y2 * dkk / (noise_var * noise_var);
    Ok(BoundRecord::inequality_with_tolerance(
        "derivative_gap",
        deriv * deriv,
        rhs,
        1e-4 * rhs.max(1.0),
    ))
}

/// The two worst-case brackets at a test point, and `k*(x,x) + σ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    /// Squared worst-case error of interpolating from `f_Z` in the unit ball of `H_k`.
    pub interpolation: f64,
    /// Squared worst-case error of Nyström KRR from `h_X` in the unit ball of `H_{q^σ}`.
    pub nystrom_krr: f64,
    /// `k*(x,x) + σ²`.
    pub variance_plus_noise: f64,
}

impl WorstCase {
    pub fn residual(&self) -> f64 {
        self.interpolation + self.nystrom_krr - self.variance_plus_noise
    }
}

/// Evaluates both brackets through `sup_{‖f‖≤1} (f(x) − wᵀf_A)² = ‖κ(·,x) − Σ wᵢ κ(·,aᵢ)‖²_κ`.
pub fn worst_case_terms(data: &Dataset, ind: &InducingSet, noise_var: f64, x: &[f64]) -> Result<WorstCase> {
    let inputs = data.inputs();
    if let Some(index) = inputs.position(x) {
        return Err(Error::PointCollision { index });
    }
    let kernel = ind.kernel();
    let kxx = kernel.eval(x, x)?;
    let kz = ind.kz(x)?;

    // interpolation weights c = k_ZZ⁻¹ k_Z(x) against kernel k
    let c = ind.kzz_factor().solve_vec(&kz)?;
    let interpolation = kxx - 2.0 * c.dot(&kz) + c.dot(&(ind.kzz() * &c));

    // Nyström KRR weights w against q^σ; x ∉ X so δ(x, x_i) = 0
    let kzx = ind.kzx(inputs)?;
    let a = ind.kzz() * noise_var + &kzx * kzx.transpose();
    let w = kzx.tr_mul(&factor_spd_auto(&a)?.solve_vec(&kz)?);
    let qx = ind.whitened(inputs)?.tr_mul(&ind.kzz_factor().solve_lower_vec(&kz)?);
    let qxx_sigma = shifted(&ind.q_gram(inputs)?, noise_var);
    let qsx = ind.q(x, x)? + noise_var;
    let nystrom_krr = qsx - 2.0 * w.dot(&qx) + w.dot(&(qxx_sigma * &w));

    let post = optimal_posterior(data, ind, noise_var)?;
    Ok(WorstCase {
        interpolation,
        nystrom_krr,
        variance_plus_noise: post.cov(x, x)? + noise_var,
    })
}

pub fn worst_case_decomposition(data: &Dataset, ind: &InducingSet, noise_var: f64, x: &[f64]) -> Result<BoundRecord> {
    let wc = worst_case_terms(data, ind, noise_var, x)?;
    Ok(BoundRecord::identity(
        "worst_case_decomposition",
        wc.interpolation + wc.nystrom_krr,
        wc.variance_plus_noise,
        1e-8,
    ))
}

/// Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl McEstimate {
    fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        Self {
            mean,
            stderr: (var / n).sqrt(),
            samples: values.len(),
        }
    }

    /// 1.96 standard errors.
    pub fn ci_halfwidth(&self) -> f64 {
        1.96 * self.stderr
    }
}

pub const MIN_MC_SAMPLES: usize = 100;

/// Draws `y ~ N(0, k_XX + σ²I)` on one RNG stream per draw and maps each draw.
fn monte_carlo<F>(factor: &SpdFactor, n_samples: usize, seed: u64, f: F) -> Result<McEstimate>
where
    F: Fn(&DVector<f64>) -> Result<f64> + Sync,
{
    if n_samples < MIN_MC_SAMPLES {
        return Err(Error::InvalidCount(format!(
            "at least {MIN_MC_SAMPLES} Monte-Carlo samples are required, got {n_samples}"
        )));
    }
    let n = factor.dim();
    let values: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let eps = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            f(&(factor.lower() * eps))
        })
        .collect::<Result<_>>()?;
    Ok(McEstimate::from_values(&values))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlSandwich {
    pub estimate: McEstimate,
    pub ci_halfwidth: f64,
    /// `t/(2σ²)`.
    pub lower: f64,
    /// `t/σ²`.
    pub upper: f64,
    /// `[lower, upper]` meets `[mean − 3·stderr, mean + 3·stderr]`.
    pub holds: bool,
}

/// Monte-Carlo `E_y[KL]` under `y ~ N(0, k_XX + σ²I)` against `[t/2σ², t/σ²]`.
pub fn expected_kl_sandwich(
    inputs: &Points,
    ind: &InducingSet,
    noise_var: f64,
    n_samples: usize,
    seed: u64,
) -> Result<KlSandwich> {
    let parts = KlParts::new(inputs, ind, noise_var)?;
    let estimate = monte_carlo(&parts.k_factor, n_samples, seed, |y| Ok(0.5 * parts.two_kl(y)?))?;
    let lower = parts.trace_gap / (2.0 * noise_var);
    let upper = parts.trace_gap / noise_var;
    let band = 3.0 * estimate.stderr;
    Ok(KlSandwich {
        estimate,
        ci_halfwidth: estimate.ci_halfwidth(),
        lower,
        upper,
        holds: lower <= estimate.mean + band && upper >= estimate.mean - band,
    })
}

/// Closed-form `E_y[KL] = ½[log det(q+σ²) − log det(k+σ²) + tr((q+σ²)⁻¹(k−q)) + t/σ²]`.
pub fn expected_kl_closed_form(inputs: &Points, ind: &InducingSet, noise_var: f64) -> Result<f64> {
    let parts = KlParts::new(inputs, ind, noise_var)?;
    let gap = ind.kernel().gram(inputs, inputs)? - ind.q_gram(inputs)?;
    let tr = trace(&parts.q_factor.solve(&gap)?);
    Ok(0.5 * (parts.logdet_gap() + tr + parts.trace_gap / noise_var))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedExcessRisk {
    pub record: BoundRecord,
    pub estimate: McEstimate,
}

/// `λ log[det(k_XX+nλI)/det(q_XX+nλI)] ≤ E_y[R_n(f̄;y) − R_n(f̂;y)]` with
/// `y ~ N(0, k_XX + nλI)`, accepted within three standard errors.
pub fn expected_excess_risk_lower_bound(
    inputs: &Points,
    ind: &InducingSet,
    ridge: f64,
    n_samples: usize,
    seed: u64,
) -> Result<ExpectedExcessRisk> {
    check_ridge(ridge)?;
    let n = inputs.len() as f64;
    let parts = KlParts::new(inputs, ind, n * ridge)?;
    let estimate = monte_carlo(&parts.k_factor, n_samples, seed, |y| Ok(ridge * parts.quad_gap(y)?))?;
    let lhs = -ridge * parts.logdet_gap();
    Ok(ExpectedExcessRisk {
        record: BoundRecord::inequality_with_tolerance(
            "expected_excess_risk_lower",
            lhs,
            estimate.mean,
            3.0 * estimate.stderr,
        ),
        estimate,
    })
}

/// `(‖f‖²_{H_k}, ‖f‖²_{H_q})` for `f = Σ cᵢ q(·, aᵢ) ∈ M`.
pub fn norms_in_subspace(ind: &InducingSet, points: &Points, c: &DVector<f64>) -> Result<(f64, f64)> {
    if c.len() != points.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            found: c.len(),
        });
    }
    // q(·, a) = k_Z(·)ᵀ k_ZZ⁻¹ k_Z(a), so f has span coefficients k_ZZ⁻¹ k_ZA c
    let alpha = ind.kzz_factor().solve_vec(&(ind.kzx(points)? * c))?;
    let hk = alpha.dot(&(ind.kzz() * &alpha));
    let hq = c.dot(&(ind.q_gram(points)? * c));
    Ok((hk, hq))
}
