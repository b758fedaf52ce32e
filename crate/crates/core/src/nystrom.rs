//! The inducing-point subspace `M = span{k(·, z_j)}`, its orthogonal
//! projection, the approximate kernel `q`, Nyström KRR and the DTC posterior.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{Kernel, Points};
use crate::linalg::{factor_spd_auto, SpdFactor};

/// Inducing inputs `Z` together with a factor of `k_ZZ`.
#[derive(Debug, Clone)]
pub struct InducingSet {
    kernel: Kernel,
    points: Points,
    kzz: DMatrix<f64>,
    kzz_factor: SpdFactor,
}

impl InducingSet {
    /// Rejects empty sets and repeated points (`InvalidCount`) before factoring.
    pub fn new(kernel: &Kernel, points: Points) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidCount("at least one inducing point is required".into()));
        }
        kernel.check_dim(points.dim())?;
        for i in 1..points.len() {
            if let Some(j) = (0..i).find(|&j| points.row(j) == points.row(i)) {
                return Err(Error::InvalidCount(format!(
                    "inducing points {j} and {i} coincide"
                )));
            }
        }
        let kzz = kernel.gram_sym(&points);
        let kzz_factor = factor_spd_auto(&kzz)?;
        Ok(Self {
            kernel: *kernel,
            points,
            kzz,
            kzz_factor,
        })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn kzz(&self) -> &DMatrix<f64> {
        &self.kzz
    }

    pub fn kzz_factor(&self) -> &SpdFactor {
        &self.kzz_factor
    }

    /// `k_Z(x)`.
    pub fn kz(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.kernel.column(&self.points, x)
    }

    /// `k_ZX`, an `m × n` matrix.
    pub fn kzx(&self, x: &Points) -> Result<DMatrix<f64>> {
        self.kernel.gram(&self.points, x)
    }

    /// `P_M f = k_Z(·)ᵀ k_ZZ⁻¹ f_Z`; returns the span coefficients `k_ZZ⁻¹ f_Z`.
    pub fn project(&self, f_at_z: &DVector<f64>) -> Result<DVector<f64>> {
        self.kzz_factor.solve_vec(f_at_z)
    }

    /// `q(x, x') = k_Z(x)ᵀ k_ZZ⁻¹ k_Z(x')`.
    pub fn q(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        let a = self.kzz_factor.solve_lower_vec(&self.kz(x)?)?;
        if x == x2 {
            return Ok(a.norm_squared());
        }
        let b = self.kzz_factor.solve_lower_vec(&self.kz(x2)?)?;
        Ok(a.dot(&b))
    }

    /// `L⁻¹ k_ZA` where `k_ZZ = L Lᵀ`; `q_AB = V_Aᵀ V_B`.
    pub(crate) fn whitened(&self, a: &Points) -> Result<DMatrix<f64>> {
        self.kzz_factor.solve_lower(&self.kzx(a)?)
    }

    /// `q_AA`, PSD by construction.
    pub fn q_gram(&self, a: &Points) -> Result<DMatrix<f64>> {
        let v = self.whitened(a)?;
        Ok(v.transpose() * v)
    }

    /// `k(x_i, x_i) − q(x_i, x_i)` for every row of `x`.
    pub fn residual_diag(&self, x: &Points) -> Result<DVector<f64>> {
        let v = self.whitened(x)?;
        let kd = self.kernel.diag(x);
        Ok(DVector::from_fn(x.len(), |i, _| kd[i] - v.column(i).norm_squared()))
    }

    /// `tr(k_XX − q_XX)`.
    pub fn trace_gap(&self, x: &Points) -> Result<f64> {
        Ok(self.residual_diag(x)?.sum())
    }
}

pub fn project_onto_m(ind: &InducingSet, f_at_z: &DVector<f64>) -> Result<DVector<f64>> {
    ind.project(f_at_z)
}

pub fn approx_kernel_q(ind: &InducingSet, x: &[f64], x2: &[f64]) -> Result<f64> {
    ind.q(x, x2)
}

/// `f̄ = k_Z(·)ᵀ β̃`, the KRR solution restricted to `M`.
#[derive(Debug, Clone)]
pub struct NystromModel {
    inducing: InducingSet,
    beta: DVector<f64>,
    ridge: f64,
}

impl NystromModel {
    pub fn inducing(&self) -> &InducingSet {
        &self.inducing
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.inducing.kz(x)?.dot(&self.beta))
    }

    /// `‖f̄‖²_{H_k} = β̃ᵀ k_ZZ β̃`.
    pub fn rkhs_norm_sq(&self) -> f64 {
        self.beta.dot(&(self.inducing.kzz() * &self.beta))
    }

    /// `‖f̄‖²_{H_q} = β̃ᵀ q_ZZ β̃`.
    pub fn rkhs_norm_sq_q(&self) -> Result<f64> {
        let qzz = self.inducing.q_gram(self.inducing.points())?;
        Ok(self.beta.dot(&(qzz * &self.beta)))
    }

    pub fn fitted(&self, x: &Points) -> Result<DVector<f64>> {
        Ok(self.inducing.kzx(x)?.transpose() * &self.beta)
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be positive, got {v}")))
    }
}

/// `(s·k_ZZ + k_ZX k_XZ)` factored, plus `k_ZX`.
pub(crate) fn regularized_cross_factor(ind: &InducingSet, data: &Dataset, s: f64) -> Result<(DMatrix<f64>, SpdFactor)> {
    let kzx = ind.kzx(data.inputs())?;
    let a = ind.kzz() * s + &kzx * kzx.transpose();
    Ok((kzx, factor_spd_auto(&a)?))
}

/// `β̃ = (nλ k_ZZ + k_ZX k_XZ)⁻¹ k_ZX y`; `O(nm² + m³)`.
pub fn fit_nystrom(data: &Dataset, ind: &InducingSet, ridge: f64) -> Result<NystromModel> {
    check_positive("ridge", ridge)?;
    let n = data.len() as f64;
    let (kzx, factor) = regularized_cross_factor(ind, data, n * ridge)?;
    let beta = factor.solve_vec(&(kzx * data.targets()))?;
    Ok(NystromModel {
        inducing: ind.clone(),
        beta,
        ridge,
    })
}

/// KRR with kernel `q` on the full sample, `q_X(·)ᵀ (q_XX + nλI)⁻¹ y`, re-expressed
/// in `M` coordinates as `β = k_ZZ⁻¹ k_ZX (q_XX + nλI)⁻¹ y`.
pub fn fit_nystrom_via_q(data: &Dataset, ind: &InducingSet, ridge: f64) -> Result<NystromModel> {
    check_positive("ridge", ridge)?;
    let n = data.len();
    let mut qxx = ind.q_gram(data.inputs())?;
    for i in 0..n {
        qxx[(i, i)] += n as f64 * ridge;
    }
    let alpha_q = factor_spd_auto(&qxx)?.solve_vec(data.targets())?;
    let beta = ind.kzz_factor().solve_vec(&(ind.kzx(data.inputs())? * alpha_q))?;
    Ok(NystromModel {
        inducing: ind.clone(),
        beta,
        ridge,
    })
}

/// DTC posterior: GP regression with prior kernel `q`.
#[derive(Debug, Clone)]
pub struct DtcPosterior {
    inducing: InducingSet,
    mean_weights: DVector<f64>,
    cov_factor: SpdFactor,
}

impl DtcPosterior {
    /// `k_Z(x)ᵀ (σ²k_ZZ + k_ZX k_XZ)⁻¹ k_ZX y`.
    pub fn mean(&self, x: &[f64]) -> Result<f64> {
        Ok(self.inducing.kz(x)?.dot(&self.mean_weights))
    }

    /// `q̄(x, x') = k_Z(x)ᵀ (k_ZZ + σ⁻² k_ZX k_XZ)⁻¹ k_Z(x')`.
    pub fn cov(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        let a = self.cov_factor.solve_lower_vec(&self.inducing.kz(x)?)?;
        if x == x2 {
            return Ok(a.norm_squared());
        }
        let b = self.cov_factor.solve_lower_vec(&self.inducing.kz(x2)?)?;
        Ok(a.dot(&b))
    }

    pub fn mean_weights(&self) -> &DVector<f64> {
        &self.mean_weights
    }
}

pub fn dtc_posterior(data: &Dataset, ind: &InducingSet, noise_var: f64) -> Result<DtcPosterior> {
    check_positive("noise variance", noise_var)?;
    let (kzx, mean_factor) = regularized_cross_factor(ind, data, noise_var)?;
    let mean_weights = mean_factor.solve_vec(&(&kzx * data.targets()))?;
    let b = ind.kzz() + (&kzx * kzx.transpose()) / noise_var;
    let cov_factor = factor_spd_auto(&b)?;
    Ok(DtcPosterior {
        inducing: ind.clone(),
        mean_weights,
        cov_factor,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum SelectionStrategy {
    /// `m` distinct indices drawn without replacement.
    Uniform { seed: u64 },
    /// Pivoted Cholesky: repeatedly take the largest residual diagonal `k(x,x) − q(x,x)`.
    GreedyTrace,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub inducing: InducingSet,
    pub indices: Vec<usize>,
}

pub fn select_inducing(kernel: &Kernel, inputs: &Points, m: usize, strategy: SelectionStrategy) -> Result<Selection> {
    let n = inputs.len();
    if m == 0 || m > n {
        return Err(Error::InvalidCount(format!(
            "number of inducing points must be in 1..={n}, got {m}"
        )));
    }
    let indices = match strategy {
        SelectionStrategy::Uniform { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            index::sample(&mut rng, n, m).into_vec()
        }
        SelectionStrategy::GreedyTrace => greedy_pivots(kernel, inputs, m)?,
    };
    let inducing = InducingSet::new(kernel, inputs.select(&indices))?;
    Ok(Selection { inducing, indices })
}

/// Partial pivoted Cholesky of `k_XX`, returning pivot order. Ties go to the
/// lowest index.
fn greedy_pivots(kernel: &Kernel, inputs: &Points, m: usize) -> Result<Vec<usize>> {
    kernel.check_dim(inputs.dim())?;
    let n = inputs.len();
    let mut residual: Vec<f64> = inputs.rows().map(|r| kernel.eval_unchecked(r, r)).collect();
    let floor = 1e-14 * residual.iter().cloned().fold(0.0, f64::max);
    let mut chosen = vec![false; n];
    let mut pivots = Vec::with_capacity(m);
    // columns of the partial factor, each of length n
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(m);

    for _ in 0..m {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if chosen[i] {
                continue;
            }
            if best.is_none_or(|b| residual[i] > residual[b]) {
                best = Some(i);
            }
        }
        let p = best.expect("m <= n leaves an unchosen index");
        chosen[p] = true;
        pivots.push(p);

        let dp = residual[p];
        if dp <= floor {
            continue;
        }
        let scale = dp.sqrt();
        let xp = inputs.row(p);
        let col: Vec<f64> = (0..n)
            .map(|i| {
                let mut v = kernel.eval_unchecked(inputs.row(i), xp);
                for c in &cols {
                    v -= c[i] * c[p];
                }
                v / scale
            })
            .collect();
        for i in 0..n {
            residual[i] -= col[i] * col[i];
        }
        cols.push(col);
    }
    Ok(pivots)
}
