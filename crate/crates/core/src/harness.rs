//! Experiment configuration and the full verification run.

use std::path::PathBuf;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{load_csv, synth_fixed_function_dataset, synth_prior_dataset, Dataset, TestFunction};
use crate::diagnostics::{self, BoundKind, BoundRecord};
use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelFamily, Points};
use crate::linalg::max_abs_diff;
use crate::nystrom::{fit_nystrom, fit_nystrom_via_q, select_inducing, InducingSet, SelectionStrategy};
use crate::report::{CheckEntry, VerificationReport};
use crate::svgp::{fixed_point_solver, optimal_parameters, optimal_posterior, SvgpState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// `y ~ N(0, k_XX + σ²I)`.
    Prior,
    /// `y = f0(X) + ε`.
    Function { function: TestFunction },
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative tolerance for two-path identities.
    pub identity_rtol: f64,
    /// Bound on the finite-difference ELBO gradient at the optimum.
    pub gradient_norm: f64,
    /// Max-abs agreement of the fixed-point solver with the closed form.
    pub solver_match: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            identity_rtol: 1e-8,
            gradient_norm: 1e-5,
            solver_match: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kernel: KernelFamily,
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub noise_var: Option<f64>,
    pub ridge: Option<f64>,
    /// Both `noise_var` and `ridge` were given and must satisfy `σ² = nλ`.
    pub link_noise_ridge: bool,
    pub selection: SelectionStrategy,
    pub seed: u64,
    pub mc_samples: usize,
    pub data: DataSource,
    /// Cap on `‖y‖` for synthetic targets.
    pub target_norm_cap: Option<f64>,
    /// Random probes per sampled check.
    pub probes: usize,
    pub grid_points: usize,
    pub tolerances: Tolerances,
    pub record_timings: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kernel: KernelFamily::Gaussian { lengthscale: 1.0 },
            n: 60,
            d: 1,
            m: 8,
            noise_var: Some(0.1),
            ridge: None,
            link_noise_ridge: false,
            selection: SelectionStrategy::GreedyTrace,
            seed: 7,
            mc_samples: 2000,
            data: DataSource::Prior,
            target_norm_cap: Some(10.0),
            probes: 100,
            grid_points: 200,
            tolerances: Tolerances::default(),
            record_timings: false,
        }
    }
}

/// Noise variance and ridge after applying the `σ² = nλ` link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularization {
    pub noise_var: f64,
    pub ridge: f64,
    pub linked: bool,
}

impl ExperimentConfig {
    pub fn regularization(&self, n: usize) -> Result<Regularization> {
        let nf = n as f64;
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(Error::InvalidInput(format!("{name} must be positive, got {v}")))
            }
        };
        match (self.noise_var, self.ridge) {
            (Some(s), None) => {
                let s = positive("noise variance", s)?;
                Ok(Regularization { noise_var: s, ridge: s / nf, linked: true })
            }
            (None, Some(l)) => {
                let l = positive("ridge", l)?;
                Ok(Regularization { noise_var: nf * l, ridge: l, linked: true })
            }
            (Some(_), Some(_)) if self.link_noise_ridge => Err(Error::InvalidInput(
                "with the noise/ridge link give exactly one of noise variance and ridge".into(),
            )),
            (Some(s), Some(l)) => Ok(Regularization {
                noise_var: positive("noise variance", s)?,
                ridge: positive("ridge", l)?,
                linked: false,
            }),
            (None, None) => Err(Error::InvalidInput("one of noise variance and ridge is required".into())),
        }
    }

    pub fn build_kernel(&self, d: usize) -> Result<Kernel> {
        Kernel::new(self.kernel, d)
    }

    /// Half-width of the input box for synthetic data.
    pub fn input_half_width(&self) -> f64 {
        if self.d == 1 {
            5.0
        } else {
            3.0
        }
    }

    pub fn build_dataset(&self, noise_var: f64) -> Result<Dataset> {
        if let DataSource::Csv { path } = &self.data {
            return load_csv(path);
        }
        if self.n == 0 || self.d == 0 {
            return Err(Error::InvalidCount(format!("n and d must be positive, got n={} d={}", self.n, self.d)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let h = self.input_half_width();
        let inputs = Points::new((0..self.n * self.d).map(|_| rng.random_range(-h..h)).collect(), self.d)?;
        let data_seed = self.seed.wrapping_add(1);
        let data = match &self.data {
            DataSource::Prior => synth_prior_dataset(&self.build_kernel(self.d)?, &inputs, noise_var, data_seed)?,
            DataSource::Function { function } => synth_fixed_function_dataset(*function, &inputs, noise_var, data_seed)?,
            DataSource::Csv { .. } => unreachable!(),
        };
        match self.target_norm_cap {
            Some(cap) => data.clamp_target_norm(cap),
            None => Ok(data),
        }
    }
}

/// Everything a check needs, built once per run.
pub struct Context {
    pub config: ExperimentConfig,
    pub kernel: Kernel,
    pub data: Dataset,
    pub inducing: InducingSet,
    pub reg: Regularization,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Context {
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        // n is only known after loading a CSV; resolve σ² with the nominal n first
        let nominal = config.regularization(config.n.max(1))?;
        let data = config.build_dataset(nominal.noise_var)?;
        let reg = config.regularization(data.len())?;
        let kernel = config.build_kernel(data.dim())?;
        let inducing = select_inducing(&kernel, data.inputs(), config.m, config.selection)?.inducing;
        let d = data.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for row in data.inputs().rows() {
            for j in 0..d {
                lo[j] = lo[j].min(row[j]);
                hi[j] = hi[j].max(row[j]);
            }
        }
        Ok(Self {
            config: config.clone(),
            kernel,
            data,
            inducing,
            reg,
            lo,
            hi,
        })
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(stream);
        rng
    }

    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&a, &b)| if b > a { rng.random_range(a..b) } else { a })
            .collect()
    }

    /// Random point not equal to any training input.
    fn fresh_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        loop {
            let x = self.random_point(rng);
            if self.data.inputs().position(&x).is_none() {
                return x;
            }
        }
    }

    /// Even grid for `d = 1`, uniform draws in the bounding box otherwise.
    fn grid(&self, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        let g = self.config.grid_points.max(2);
        if self.lo.len() == 1 {
            let (a, b) = (self.lo[0], self.hi[0]);
            (0..g).map(|i| vec![a + (b - a) * i as f64 / (g - 1) as f64]).collect()
        } else {
            (0..g).map(|_| self.random_point(rng)).collect()
        }
    }

    fn random_state(&self, rng: &mut ChaCha8Rng) -> Result<SvgpState> {
        let m = self.inducing.len();
        let mu = DVector::from_fn(m, |_, _| rng.random_range(-2.0..2.0));
        let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        let sigma = &a * a.transpose() + DMatrix::identity(m, m) * 1e-6;
        SvgpState::new(&self.inducing, mu, sigma)
    }
}

/// Checks in canonical report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    Equivalence,
    ElboDecomposition,
    Optimality,
    KlTwoPath,
    BurtBound,
    ExcessRisk,
    RkhsDistance,
    DerivativeBound,
    WorstCase,
    ExpectedKl,
    ExpectedExcessRisk,
    SpanCoefficients,
    FixedPoint,
    SubspaceNorms,
}

impl Check {
    pub const ALL: [Check; 14] = [
        Check::Equivalence,
        Check::ElboDecomposition,
        Check::Optimality,
        Check::KlTwoPath,
        Check::BurtBound,
        Check::ExcessRisk,
        Check::RkhsDistance,
        Check::DerivativeBound,
        Check::WorstCase,
        Check::ExpectedKl,
        Check::ExpectedExcessRisk,
        Check::SpanCoefficients,
        Check::FixedPoint,
        Check::SubspaceNorms,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Equivalence => "equivalence",
            Check::ElboDecomposition => "elbo_decomposition",
            Check::Optimality => "optimality",
            Check::KlTwoPath => "kl_two_path",
            Check::BurtBound => "burt_bound",
            Check::ExcessRisk => "excess_risk",
            Check::RkhsDistance => "rkhs_distance",
            Check::DerivativeBound => "derivative_bound",
            Check::WorstCase => "worst_case",
            Check::ExpectedKl => "expected_kl",
            Check::ExpectedExcessRisk => "expected_excess_risk",
            Check::SpanCoefficients => "span_coefficients",
            Check::FixedPoint => "fixed_point",
            Check::SubspaceNorms => "subspace_norms",
        }
    }

    pub fn from_name(name: &str) -> Option<Check> {
        Check::ALL.into_iter().find(|c| c.name() == name)
    }

    fn needs_link(self) -> bool {
        matches!(self, Check::Equivalence | Check::SpanCoefficients)
    }

    fn stream(self) -> u64 {
        Check::ALL.iter().position(|c| *c == self).expect("listed") as u64 + 1
    }
}

fn margin(r: &BoundRecord) -> f64 {
    match r.kind {
        BoundKind::Inequality => r.slack + r.tolerance,
        BoundKind::Identity => r.tolerance - r.slack.abs(),
    }
}

/// Worst record per name, in first-seen order.
fn worst_per_name(records: Vec<BoundRecord>) -> Vec<BoundRecord> {
    let mut out: Vec<BoundRecord> = Vec::new();
    for r in records {
        match out.iter_mut().find(|o| o.name == r.name) {
            Some(o) if margin(&r) < margin(o) => *o = r,
            Some(_) => {}
            None => out.push(r),
        }
    }
    out
}

fn summarize(name: &str, records: Vec<BoundRecord>) -> CheckEntry {
    let count = records.len();
    CheckEntry::from_records(name, count, worst_per_name(records))
}

pub fn run_check(ctx: &Context, check: Check) -> CheckEntry {
    let name = check.name();
    if check.needs_link() && !ctx.reg.linked {
        return CheckEntry::skipped(name, "requires the noise/ridge link");
    }
    let start = Instant::now();
    let mut entry = match evaluate(ctx, check) {
        Ok(records) => summarize(name, records),
        Err(e) => CheckEntry::error(name, &e),
    };
    if ctx.config.record_timings {
        entry.elapsed_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    entry
}

fn evaluate(ctx: &Context, check: Check) -> Result<Vec<BoundRecord>> {
    let (data, ind) = (&ctx.data, &ctx.inducing);
    let Regularization { noise_var: s2, ridge, .. } = ctx.reg;
    let tol = &ctx.config.tolerances;
    let probes = ctx.config.probes;
    let mut rng = ctx.rng(check.stream());
    match check {
        Check::Equivalence => {
            let post = optimal_posterior(data, ind, s2)?;
            let nys = fit_nystrom(data, ind, ridge)?;
            let via_q = fit_nystrom_via_q(data, ind, ridge)?;
            let mut records = Vec::new();
            for x in ctx.grid(&mut rng) {
                let m = post.mean(&x)?;
                let tol_x = tol.identity_rtol * m.abs().max(1.0);
                records.push(BoundRecord::identity("mean_gap_nystrom", (m - nys.predict(&x)?).abs(), 0.0, tol_x));
                records.push(BoundRecord::identity("mean_gap_q_kernel_krr", (m - via_q.predict(&x)?).abs(), 0.0, tol_x));
            }
            Ok(records)
        }
        Check::ElboDecomposition => (0..probes.div_ceil(2))
            .map(|_| {
                let b = ctx.random_state(&mut rng)?.elbo_breakdown(data, s2)?;
                Ok(BoundRecord::identity(
                    "four_terms_plus_constant",
                    b.four_term_sum() + b.log_normalizer,
                    b.total_check,
                    tol.identity_rtol * b.total_check.abs().max(1.0),
                ))
            })
            .collect(),
        Check::Optimality => {
            let opt = optimal_parameters(data, ind, s2)?;
            let best = opt.elbo(data, s2)?;
            let m = ind.len();
            let mut out = Vec::with_capacity(probes + 1);
            for _ in 0..probes {
                let mu = opt.mu() + DVector::from_fn(m, |_, _| rng.random_range(-0.1..0.1));
                let e = DMatrix::from_fn(m, m, |_, _| rng.random_range(-0.05..0.05));
                let a = DMatrix::<f64>::identity(m, m) + e;
                let sigma = &a * opt.sigma() * a.transpose();
                let p = SvgpState::new(ind, mu, sigma)?;
                out.push(BoundRecord::inequality("perturbed_elbo", p.elbo(data, s2)?, best));
            }
            let g = fd_mu_gradient(&opt, data, s2)?;
            out.push(BoundRecord::inequality_with_tolerance("fd_gradient_norm", g, 0.0, tol.gradient_norm));
            Ok(out)
        }
        Check::KlTwoPath => {
            let kl = diagnostics::kl_two_path(data, ind, s2)?;
            Ok(vec![
                BoundRecord::identity(
                    "kl_paths",
                    kl.via_elbo,
                    kl.explicit,
                    tol.identity_rtol * kl.via_elbo.abs().max(1.0),
                ),
                BoundRecord::inequality_with_tolerance("kl_nonnegative", 0.0, kl.via_elbo, 1e-10),
            ])
        }
        Check::BurtBound => Ok(diagnostics::burt_upper_bound(data, ind, s2)?
            .records()
            .into_iter()
            .cloned()
            .collect()),
        Check::ExcessRisk => {
            let e = diagnostics::excess_risk(data, ind, ridge)?;
            let b = diagnostics::excess_risk_upper_bound(data, ind, ridge)?;
            Ok(vec![
                diagnostics::excess_risk_identity(data, ind, ridge)?,
                BoundRecord::inequality_with_tolerance("excess_nonnegative", 0.0, e, 1e-10),
                b.trace,
                b.opnorm,
            ])
        }
        Check::RkhsDistance => {
            let mut out = vec![diagnostics::rkhs_distance_bound(data, ind, ridge)?];
            let pts = random_points(ctx, &mut rng, probes)?;
            out.extend(diagnostics::sup_norm_consequence(data, ind, ridge, &pts)?);
            Ok(out)
        }
        Check::DerivativeBound => (0..20)
            .map(|_| {
                let x = ctx.random_point(&mut rng);
                let j = rng.random_range(0..x.len());
                diagnostics::derivative_gap_bound(data, ind, s2, &x, j)
            })
            .collect(),
        Check::WorstCase => (0..probes)
            .map(|_| {
                let x = ctx.fresh_point(&mut rng);
                diagnostics::worst_case_decomposition(data, ind, s2, &x)
            })
            .collect(),
        Check::ExpectedKl => {
            let seed = rng.random();
            let s = diagnostics::expected_kl_sandwich(data.inputs(), ind, s2, ctx.config.mc_samples, seed)?;
            let band = 3.0 * s.estimate.stderr;
            Ok(vec![
                BoundRecord::inequality_with_tolerance("kl_lower", s.lower, s.estimate.mean, band),
                BoundRecord::inequality_with_tolerance("kl_upper", s.estimate.mean, s.upper, band),
            ])
        }
        Check::ExpectedExcessRisk => {
            let seed = rng.random();
            let r = diagnostics::expected_excess_risk_lower_bound(
                data.inputs(),
                ind,
                ridge,
                ctx.config.mc_samples,
                seed,
            )?;
            Ok(vec![r.record])
        }
        Check::SpanCoefficients => {
            let opt = optimal_parameters(data, ind, s2)?;
            let nys = fit_nystrom(data, ind, ridge)?;
            let alpha = opt.span_coefficients()?;
            let gap = (alpha - nys.beta()).amax();
            let scale = nys.beta().amax().max(1.0);
            Ok(vec![BoundRecord::identity("psi_of_optimum", gap, 0.0, tol.identity_rtol * scale)])
        }
        Check::FixedPoint => {
            let fp = fixed_point_solver(data, ind, s2, 10, 1e-10)?;
            let opt = optimal_parameters(data, ind, s2)?;
            let gap = (fp.state.mu() - opt.mu()).amax().max(max_abs_diff(fp.state.sigma(), opt.sigma()));
            Ok(vec![
                BoundRecord::identity("solver_vs_closed_form", gap, 0.0, tol.solver_match),
                BoundRecord::inequality_with_tolerance("iterations", fp.iterations as f64, 10.0, 0.0),
            ])
        }
        Check::SubspaceNorms => (0..probes.div_ceil(2))
            .map(|_| {
                let pts = random_points(ctx, &mut rng, 5)?;
                let c = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
                let (hk, hq) = diagnostics::norms_in_subspace(ind, &pts, &c)?;
                Ok(BoundRecord::identity("hk_vs_hq", hq, hk, tol.identity_rtol * hk.abs().max(f64::MIN_POSITIVE)))
            })
            .collect(),
    }
}

fn random_points(ctx: &Context, rng: &mut ChaCha8Rng, count: usize) -> Result<Points> {
    let d = ctx.data.dim();
    let flat: Vec<f64> = (0..count).flat_map(|_| ctx.random_point(rng)).collect();
    Points::new(flat, d)
}

/// `‖∇_μ L‖` by central differences with step `1e-5`.
pub fn fd_mu_gradient(state: &SvgpState, data: &Dataset, noise_var: f64) -> Result<f64> {
    let h = diagnostics::FD_STEP;
    let mut sq = 0.0;
    for j in 0..state.mu().len() {
        let mut up = state.mu().clone();
        up[j] += h;
        let mut dn = state.mu().clone();
        dn[j] -= h;
        let fu = SvgpState::from_factor(state.inducing(), up, state.sigma_factor().lower().clone())?.elbo(data, noise_var)?;
        let fd = SvgpState::from_factor(state.inducing(), dn, state.sigma_factor().lower().clone())?.elbo(data, noise_var)?;
        let g = (fu - fd) / (2.0 * h);
        sq += g * g;
    }
    Ok(sq.sqrt())
}

/// Runs `checks` (in the given order) against a freshly built context.
pub fn run_checks(config: &ExperimentConfig, checks: &[Check]) -> VerificationReport {
    let entries = match Context::build(config) {
        Ok(ctx) => checks.par_iter().map(|c| run_check(&ctx, *c)).collect(),
        Err(e) => vec![CheckEntry::error("setup", &e)],
    };
    VerificationReport::new(config.clone(), entries)
}

/// The full suite in canonical order. Errors are recorded, never raised.
pub fn run_verification(config: &ExperimentConfig) -> VerificationReport {
    run_checks(config, &Check::ALL)
}
