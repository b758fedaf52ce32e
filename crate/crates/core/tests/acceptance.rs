//! Acceptance suite: one line per criterion, all asserted at the end.
//!
//! Oracles here are computed with plain nalgebra from the Gaussian kernel
//! formula, independently of the library's factor and solve paths.

use std::io::Write;
use std::process::Command;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nystrom_svgp::data::{synth_prior_dataset, Dataset};
use nystrom_svgp::diagnostics::{
    burt_upper_bound, derivative_gap_bound, excess_risk, excess_risk_identity, excess_risk_upper_bound,
    expected_excess_risk_lower_bound, expected_kl_sandwich, kl_to_exact_posterior, kl_two_path, norms_in_subspace,
    rkhs_distance_bound, sup_norm_consequence, worst_case_decomposition,
};
use nystrom_svgp::harness::fd_mu_gradient;
use nystrom_svgp::kernels::{Kernel, Points};
use nystrom_svgp::nystrom::{fit_nystrom, select_inducing, InducingSet, SelectionStrategy};
use nystrom_svgp::svgp::{fixed_point_solver, optimal_parameters, optimal_posterior, SvgpState};

const NOISE_VAR: f64 = 0.1;
const MC_DRAWS: usize = 2000;

struct Instance {
    data: Dataset,
    ind: InducingSet,
    half: f64,
}

impl Instance {
    fn n(&self) -> usize {
        self.data.len()
    }

    fn d(&self) -> usize {
        self.data.dim()
    }

    fn ridge(&self) -> f64 {
        NOISE_VAR / self.n() as f64
    }

    fn x(&self) -> &Points {
        self.data.inputs()
    }

    fn z(&self) -> &Points {
        self.ind.points()
    }

    fn y(&self) -> &DVector<f64> {
        self.data.targets()
    }

    fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.d()).map(|_| rng.random_range(-self.half..self.half)).collect()
    }
}

/// Instance `i`: d ∈ {1,2}, n ∈ {40,60,100}, m ∈ 1..=12, gaussian γ=1, ‖y‖ ≤ 10.
fn instance(i: usize) -> Instance {
    let d = 1 + i % 2;
    let n = [40, 60, 100][i % 3];
    let m = 1 + (i * 7 + 3) % 12;
    let seed = 10_000 + i as u64;
    let half = if d == 1 { 5.0 } else { 3.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Points::new((0..n * d).map(|_| rng.random_range(-half..half)).collect(), d).unwrap();
    let kernel = Kernel::gaussian(1.0, d).unwrap();
    let data = synth_prior_dataset(&kernel, &x, NOISE_VAR, seed)
        .unwrap()
        .clamp_target_norm(10.0)
        .unwrap();
    let ind = select_inducing(&kernel, data.inputs(), m, SelectionStrategy::GreedyTrace)
        .unwrap()
        .inducing;
    Instance { data, ind, half }
}

fn instances(count: usize) -> Vec<Instance> {
    (0..count).map(instance).collect()
}

// ---- dense oracles ----

fn k(a: &[f64], b: &[f64]) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum();
    (-sq).exp()
}

fn gram(a: &Points, b: &Points) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| k(a.row(i), b.row(j)))
}

fn inv(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().cholesky().expect("oracle matrix is SPD").inverse()
}

fn logdet(a: &DMatrix<f64>) -> f64 {
    let l = a.clone().cholesky().expect("oracle matrix is SPD");
    2.0 * l.l().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// `q_AB = k_AZ k_ZZ⁻¹ k_ZB`.
fn q_gram(inst: &Instance, a: &Points, b: &Points) -> DMatrix<f64> {
    gram(a, inst.z()) * inv(&gram(inst.z(), inst.z())) * gram(inst.z(), b)
}

fn point(x: &[f64]) -> Points {
    Points::new(x.to_vec(), x.len()).unwrap()
}

/// Nyström KRR as KRR with the kernel `q`: `f̄(x) = q_xX (q_XX + nλI)⁻¹ y`.
fn oracle_nystrom_krr(inst: &Instance) -> impl Fn(&[f64]) -> f64 + '_ {
    let n = inst.n();
    let qxx = q_gram(inst, inst.x(), inst.x());
    let alpha = inv(&(qxx + DMatrix::identity(n, n) * (n as f64 * inst.ridge()))) * inst.y();
    move |x: &[f64]| (q_gram(inst, &point(x), inst.x()) * &alpha)[0]
}

/// `β̃ = (nλ k_ZZ + k_ZX k_XZ)⁻¹ k_ZX y`.
fn oracle_beta(inst: &Instance) -> DVector<f64> {
    let kzx = gram(inst.z(), inst.x());
    let a = gram(inst.z(), inst.z()) * (inst.n() as f64 * inst.ridge()) + &kzx * kzx.transpose();
    inv(&a) * kzx * inst.y()
}

/// ELBO as expected log-likelihood under the marginals minus `KL(N(μ,Σ) ‖ N(0,k_ZZ))`.
fn oracle_elbo(inst: &Instance, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> f64 {
    let (n, m) = (inst.n(), mu.len());
    let s2 = NOISE_VAR;
    let kzz = gram(inst.z(), inst.z());
    let kinv = inv(&kzz);
    let kxz = gram(inst.x(), inst.z());
    let a = &kxz * &kinv;
    let mean = &a * mu;
    let mut expected = 0.0;
    for i in 0..n {
        let ai = a.row(i);
        let var = 1.0 - (ai * kxz.row(i).transpose())[0] + (ai * sigma * ai.transpose())[0];
        let r = inst.y()[i] - mean[i];
        expected += -0.5 * (2.0 * std::f64::consts::PI * s2).ln() - (r * r + var) / (2.0 * s2);
    }
    let kl = 0.5 * ((&kinv * sigma).trace() + (mu.transpose() * &kinv * mu)[0] - m as f64 + logdet(&kzz) - logdet(sigma));
    expected - kl
}

fn random_state(inst: &Instance, rng: &mut ChaCha8Rng) -> (DVector<f64>, DMatrix<f64>) {
    let m = inst.ind.len();
    let mu = DVector::from_fn(m, |_, _| rng.random_range(-2.0..2.0));
    let b = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
    let sigma = &b * b.transpose() + DMatrix::identity(m, m) * 0.05;
    (mu, sigma)
}

// ---- reporting ----

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: usize, name: &'static str, pass: bool, detail: String) -> Outcome {
    let o = Outcome { id, name, pass, detail };
    // bypasses libtest output capture so the lines show in every run
    let _ = writeln!(
        std::io::stderr(),
        "{} [{:02}] {:<28} {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.id,
        o.name,
        o.detail
    );
    o
}

/// Tracks the largest `err / tol` ratio seen.
#[derive(Default)]
struct Worst {
    ratio: f64,
    err: f64,
    count: usize,
}

impl Worst {
    fn push(&mut self, err: f64, tol: f64) {
        self.count += 1;
        let r = if err.is_finite() { err / tol } else { f64::INFINITY };
        if r > self.ratio || self.count == 1 {
            self.ratio = r;
            self.err = err;
        }
    }

    fn ok(&self) -> bool {
        self.count > 0 && self.ratio <= 1.0
    }

    fn summary(&self) -> String {
        format!("evals={} worst_err={:.3e} worst_err/tol={:.3e}", self.count, self.err, self.ratio)
    }
}

// ---- criteria ----

fn equivalence() -> Outcome {
    let mut w = Worst::default();
    for inst in instances(20) {
        let post = optimal_posterior(&inst.data, &inst.ind, inst.n() as f64 * inst.ridge()).unwrap();
        let fbar = oracle_nystrom_krr(&inst);
        let nys = fit_nystrom(&inst.data, &inst.ind, inst.ridge()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for g in 0..200 {
            let x = if inst.d() == 1 {
                vec![-inst.half + 2.0 * inst.half * g as f64 / 199.0]
            } else {
                inst.random_point(&mut rng)
            };
            let m_star = post.mean(&x).unwrap();
            w.push((m_star - fbar(&x)).abs(), 1e-8);
            w.push((m_star - nys.predict(&x).unwrap()).abs(), 1e-8);
        }
    }
    outcome(1, "svgp_mean_equals_nystrom_krr", w.ok(), w.summary())
}

fn elbo_decomposition() -> Outcome {
    let mut w = Worst::default();
    let mut diff = Worst::default();
    let mut oracle = Worst::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for inst in instances(10) {
        let mut prev: Option<(f64, f64)> = None;
        for _ in 0..5 {
            let (mu, sigma) = random_state(&inst, &mut rng);
            let state = SvgpState::new(&inst.ind, mu.clone(), sigma.clone()).unwrap();
            let l = state.elbo(&inst.data, NOISE_VAR).unwrap();
            let target = -2.0 * NOISE_VAR * l;
            let b = state.elbo_breakdown(&inst.data, NOISE_VAR).unwrap();
            w.push((b.four_term_sum() + b.log_normalizer - target).abs(), 1e-8 * target.abs().max(1.0));
            let lo = oracle_elbo(&inst, &mu, &sigma);
            oracle.push((lo - l).abs(), 1e-8 * l.abs().max(1.0));
            // constant-free form: differences between states
            if let Some((s_prev, t_prev)) = prev {
                let lhs = b.four_term_sum() - s_prev;
                let rhs = target - t_prev;
                diff.push((lhs - rhs).abs(), 1e-8 * target.abs().max(t_prev.abs()).max(1.0));
            }
            prev = Some((b.four_term_sum(), target));
        }
    }
    let pass = w.ok() && diff.ok() && oracle.ok();
    let detail = format!(
        "{} | differences {} | elbo-vs-oracle worst_err/tol={:.3e}",
        w.summary(),
        diff.summary(),
        oracle.ratio
    );
    outcome(2, "elbo_four_term_decomposition", pass, detail)
}

fn span_coefficients() -> Outcome {
    let mut w = Worst::default();
    for inst in instances(20) {
        let opt = optimal_parameters(&inst.data, &inst.ind, inst.n() as f64 * inst.ridge()).unwrap();
        let alpha = opt.span_coefficients().unwrap();
        let beta = oracle_beta(&inst);
        let scale = beta.amax().max(1.0);
        w.push((alpha - &beta).amax(), 1e-8 * scale);
    }
    outcome(3, "psi_of_optimum_is_beta", w.ok(), w.summary())
}

fn optimality() -> Outcome {
    let mut violations = Worst::default();
    let mut grad = Worst::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for inst in instances(10) {
        let opt = optimal_parameters(&inst.data, &inst.ind, NOISE_VAR).unwrap();
        let l_opt = opt.elbo(&inst.data, NOISE_VAR).unwrap();
        let m = inst.ind.len();
        for p in 0..100 {
            let scale = [1e-3, 1e-1, 1.0][p % 3];
            let mu = opt.mu() + DVector::from_fn(m, |_, _| scale * rng.random_range(-1.0..1.0));
            let mut lower = opt.sigma_factor().lower().clone();
            for i in 0..m {
                for j in 0..=i {
                    lower[(i, j)] += scale * 0.1 * rng.random_range(-1.0..1.0);
                }
                lower[(i, i)] = lower[(i, i)].abs().max(1e-6);
            }
            let pert = SvgpState::from_factor(&inst.ind, mu, lower).unwrap();
            let l = pert.elbo(&inst.data, NOISE_VAR).unwrap();
            // a violation is l > l_opt beyond rounding
            violations.push((l - l_opt).max(0.0), 1e-10 * l_opt.abs().max(1.0));
        }
        grad.push(fd_mu_gradient(&opt, &inst.data, NOISE_VAR).unwrap(), 1e-5);
    }
    let pass = violations.ok() && grad.ok();
    let detail = format!(
        "perturbations={} worst_excess={:.3e} | fd_gradient max={:.3e}",
        violations.count, violations.err, grad.err
    );
    outcome(4, "closed_form_maximizes_elbo", pass, detail)
}

fn kl_paths() -> Outcome {
    let mut w = Worst::default();
    for inst in instances(20) {
        let kl = kl_two_path(&inst.data, &inst.ind, NOISE_VAR).unwrap();
        w.push(kl.mismatch(), 1e-8 * kl.via_elbo.abs().max(1.0));
    }
    // Z = X on a well-spaced grid
    let mut full = Worst::default();
    let kernel = Kernel::gaussian(1.0, 1).unwrap();
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let xs: Vec<f64> = (0..15).map(|i| -5.0 + i as f64 * 0.7 + rng.random_range(-0.05..0.05)).collect();
        let data = synth_prior_dataset(&kernel, &Points::from_scalars(&xs), NOISE_VAR, seed).unwrap();
        let ind = InducingSet::new(&kernel, data.inputs().clone()).unwrap();
        full.push(kl_to_exact_posterior(&data, &ind, NOISE_VAR).unwrap().abs(), 1e-8);
    }
    let pass = w.ok() && full.ok();
    outcome(5, "kl_two_path_identity", pass, format!("{} | Z=X max|KL|={:.3e}", w.summary(), full.err))
}

fn burt() -> Outcome {
    let (mut evals, mut violations) = (0, 0);
    let mut min_slack = f64::INFINITY;
    for inst in instances(50) {
        let b = burt_upper_bound(&inst.data, &inst.ind, NOISE_VAR).unwrap();
        for r in b.records() {
            evals += 1;
            min_slack = min_slack.min(r.slack);
            if !r.holds {
                violations += 1;
            }
        }
    }
    outcome(
        6,
        "kl_upper_bound",
        violations == 0,
        format!("evals={evals} violations={violations} min_slack={min_slack:.3e}"),
    )
}

/// Literal regularized risk `(1/n)Σ(y−f)² + λ‖f‖²` from oracle fits.
fn oracle_excess(inst: &Instance) -> f64 {
    let n = inst.n();
    let nl = n as f64 * inst.ridge();
    let kxx = gram(inst.x(), inst.x());
    let c = inv(&(&kxx + DMatrix::identity(n, n) * nl)) * inst.y();
    let fhat = &kxx * &c;
    let norm_hat = c.dot(&(&kxx * &c));
    let beta = oracle_beta(inst);
    let fbar = gram(inst.x(), inst.z()) * &beta;
    let norm_bar = beta.dot(&(gram(inst.z(), inst.z()) * &beta));
    let risk = |f: &DVector<f64>, norm: f64| (inst.y() - f).norm_squared() / n as f64 + inst.ridge() * norm;
    risk(&fbar, norm_bar) - risk(&fhat, norm_hat)
}

fn excess() -> Outcome {
    let mut identity = Worst::default();
    let mut oracle = Worst::default();
    let mut violations = 0;
    let mut evals = 0;
    for inst in instances(50) {
        let id = excess_risk_identity(&inst.data, &inst.ind, inst.ridge()).unwrap();
        identity.push((id.lhs - id.rhs).abs(), 1e-8 * id.rhs.abs().max(1.0));
        let ex = excess_risk(&inst.data, &inst.ind, inst.ridge()).unwrap();
        let o = oracle_excess(&inst);
        oracle.push((ex - o).abs(), 1e-8 * o.abs().max(1.0));
        let b = excess_risk_upper_bound(&inst.data, &inst.ind, inst.ridge()).unwrap();
        for r in [&b.trace, &b.opnorm] {
            evals += 1;
            if !r.holds || ex > r.rhs * (1.0 + 1e-8) {
                violations += 1;
            }
        }
    }
    let pass = identity.ok() && oracle.ok() && violations == 0;
    let detail = format!(
        "identity {} | vs oracle worst_err/tol={:.3e} | bound evals={evals} violations={violations}",
        identity.summary(),
        oracle.ratio
    );
    outcome(7, "excess_risk_identity_and_bound", pass, detail)
}

fn rkhs() -> Outcome {
    let (mut evals, mut violations) = (0, 0);
    let mut sup = 0;
    let mut min_slack = f64::INFINITY;
    for (i, inst) in instances(50).into_iter().enumerate() {
        let r = rkhs_distance_bound(&inst.data, &inst.ind, inst.ridge()).unwrap();
        evals += 1;
        min_slack = min_slack.min(r.slack);
        violations += usize::from(!r.holds);
        let mut rng = ChaCha8Rng::seed_from_u64(800 + i as u64);
        let rows: Vec<Vec<f64>> = (0..100).map(|_| inst.random_point(&mut rng)).collect();
        for rec in sup_norm_consequence(&inst.data, &inst.ind, inst.ridge(), &Points::from_rows(&rows).unwrap()).unwrap() {
            sup += 1;
            violations += usize::from(!rec.holds);
        }
    }
    outcome(
        8,
        "rkhs_distance_bound",
        violations == 0 && sup >= 50 * 100,
        format!("bounds={evals} pointwise={sup} violations={violations} min_slack={min_slack:.3e}"),
    )
}

fn derivative() -> Outcome {
    let (mut evals, mut violations) = (0, 0);
    let mut worst = f64::NEG_INFINITY;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for inst in instances(20) {
        let x = inst.random_point(&mut rng);
        let j = rng.random_range(0..inst.d());
        let r = derivative_gap_bound(&inst.data, &inst.ind, NOISE_VAR, &x, j).unwrap();
        evals += 1;
        let ok = r.lhs <= r.rhs + 1e-4 * r.rhs.max(1.0);
        violations += usize::from(!ok || !r.holds);
        worst = worst.max(r.lhs - r.rhs);
    }
    outcome(
        9,
        "derivative_gap_bound",
        violations == 0 && evals == 20,
        format!("pairs={evals} violations={violations} max(lhs-rhs)={worst:.3e}"),
    )
}

fn worst_case() -> Outcome {
    let mut w = Worst::default();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for inst in instances(10) {
        for _ in 0..100 {
            let x = inst.random_point(&mut rng);
            let r = worst_case_decomposition(&inst.data, &inst.ind, NOISE_VAR, &x).unwrap();
            w.push((r.lhs - r.rhs).abs(), 1e-8);
        }
    }
    outcome(10, "worst_case_decomposition", w.ok(), w.summary())
}

fn expected_kl() -> Outcome {
    let mut fails = 0;
    let mut detail = Vec::new();
    for (i, inst) in instances(10).into_iter().enumerate() {
        let s = expected_kl_sandwich(inst.x(), &inst.ind, NOISE_VAR, MC_DRAWS, 1100 + i as u64).unwrap();
        let band = 3.0 * s.estimate.stderr;
        let meets = s.lower <= s.estimate.mean + band && s.upper >= s.estimate.mean - band;
        fails += usize::from(!meets || !s.holds || s.estimate.samples != MC_DRAWS);
        if i < 3 {
            detail.push(format!("[{:.3e},{:.3e}]∋{:.3e}±{:.1e}", s.lower, s.upper, s.estimate.mean, band));
        }
    }
    outcome(
        11,
        "expected_kl_sandwich",
        fails == 0,
        format!("instances=10 draws={MC_DRAWS} failures={fails} e.g. {}", detail.join(" ")),
    )
}

fn expected_excess() -> Outcome {
    let mut fails = 0;
    let mut min_margin = f64::INFINITY;
    for (i, inst) in instances(10).into_iter().enumerate() {
        let e = expected_excess_risk_lower_bound(inst.x(), &inst.ind, inst.ridge(), MC_DRAWS, 1200 + i as u64).unwrap();
        // compare on the (nλ)-rescaled risk: (1/n) log det ratio ≤ E[ΔR]/(nλ) + 3 stderr/(nλ)
        let n = inst.n() as f64;
        let nl = n * inst.ridge();
        let kxx = gram(inst.x(), inst.x()) + DMatrix::identity(inst.n(), inst.n()) * nl;
        let qxx = q_gram(&inst, inst.x(), inst.x()) + DMatrix::identity(inst.n(), inst.n()) * nl;
        let lhs = (logdet(&kxx) - logdet(&qxx)) / n;
        let rhs = (e.estimate.mean + 3.0 * e.estimate.stderr) / nl;
        min_margin = min_margin.min(rhs - lhs);
        let lib_lhs_agrees = (e.record.lhs / nl - lhs).abs() <= 1e-8 * lhs.abs().max(1.0);
        fails += usize::from(lhs > rhs || !e.record.holds || !lib_lhs_agrees);
    }
    outcome(
        12,
        "expected_excess_lower_bound",
        fails == 0,
        format!("instances=10 draws={MC_DRAWS} failures={fails} min_margin={min_margin:.3e}"),
    )
}

fn fixed_point() -> Outcome {
    let mut w = Worst::default();
    let mut max_iters = 0;
    let mut errors = 0;
    for inst in instances(20) {
        let opt = optimal_parameters(&inst.data, &inst.ind, NOISE_VAR).unwrap();
        match fixed_point_solver(&inst.data, &inst.ind, NOISE_VAR, 10, 1e-10) {
            Ok(fp) => {
                max_iters = max_iters.max(fp.iterations);
                let gap = (fp.state.mu() - opt.mu())
                    .amax()
                    .max((fp.state.sigma() - opt.sigma()).amax());
                w.push(gap, 1e-6);
            }
            Err(_) => errors += 1,
        }
    }
    let pass = w.ok() && errors == 0 && max_iters <= 10;
    outcome(13, "fixed_point_solver", pass, format!("{} max_iterations={max_iters} errors={errors}", w.summary()))
}

fn subspace_norms() -> Outcome {
    let mut w = Worst::default();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for inst in instances(10) {
        for _ in 0..50 {
            let p = rng.random_range(1..=6);
            let rows: Vec<Vec<f64>> = (0..p).map(|_| inst.random_point(&mut rng)).collect();
            let pts = Points::from_rows(&rows).unwrap();
            let c = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
            let (hk, hq) = norms_in_subspace(&inst.ind, &pts, &c).unwrap();
            // reproducing property of q: ‖Σ cᵢ q(·,aᵢ)‖²_{H_q} = cᵀ q_AA c
            let oracle_hq = c.dot(&(q_gram(&inst, &pts, &pts) * &c));
            let scale = oracle_hq.abs().max(1e-12);
            w.push((hk - hq).abs(), 1e-8 * scale);
            w.push((hq - oracle_hq).abs(), 1e-8 * scale.max(1.0));
        }
    }
    outcome(14, "subspace_norms_agree", w.ok(), w.summary())
}

fn determinism() -> Outcome {
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_nystrom-svgp"))
            .args(["verify", "--format", "json", "--mc-samples", "500", "--n", "40", "--d", "2", "--m", "6"])
            .output()
            .expect("binary runs")
    };
    let (a, b) = (run(), run());
    let identical = a.stdout == b.stdout && !a.stdout.is_empty();
    let parses = serde_json::from_slice::<serde_json::Value>(&a.stdout).is_ok();
    outcome(
        15,
        "verify_json_is_deterministic",
        identical && parses,
        format!("bytes={} identical={identical} valid_json={parses}", a.stdout.len()),
    )
}

#[test]
fn acceptance_criteria() {
    let criteria: [fn() -> Outcome; 15] = [
        equivalence,
        elbo_decomposition,
        span_coefficients,
        optimality,
        kl_paths,
        burt,
        excess,
        rkhs,
        derivative,
        worst_case,
        expected_kl,
        expected_excess,
        fixed_point,
        subspace_norms,
        determinism,
    ];
    let _ = writeln!(std::io::stderr());
    let results: Vec<Outcome> = criteria.iter().map(|f| f()).collect();
    let failed: Vec<String> = results
        .iter()
        .filter(|o| !o.pass)
        .map(|o| format!("{:02} {}", o.id, o.name))
        .collect();
    let _ = writeln!(std::io::stderr(), "acceptance: {}/15 passed", 15 - failed.len());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
