//! Random desk-scale instances shared by unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{synth_prior_dataset, Dataset};
use crate::kernels::{Kernel, Points};
use crate::nystrom::{select_inducing, InducingSet, SelectionStrategy};

pub(crate) struct Instance {
    pub kernel: Kernel,
    pub data: Dataset,
    pub inducing: InducingSet,
    pub noise_var: f64,
}

pub(crate) fn random_inputs(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Points {
    let half = if d == 1 { 5.0 } else { 3.0 };
    Points::new((0..n * d).map(|_| rng.random_range(-half..half)).collect(), d).unwrap()
}

/// Gaussian γ=1, prior-drawn targets with ‖y‖ ≤ 10, greedy inducing points.
pub(crate) fn instance(seed: u64, n: usize, d: usize, m: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kernel = Kernel::gaussian(1.0, d).unwrap();
    let noise_var = 0.1;
    let x = random_inputs(&mut rng, n, d);
    let data = synth_prior_dataset(&kernel, &x, noise_var, seed)
        .unwrap()
        .clamp_target_norm(10.0)
        .unwrap();
    let inducing = select_inducing(&kernel, data.inputs(), m, SelectionStrategy::GreedyTrace)
        .unwrap()
        .inducing;
    Instance {
        kernel,
        data,
        inducing,
        noise_var,
    }
}

/// Instance with `Z = X`.
pub(crate) fn full_instance(seed: u64, n: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kernel = Kernel::gaussian(1.0, 1).unwrap();
    // spacing keeps k_XX well conditioned
    let mut xs: Vec<f64> = (0..n).map(|i| -5.0 + 10.0 * i as f64 / (n - 1) as f64).collect();
    for x in &mut xs {
        *x += rng.random_range(-0.05..0.05);
    }
    let data = synth_prior_dataset(&kernel, &Points::from_scalars(&xs), 0.1, seed).unwrap();
    let inducing = InducingSet::new(&kernel, data.inputs().clone()).unwrap();
    Instance {
        kernel,
        data,
        inducing,
        noise_var: 0.1,
    }
}
