//! Reproducible problem instances used by tests, benchmarks and the CLI.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{ExpTerm, InitialState, KernelSpec, ReferenceSignal, SystemSpec, TimeGrid};

/// A plant together with an initial state and a reference signal.
#[derive(Debug, Clone)]
pub struct Instance {
    pub grid: TimeGrid,
    pub sys: SystemSpec,
    pub xi: InitialState,
    pub y: ReferenceSignal,
}

/// Entries uniform in `[-scale, scale]`.
pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..=scale))
}

/// Random plant with `N(t) = G e^{-t}` and a smooth random reference, started at node 0.
///
/// The same seed gives the same matrices for every grid, so refinement studies
/// compare like with like.
pub fn random_instance(seed: u64, d: usize, m: usize, p: usize, grid: &TimeGrid) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_matrix(&mut rng, d, d, 1.0);
    let b = random_matrix(&mut rng, d, m, 1.0);
    let c = random_matrix(&mut rng, p, d, 1.0);
    let g = random_matrix(&mut rng, d, d, 0.5);
    let head = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..=1.0));
    let amp: Vec<(f64, f64, f64)> =
        (0..p).map(|_| (rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0), rng.gen_range(1.0..=3.0))).collect();
    let kernel = KernelSpec::Exponential(vec![ExpTerm { weight: g, rate: 1.0 }]);
    let sys = SystemSpec::sampled(a, b, c, &kernel, grid)?;
    let y = ReferenceSignal::from_fn(grid, |t| DVector::from_fn(p, |j, _| amp[j].0 + amp[j].1 * (amp[j].2 * t).sin()));
    Ok(Instance { grid: *grid, sys, xi: InitialState::at_origin(head), y })
}

/// A smooth random history `xi_tilde(s) = a + b cos(c s)` on `[0, t_k]` with head `head`.
pub fn random_history(seed: u64, grid: &TimeGrid, k: usize, head: DVector<f64>) -> Result<InitialState> {
    let d = head.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coef: Vec<(f64, f64, f64)> =
        (0..d).map(|_| (rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0), rng.gen_range(0.5..=2.0))).collect();
    InitialState::from_fn(grid, k, head, |s| DVector::from_fn(d, |j, _| coef[j].0 + coef[j].1 * (coef[j].2 * s).cos()))
}

/// Scalar plant `w' = a w + int_0^t g w + b u` with output `c w`.
pub fn scalar_system(a: f64, b: f64, c: f64, g: f64, grid: &TimeGrid) -> Result<SystemSpec> {
    let kernel = if g == 0.0 {
        KernelSpec::zero()
    } else {
        KernelSpec::Exponential(vec![ExpTerm { weight: DMatrix::from_element(1, 1, g), rate: 0.0 }])
    };
    let one = |x| DMatrix::from_element(1, 1, x);
    SystemSpec::sampled(one(a), one(b), one(c), &kernel, grid)
}
