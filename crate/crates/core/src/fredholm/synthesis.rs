use nalgebra::{DMatrix, DVector};

use super::solver::ResolventKernel;
use crate::blocks;
use crate::error::{Error, Result};
use crate::model::{
    trapezoid_weights, ControlSignal, FundamentalMatrix, InitialState, ReferenceSignal, StateTrajectory, SystemSpec, TimeGrid,
};

/// Kernels of the open-loop representation of the optimal costate and trajectory.
///
/// With `p = Q0 xi_hat + int_0^tau Q1 xi_tilde + int_tau^T Q2 y` and
/// `w = H0 xi_hat + int_0^tau H1 xi_tilde + int_tau^T H2 y`, all on local
/// nodes `i = k..=n`. The `Q1`/`H1` second index runs over `0..=k` (empty when `k = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisKernels {
    start: usize,
    d: usize,
    p: usize,
    h: f64,
    b: DMatrix<f64>,
    weights: Vec<f64>,
    q0: DMatrix<f64>,
    q1: DMatrix<f64>,
    q2: DMatrix<f64>,
    h0: DMatrix<f64>,
    h1: DMatrix<f64>,
    h2: DMatrix<f64>,
}

impl SynthesisKernels {
    pub fn start(&self) -> usize {
        self.start
    }

    pub fn q0(&self, i: usize) -> DMatrix<f64> {
        blocks::block(&self.q0, i - self.start, 0, self.d, self.d)
    }

    pub fn q1(&self, i: usize, s: usize) -> DMatrix<f64> {
        blocks::block(&self.q1, i - self.start, s, self.d, self.d)
    }

    pub fn q2(&self, i: usize, l: usize) -> DMatrix<f64> {
        blocks::block(&self.q2, i - self.start, l - self.start, self.d, self.p)
    }

    pub fn h0(&self, i: usize) -> DMatrix<f64> {
        blocks::block(&self.h0, i - self.start, 0, self.d, self.d)
    }

    pub fn h1(&self, i: usize, s: usize) -> DMatrix<f64> {
        blocks::block(&self.h1, i - self.start, s, self.d, self.d)
    }

    pub fn h2(&self, i: usize, l: usize) -> DMatrix<f64> {
        blocks::block(&self.h2, i - self.start, l - self.start, self.d, self.p)
    }

    /// Largest block norm of `H1` and `H2` together.
    pub fn memory_norm(&self) -> f64 {
        let h1 = if self.h1.ncols() == 0 { 0.0 } else { blocks::max_block_norm(&self.h1, self.d, self.d) };
        h1.max(blocks::max_block_norm(&self.h2, self.d, self.p))
    }
}

pub fn synthesis_kernels(
    sys: &SystemSpec,
    z: &FundamentalMatrix,
    r: &ResolventKernel,
    grid: &TimeGrid,
    k: usize,
) -> Result<SynthesisKernels> {
    sys.check_grid(grid)?;
    z.check(grid)?;
    grid.check_index(k, 0)?;
    if r.start() != k {
        return Err(Error::Dimension(format!("resolvent starts at node {}, expected {}", r.start(), k)));
    }
    let n = grid.steps();
    let h = grid.step();
    let (d, p) = (sys.state_dim(), sys.output_dim());
    let nodes = n - k + 1;
    let omega = grid.trapezoid(k, n);
    let ct = sys.c().transpose();

    // phi(i, l) = w^{(i..n)}_l Z(t_l - t_i) C^T
    let mut phi = DMatrix::zeros(nodes * d, nodes * p);
    for i in k..=n {
        for (l, wl) in (i..=n).zip(grid.trapezoid(i, n)) {
            if wl != 0.0 {
                blocks::set_block(&mut phi, i - k, l - k, &(z.at(l - i) * &ct * wl));
            }
        }
    }
    // psi(i, r) = w^{(k..i)}_r Z^T(t_i - t_r)
    let mut psi = DMatrix::zeros(nodes * d, nodes * d);
    for i in k..=n {
        for (r, wr) in (k..=i).zip(trapezoid_weights(h, i - k + 1)) {
            if wr != 0.0 {
                blocks::set_block(&mut psi, i - k, r - k, &(z.transposed(i - r) * wr));
            }
        }
    }
    // v(l, s) = int_tau^{t_l} Z^T(t_l - r) N(r - s) dr
    let tail_cols = if k == 0 { 0 } else { k + 1 };
    let mut v = DMatrix::zeros(nodes * d, tail_cols * d);
    for l in k..=n {
        let w = trapezoid_weights(h, l - k + 1);
        for s in 0..tail_cols {
            let mut acc = DMatrix::zeros(d, d);
            for (rr, wr) in (k..=l).zip(&w) {
                if *wr != 0.0 {
                    acc.gemm(*wr, z.transposed(l - rr), sys.kernel(rr - s), 1.0);
                }
            }
            blocks::set_block(&mut v, l - k, s, &acc);
        }
    }

    let c_diag = blocks::block_diagonal(sys.c(), nodes);
    let bbt_diag = blocks::block_diagonal(sys.bbt(), nodes);
    let rw = blocks::scale_block_columns(r.dense(), d, &omega);
    let resolve = |x: DMatrix<f64>| -> DMatrix<f64> { &x - &rw * &x };

    let kt_col = &phi * &c_diag * psi_column(z, k, n, d);
    let q0 = resolve(kt_col);
    let q1 = resolve(&phi * &c_diag * &v);
    let inv: Vec<f64> = omega.iter().map(|w| if *w == 0.0 { 0.0 } else { 1.0 / w }).collect();
    let q2a = blocks::scale_block_columns(&phi, p, &inv);
    let q2 = -resolve(q2a);

    let psib = &psi * &bbt_diag;
    let h0 = psi_column(z, k, n, d) - &psib * &q0;
    let h1 = &v - &psib * &q1;
    let h2 = -(&psib * &q2);
    Ok(SynthesisKernels { start: k, d, p, h, b: sys.b().clone(), weights: omega, q0, q1, q2, h0, h1, h2 })
}

/// Stacked `Z^T(t_i - tau)` for `i = k..=n`.
fn psi_column(z: &FundamentalMatrix, k: usize, n: usize, d: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros((n - k + 1) * d, d);
    for i in k..=n {
        blocks::set_block(&mut out, i - k, 0, z.transposed(i - k));
    }
    out
}

/// Evaluates the optimal control `-B^T p` and trajectory from the synthesis kernels.
pub fn apply_synthesis(kernels: &SynthesisKernels, xi: &InitialState, y: &ReferenceSignal) -> Result<(ControlSignal, StateTrajectory)> {
    let k = kernels.start;
    if xi.tau_index() != k || xi.dim() != kernels.d {
        return Err(Error::Dimension("initial state does not match the synthesis kernels".into()));
    }
    let nodes = kernels.weights.len();
    if y.values().len() != k + nodes || y.values().iter().any(|v| v.len() != kernels.p) {
        return Err(Error::Dimension("reference signal does not match the synthesis kernels".into()));
    }
    let tail = if k == 0 { DVector::zeros(0) } else { blocks::stack(&xi.weighted_tail(kernels.h)) };
    let yw = blocks::stack_weighted(&y.values()[k..], &kernels.weights);
    let combine = |m0: &DMatrix<f64>, m1: &DMatrix<f64>, m2: &DMatrix<f64>| -> DVector<f64> {
        let mut out = m0 * xi.head() + m2 * &yw;
        if k > 0 {
            out += m1 * &tail;
        }
        out
    };
    let p = combine(&kernels.q0, &kernels.q1, &kernels.q2);
    let w = combine(&kernels.h0, &kernels.h1, &kernels.h2);
    let bt = kernels.b.transpose();
    let u = blocks::unstack(&p, kernels.d).iter().map(|pi| -(&bt * pi)).collect();
    let mut window = blocks::unstack(&w, kernels.d);
    window[0] = xi.head().clone();
    Ok((ControlSignal::new(k, u), StateTrajectory::assemble(xi, window)))
}
