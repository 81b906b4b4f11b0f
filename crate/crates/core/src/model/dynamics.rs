//! Forward integration of the Volterra integrodifferential plant.
//!
//! All convolution integrals use the composite trapezoid rule on the grid. The
//! stepping scheme is the implicit trapezoid rule: at each step the new node
//! enters both the local term and, with weight `h/2`, the memory sum, so one
//! `d x d` linear system is solved per step (its matrix is constant).

use nalgebra::{DMatrix, DVector};

use super::grid::{trapezoid_weights, TimeGrid};
use super::signals::{ControlSignal, FundamentalMatrix, InitialState, StateTrajectory};
use super::system::SystemSpec;
use crate::error::{Error, Result};

/// Matrix of the implicit step, `I - h/2 A - h^2/4 N(0)`.
pub(crate) fn step_matrix(a: &DMatrix<f64>, n0: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let d = a.nrows();
    DMatrix::identity(d, d) - a * (0.5 * h) - n0 * (0.25 * h * h)
}

/// `sum_s N(t_target - t_s) q_s` over the settled weighted history.
pub(crate) fn memory_sum(sys: &SystemSpec, q: &[DVector<f64>], target: usize) -> DVector<f64> {
    let mut acc = DVector::zeros(sys.state_dim());
    for (s, qs) in q.iter().enumerate() {
        acc.gemv(1.0, sys.kernel(target - s), qs, 1.0);
    }
    acc
}

/// Memory contributed by the initial tail, `int_0^tau N(t_r - s) tail(s) ds`, for `r = k..=n`.
pub(crate) fn tail_forcing(sys: &SystemSpec, grid: &TimeGrid, xi: &InitialState) -> Vec<DVector<f64>> {
    let k = xi.tau_index();
    let tail = xi.weighted_tail(grid.step());
    (k..=grid.steps()).map(|r| memory_sum(sys, &tail, r)).collect()
}

/// `x_i = int_{t_k}^{t_i} Z^T(t_i - r) v(r) dr` for `i = k..=n`, with `v` given on `k..=n`.
pub(crate) fn convolve_transition(z: &FundamentalMatrix, grid: &TimeGrid, k: usize, v: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let h = grid.step();
    let d = z.at(0).nrows();
    (k..=grid.steps())
        .map(|i| {
            let w = trapezoid_weights(h, i - k + 1);
            let mut acc = DVector::zeros(d);
            for (r, wr) in (k..=i).zip(w) {
                if wr != 0.0 {
                    acc.gemv(wr, z.transposed(i - r), &v[r - k], 1.0);
                }
            }
            acc
        })
        .collect()
}

/// Grid samples of `Z' = A^T Z + int_0^t N^T(t-s) Z(s) ds`, `Z(0) = I`.
pub fn fundamental_matrix(sys: &SystemSpec, grid: &TimeGrid) -> Result<FundamentalMatrix> {
    sys.check_grid(grid)?;
    let d = sys.state_dim();
    let h = grid.step();
    let at = sys.a().transpose();
    let nt: Vec<DMatrix<f64>> = sys.kernel_samples().iter().map(|m| m.transpose()).collect();
    let lu = step_matrix(&at, &nt[0], h).lu();

    let mut z = vec![DMatrix::identity(d, d)];
    let mut q: Vec<DMatrix<f64>> = Vec::with_capacity(grid.len());
    let mut f = at.clone();
    for i in 0..grid.steps() {
        let wi = if i == 0 { 0.5 * h } else { h };
        q.push(&z[i] * wi);
        let mut known = DMatrix::zeros(d, d);
        for (s, qs) in q.iter().enumerate() {
            known.gemm(1.0, &nt[i + 1 - s], qs, 1.0);
        }
        let rhs = &z[i] + (&f + &known) * (0.5 * h);
        let next = lu.solve(&rhs).ok_or(Error::Singular("fundamental matrix step"))?;
        f = &at * &next + known + &nt[0] * &next * (0.5 * h);
        z.push(next);
    }
    Ok(FundamentalMatrix::new(z))
}

/// Solves the plant from the finite-memory state `xi` at node `k` under control `u`.
pub fn simulate(sys: &SystemSpec, grid: &TimeGrid, xi: &InitialState, u: &ControlSignal) -> Result<StateTrajectory> {
    simulate_forced(sys, grid, xi, u, None)
}

/// As [`simulate`], with an extra additive forcing `F` on nodes `k..=n`.
pub fn simulate_with_forcing(
    sys: &SystemSpec,
    grid: &TimeGrid,
    xi: &InitialState,
    u: &ControlSignal,
    forcing: &[DVector<f64>],
) -> Result<StateTrajectory> {
    if forcing.len() != grid.len() - xi.tau_index() {
        return Err(Error::Dimension(format!("forcing has {} nodes, expected {}", forcing.len(), grid.len() - xi.tau_index())));
    }
    simulate_forced(sys, grid, xi, u, Some(forcing))
}

fn simulate_forced(
    sys: &SystemSpec,
    grid: &TimeGrid,
    xi: &InitialState,
    u: &ControlSignal,
    forcing: Option<&[DVector<f64>]>,
) -> Result<StateTrajectory> {
    sys.check_grid(grid)?;
    xi.check(sys, grid)?;
    let k = xi.tau_index();
    u.check(sys, grid, k)?;
    let h = grid.step();
    let lu = step_matrix(sys.a(), sys.kernel(0), h).lu();
    let tail = xi.weighted_tail(h);
    let drive = |i: usize| -> DVector<f64> {
        let mut v = sys.b() * u.at(i);
        if let Some(f) = forcing {
            v += &f[i - k];
        }
        v
    };

    let mut q: Vec<DVector<f64>> = tail.iter().take(k).cloned().collect();
    let mut w = vec![xi.head().clone()];
    let mut f = sys.a() * xi.head() + memory_sum(sys, &tail, k) + drive(k);
    for i in k..grid.steps() {
        let wi = &w[i - k];
        let settled = if i == k {
            let own = wi * (0.5 * h);
            if k > 0 {
                own + &tail[k]
            } else {
                own
            }
        } else {
            wi * h
        };
        q.push(settled);
        let known = memory_sum(sys, &q, i + 1);
        let b_next = drive(i + 1);
        let rhs = wi + (&f + &known + &b_next) * (0.5 * h);
        let next = lu.solve(&rhs).ok_or(Error::Singular("simulation step"))?;
        f = sys.a() * &next + known + sys.kernel(0) * &next * (0.5 * h) + b_next;
        w.push(next);
    }
    Ok(StateTrajectory::assemble(xi, w))
}

/// Variation-of-constants representation of the solution of [`simulate`].
pub fn voc_solution(
    sys: &SystemSpec,
    grid: &TimeGrid,
    z: &FundamentalMatrix,
    xi: &InitialState,
    u: &ControlSignal,
) -> Result<StateTrajectory> {
    sys.check_grid(grid)?;
    z.check(grid)?;
    xi.check(sys, grid)?;
    let k = xi.tau_index();
    u.check(sys, grid, k)?;
    let mut v = tail_forcing(sys, grid, xi);
    for (r, vr) in (k..).zip(v.iter_mut()) {
        vr.gemv(1.0, sys.b(), u.at(r), 1.0);
    }
    let conv = convolve_transition(z, grid, k, &v);
    let w = conv.into_iter().enumerate().map(|(j, c)| z.transposed(j) * xi.head() + c).collect();
    Ok(StateTrajectory::assemble(xi, w))
}
