use nalgebra::{DMatrix, DVector, Dyn, LU};

use super::kernel::{Forcing, TrackingKernel};
use crate::blocks;
use crate::error::{Error, Result};
use crate::model::{ControlSignal, ReferenceSignal, StateTrajectory, SystemSpec, TimeGrid};

/// Costate `p(t_i)`, `i = k..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostateTrajectory {
    start: usize,
    values: Vec<DVector<f64>>,
}

impl CostateTrajectory {
    pub(crate) fn new(start: usize, values: Vec<DVector<f64>>) -> Self {
        Self { start, values }
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn at(&self, i: usize) -> &DVector<f64> {
        &self.values[i - self.start]
    }
}

/// `R(t_i, t_j; tau)` on `[tau, T]^2`, as `d x d` blocks on local nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolventKernel {
    start: usize,
    d: usize,
    r: DMatrix<f64>,
}

impl ResolventKernel {
    pub fn start(&self) -> usize {
        self.start
    }

    pub fn at(&self, i: usize, j: usize) -> DMatrix<f64> {
        blocks::block(&self.r, i - self.start, j - self.start, self.d, self.d)
    }

    /// Largest Frobenius norm over all node pairs.
    pub fn max_norm(&self) -> f64 {
        blocks::max_block_norm(&self.r, self.d, self.d)
    }

    pub(crate) fn dense(&self) -> &DMatrix<f64> {
        &self.r
    }
}

/// Nystrom discretization of `p(t) + int_tau^T Ktilde(t,r) B B^T p(r) dr = Y(t)`.
///
/// The unknowns at the final node are dropped: the kernel vanishes there in
/// both arguments, so the last equation reads `p(T) = Y(T) = 0`.
pub struct FredholmSolver {
    start: usize,
    d: usize,
    nodes: usize,
    weights: Vec<f64>,
    lu: Option<LU<f64, Dyn, Dyn>>,
}

impl FredholmSolver {
    pub fn new(kernel: &TrackingKernel, grid: &TimeGrid) -> Result<Self> {
        let k = kernel.start();
        let d = kernel.state_dim();
        let nodes = kernel.nodes();
        let weights = grid.trapezoid(k, grid.steps());
        let inner = nodes - 1;
        let lu = if inner == 0 {
            None
        } else {
            let bbt = kernel.b() * kernel.b().transpose();
            let mut m = DMatrix::identity(inner * d, inner * d);
            for a in 0..inner {
                for (c, w) in weights.iter().take(inner).enumerate() {
                    let blk = blocks::block(kernel.dense(), a, c, d, d) * &bbt * *w;
                    let mut view = m.view_mut((a * d, c * d), (d, d));
                    view += blk;
                }
            }
            let lu = m.lu();
            if !lu.is_invertible() {
                return Err(Error::Singular("Fredholm system"));
            }
            Some(lu)
        };
        Ok(Self { start: k, d, nodes, weights, lu })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn solve(&self, forcing: &[DVector<f64>]) -> Result<CostateTrajectory> {
        let mut values = vec![DVector::zeros(self.d); self.nodes];
        if let Some(lu) = &self.lu {
            let rhs = blocks::stack(&forcing[..self.nodes - 1]);
            let p = lu.solve(&rhs).ok_or(Error::Singular("Fredholm solve"))?;
            for (a, v) in blocks::unstack(&p, self.d).into_iter().enumerate() {
                values[a] = v;
            }
        }
        values[self.nodes - 1] = forcing[self.nodes - 1].clone();
        Ok(CostateTrajectory::new(self.start, values))
    }

    /// Solves the dense right-hand side block matrix (rows for all local nodes).
    pub(crate) fn solve_matrix(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let inner = (self.nodes - 1) * self.d;
        let mut out = DMatrix::zeros(rhs.nrows(), rhs.ncols());
        if let Some(lu) = &self.lu {
            let top = rhs.rows(0, inner).into_owned();
            let sol = lu.solve(&top).ok_or(Error::Singular("Fredholm solve"))?;
            out.rows_mut(0, inner).copy_from(&sol);
        }
        let last = rhs.rows(inner, self.d).into_owned();
        out.rows_mut(inner, self.d).copy_from(&last);
        Ok(out)
    }

    /// Resolvent kernel: one solve per column node with right-hand side `Ktilde(., r_j) B B^T`.
    pub fn resolvent(&self, kernel: &TrackingKernel) -> Result<ResolventKernel> {
        let d = self.d;
        let bbt = kernel.b() * kernel.b().transpose();
        let rhs = kernel.dense() * blocks::block_diagonal(&bbt, self.nodes);
        let r = self.solve_matrix(&rhs)?;
        Ok(ResolventKernel { start: self.start, d, r })
    }
}

pub fn solve_fredholm(kernel: &TrackingKernel, forcing: &Forcing, grid: &TimeGrid) -> Result<CostateTrajectory> {
    if forcing.start() != kernel.start() || forcing.values.len() != kernel.nodes() {
        return Err(Error::Dimension("kernel and forcing live on different windows".into()));
    }
    FredholmSolver::new(kernel, grid)?.solve(&forcing.values)
}

pub fn resolvent(kernel: &TrackingKernel, grid: &TimeGrid) -> Result<ResolventKernel> {
    FredholmSolver::new(kernel, grid)?.resolvent(kernel)
}

/// `u(t) = -B^T p(t)`.
pub fn optimal_control_fredholm(p: &CostateTrajectory, b: &DMatrix<f64>) -> ControlSignal {
    let bt = b.transpose();
    ControlSignal::new(p.start(), p.values().iter().map(|v| -(&bt * v)).collect())
}

/// Max-node residual of `p' = -A^T p - int_t^T N^T(s-t) p(s) ds - C^T (C w - y)`.
///
/// `p'` uses second-order differences (one-sided three-point stencils at the ends).
pub fn costate_residual(
    sys: &SystemSpec,
    p: &CostateTrajectory,
    wplus: &StateTrajectory,
    y: &ReferenceSignal,
    grid: &TimeGrid,
    k: usize,
) -> Result<f64> {
    let n = grid.steps();
    if p.start() != k || p.values().len() != n - k + 1 || wplus.values().len() != grid.len() {
        return Err(Error::Dimension("costate and trajectory must cover the window k..=n".into()));
    }
    if n - k < 2 {
        return Err(Error::Grid("costate residual needs at least three window nodes".into()));
    }
    let h = grid.step();
    let at = sys.a().transpose();
    let ct = sys.c().transpose();
    let mut worst = 0.0f64;
    for i in k..=n {
        let dp = if i == k {
            (p.at(i) * -3.0 + p.at(i + 1) * 4.0 - p.at(i + 2)) / (2.0 * h)
        } else if i == n {
            (p.at(i) * 3.0 - p.at(i - 1) * 4.0 + p.at(i - 2)) / (2.0 * h)
        } else {
            (p.at(i + 1) - p.at(i - 1)) / (2.0 * h)
        };
        let mut res = dp + &at * p.at(i) + &ct * (sys.c() * wplus.at(i) - y.at(i));
        for (l, wl) in (i..=n).zip(grid.trapezoid(i, n)) {
            if wl != 0.0 {
                res.gemv_tr(wl, sys.kernel(l - i), p.at(l), 1.0);
            }
        }
        worst = worst.max(res.norm());
    }
    Ok(worst)
}
