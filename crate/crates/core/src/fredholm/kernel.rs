use nalgebra::{DMatrix, DVector};

use crate::blocks;
use crate::error::Result;
use crate::model::{convolve_transition, tail_forcing, FundamentalMatrix, InitialState, ReferenceSignal, SystemSpec, TimeGrid};

/// The tracking kernel `Ktilde(t, r) = int_{max(t,r)}^T Z(s-t) C^T C Z^T(s-r) ds` on `[tau, T]^2`.
///
/// Stored as one dense matrix of `d x d` blocks indexed by the local nodes
/// `0..=n-k` (global nodes `k..=n`). `K = Ktilde B`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingKernel {
    start: usize,
    d: usize,
    ktilde: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl TrackingKernel {
    pub fn start(&self) -> usize {
        self.start
    }

    pub fn state_dim(&self) -> usize {
        self.d
    }

    /// Number of local nodes, `n - k + 1`.
    pub fn nodes(&self) -> usize {
        self.ktilde.nrows() / self.d
    }

    /// `Ktilde(t_i, t_j)` for global nodes `i, j >= k`.
    pub fn ktilde(&self, i: usize, j: usize) -> DMatrix<f64> {
        blocks::block(&self.ktilde, i - self.start, j - self.start, self.d, self.d)
    }

    /// `K(t_i, t_j) = Ktilde(t_i, t_j) B`.
    pub fn k(&self, i: usize, j: usize) -> DMatrix<f64> {
        self.ktilde(i, j) * &self.b
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub(crate) fn dense(&self) -> &DMatrix<f64> {
        &self.ktilde
    }

    /// The same kernel on the shorter window `[t_k, T]`; the entries do not depend on `tau`.
    pub fn restrict(&self, k: usize) -> TrackingKernel {
        let off = (k - self.start) * self.d;
        let size = self.ktilde.nrows() - off;
        TrackingKernel { start: k, d: self.d, ktilde: self.ktilde.view((off, off), (size, size)).into_owned(), b: self.b.clone() }
    }
}

pub fn build_kernel(sys: &SystemSpec, z: &FundamentalMatrix, grid: &TimeGrid, k: usize) -> Result<TrackingKernel> {
    sys.check_grid(grid)?;
    grid.check_index(k, 0)?;
    let n = grid.steps();
    let d = sys.state_dim();
    let ctc = sys.c().transpose() * sys.c();
    // C^T C Z^T(t_m)
    let right: Vec<DMatrix<f64>> = (0..=n).map(|m| &ctc * z.transposed(m)).collect();
    let size = n - k + 1;
    let mut kt = DMatrix::zeros(size * d, size * d);
    for i in k..=n {
        let w = grid.trapezoid(i, n);
        for j in k..=i {
            let mut acc = DMatrix::zeros(d, d);
            for (l, wl) in (i..=n).zip(&w) {
                if *wl != 0.0 {
                    acc.gemm(*wl, z.at(l - i), &right[l - j], 1.0);
                }
            }
            if i == j {
                acc = (&acc + acc.transpose()) * 0.5;
            } else {
                blocks::set_block(&mut kt, j - k, i - k, &acc.transpose());
            }
            blocks::set_block(&mut kt, i - k, j - k, &acc);
        }
    }
    Ok(TrackingKernel { start: k, d, ktilde: kt, b: sys.b().clone() })
}

/// Forcing of the Fredholm equation for the costate.
#[derive(Debug, Clone, PartialEq)]
pub struct Forcing {
    start: usize,
    /// `Y(t_i)` for `i = k..=n`.
    pub values: Vec<DVector<f64>>,
    /// Free response `Y_0(t_i)` (zero control) for `i = k..=n`.
    pub free_response: Vec<DVector<f64>>,
}

impl Forcing {
    pub fn start(&self) -> usize {
        self.start
    }
}

/// `Y(t) = int_t^T Z(s-t) C^T [C Y_0(s) - y(s)] ds`, where `Y_0` is the zero-control response.
pub fn build_forcing(sys: &SystemSpec, z: &FundamentalMatrix, grid: &TimeGrid, xi: &InitialState, y: &ReferenceSignal) -> Result<Forcing> {
    sys.check_grid(grid)?;
    xi.check(sys, grid)?;
    y.check(sys, grid)?;
    let k = xi.tau_index();
    let n = grid.steps();
    let conv = convolve_transition(z, grid, k, &tail_forcing(sys, grid, xi));
    let free_response: Vec<DVector<f64>> = conv.into_iter().enumerate().map(|(j, c)| z.transposed(j) * xi.head() + c).collect();
    let ct = sys.c().transpose();
    let mismatch: Vec<DVector<f64>> = (k..=n).map(|l| &ct * (sys.c() * &free_response[l - k] - y.at(l))).collect();
    let values = (k..=n)
        .map(|i| {
            let mut acc = DVector::zeros(sys.state_dim());
            for (l, wl) in (i..=n).zip(grid.trapezoid(i, n)) {
                if wl != 0.0 {
                    acc.gemv(wl, z.at(l - i), &mismatch[l - k], 1.0);
                }
            }
            acc
        })
        .collect();
    Ok(Forcing { start: k, values, free_response })
}
