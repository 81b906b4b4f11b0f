use nalgebra::DMatrix;

use super::grid::TimeGrid;
use crate::error::{Error, Result};

/// One term `G e^{-rate t}` of an exponential-family memory kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpTerm {
    pub weight: DMatrix<f64>,
    pub rate: f64,
}

/// Generator for the memory kernel `N(t)`, sampled onto a grid at load time.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// `N(t) = sum_k G_k e^{-rate_k t}`.
    Exponential(Vec<ExpTerm>),
    /// Raw node values, one `d x d` matrix per grid node.
    Table(Vec<DMatrix<f64>>),
}

impl KernelSpec {
    pub fn zero() -> Self {
        KernelSpec::Exponential(Vec::new())
    }

    pub fn sample(&self, d: usize, grid: &TimeGrid) -> Result<Vec<DMatrix<f64>>> {
        match self {
            KernelSpec::Exponential(terms) => {
                for (k, term) in terms.iter().enumerate() {
                    if term.weight.shape() != (d, d) {
                        return Err(Error::Dimension(format!("kernel term {k}: weight is {:?}, expected ({d}, {d})", term.weight.shape())));
                    }
                    if term.rate.is_nan() || term.rate < 0.0 {
                        return Err(Error::Dimension(format!("kernel term {k}: rate must be nonnegative, got {}", term.rate)));
                    }
                }
                Ok(grid
                    .nodes()
                    .map(|t| terms.iter().fold(DMatrix::zeros(d, d), |acc, term| acc + &term.weight * (-term.rate * t).exp()))
                    .collect())
            }
            KernelSpec::Table(values) => {
                if values.len() != grid.len() {
                    return Err(Error::Dimension(format!("kernel table has {} nodes, grid has {}", values.len(), grid.len())));
                }
                if let Some(i) = values.iter().position(|m| m.shape() != (d, d)) {
                    return Err(Error::Dimension(format!("kernel table node {i} is {:?}, expected ({d}, {d})", values[i].shape())));
                }
                Ok(values.clone())
            }
        }
    }
}

/// The plant `w' = A w + int_0^t N(t-s) w(s) ds + B u`, observed through `C`.
///
/// The kernel is stored as node samples `N(t_i)` for the grid it was built on.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    kernel: Vec<DMatrix<f64>>,
    bbt: DMatrix<f64>,
}

impl SystemSpec {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, kernel: Vec<DMatrix<f64>>) -> Result<Self> {
        let d = a.nrows();
        if d == 0 || a.ncols() != d {
            return Err(Error::Dimension(format!("A must be square and nonempty, got {:?}", a.shape())));
        }
        if b.nrows() != d || b.ncols() == 0 {
            return Err(Error::Dimension(format!("B must be {d} x m, got {:?}", b.shape())));
        }
        if c.ncols() != d || c.nrows() == 0 {
            return Err(Error::Dimension(format!("C must be p x {d}, got {:?}", c.shape())));
        }
        if let Some(i) = kernel.iter().position(|n| n.shape() != (d, d)) {
            return Err(Error::Dimension(format!("kernel sample {i} is {:?}, expected ({d}, {d})", kernel[i].shape())));
        }
        let bbt = &b * b.transpose();
        Ok(Self { a, b, c, kernel, bbt })
    }

    /// Builds the plant with its kernel sampled on `grid`.
    pub fn sampled(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, kernel: &KernelSpec, grid: &TimeGrid) -> Result<Self> {
        let samples = kernel.sample(a.nrows(), grid)?;
        Self::new(a, b, c, samples)
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// `B B^T`.
    pub fn bbt(&self) -> &DMatrix<f64> {
        &self.bbt
    }

    /// Kernel sample `N(t_i)`.
    pub fn kernel(&self, i: usize) -> &DMatrix<f64> {
        &self.kernel[i]
    }

    pub fn kernel_samples(&self) -> &[DMatrix<f64>] {
        &self.kernel
    }

    pub fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        if self.kernel.len() != grid.len() {
            return Err(Error::Dimension(format!("kernel sampled on {} nodes but grid has {}", self.kernel.len(), grid.len())));
        }
        Ok(())
    }

    /// Same plant with the input matrix replaced.
    pub fn with_b(&self, b: DMatrix<f64>) -> Result<Self> {
        Self::new(self.a.clone(), b, self.c.clone(), self.kernel.clone())
    }

    /// Same plant with the output matrix replaced.
    pub fn with_c(&self, c: DMatrix<f64>) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), c, self.kernel.clone())
    }
}
