//! Discrepancy measures between grid functions.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::TimeGrid;

/// Trapezoid `L^2` norm of a grid function on the nodes `k..=n`.
pub fn l2_norm(grid: &TimeGrid, k: usize, a: &[DVector<f64>]) -> Result<f64> {
    check(grid, k, a.len())?;
    Ok(a.iter().zip(grid.trapezoid(k, grid.steps())).map(|(v, w)| w * v.norm_squared()).sum::<f64>().sqrt())
}

/// `||a - b|| / max(||a||, ||b||)` in the trapezoid `L^2` norm on `k..=n`; zero when both vanish.
pub fn relative_l2(grid: &TimeGrid, k: usize, a: &[DVector<f64>], b: &[DVector<f64>]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("grid functions have {} and {} nodes", a.len(), b.len())));
    }
    let diff: Vec<DVector<f64>> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = l2_norm(grid, k, a)?.max(l2_norm(grid, k, b)?);
    let num = l2_norm(grid, k, &diff)?;
    Ok(if scale == 0.0 { 0.0 } else { num / scale })
}

/// Largest node-wise Euclidean distance.
pub fn max_abs(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Observed order `log2(e_coarse / e_fine)` for a halving of the step.
pub fn observed_order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

fn check(grid: &TimeGrid, k: usize, len: usize) -> Result<()> {
    if k + len != grid.len() {
        return Err(Error::Dimension(format!("grid function with {} nodes does not cover {}..={}", len, k, grid.steps())));
    }
    Ok(())
}
