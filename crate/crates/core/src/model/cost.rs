use super::grid::TimeGrid;
use super::signals::{ControlSignal, ReferenceSignal, StateTrajectory};
use super::system::SystemSpec;
use crate::error::{Error, Result};

/// Node integrand `|C w_i - y_i|^2 + |u_i|^2`.
pub fn running_cost(sys: &SystemSpec, w: &StateTrajectory, u: &ControlSignal, y: &ReferenceSignal, i: usize) -> f64 {
    (sys.c() * w.at(i) - y.at(i)).norm_squared() + u.at(i).norm_squared()
}

/// Trapezoid value of `int_{t_k}^T (|C w - y|^2 + |u|^2) dt`.
pub fn cost(sys: &SystemSpec, grid: &TimeGrid, w: &StateTrajectory, u: &ControlSignal, y: &ReferenceSignal, k: usize) -> Result<f64> {
    grid.check_index(k, 0)?;
    y.check(sys, grid)?;
    u.check(sys, grid, k)?;
    if w.values().len() != grid.len() || w.start() > k {
        return Err(Error::Dimension(format!(
            "trajectory covers nodes {}..{} but cost needs {k}..={}",
            w.start(),
            w.values().len(),
            grid.steps()
        )));
    }
    Ok(partial_cost(sys, grid, w, u, y, k, grid.steps()))
}

/// Trapezoid value of the running cost over nodes `from..=to`.
pub fn partial_cost(
    sys: &SystemSpec,
    grid: &TimeGrid,
    w: &StateTrajectory,
    u: &ControlSignal,
    y: &ReferenceSignal,
    from: usize,
    to: usize,
) -> f64 {
    grid.trapezoid(from, to).into_iter().zip(from..=to).map(|(wt, i)| wt * running_cost(sys, w, u, y, i)).sum()
}
