//! Plant, grids, signals and forward integration.

mod cost;
mod dynamics;
mod grid;
mod signals;
mod system;

pub use cost::{cost, partial_cost, running_cost};
pub(crate) use dynamics::{convolve_transition, memory_sum, step_matrix, tail_forcing};
pub use dynamics::{fundamental_matrix, simulate, simulate_with_forcing, voc_solution};
pub use grid::{trapezoid_weights, TimeGrid};
pub use signals::{ControlSignal, FundamentalMatrix, InitialState, ReferenceSignal, StateTrajectory};
pub use system::{ExpTerm, KernelSpec, SystemSpec};
