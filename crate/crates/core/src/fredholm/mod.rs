//! Open-loop synthesis through the Fredholm equation for the costate.
//!
//! All kernels are Nystrom samples on the window nodes `k..=n`; integrals use
//! the trapezoid weights of the window, so the discrete objects satisfy the
//! discrete identities (symmetry, final conditions, resolvent representation) exactly.

mod kernel;
mod solver;
mod synthesis;

pub use kernel::{build_forcing, build_kernel, Forcing, TrackingKernel};
pub use solver::{
    costate_residual, optimal_control_fredholm, resolvent, solve_fredholm, CostateTrajectory, FredholmSolver, ResolventKernel,
};
pub use synthesis::{apply_synthesis, synthesis_kernels, SynthesisKernels};

#[cfg(test)]
mod tests;
