//! Finite-horizon quadratic tracking for linear systems with persistent memory.
//!
//! The plant is the Volterra integrodifferential equation
//! `w' = A w + int_0^t N(t-s) w(s) ds + B u`, and the cost is
//! `int_tau^T |C w - y|^2 + |u|^2`. The optimal control is computed by three
//! independent routes that are meant to be checked against each other:
//!
//! * [`oracle`]: the discretized problem as a dense least-squares problem;
//! * [`fredholm`]: the costate as the solution of a Fredholm equation of the
//!   second kind, with its resolvent and the explicit `Q`/`H` representation;
//! * [`riccati`]: the memory Riccati system and the tracking equations swept
//!   backward from `T`, giving a feedback law on the finite-memory state.
//!
//! [`statespace`] recasts the Riccati and tracking equations as operator
//! identities on `R^d x L^2(0, tau)` and evaluates their discrete residuals.

mod blocks;
pub mod error;
pub mod fredholm;
pub mod instances;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod riccati;
pub mod statespace;

pub use error::{Error, Result};
pub use model::{
    cost, fundamental_matrix, simulate, voc_solution, ControlSignal, ExpTerm, FundamentalMatrix, InitialState, KernelSpec, ReferenceSignal,
    StateTrajectory, SystemSpec, TimeGrid,
};
