//! Feedback synthesis through the memory-Riccati system.
//!
//! The fields are swept backward from `T` with a Heun scheme. A `tau`-slice at
//! node `j` covers the history nodes `0..=j`; the boundary traces at `s = tau`
//! are read from the current slice.

mod feedback;
mod field;
mod tracking;

pub use feedback::{closed_loop, coercive_form, di_residual, feedback_control, value_function, DiResidual};
pub use field::{solve_riccati, solve_riccati_with, RiccatiField, RiccatiOptions};
pub use tracking::{solve_tracking, TrackingField};
