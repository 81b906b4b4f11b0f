//! Shared fixtures for the solver benchmarks.

use memtrack::instances::{random_instance, Instance};
use memtrack::TimeGrid;

/// Random plant with `d` states, one input and `d` outputs on `[0, 1]` with `n` steps.
pub fn fixture(d: usize, n: usize) -> Instance {
    let grid = TimeGrid::new(1.0, n).expect("valid grid");
    random_instance(11, d, 1, d, &grid).expect("valid instance")
}
