use nalgebra::{DMatrix, DVector};

use super::grid::TimeGrid;
use super::system::SystemSpec;
use crate::error::{Error, Result};

/// Finite-memory state at node `k`: the current value and the history on `[0, t_k]`.
///
/// The tail is an arbitrary grid function on nodes `0..=k`; it need not be a
/// trajectory of the plant and its value at node `k` need not equal the head.
/// At `k = 0` the state is the head alone and the tail is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    tau_index: usize,
    head: DVector<f64>,
    tail: Vec<DVector<f64>>,
}

impl InitialState {
    pub fn new(tau_index: usize, head: DVector<f64>, tail: Vec<DVector<f64>>) -> Result<Self> {
        let d = head.len();
        let tail = if tau_index == 0 { Vec::new() } else { tail };
        if tau_index > 0 && tail.len() != tau_index + 1 {
            return Err(Error::Dimension(format!("tail at node {tau_index} needs {} values, got {}", tau_index + 1, tail.len())));
        }
        if let Some(i) = tail.iter().position(|v| v.len() != d) {
            return Err(Error::Dimension(format!("tail value {i} has length {}, expected {d}", tail[i].len())));
        }
        Ok(Self { tau_index, head, tail })
    }

    /// State at time zero: the head alone.
    pub fn at_origin(head: DVector<f64>) -> Self {
        Self { tau_index: 0, head, tail: Vec::new() }
    }

    pub fn zero(d: usize, tau_index: usize) -> Self {
        let tail = if tau_index == 0 { Vec::new() } else { vec![DVector::zeros(d); tau_index + 1] };
        Self { tau_index, head: DVector::zeros(d), tail }
    }

    /// State at node `k` whose tail is sampled from `history` and whose head is `head`.
    pub fn from_fn(grid: &TimeGrid, tau_index: usize, head: DVector<f64>, history: impl Fn(f64) -> DVector<f64>) -> Result<Self> {
        let tail = if tau_index == 0 { Vec::new() } else { (0..=tau_index).map(|i| history(grid.node(i))).collect() };
        Self::new(tau_index, head, tail)
    }

    pub fn tau_index(&self) -> usize {
        self.tau_index
    }

    pub fn head(&self) -> &DVector<f64> {
        &self.head
    }

    /// Tail values on nodes `0..=k`; empty when `k = 0`.
    pub fn tail(&self) -> &[DVector<f64>] {
        &self.tail
    }

    pub fn dim(&self) -> usize {
        self.head.len()
    }

    pub(crate) fn check(&self, sys: &SystemSpec, grid: &TimeGrid) -> Result<()> {
        if self.head.len() != sys.state_dim() {
            return Err(Error::Dimension(format!("initial head has length {}, state dimension is {}", self.head.len(), sys.state_dim())));
        }
        if self.tau_index >= grid.steps() {
            return Err(Error::IndexOutOfRange { index: self.tau_index, min: 0, max: grid.steps() - 1 });
        }
        Ok(())
    }

    /// Tail values multiplied by their trapezoid weights on `[0, t_k]`.
    pub(crate) fn weighted_tail(&self, h: f64) -> Vec<DVector<f64>> {
        let w = super::grid::trapezoid_weights(h, self.tail.len());
        self.tail.iter().zip(w).map(|(v, w)| v * w).collect()
    }

    /// Linear combination `alpha * self + beta * other` (same node).
    pub fn combine(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        if self.tau_index != other.tau_index || self.dim() != other.dim() {
            return Err(Error::Dimension("states live at different nodes or dimensions".into()));
        }
        let tail = self.tail.iter().zip(&other.tail).map(|(a, b)| a * alpha + b * beta).collect();
        Ok(Self { tau_index: self.tau_index, head: &self.head * alpha + &other.head * beta, tail })
    }
}

/// Reference output `y_i` at every node `0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSignal {
    values: Vec<DVector<f64>>,
}

impl ReferenceSignal {
    pub fn new(values: Vec<DVector<f64>>) -> Self {
        Self { values }
    }

    pub fn zero(p: usize, grid: &TimeGrid) -> Self {
        Self { values: vec![DVector::zeros(p); grid.len()] }
    }

    pub fn from_fn(grid: &TimeGrid, f: impl Fn(f64) -> DVector<f64>) -> Self {
        Self { values: grid.nodes().map(f).collect() }
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn at(&self, i: usize) -> &DVector<f64> {
        &self.values[i]
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { values: self.values.iter().map(|v| v * s).collect() }
    }

    pub(crate) fn check(&self, sys: &SystemSpec, grid: &TimeGrid) -> Result<()> {
        if self.values.len() != grid.len() {
            return Err(Error::Dimension(format!("reference has {} nodes, grid has {}", self.values.len(), grid.len())));
        }
        if let Some(i) = self.values.iter().position(|v| v.len() != sys.output_dim()) {
            return Err(Error::Dimension(format!(
                "reference value {i} has length {}, output dimension is {}",
                self.values[i].len(),
                sys.output_dim()
            )));
        }
        Ok(())
    }
}

/// Control values `u_i` on the window `k..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    start: usize,
    values: Vec<DVector<f64>>,
}

impl ControlSignal {
    pub fn new(start: usize, values: Vec<DVector<f64>>) -> Self {
        Self { start, values }
    }

    pub fn zero(m: usize, start: usize, grid: &TimeGrid) -> Self {
        Self { start, values: vec![DVector::zeros(m); grid.len() - start] }
    }

    pub fn from_fn(grid: &TimeGrid, start: usize, f: impl Fn(f64) -> DVector<f64>) -> Self {
        Self { start, values: (start..=grid.steps()).map(|i| f(grid.node(i))).collect() }
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    /// Control at global node `i`.
    pub fn at(&self, i: usize) -> &DVector<f64> {
        &self.values[i - self.start]
    }

    /// The restriction of this control to nodes `from..=n`.
    pub fn restrict(&self, from: usize) -> Result<Self> {
        if from < self.start || from >= self.start + self.values.len() {
            return Err(Error::IndexOutOfRange { index: from, min: self.start, max: self.start + self.values.len() - 1 });
        }
        Ok(Self { start: from, values: self.values[from - self.start..].to_vec() })
    }

    pub(crate) fn check(&self, sys: &SystemSpec, grid: &TimeGrid, start: usize) -> Result<()> {
        if self.start != start || self.values.len() != grid.len() - start {
            return Err(Error::ControlWindow {
                expected_start: start,
                expected_end: grid.steps(),
                got_start: self.start,
                got_len: self.values.len(),
            });
        }
        if let Some(i) = self.values.iter().position(|v| v.len() != sys.input_dim()) {
            return Err(Error::Dimension(format!(
                "control value {i} has length {}, input dimension is {}",
                self.values[i].len(),
                sys.input_dim()
            )));
        }
        Ok(())
    }
}

/// State values on all nodes `0..=n`. Nodes before `start` carry the initial tail.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    start: usize,
    values: Vec<DVector<f64>>,
    /// Tail value at the junction node when it differs from the head.
    junction: Option<DVector<f64>>,
}

impl StateTrajectory {
    /// Assembles the extended solution from the initial state and the window values `w_k..w_n`.
    pub(crate) fn assemble(xi: &InitialState, window: Vec<DVector<f64>>) -> Self {
        let k = xi.tau_index();
        let mut values = Vec::with_capacity(k + window.len());
        values.extend(xi.tail().iter().take(k).cloned());
        values.extend(window);
        let junction = (k > 0).then(|| xi.tail()[k].clone());
        Self { start: k, values, junction }
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn at(&self, i: usize) -> &DVector<f64> {
        &self.values[i]
    }

    /// Values on the window `k..=n`.
    pub fn window(&self) -> &[DVector<f64>] {
        &self.values[self.start..]
    }

    pub fn last_index(&self) -> usize {
        self.values.len() - 1
    }

    /// Largest node-wise Euclidean distance to `other` over the common window.
    pub fn max_distance(&self, other: &Self) -> f64 {
        let from = self.start.max(other.start);
        self.values[from..].iter().zip(&other.values[from..]).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Finite-memory state at node `r`: the head `w_r` and the history on nodes `0..=r`.
    ///
    /// When the original tail jumps at its junction node, the history value there is
    /// stored as the mean of the two one-sided values, so every trapezoid integral
    /// over the history is unchanged by the restart.
    pub fn extend_state(&self, r: usize) -> Result<InitialState> {
        let last = self.values.len() - 1;
        if r < self.start || r > last {
            return Err(Error::IndexOutOfRange { index: r, min: self.start, max: last });
        }
        let mut tail = self.values[..=r].to_vec();
        if let Some(j) = &self.junction {
            tail[self.start] = if r == self.start { j.clone() } else { (j + &self.values[self.start]) * 0.5 };
        }
        InitialState::new(r, self.values[r].clone(), tail)
    }
}

/// Node samples `Z_i` of the fundamental matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalMatrix {
    values: Vec<DMatrix<f64>>,
    transposed: Vec<DMatrix<f64>>,
}

impl FundamentalMatrix {
    pub(crate) fn new(values: Vec<DMatrix<f64>>) -> Self {
        let transposed = values.iter().map(|z| z.transpose()).collect();
        Self { values, transposed }
    }

    pub fn at(&self, i: usize) -> &DMatrix<f64> {
        &self.values[i]
    }

    /// `Z^T(t_i)`, the state transition of the plant.
    pub fn transposed(&self, i: usize) -> &DMatrix<f64> {
        &self.transposed[i]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn check(&self, grid: &TimeGrid) -> Result<()> {
        if self.values.len() != grid.len() {
            return Err(Error::Dimension(format!("fundamental matrix has {} nodes, grid has {}", self.values.len(), grid.len())));
        }
        Ok(())
    }
}
