use crate::error::{Error, Result};

/// Uniform grid `t_i = i * h` on `[0, T]` with `h = T / n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Grid(format!("horizon must be positive, got {horizon}")));
        }
        if steps < 2 {
            return Err(Error::Grid(format!("need at least 2 steps, got {steps}")));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of intervals `n`; nodes are `0..=n`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            i as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |i| self.node(i))
    }

    /// Composite trapezoid weights for the nodes `from..=to`.
    ///
    /// A single-node range integrates to zero.
    pub fn trapezoid(&self, from: usize, to: usize) -> Vec<f64> {
        trapezoid_weights(self.step(), to + 1 - from)
    }

    /// Node index of time `t` when it lies on the grid (to 1e-9 relative).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t / self.step();
        let i = x.round();
        if i < 0.0 || i as usize > self.steps || (x - i).abs() > 1e-9 * x.abs().max(1.0) {
            None
        } else {
            Some(i as usize)
        }
    }

    pub(crate) fn check_index(&self, index: usize, min: usize) -> Result<()> {
        if index < min || index > self.steps {
            Err(Error::IndexOutOfRange { index, min, max: self.steps })
        } else {
            Ok(())
        }
    }
}

/// Trapezoid weights for `count` equally spaced nodes with spacing `h`.
pub fn trapezoid_weights(h: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => {
            let mut w = vec![h; count];
            w[0] = 0.5 * h;
            w[count - 1] = 0.5 * h;
            w
        }
    }
}
