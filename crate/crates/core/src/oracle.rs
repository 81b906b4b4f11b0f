//! Direct transcription of the tracking problem as a finite least-squares problem.
//!
//! The discrete cost uses the same trapezoid weights as [`crate::model::cost`],
//! so the minimizer here is the exact optimum over grid controls.

use nalgebra::{DMatrix, DVector};

use crate::blocks;
use crate::error::{Error, Result};
use crate::model::{simulate, ControlSignal, InitialState, ReferenceSignal, SystemSpec, TimeGrid};

/// Stacked outputs `C w` on nodes `k..=n` as an affine function `G u + g` of the stacked control.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteAffineMap {
    start: usize,
    m: usize,
    p: usize,
    gain: DMatrix<f64>,
    offset: DVector<f64>,
    weights: Vec<f64>,
}

impl DiscreteAffineMap {
    pub fn start(&self) -> usize {
        self.start
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Stacked outputs for the stacked control `u`.
    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.gain * u + &self.offset
    }

    fn stack_control(&self, u: &ControlSignal) -> Result<DVector<f64>> {
        if u.start() != self.start || u.values().len() != self.weights.len() || u.values().iter().any(|v| v.len() != self.m) {
            return Err(Error::ControlWindow {
                expected_start: self.start,
                expected_end: self.start + self.weights.len() - 1,
                got_start: u.start(),
                got_len: u.values().len(),
            });
        }
        Ok(blocks::stack(u.values()))
    }

    fn stack_reference(&self, y: &ReferenceSignal) -> Result<DVector<f64>> {
        let vals = y.values();
        if vals.len() != self.start + self.weights.len() || vals.iter().any(|v| v.len() != self.p) {
            return Err(Error::Dimension("reference signal does not match the affine map".into()));
        }
        Ok(blocks::stack(&vals[self.start..]))
    }

    fn expand(&self, width: usize) -> DVector<f64> {
        DVector::from_iterator(self.weights.len() * width, self.weights.iter().flat_map(|w| std::iter::repeat_n(*w, width)))
    }

    fn value(&self, yv: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let e = self.apply(u) - yv;
        let wy = self.expand(self.p);
        let wu = self.expand(self.m);
        e.component_mul(&e).dot(&wy) + u.component_mul(u).dot(&wu)
    }

    fn grad(&self, yv: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let e = (self.apply(u) - yv).component_mul(&self.expand(self.p));
        (self.gain.tr_mul(&e) + u.component_mul(&self.expand(self.m))) * 2.0
    }
}

/// Assembles `G` column by column from unit-impulse runs and `g` from the zero-control run.
pub fn build_affine_map(sys: &SystemSpec, grid: &TimeGrid, xi: &InitialState) -> Result<DiscreteAffineMap> {
    sys.check_grid(grid)?;
    xi.check(sys, grid)?;
    let k = xi.tau_index();
    let n = grid.steps();
    let (d, m, p) = (sys.state_dim(), sys.input_dim(), sys.output_dim());
    let nodes = n - k + 1;
    let outputs = |xi: &InitialState, u: &ControlSignal| -> Result<DVector<f64>> {
        let w = simulate(sys, grid, xi, u)?;
        Ok(blocks::stack(&w.window().iter().map(|v| sys.c() * v).collect::<Vec<_>>()))
    };
    let offset = outputs(xi, &ControlSignal::zero(m, k, grid))?;
    let zero = InitialState::zero(d, k);
    let mut gain = DMatrix::zeros(nodes * p, nodes * m);
    for r in 0..nodes {
        for j in 0..m {
            let mut values = vec![DVector::zeros(m); nodes];
            values[r][j] = 1.0;
            let col = outputs(&zero, &ControlSignal::new(k, values))?;
            gain.set_column(r * m + j, &col);
        }
    }
    Ok(DiscreteAffineMap { start: k, m, p, gain, offset, weights: grid.trapezoid(k, n) })
}

/// Minimizer of the weighted discrete cost, from the normal equations by Cholesky.
pub fn solve_qp(map: &DiscreteAffineMap, y: &ReferenceSignal) -> Result<ControlSignal> {
    let yv = map.stack_reference(y)?;
    let wy = map.expand(map.p);
    let wu = map.expand(map.m);
    let wg = DMatrix::from_fn(map.gain.nrows(), map.gain.ncols(), |i, j| map.gain[(i, j)] * wy[i]);
    let mut normal = map.gain.tr_mul(&wg);
    for (i, w) in wu.iter().enumerate() {
        normal[(i, i)] += w;
    }
    let rhs = -wg.tr_mul(&(&map.offset - &yv));
    let chol = normal.cholesky().ok_or(Error::Singular("normal equations"))?;
    let u = chol.solve(&rhs);
    Ok(ControlSignal::new(map.start, blocks::unstack(&u, map.m)))
}

/// Weighted discrete cost of the control `u`.
pub fn discrete_cost(map: &DiscreteAffineMap, y: &ReferenceSignal, u: &ControlSignal) -> Result<f64> {
    Ok(map.value(&map.stack_reference(y)?, &map.stack_control(u)?))
}

/// Analytic gradient of [`discrete_cost`] with respect to the stacked control.
pub fn cost_gradient(map: &DiscreteAffineMap, y: &ReferenceSignal, u: &ControlSignal) -> Result<DVector<f64>> {
    Ok(map.grad(&map.stack_reference(y)?, &map.stack_control(u)?))
}

/// Largest gap between central differences of the discrete cost and its analytic gradient.
pub fn gradient_check(map: &DiscreteAffineMap, y: &ReferenceSignal, u: &ControlSignal, eps: f64) -> Result<f64> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Grid(format!("finite-difference step must be positive, got {eps}")));
    }
    let yv = map.stack_reference(y)?;
    let uv = map.stack_control(u)?;
    let grad = map.grad(&yv, &uv);
    let mut worst = 0.0f64;
    for i in 0..uv.len() {
        let mut up = uv.clone();
        up[i] += eps;
        let mut down = uv.clone();
        down[i] -= eps;
        let fd = (map.value(&yv, &up) - map.value(&yv, &down)) / (2.0 * eps);
        worst = worst.max((fd - grad[i]).abs());
    }
    Ok(worst)
}
