use nalgebra::{DMatrix, DVector};

use super::field::RiccatiField;
use super::tracking::TrackingField;
use crate::blocks;
use crate::error::{Error, Result};
use crate::model::{
    memory_sum, partial_cost, step_matrix, ControlSignal, InitialState, ReferenceSignal, StateTrajectory, SystemSpec, TimeGrid,
};

fn check_fields(ric: &RiccatiField, trk: &TrackingField) -> Result<()> {
    if trk.len() != ric.grid().len() {
        return Err(Error::Dimension("tracking field and Riccati field live on different grids".into()));
    }
    Ok(())
}

fn check_state(ric: &RiccatiField, k: usize, xi: &InitialState) -> Result<()> {
    ric.grid().check_index(k, 0)?;
    if xi.tau_index() != k || xi.dim() != ric.system().state_dim() {
        return Err(Error::Dimension(format!("state is not an element of the state space at node {k}")));
    }
    Ok(())
}

/// Trapezoid-weighted tail, stacked (empty at `k = 0`).
fn weighted_tail(ric: &RiccatiField, xi: &InitialState) -> DVector<f64> {
    if xi.tau_index() == 0 {
        DVector::zeros(0)
    } else {
        blocks::stack(&xi.weighted_tail(ric.grid().step()))
    }
}

/// `P0 xi_hat + int_0^tau P1(s,tau) xi_tilde(s) ds + d1(tau)`.
fn gain_term(ric: &RiccatiField, trk: &TrackingField, k: usize, xi: &InitialState) -> DVector<f64> {
    let mut g = ric.p0(k) * xi.head() + trk.d1(k);
    if k > 0 {
        g.gemv_tr(1.0, ric.p1_stacked(k), &weighted_tail(ric, xi), 1.0);
    }
    g
}

/// Optimal control value at `tau_k` for the state `xi`.
pub fn feedback_control(ric: &RiccatiField, trk: &TrackingField, k: usize, xi: &InitialState) -> Result<DVector<f64>> {
    check_fields(ric, trk)?;
    check_state(ric, k, xi)?;
    Ok(-(ric.system().b().transpose() * gain_term(ric, trk, k, xi)))
}

/// Quadratic form in `v` minimized by the optimal control value at `tau_k`, up to a `v`-independent term.
pub fn coercive_form(ric: &RiccatiField, trk: &TrackingField, k: usize, xi: &InitialState, v: &DVector<f64>) -> Result<f64> {
    check_fields(ric, trk)?;
    check_state(ric, k, xi)?;
    let bg = ric.system().b().transpose() * gain_term(ric, trk, k, xi);
    Ok(v.norm_squared() + 2.0 * v.dot(&bg))
}

/// Runs the plant from `xi0` under the feedback law, with the running history as state.
///
/// Each implicit step solves for the new state and control together.
pub fn closed_loop(
    sys: &SystemSpec,
    grid: &TimeGrid,
    ric: &RiccatiField,
    trk: &TrackingField,
    xi0: &InitialState,
) -> Result<(ControlSignal, StateTrajectory)> {
    if ric.grid() != grid || ric.system() != sys {
        return Err(Error::Dimension("Riccati field was solved for a different plant or grid".into()));
    }
    check_fields(ric, trk)?;
    xi0.check(sys, grid)?;
    let k = xi0.tau_index();
    let n = grid.steps();
    let d = sys.state_dim();
    let h = grid.step();
    let bbt = sys.bbt();
    let bt = sys.b().transpose();
    let base = step_matrix(sys.a(), sys.kernel(0), h);
    let tail = xi0.weighted_tail(h);

    let mut q: Vec<DVector<f64>> = tail.iter().take(k).cloned().collect();
    let mut w = vec![xi0.head().clone()];
    let mut u = vec![feedback_control(ric, trk, k, xi0)?];
    let mut f = sys.a() * xi0.head() + memory_sum(sys, &tail, k) + sys.b() * &u[0];
    for i in k..n {
        let wi = &w[i - k];
        let settled = if i == k {
            let own = wi * (0.5 * h);
            if k > 0 {
                own + &tail[k]
            } else {
                own
            }
        } else {
            wi * h
        };
        q.push(settled);
        let known = memory_sum(sys, &q, i + 1);
        let r = ric.p1_stacked(i + 1);
        let mut c = trk.d1(i + 1).clone();
        c.gemv_tr(1.0, &r.rows(0, (i + 1) * d), &blocks::stack(&q), 1.0);
        let g = ric.p0(i + 1) + blocks::block(r, i + 1, 0, d, d).transpose() * (0.5 * h);
        let m: DMatrix<f64> = &base + bbt * &g * (0.5 * h);
        let rhs = wi + (&f + &known - bbt * &c) * (0.5 * h);
        let next = m.lu().solve(&rhs).ok_or(Error::Singular("closed-loop step"))?;
        let un = -(&bt * (&g * &next + &c));
        f = sys.a() * &next + &known + sys.kernel(0) * &next * (0.5 * h) + sys.b() * &un;
        w.push(next);
        u.push(un);
    }
    Ok((ControlSignal::new(k, u), StateTrajectory::assemble(xi0, w)))
}

fn value_with(ric: &RiccatiField, trk: &TrackingField, k: usize, xi: &InitialState, p2: &DMatrix<f64>) -> f64 {
    let head = xi.head();
    let mut v = head.dot(&(ric.p0(k) * head)) + 2.0 * head.dot(trk.d1(k)) + trk.m(k);
    if k > 0 {
        let q = weighted_tail(ric, xi);
        v += 2.0 * head.dot(&(ric.p1_stacked(k).transpose() * &q));
        v += q.dot(&(p2 * &q));
        v += 2.0 * q.dot(trk.d2_stacked(k));
    }
    v
}

/// Value function `W_tau(omega)`, the optimal cost from the state `omega` at `tau_k`.
pub fn value_function(ric: &RiccatiField, trk: &TrackingField, k: usize, omega: &InitialState) -> Result<f64> {
    check_fields(ric, trk)?;
    check_state(ric, k, omega)?;
    let p2 = if k == 0 { DMatrix::zeros(0, 0) } else { ric.p2_slice(k)? };
    Ok(value_with(ric, trk, k, omega, &p2))
}

/// Dissipation-inequality diagnostics along an admissible pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DiResidual {
    /// Node index of the first entry.
    pub start: usize,
    /// `W(t_i)`, the value function along the pair.
    pub values: Vec<f64>,
    /// `int_tau^{t_i} L + W_{t_i}(Xi(t_i)) - W_tau(Xi_tau)`; nonnegative, zero for the optimal pair.
    pub slack: Vec<f64>,
    /// `dW/dt + L` by finite differences; vanishes along the optimal pair.
    pub pointwise: Vec<f64>,
}

impl DiResidual {
    pub fn min_slack(&self) -> f64 {
        self.slack.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_slack(&self) -> f64 {
        self.slack.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs_slack(&self) -> f64 {
        self.slack.iter().map(|s| s.abs()).fold(0.0, f64::max)
    }

    pub fn max_pointwise(&self) -> f64 {
        self.pointwise.iter().map(|s| s.abs()).fold(0.0, f64::max)
    }
}

/// Evaluates the value function along `(w, u)` from the start of `w` and the resulting DI slack.
pub fn di_residual(
    sys: &SystemSpec,
    grid: &TimeGrid,
    ric: &RiccatiField,
    trk: &TrackingField,
    w: &StateTrajectory,
    u: &ControlSignal,
    y: &ReferenceSignal,
) -> Result<DiResidual> {
    check_fields(ric, trk)?;
    let k = w.start();
    let n = grid.steps();
    crate::model::cost(sys, grid, w, u, y, k)?;
    if u.start() != k {
        return Err(Error::ControlWindow { expected_start: k, expected_end: n, got_start: u.start(), got_len: u.values().len() });
    }
    if n - k < 2 {
        return Err(Error::Grid("the pair must cover at least three nodes".into()));
    }
    let states = (k..=n).map(|i| w.extend_state(i)).collect::<Result<Vec<_>>>()?;
    let mut values = vec![0.0; n - k + 1];
    ric.for_each_slice(k, |j, slice| {
        values[j - k] = value_with(ric, trk, j, &states[j - k], &slice.p2);
    })?;
    let slack = (k..=n).map(|i| partial_cost(sys, grid, w, u, y, k, i) + values[i - k] - values[0]).collect();
    let h = grid.step();
    let lag = |i: usize| crate::model::running_cost(sys, w, u, y, i);
    let v = |i: usize| values[i - k];
    let pointwise = (k..=n)
        .map(|i| {
            let dv = if i == k {
                (-3.0 * v(i) + 4.0 * v(i + 1) - v(i + 2)) / (2.0 * h)
            } else if i == n {
                (3.0 * v(i) - 4.0 * v(i - 1) + v(i - 2)) / (2.0 * h)
            } else {
                (v(i + 1) - v(i - 1)) / (2.0 * h)
            };
            dv + lag(i)
        })
        .collect();
    Ok(DiResidual { start: k, values, slack, pointwise })
}
