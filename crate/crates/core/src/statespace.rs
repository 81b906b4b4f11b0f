//! Finite-memory state representation and the operator form of the synthesis equations.
//!
//! A state at `tau` is a pair `(head, tail)` with the tail in reversed time,
//! `tail(s) = w(tau - s)` for `s` in `[0, tau]`, sampled at `s_l = l h`,
//! `l = 0..=k`. The inner product is `head . head + trapezoid(tail . tail)`.

use nalgebra::{DMatrix, DVector};

use crate::blocks;
use crate::error::{Error, Result};
use crate::model::{trapezoid_weights, ReferenceSignal, StateTrajectory, SystemSpec, TimeGrid};
use crate::riccati::{RiccatiField, TrackingField};

/// Element of the state space at node `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateElement {
    tau_index: usize,
    head: DVector<f64>,
    tail: Vec<DVector<f64>>,
    /// Samples of the generating function beyond `s = tau`, used to re-embed at other nodes.
    source: Vec<DVector<f64>>,
}

impl StateElement {
    /// General element; the tail has `k + 1` values in reversed time.
    pub fn new(tau_index: usize, head: DVector<f64>, tail: Vec<DVector<f64>>) -> Result<Self> {
        if tail.len() != tau_index + 1 || tail.iter().any(|v| v.len() != head.len()) {
            return Err(Error::Dimension(format!("tail at node {tau_index} needs {} values of length {}", tau_index + 1, head.len())));
        }
        Ok(Self { tau_index, head, source: tail.clone(), tail })
    }

    /// The state `(w(t_j), w(t_j - .))` of a trajectory at node `j`.
    pub fn from_trajectory(w: &StateTrajectory, j: usize) -> Result<Self> {
        if j > w.last_index() {
            return Err(Error::IndexOutOfRange { index: j, min: 0, max: w.last_index() });
        }
        let tail = (0..=j).map(|l| w.at(j - l).clone()).collect();
        Self::new(j, w.at(j).clone(), tail)
    }

    pub fn tau_index(&self) -> usize {
        self.tau_index
    }

    pub fn head(&self) -> &DVector<f64> {
        &self.head
    }

    /// Tail values at `s_0..=s_k`.
    pub fn tail(&self) -> &[DVector<f64>] {
        &self.tail
    }

    /// The same generating function viewed as a state at node `j`.
    pub fn at(&self, j: usize) -> Result<Self> {
        if j >= self.source.len() {
            return Err(Error::IndexOutOfRange { index: j, min: 0, max: self.source.len() - 1 });
        }
        Ok(Self { tau_index: j, head: self.head.clone(), tail: self.source[..=j].to_vec(), source: self.source.clone() })
    }

    fn with_parts(&self, head: DVector<f64>, tail: Vec<DVector<f64>>) -> Self {
        Self { tau_index: self.tau_index, head, source: tail.clone(), tail }
    }
}

/// Domain element with `tail(s) = g(s)` and `head = g(0)`, sampled on the whole grid.
pub fn make_domain_element(grid: &TimeGrid, tau_index: usize, g: impl Fn(f64) -> DVector<f64>) -> Result<StateElement> {
    grid.check_index(tau_index, 0)?;
    let source: Vec<DVector<f64>> = grid.nodes().map(g).collect();
    Ok(StateElement { tau_index, head: source[0].clone(), tail: source[..=tau_index].to_vec(), source })
}

/// `<a, b>` in the discrete state space.
pub fn inner(a: &StateElement, b: &StateElement, h: f64) -> Result<f64> {
    if a.tau_index != b.tau_index || a.head.len() != b.head.len() {
        return Err(Error::Dimension("elements live in different state spaces".into()));
    }
    let w = trapezoid_weights(h, a.tail.len());
    Ok(a.head.dot(&b.head) + a.tail.iter().zip(&b.tail).zip(w).map(|((x, y), w)| w * x.dot(y)).sum::<f64>())
}

/// Actions of the state, input, output and Riccati operators at one node.
pub struct OperatorActions<'a> {
    sys: &'a SystemSpec,
    ric: &'a RiccatiField,
    tau_index: usize,
    h: f64,
    p2: Option<&'a DMatrix<f64>>,
}

impl<'a> OperatorActions<'a> {
    /// Operators at `tau_k`; the Riccati action is available only at stored `P2` checkpoints.
    pub fn new(ric: &'a RiccatiField, tau_index: usize) -> Result<Self> {
        ric.grid().check_index(tau_index, 0)?;
        Ok(Self { sys: ric.system(), ric, tau_index, h: ric.grid().step(), p2: ric.stored_p2(tau_index).ok() })
    }

    fn check(&self, x: &StateElement) -> Result<()> {
        if x.tau_index != self.tau_index || x.head.len() != self.sys.state_dim() {
            return Err(Error::Dimension(format!("element is not in the state space at node {}", self.tau_index)));
        }
        Ok(())
    }

    /// `(A head + int_0^tau N(s) tail(s) ds, -D_s tail)`.
    pub fn state(&self, x: &StateElement) -> Result<StateElement> {
        self.check(x)?;
        let k = self.tau_index;
        let h = self.h;
        let mut head = self.sys.a() * &x.head;
        for (l, w) in trapezoid_weights(h, k + 1).into_iter().enumerate() {
            if w != 0.0 {
                head.gemv(w, self.sys.kernel(l), &x.tail[l], 1.0);
            }
        }
        let t = &x.tail;
        let tail = if k == 0 {
            vec![DVector::zeros(x.head.len())]
        } else if k == 1 {
            vec![-(&t[1] - &t[0]) / h; 2]
        } else {
            (0..=k)
                .map(|l| {
                    let ds = if l == 0 {
                        (&t[0] * -3.0 + &t[1] * 4.0 - &t[2]) / (2.0 * h)
                    } else if l == k {
                        (&t[k] * 3.0 - &t[k - 1] * 4.0 + &t[k - 2]) / (2.0 * h)
                    } else {
                        (&t[l + 1] - &t[l - 1]) / (2.0 * h)
                    };
                    -ds
                })
                .collect()
        };
        Ok(x.with_parts(head, tail))
    }

    /// `(B u, 0)`.
    pub fn input(&self, u: &DVector<f64>) -> StateElement {
        let d = self.sys.state_dim();
        let tail = vec![DVector::zeros(d); self.tau_index + 1];
        StateElement { tau_index: self.tau_index, head: self.sys.b() * u, source: tail.clone(), tail }
    }

    /// `B^T head`.
    pub fn input_adjoint(&self, x: &StateElement) -> Result<DVector<f64>> {
        self.check(x)?;
        Ok(self.sys.b().transpose() * &x.head)
    }

    /// `C head`.
    pub fn output(&self, x: &StateElement) -> Result<DVector<f64>> {
        self.check(x)?;
        Ok(self.sys.c() * &x.head)
    }

    /// History-ordered weighted tail: entry `i` is `w_i tail(tau - s_i)`.
    fn history(&self, x: &StateElement) -> DVector<f64> {
        let k = self.tau_index;
        let w = trapezoid_weights(self.h, k + 1);
        let rev: Vec<DVector<f64>> = (0..=k).map(|i| &x.tail[k - i] * w[i]).collect();
        blocks::stack(&rev)
    }

    /// Head component of the Riccati action, `P0 head + int P1(tau - s, tau) tail(s) ds`.
    pub fn riccati_head(&self, x: &StateElement) -> Result<DVector<f64>> {
        self.check(x)?;
        let k = self.tau_index;
        let mut head = self.ric.p0(k) * &x.head;
        head.gemv_tr(1.0, self.ric.p1_stacked(k), &self.history(x), 1.0);
        Ok(head)
    }

    /// Full Riccati action `(P0 head + P1 tail, P1^* head + P2 tail)`.
    pub fn riccati(&self, x: &StateElement) -> Result<StateElement> {
        let head = self.riccati_head(x)?;
        let k = self.tau_index;
        let p2 = self.p2.ok_or(Error::MissingCheckpoint(k))?;
        let hist = self.ric.p1_stacked(k) * &x.head + p2 * self.history(x);
        let d = x.head.len();
        let tail = (0..=k).map(|l| blocks::segment(&hist, k - l, d).into_owned()).collect();
        Ok(x.with_parts(head, tail))
    }
}

/// The tracking pair `(d1(tau), d2(tau - ., tau))` at node `j`.
pub fn tracking_element(trk: &TrackingField, j: usize) -> Result<StateElement> {
    if j >= trk.len() {
        return Err(Error::IndexOutOfRange { index: j, min: 0, max: trk.len() - 1 });
    }
    let tail = (0..=j).map(|l| trk.d2(j - l, j)).collect();
    StateElement::new(j, trk.d1(j).clone(), tail)
}

/// Second-order difference quotient of `f` at node `j` over `0..=n`.
fn tau_derivative(j: usize, n: usize, h: f64, mut f: impl FnMut(usize) -> Result<f64>) -> Result<f64> {
    if j == n {
        Ok((3.0 * f(n)? - 4.0 * f(n - 1)? + f(n - 2)?) / (2.0 * h))
    } else if j == 0 {
        Ok((-3.0 * f(0)? + 4.0 * f(1)? - f(2)?) / (2.0 * h))
    } else {
        Ok((f(j + 1)? - f(j - 1)?) / (2.0 * h))
    }
}

/// `|d/dtau <Omega, P Xi> + <A Omega, P Xi> + <P Omega, A Xi> - <B^* P Omega, B^* P Xi> + <C Omega, C Xi>|` at `tau_k`.
///
/// The `tau` derivative re-embeds both elements at the neighbouring nodes and
/// needs the `P2` slices stored there.
pub fn riccati_operator_residual(
    ric: &RiccatiField,
    sys: &SystemSpec,
    tau_index: usize,
    omega: &StateElement,
    xi: &StateElement,
) -> Result<f64> {
    check_system(ric, sys)?;
    let n = ric.grid().steps();
    let h = ric.grid().step();
    let pairing = |j: usize| -> Result<f64> {
        let ops = OperatorActions::new(ric, j)?;
        let (o, x) = (omega.at(j)?, xi.at(j)?);
        inner(&o, &ops.riccati(&x)?, h)
    };
    let dt = tau_derivative(tau_index, n, h, pairing)?;
    let ops = OperatorActions::new(ric, tau_index)?;
    let (o, x) = (omega.at(tau_index)?, xi.at(tau_index)?);
    let (po, px) = (ops.riccati(&o)?, ops.riccati(&x)?);
    let value = dt + inner(&ops.state(&o)?, &px, h)? + inner(&po, &ops.state(&x)?, h)?
        - ops.input_adjoint(&po)?.dot(&ops.input_adjoint(&px)?)
        + ops.output(&o)?.dot(&ops.output(&x)?);
    Ok(value.abs())
}

/// `|d/dtau <d, Xi> + <d, (A - B B^* P) Xi> - <y, C Xi>|` at `tau_k`.
pub fn tracking_operator_residual(
    trk: &TrackingField,
    ric: &RiccatiField,
    sys: &SystemSpec,
    tau_index: usize,
    xi: &StateElement,
    y: &ReferenceSignal,
) -> Result<f64> {
    check_system(ric, sys)?;
    if trk.len() != ric.grid().len() || y.values().len() != trk.len() {
        return Err(Error::Dimension("tracking field, reference and Riccati field differ in length".into()));
    }
    let n = ric.grid().steps();
    let h = ric.grid().step();
    let pairing = |j: usize| -> Result<f64> { inner(&tracking_element(trk, j)?, &xi.at(j)?, h) };
    let dt = tau_derivative(tau_index, n, h, pairing)?;
    let ops = OperatorActions::new(ric, tau_index)?;
    let x = xi.at(tau_index)?;
    let dvec = tracking_element(trk, tau_index)?;
    let mut ax = ops.state(&x)?;
    ax.head -= sys.bbt() * ops.riccati_head(&x)?;
    let value = dt + inner(&dvec, &ax, h)? - y.at(tau_index).dot(&ops.output(&x)?);
    Ok(value.abs())
}

fn check_system(ric: &RiccatiField, sys: &SystemSpec) -> Result<()> {
    if ric.system() != sys {
        return Err(Error::Dimension("Riccati field was solved for a different plant".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{random_instance, Instance};
    use crate::model::{simulate, ControlSignal, ReferenceSignal};
    use crate::riccati::{solve_riccati_with, solve_tracking, RiccatiOptions};

    fn instance(n: usize) -> Instance {
        random_instance(7, 2, 1, 1, &TimeGrid::new(1.0, n).unwrap()).unwrap()
    }

    fn omega_gen(t: f64) -> DVector<f64> {
        DVector::from_vec(vec![1.0 + 0.5 * t, (2.0 * t).cos()])
    }

    fn xi_gen(t: f64) -> DVector<f64> {
        DVector::from_vec(vec![(1.5 * t).sin() - 0.3, 0.7 * (-t).exp()])
    }

    #[test]
    fn domain_elements_start_at_their_head() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let c = make_domain_element(&grid, 4, |_| DVector::from_element(2, 3.0)).unwrap();
        assert!(c.tail().iter().all(|v| v == c.head()));
        let v = DVector::from_vec(vec![1.0, -2.0]);
        let p = make_domain_element(&grid, 6, |t| &v * (1.0 + t)).unwrap();
        assert_eq!(p.tail()[0], v);
        assert_eq!(p.head(), &v);
        let r = make_domain_element(&grid, 7, xi_gen).unwrap();
        assert_eq!(&r.tail()[0] - r.head(), DVector::zeros(2));
        assert_eq!(r.at(3).unwrap().tail().len(), 4);
    }

    #[test]
    fn riccati_action_is_symmetric() {
        let inst = instance(30);
        let ric = solve_riccati_with(&inst.sys, &inst.grid, &RiccatiOptions::every(6)).unwrap();
        let ops = OperatorActions::new(&ric, 12).unwrap();
        let o = make_domain_element(&inst.grid, 12, omega_gen).unwrap();
        let x = make_domain_element(&inst.grid, 12, xi_gen).unwrap();
        let h = inst.grid.step();
        let lhs = inner(&o, &ops.riccati(&x).unwrap(), h).unwrap();
        let rhs = inner(&ops.riccati(&o).unwrap(), &x, h).unwrap();
        assert!((lhs - rhs).abs() <= 1e-10);
        assert!(matches!(OperatorActions::new(&ric, 13).unwrap().riccati(&x.at(13).unwrap()), Err(Error::MissingCheckpoint(13))));
    }

    #[test]
    fn memory_action_reproduces_the_dynamics() {
        let err = |n: usize| {
            let inst = instance(n);
            let u = ControlSignal::from_fn(&inst.grid, 0, |t| DVector::from_element(1, (3.0 * t).sin()));
            let w = simulate(&inst.sys, &inst.grid, &inst.xi, &u).unwrap();
            let ric = solve_riccati_with(&inst.sys, &inst.grid, &RiccatiOptions::default()).unwrap();
            let j = n / 2;
            let ops = OperatorActions::new(&ric, j).unwrap();
            let state = StateElement::from_trajectory(&w, j).unwrap();
            let rhs = ops.state(&state).unwrap().head + ops.input(u.at(j)).head;
            let dw = (w.at(j + 1) - w.at(j - 1)) / (2.0 * inst.grid.step());
            (rhs - dw).norm()
        };
        let (e1, e2) = (err(40), err(80));
        assert!(e1 < 1e-2 && e1 / e2 > 3.5, "{e1} {e2}");
    }

    #[test]
    fn zero_output_gives_zero_residual() {
        let inst = instance(20);
        let sys = inst.sys.with_c(DMatrix::zeros(1, 2)).unwrap();
        let ric = solve_riccati_with(&sys, &inst.grid, &RiccatiOptions::every(1)).unwrap();
        let o = make_domain_element(&inst.grid, 8, omega_gen).unwrap();
        let x = make_domain_element(&inst.grid, 8, xi_gen).unwrap();
        assert_eq!(riccati_operator_residual(&ric, &sys, 8, &o, &x).unwrap(), 0.0);
        assert!(matches!(
            riccati_operator_residual(&solve_riccati_with(&sys, &inst.grid, &RiccatiOptions::default()).unwrap(), &sys, 8, &o, &x),
            Err(Error::MissingCheckpoint(_))
        ));
    }

    #[test]
    fn zero_reference_gives_zero_tracking_residual() {
        let inst = instance(20);
        let y = ReferenceSignal::zero(1, &inst.grid);
        let ric = solve_riccati_with(&inst.sys, &inst.grid, &RiccatiOptions::default()).unwrap();
        let trk = solve_tracking(&inst.sys, &inst.grid, &ric, &y).unwrap();
        let x = make_domain_element(&inst.grid, 8, xi_gen).unwrap();
        assert_eq!(tracking_operator_residual(&trk, &ric, &inst.sys, 8, &x, &y).unwrap(), 0.0);
    }

    #[test]
    fn operator_residuals_decrease_under_refinement() {
        let res = |n: usize| {
            let inst = instance(n);
            let j = n / 2;
            let ric = solve_riccati_with(&inst.sys, &inst.grid, &RiccatiOptions::default().with_neighbourhoods(&[j, n])).unwrap();
            let trk = solve_tracking(&inst.sys, &inst.grid, &ric, &inst.y).unwrap();
            let o = make_domain_element(&inst.grid, 0, omega_gen).unwrap();
            let x = make_domain_element(&inst.grid, 0, xi_gen).unwrap();
            [
                riccati_operator_residual(&ric, &inst.sys, j, &o, &x).unwrap(),
                tracking_operator_residual(&trk, &ric, &inst.sys, j, &x, &inst.y).unwrap(),
                riccati_operator_residual(&ric, &inst.sys, n, &o, &x).unwrap(),
                tracking_operator_residual(&trk, &ric, &inst.sys, n, &x, &inst.y).unwrap(),
            ]
        };
        let (a, b) = (res(40), res(80));
        for (x, y) in a.iter().zip(&b) {
            assert!(x / y >= 1.8, "{a:?} {b:?}");
        }
    }
}
