use nalgebra::DVector;

use super::field::{RiccatiField, Stepper};
use crate::blocks;
use crate::error::{Error, Result};
use crate::model::{ReferenceSignal, SystemSpec, TimeGrid};

/// Grid samples of the reference-dependent terms `(d1, d2, M)` of the value function.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingField {
    d: usize,
    d1: Vec<DVector<f64>>,
    d2: Vec<DVector<f64>>,
    m: Vec<f64>,
}

impl TrackingField {
    pub fn d1(&self, j: usize) -> &DVector<f64> {
        &self.d1[j]
    }

    /// `d2(s_i, tau_j)`, `i <= j`.
    pub fn d2(&self, i: usize, j: usize) -> DVector<f64> {
        blocks::segment(&self.d2[j], i, self.d).into_owned()
    }

    /// Stacked `d2(s_i, tau_j)`, `i = 0..=j`.
    pub fn d2_stacked(&self, j: usize) -> &DVector<f64> {
        &self.d2[j]
    }

    pub fn m(&self, j: usize) -> f64 {
        self.m[j]
    }

    pub fn m_values(&self) -> &[f64] {
        &self.m
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

struct State {
    d1: DVector<f64>,
    d2: DVector<f64>,
    m: f64,
}

/// Backward sweep of the linear tracking equations along a solved Riccati field.
pub fn solve_tracking(sys: &SystemSpec, grid: &TimeGrid, ric: &RiccatiField, y: &ReferenceSignal) -> Result<TrackingField> {
    if ric.grid() != grid || ric.system() != sys {
        return Err(Error::Dimension("Riccati field was solved for a different plant or grid".into()));
    }
    y.check(sys, grid)?;
    let n = grid.steps();
    let d = sys.state_dim();
    let h = grid.step();
    let stepper = Stepper::new(sys, grid);
    let a_t = sys.a().transpose();
    let ct = sys.c().transpose();
    let bt = sys.b().transpose();
    let bbt = sys.bbt();

    let rhs = |s: &State, j: usize| -> State {
        let p0 = ric.p0(j);
        let r = ric.p1_stacked(j);
        let bd1 = bbt * &s.d1;
        let d1 = &a_t * &s.d1 - p0 * &bd1 + blocks::segment(&s.d2, j, d) - &ct * y.at(j);
        let d2 = stepper.memory_column(j) * &s.d1 - r * &bd1;
        let m = y.at(j).norm_squared() - (&bt * &s.d1).norm_squared();
        State { d1, d2, m }
    };

    let mut d1 = vec![DVector::zeros(d); n + 1];
    let mut d2 = vec![DVector::zeros(0); n + 1];
    let mut m = vec![0.0; n + 1];
    let mut cur = State { d1: DVector::zeros(d), d2: DVector::zeros((n + 1) * d), m: 0.0 };
    d2[n] = cur.d2.clone();
    for j in (0..n).rev() {
        let rows = (j + 1) * d;
        let e = rhs(&cur, j + 1);
        let base_d2 = cur.d2.rows(0, rows).into_owned();
        let e_d2 = e.d2.rows(0, rows).into_owned();
        let predicted = State { d1: &cur.d1 + &e.d1 * h, d2: &base_d2 + &e_d2 * h, m: cur.m + h * e.m };
        let ep = rhs(&predicted, j);
        cur = State {
            d1: &cur.d1 + (&e.d1 + &ep.d1) * (0.5 * h),
            d2: &base_d2 + (&e_d2 + &ep.d2) * (0.5 * h),
            m: cur.m + 0.5 * h * (e.m + ep.m),
        };
        let norm = cur.d1.amax().max(cur.d2.amax()).max(cur.m.abs());
        if !norm.is_finite() || norm > ric.options.blowup_bound {
            return Err(Error::BlowUp { node: j, norm, bound: ric.options.blowup_bound });
        }
        d1[j] = cur.d1.clone();
        d2[j] = cur.d2.clone();
        m[j] = cur.m;
    }
    Ok(TrackingField { d, d1, d2, m })
}
