use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::blocks;
use crate::error::{Error, Result};
use crate::model::{SystemSpec, TimeGrid};

/// Controls the backward sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiOptions {
    /// Keep the `P2` slice at every multiple of this index (0 keeps only `0` and `n`).
    pub checkpoint_every: usize,
    /// Further slice indices to keep.
    pub extra_checkpoints: Vec<usize>,
    /// Abort when a node norm exceeds this bound.
    pub blowup_bound: f64,
}

impl Default for RiccatiOptions {
    fn default() -> Self {
        Self { checkpoint_every: 0, extra_checkpoints: Vec::new(), blowup_bound: 1e8 }
    }
}

impl RiccatiOptions {
    pub fn every(c: usize) -> Self {
        Self { checkpoint_every: c, ..Self::default() }
    }

    /// Adds checkpoints at each index and its two neighbours, as needed by `tau` derivatives.
    pub fn with_neighbourhoods(mut self, indices: &[usize]) -> Self {
        for &j in indices {
            self.extra_checkpoints.extend([j.saturating_sub(2), j.saturating_sub(1), j, j + 1]);
        }
        self
    }

    fn keeps(&self, j: usize, n: usize) -> bool {
        j == 0 || j == n || (self.checkpoint_every > 0 && j.is_multiple_of(self.checkpoint_every)) || self.extra_checkpoints.contains(&j)
    }
}

/// One `tau`-slice of the memory-Riccati system at node `j`.
///
/// `r` stacks `P1(s_i, tau_j)^T` for `i = 0..=j`; `p2` holds `P2(s_i, nu_l, tau_j)`
/// as block `(i, l)` of a square matrix.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Slice {
    pub p0: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub p2: DMatrix<f64>,
}

/// Grid samples of `(P0, P1, P2)` from the backward sweep.
///
/// `P0` and `P1` are kept on every node. `P2` slices are kept only at
/// checkpoints; other slices are recomputed from the nearest later checkpoint,
/// which reproduces the original sweep bit for bit.
#[derive(Debug, Clone)]
pub struct RiccatiField {
    pub(crate) sys: SystemSpec,
    pub(crate) grid: TimeGrid,
    pub(crate) options: RiccatiOptions,
    p0: Vec<DMatrix<f64>>,
    r: Vec<DMatrix<f64>>,
    p2: BTreeMap<usize, DMatrix<f64>>,
}

impl RiccatiField {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn system(&self) -> &SystemSpec {
        &self.sys
    }

    pub fn p0(&self, j: usize) -> &DMatrix<f64> {
        &self.p0[j]
    }

    /// `P1(s_i, tau_j)`, `i <= j`.
    pub fn p1(&self, i: usize, j: usize) -> DMatrix<f64> {
        let d = self.sys.state_dim();
        blocks::block(&self.r[j], i, 0, d, d).transpose()
    }

    /// Stacked `P1(s_i, tau_j)^T`, `i = 0..=j`.
    pub fn p1_stacked(&self, j: usize) -> &DMatrix<f64> {
        &self.r[j]
    }

    pub fn checkpoints(&self) -> impl Iterator<Item = usize> + '_ {
        self.p2.keys().copied()
    }

    pub fn has_checkpoint(&self, j: usize) -> bool {
        self.p2.contains_key(&j)
    }

    /// Stored `P2` slice at a checkpoint.
    pub fn stored_p2(&self, j: usize) -> Result<&DMatrix<f64>> {
        self.p2.get(&j).ok_or(Error::MissingCheckpoint(j))
    }

    /// `P2` slice at `tau_j`, recomputed when it is not stored.
    pub fn p2_slice(&self, j: usize) -> Result<DMatrix<f64>> {
        self.grid.check_index(j, 0)?;
        if let Some(m) = self.p2.get(&j) {
            return Ok(m.clone());
        }
        let (&start, p2) = self.p2.range(j..).next().ok_or(Error::MissingCheckpoint(j))?;
        let mut out = None;
        self.resweep(start, p2.clone(), j, |i, s| {
            if i == j {
                out = Some(s.p2.clone());
            }
        })?;
        out.ok_or(Error::MissingCheckpoint(j))
    }

    /// `P2(s_i, nu_l, tau_j)`.
    pub fn p2(&self, i: usize, l: usize, j: usize) -> Result<DMatrix<f64>> {
        let d = self.sys.state_dim();
        Ok(blocks::block(&self.p2_slice(j)?, i, l, d, d))
    }

    /// Visits every slice from `tau_n` down to `tau_stop`, recomputing `P2` on the way.
    pub(crate) fn for_each_slice(&self, stop: usize, mut visit: impl FnMut(usize, &Slice)) -> Result<()> {
        let n = self.grid.steps();
        self.resweep(n, self.p2[&n].clone(), stop, &mut visit)
    }

    fn resweep(&self, start: usize, p2: DMatrix<f64>, stop: usize, mut visit: impl FnMut(usize, &Slice)) -> Result<()> {
        let mut slice = Slice { p0: self.p0[start].clone(), r: self.r[start].clone(), p2 };
        visit(start, &slice);
        let stepper = Stepper::new(&self.sys, &self.grid);
        for j in (stop..start).rev() {
            slice = stepper.step(&slice, j);
            visit(j, &slice);
        }
        Ok(())
    }

    /// Largest `P1` block norm over all nodes.
    pub fn max_p1_norm(&self) -> f64 {
        let d = self.sys.state_dim();
        self.r.iter().map(|r| blocks::max_block_norm(r, d, d)).fold(0.0, f64::max)
    }

    /// Largest `P2` block norm over the stored slices.
    pub fn max_p2_norm(&self) -> f64 {
        let d = self.sys.state_dim();
        self.p2.values().map(|m| blocks::max_block_norm(m, d, d)).fold(0.0, f64::max)
    }

    /// Largest `|P0 - P0^T|` over nodes.
    pub fn p0_asymmetry(&self) -> f64 {
        self.p0.iter().map(|m| (m - m.transpose()).amax()).fold(0.0, f64::max)
    }

    /// Largest `|P2(s,nu) - P2(nu,s)^T|` over the stored slices.
    pub fn p2_asymmetry(&self) -> f64 {
        self.p2.values().map(|m| (m - m.transpose()).amax()).fold(0.0, f64::max)
    }
}

/// Right-hand sides of the backward system: `dP/dtau = -E(P)`.
pub(crate) struct Stepper<'a> {
    sys: &'a SystemSpec,
    h: f64,
    at: DMatrix<f64>,
    ctc: DMatrix<f64>,
    nt: Vec<DMatrix<f64>>,
}

impl<'a> Stepper<'a> {
    pub fn new(sys: &'a SystemSpec, grid: &TimeGrid) -> Self {
        Self {
            sys,
            h: grid.step(),
            at: sys.a().transpose(),
            ctc: sys.c().transpose() * sys.c(),
            nt: sys.kernel_samples().iter().map(|m| m.transpose()).collect(),
        }
    }

    /// Stacked `N^T(tau_j - s_i)`, `i = 0..=j`.
    pub fn memory_column(&self, j: usize) -> DMatrix<f64> {
        let d = self.sys.state_dim();
        let mut l = DMatrix::zeros((j + 1) * d, d);
        for i in 0..=j {
            blocks::set_block(&mut l, i, 0, &self.nt[j - i]);
        }
        l
    }

    fn rhs(&self, s: &Slice, j: usize) -> Slice {
        let d = self.sys.state_dim();
        let bbt = self.sys.bbt();
        let l = self.memory_column(j);
        let p1_diag = blocks::block(&s.r, j, 0, d, d).transpose();
        let p0b = &s.p0 * bbt;
        let e0 = &self.at * &s.p0 + &s.p0 * self.sys.a() + &p1_diag + p1_diag.transpose() - &p0b * &s.p0 + &self.ctc;
        let rb = &s.r * bbt;
        let trace = s.p2.columns(j * d, d);
        let er = &s.r * self.sys.a() + &l * &s.p0 + trace - &rb * &s.p0;
        let lrt = &l * s.r.transpose();
        let e2 = &lrt + lrt.transpose() - &rb * s.r.transpose();
        Slice { p0: e0, r: er, p2: e2 }
    }

    /// Heun step from `tau_{j+1}` to `tau_j`.
    pub fn step(&self, s: &Slice, j: usize) -> Slice {
        let d = self.sys.state_dim();
        let rows = (j + 1) * d;
        let e = self.rhs(s, j + 1);
        let cut = |m: &DMatrix<f64>| m.rows(0, rows).into_owned();
        let square = |m: &DMatrix<f64>| m.view((0, 0), (rows, rows)).into_owned();
        let base = Slice { p0: s.p0.clone(), r: cut(&s.r), p2: square(&s.p2) };
        let e = Slice { p0: e.p0, r: cut(&e.r), p2: square(&e.p2) };
        let predicted = Slice { p0: &base.p0 + &e.p0 * self.h, r: &base.r + &e.r * self.h, p2: &base.p2 + &e.p2 * self.h };
        let ep = self.rhs(&predicted, j);
        let half = 0.5 * self.h;
        let p0 = &base.p0 + (&e.p0 + &ep.p0) * half;
        Slice { p0: (&p0 + p0.transpose()) * 0.5, r: &base.r + (&e.r + &ep.r) * half, p2: &base.p2 + (&e.p2 + &ep.p2) * half }
    }
}

pub fn solve_riccati(sys: &SystemSpec, grid: &TimeGrid) -> Result<RiccatiField> {
    solve_riccati_with(sys, grid, &RiccatiOptions::default())
}

/// Backward sweep of the memory-Riccati system from the zero final data at `T`.
pub fn solve_riccati_with(sys: &SystemSpec, grid: &TimeGrid, options: &RiccatiOptions) -> Result<RiccatiField> {
    sys.check_grid(grid)?;
    let n = grid.steps();
    let d = sys.state_dim();
    let stepper = Stepper::new(sys, grid);
    let mut p0 = vec![DMatrix::zeros(d, d); n + 1];
    let mut r = vec![DMatrix::zeros(0, 0); n + 1];
    let mut p2 = BTreeMap::new();
    let mut slice = Slice { p0: DMatrix::zeros(d, d), r: DMatrix::zeros((n + 1) * d, d), p2: DMatrix::zeros((n + 1) * d, (n + 1) * d) };
    r[n] = slice.r.clone();
    p2.insert(n, slice.p2.clone());
    for j in (0..n).rev() {
        slice = stepper.step(&slice, j);
        let norm = slice.p0.norm().max(slice.r.amax()).max(slice.p2.amax());
        if !norm.is_finite() || norm > options.blowup_bound {
            return Err(Error::BlowUp { node: j, norm, bound: options.blowup_bound });
        }
        p0[j] = slice.p0.clone();
        r[j] = slice.r.clone();
        if options.keeps(j, n) {
            p2.insert(j, slice.p2.clone());
        }
    }
    Ok(RiccatiField { sys: sys.clone(), grid: *grid, options: options.clone(), p0, r, p2 })
}
