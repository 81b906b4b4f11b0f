use std::path::Path;

use clap::ValueEnum;
use nalgebra::{DMatrix, DVector};

use memtrack::fredholm::{
    apply_synthesis, build_forcing, build_kernel, costate_residual, resolvent, solve_fredholm, synthesis_kernels, TrackingKernel,
};
use memtrack::metrics::{observed_order, relative_l2};
use memtrack::model::{cost, fundamental_matrix, simulate, voc_solution, ControlSignal, StateTrajectory};
use memtrack::oracle::{build_affine_map, discrete_cost, gradient_check, solve_qp};
use memtrack::riccati::{
    closed_loop, di_residual, solve_riccati_with, solve_tracking, value_function, RiccatiField, RiccatiOptions, TrackingField,
};

use crate::config::{Instance, InstanceConfig, Source, Tolerances};
use crate::output::{self, matrix_labels, num, Table};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Route {
    Fredholm,
    Riccati,
    Oracle,
}

impl Route {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        Route::from_str(s, true)
            .map_err(|_| CliError::Input(format!("run.route: unknown route {s:?}, expected fredholm, riccati or oracle")))
    }
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub checkpoint: usize,
    pub blowup_bound: f64,
    pub tolerances: Tolerances,
}

pub struct RouteRun {
    pub control: ControlSignal,
    pub trajectory: StateTrajectory,
    pub cost: f64,
}

fn finish(inst: &Instance, control: ControlSignal) -> Result<RouteRun, CliError> {
    let trajectory = simulate(&inst.sys, &inst.grid, &inst.xi, &control)?;
    let cost = cost(&inst.sys, &inst.grid, &trajectory, &control, &inst.y, inst.xi.tau_index())?;
    Ok(RouteRun { control, trajectory, cost })
}

pub fn fredholm_route(inst: &Instance) -> Result<(RouteRun, TrackingKernel), CliError> {
    let k = inst.xi.tau_index();
    let z = fundamental_matrix(&inst.sys, &inst.grid)?;
    let kt = build_kernel(&inst.sys, &z, &inst.grid, k)?;
    let r = resolvent(&kt, &inst.grid)?;
    let s = synthesis_kernels(&inst.sys, &z, &r, &inst.grid, k)?;
    let (u, _) = apply_synthesis(&s, &inst.xi, &inst.y)?;
    Ok((finish(inst, u)?, kt))
}

pub fn riccati_route(inst: &Instance, settings: &Settings) -> Result<(RouteRun, RiccatiField, TrackingField), CliError> {
    let options =
        RiccatiOptions { checkpoint_every: settings.checkpoint, extra_checkpoints: Vec::new(), blowup_bound: settings.blowup_bound };
    let ric = solve_riccati_with(&inst.sys, &inst.grid, &options)?;
    let trk = solve_tracking(&inst.sys, &inst.grid, &ric, &inst.y)?;
    let (u, _) = closed_loop(&inst.sys, &inst.grid, &ric, &trk, &inst.xi)?;
    Ok((finish(inst, u)?, ric, trk))
}

pub fn oracle_route(inst: &Instance) -> Result<RouteRun, CliError> {
    let map = build_affine_map(&inst.sys, &inst.grid, &inst.xi)?;
    finish(inst, solve_qp(&map, &inst.y)?)
}

pub fn run_simulate(inst: &Instance, out: &Path) -> Result<(), CliError> {
    let w = simulate(&inst.sys, &inst.grid, &inst.xi, &inst.control)?;
    let j = cost(&inst.sys, &inst.grid, &w, &inst.control, &inst.y, inst.xi.tau_index())?;
    output::trajectory(&inst.grid, &w, &inst.control).write(out, "trajectory.csv")?;
    output::scalar("cost", j).write(out, "cost.txt")?;
    Ok(())
}

pub fn run_synthesize(inst: &Instance, route: Route, settings: &Settings, out: &Path) -> Result<(), CliError> {
    let run = match route {
        Route::Fredholm => fredholm_route(inst)?.0,
        Route::Oracle => oracle_route(inst)?,
        Route::Riccati => {
            let (run, ric, trk) = riccati_route(inst, settings)?;
            write_fields(inst, &ric, &trk, out)?;
            run
        }
    };
    output::trajectory(&inst.grid, &run.trajectory, &run.control).write(out, "trajectory.csv")?;
    output::scalar("cost", run.cost).write(out, "cost.txt")?;
    Ok(())
}

fn write_fields(inst: &Instance, ric: &RiccatiField, trk: &TrackingField, out: &Path) -> Result<(), CliError> {
    let grid = &inst.grid;
    let d = inst.sys.state_dim();
    let mut header = vec!["tau".to_string()];
    header.extend(matrix_labels("p0", d, d));
    let mut p0 = Table::new(&header);
    let mut d1 = Table::new(&std::iter::once("tau".to_string()).chain(output::labels("d1_", d)).collect::<Vec<_>>());
    let mut m = Table::new(&["tau".into(), "m".into()]);
    let long = |names: &[&str]| names.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let mut p1 = Table::new(&long(&["s", "tau", "row", "col", "value"]));
    let mut d2 = Table::new(&long(&["s", "tau", "row", "value"]));
    for j in 0..=grid.steps() {
        let tau = grid.node(j);
        p0.row(std::iter::once(tau).chain(ric.p0(j).transpose().iter().copied()));
        d1.row(std::iter::once(tau).chain(trk.d1(j).iter().copied()));
        m.row([tau, trk.m(j)]);
        for i in 0..=j {
            let s = grid.node(i);
            let block = ric.p1(i, j);
            for r in 0..d {
                for c in 0..d {
                    p1.raw(&[num(s), num(tau), (r + 1).to_string(), (c + 1).to_string(), num(block[(r, c)])]);
                }
            }
            for (r, v) in trk.d2(i, j).iter().enumerate() {
                d2.raw(&[num(s), num(tau), (r + 1).to_string(), num(*v)]);
            }
        }
    }
    p0.write(out, "p0.csv")?;
    p1.write(out, "p1.csv")?;
    d1.write(out, "d1.csv")?;
    d2.write(out, "d2.csv")?;
    m.write(out, "m.csv")?;
    Ok(())
}

fn zero(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| *x == 0.0)
}

fn zero_v(v: &DVector<f64>) -> bool {
    v.iter().all(|x| *x == 0.0)
}

struct Report {
    table: Table,
}

impl Report {
    fn new() -> Self {
        Self { table: Table::new(&["quantity".into(), "value".into()]) }
    }

    fn value(&mut self, name: &str, v: f64) {
        self.table.raw(&[name.into(), num(v)]);
    }

    fn check(&mut self, name: &str, ok: bool) {
        self.table.raw(&[format!("check {name}"), if ok { "pass" } else { "fail" }.into()]);
    }
}

pub fn run_compare(inst: &Instance, settings: &Settings, out: &Path) -> Result<(), CliError> {
    let k = inst.xi.tau_index();
    let n = inst.grid.steps();
    let oracle = oracle_route(inst)?;
    let (fredholm, kt) = fredholm_route(inst)?;
    let (riccati, ric, trk) = riccati_route(inst, settings)?;
    let rel = |a: &RouteRun, b: &RouteRun| relative_l2(&inst.grid, k, a.control.values(), b.control.values());
    let mut rep = Report::new();
    rep.value("cost oracle", oracle.cost);
    rep.value("cost fredholm", fredholm.cost);
    rep.value("cost riccati", riccati.cost);
    rep.value("discrepancy oracle-fredholm", rel(&oracle, &fredholm)?);
    rep.value("discrepancy oracle-riccati", rel(&oracle, &riccati)?);
    rep.value("discrepancy fredholm-riccati", rel(&fredholm, &riccati)?);
    rep.value("value function", value_function(&ric, &trk, k, &inst.xi)?);
    let di = di_residual(&inst.sys, &inst.grid, &ric, &trk, &riccati.trajectory, &riccati.control, &inst.y)?;
    rep.value("di slack min", di.min_slack());
    rep.value("di slack max", di.max_slack());
    rep.value("di pointwise max", di.max_pointwise());
    rep.check("P0(T)=0", zero(ric.p0(n)));
    rep.check("P1(.,T)=0", zero(ric.p1_stacked(n)));
    rep.check("P2(.,.,T)=0", zero(ric.stored_p2(n)?));
    rep.check("d1(T)=0", zero_v(trk.d1(n)));
    rep.check("d2(.,T)=0", zero_v(trk.d2_stacked(n)));
    rep.check("M(T)=0", trk.m(n) == 0.0);
    rep.check("K(T,.)=K(.,T)=0", (k..=n).all(|j| zero(&kt.ktilde(n, j)) && zero(&kt.ktilde(j, n))));
    rep.table.write(out, "report.txt")?;
    Ok(())
}

pub fn run_convergence(cfg: &InstanceConfig, src: &Source, grids: &[usize], settings: &Settings, out: &Path) -> Result<(), CliError> {
    let mut sorted = grids.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() < 2 {
        return Err(CliError::Input(format!("convergence needs at least two distinct grid sizes, got {grids:?}")));
    }
    let names = ["oracle_fredholm", "oracle_riccati", "fredholm_riccati", "simulate_voc"];
    let mut header = vec!["n".to_string(), "h".to_string()];
    header.extend(names.iter().map(|s| s.to_string()));
    header.extend(names.iter().map(|s| format!("order_{s}")));
    let mut table = Table::new(&header);
    let mut prev: Option<[f64; 4]> = None;
    for &n in &sorted {
        let inst = cfg.instance(src, Some(n))?;
        let k = inst.xi.tau_index();
        let rel = |a: &RouteRun, b: &RouteRun| relative_l2(&inst.grid, k, a.control.values(), b.control.values());
        let oracle = oracle_route(&inst)?;
        let (fredholm, _) = fredholm_route(&inst)?;
        let (riccati, _, _) = riccati_route(&inst, settings)?;
        let z = fundamental_matrix(&inst.sys, &inst.grid)?;
        let sim = simulate(&inst.sys, &inst.grid, &inst.xi, &inst.control)?;
        let voc = voc_solution(&inst.sys, &inst.grid, &z, &inst.xi, &inst.control)?;
        let e = [rel(&oracle, &fredholm)?, rel(&oracle, &riccati)?, rel(&fredholm, &riccati)?, sim.max_distance(&voc)];
        let mut cells = vec![n.to_string(), num(inst.grid.step())];
        cells.extend(e.iter().map(|x| num(*x)));
        cells.extend((0..4).map(|i| prev.map_or(String::new(), |p| num(observed_order(p[i], e[i])))));
        table.raw(&cells);
        prev = Some(e);
    }
    table.write(out, "convergence.csv")?;
    Ok(())
}

/// Runs the invariant checks on the instance; returns whether all passed.
pub fn run_verify(inst: &Instance, settings: &Settings, out: &Path) -> Result<bool, CliError> {
    let tol = &settings.tolerances;
    let k = inst.xi.tau_index();
    let n = inst.grid.steps();
    let h = inst.grid.step();
    let mut table = Table::new(&["check".into(), "value".into(), "threshold".into(), "status".into()]);
    let mut all = true;
    let mut check = |name: &str, value: f64, threshold: f64, ok: bool| {
        all &= ok;
        table.raw(&[name.into(), num(value), num(threshold), if ok { "pass" } else { "fail" }.into()]);
    };

    let (fredholm, kt) = fredholm_route(inst)?;
    let mut asym = 0.0f64;
    for i in k..=n {
        for j in k..=i {
            asym = asym.max((kt.ktilde(i, j) - kt.ktilde(j, i).transpose()).amax());
        }
    }
    check("kernel symmetry", asym, tol.symmetry, asym <= tol.symmetry);
    let z = fundamental_matrix(&inst.sys, &inst.grid)?;
    let stride = ((n - k) / 20).max(1);
    let mut norms = Vec::new();
    let mut final_ok = true;
    for j in (k..=n).step_by(stride).chain(std::iter::once(n)) {
        let rj = resolvent(&kt.restrict(j), &inst.grid)?;
        final_ok &= (j..=n).all(|i| zero(&rj.at(n, i)) && zero(&rj.at(i, n)));
        norms.push(rj.max_norm());
    }
    let growth = if norms[0] == 0.0 { 1.0 } else { norms.iter().copied().fold(0.0, f64::max) / norms[0] };
    check("resolvent growth over tau", growth, 2.0, growth <= 2.0 || norms[0] == 0.0);
    let s_end = synthesis_kernels(&inst.sys, &z, &resolvent(&kt.restrict(n), &inst.grid)?, &inst.grid, n)?;
    final_ok &= s_end.h0(n) == DMatrix::identity(inst.sys.state_dim(), inst.sys.state_dim());

    let (riccati, ric, trk) = riccati_route(inst, settings)?;
    check("P0 symmetry", ric.p0_asymmetry(), tol.symmetry, ric.p0_asymmetry() <= tol.symmetry);
    check("P2 symmetry", ric.p2_asymmetry(), tol.symmetry, ric.p2_asymmetry() <= tol.symmetry);
    final_ok &= zero(ric.p0(n)) && zero(ric.p1_stacked(n)) && zero(ric.stored_p2(n)?);
    final_ok &= zero_v(trk.d1(n)) && zero_v(trk.d2_stacked(n)) && trk.m(n) == 0.0;
    let forcing = build_forcing(&inst.sys, &z, &inst.grid, &inst.xi, &inst.y)?;
    let p = solve_fredholm(&kt, &forcing, &inst.grid)?;
    final_ok &= zero_v(p.at(n));
    check("final conditions", if final_ok { 0.0 } else { 1.0 }, 0.0, final_ok);

    let oracle = oracle_route(inst)?;
    let rel = |a: &RouteRun, b: &RouteRun| relative_l2(&inst.grid, k, a.control.values(), b.control.values());
    let agreement = rel(&oracle, &fredholm)?.max(rel(&oracle, &riccati)?).max(rel(&fredholm, &riccati)?);
    check("three-way agreement", agreement, tol.agreement, agreement <= tol.agreement);
    let map = build_affine_map(&inst.sys, &inst.grid, &inst.xi)?;
    let jq = discrete_cost(&map, &inst.y, &oracle.control)?;
    let grad = gradient_check(&map, &inst.y, &oracle.control, 1e-5)?;
    let gtol = tol.gradient * (1.0 + jq.abs());
    check("oracle gradient", grad, gtol, grad <= gtol);
    let margin = (fredholm.cost.min(riccati.cost) - jq).min(0.0);
    check("oracle optimality", margin, 0.0, jq <= fredholm.cost && jq <= riccati.cost);

    let v = value_function(&ric, &trk, k, &inst.xi)?;
    let gap = (v - riccati.cost).abs() / (1.0 + v.abs());
    check("value vs closed-loop cost", gap, 1e-2, gap <= 1e-2);
    let di = di_residual(&inst.sys, &inst.grid, &ric, &trk, &riccati.trajectory, &riccati.control, &inst.y)?;
    check("optimal DI slack", di.max_abs_slack(), 5.0 * h, di.max_abs_slack() <= 5.0 * h);
    let mut worst = f64::INFINITY;
    for q in 1..=10 {
        let amp = 0.1 * q as f64;
        let pert = ControlSignal::new(
            k,
            riccati
                .control
                .values()
                .iter()
                .enumerate()
                .map(|(i, u)| u.map(|x| x + amp * (q as f64 * inst.grid.node(k + i)).cos()))
                .collect(),
        );
        let w = simulate(&inst.sys, &inst.grid, &inst.xi, &pert)?;
        worst = worst.min(di_residual(&inst.sys, &inst.grid, &ric, &trk, &w, &pert, &inst.y)?.min_slack());
    }
    check("perturbed DI slack", worst, -tol.slack, worst >= -tol.slack);
    let mid = k + (n - k) / 2;
    let (u2, _) = closed_loop(&inst.sys, &inst.grid, &ric, &trk, &riccati.trajectory.extend_state(mid)?)?;
    let restart = (mid..=n).map(|i| (u2.at(i) - riccati.control.at(i)).norm()).fold(0.0, f64::max);
    check("restart", restart, tol.restart, restart <= tol.restart);
    if n - k >= 2 {
        let res = costate_residual(&inst.sys, &p, &simulate(&inst.sys, &inst.grid, &inst.xi, &fredholm.control)?, &inst.y, &inst.grid, k)?;
        check("costate residual", res, h, res <= h);
    }
    table.write(out, "verify.txt")?;
    Ok(all)
}
