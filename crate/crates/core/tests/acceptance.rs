//! Acceptance suite: one check per criterion, each printing a PASS/FAIL line.
//!
//! Runs without the test harness: `cargo test -p memtrack-core --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use memtrack::fredholm::{build_forcing, build_kernel, optimal_control_fredholm, resolvent, solve_fredholm, synthesis_kernels};
use memtrack::instances::{random_instance, scalar_system, Instance};
use memtrack::metrics::{observed_order, relative_l2};
use memtrack::model::{cost, fundamental_matrix, simulate, ControlSignal, InitialState, TimeGrid};
use memtrack::oracle::{build_affine_map, discrete_cost, gradient_check, solve_qp};
use memtrack::riccati::{
    closed_loop, di_residual, solve_riccati_with, solve_tracking, value_function, RiccatiField, RiccatiOptions, TrackingField,
};
use memtrack::statespace::{make_domain_element, riccati_operator_residual, tracking_operator_residual};

const SEED: u64 = 7;

fn instance(n: usize) -> Instance {
    random_instance(SEED, 2, 1, 1, &TimeGrid::new(1.0, n).unwrap()).unwrap()
}

fn fields(inst: &Instance, options: &RiccatiOptions) -> (RiccatiField, TrackingField) {
    let ric = solve_riccati_with(&inst.sys, &inst.grid, options).unwrap();
    let trk = solve_tracking(&inst.sys, &inst.grid, &ric, &inst.y).unwrap();
    (ric, trk)
}

struct Routes {
    oracle: ControlSignal,
    fredholm: ControlSignal,
    riccati: ControlSignal,
}

fn routes(inst: &Instance) -> Routes {
    let map = build_affine_map(&inst.sys, &inst.grid, &inst.xi).unwrap();
    let oracle = solve_qp(&map, &inst.y).unwrap();
    let z = fundamental_matrix(&inst.sys, &inst.grid).unwrap();
    let kt = build_kernel(&inst.sys, &z, &inst.grid, 0).unwrap();
    let f = build_forcing(&inst.sys, &z, &inst.grid, &inst.xi, &inst.y).unwrap();
    let p = solve_fredholm(&kt, &f, &inst.grid).unwrap();
    let fredholm = optimal_control_fredholm(&p, inst.sys.b());
    let (ric, trk) = fields(inst, &RiccatiOptions::default());
    let (riccati, _) = closed_loop(&inst.sys, &inst.grid, &ric, &trk, &inst.xi).unwrap();
    Routes { oracle, fredholm, riccati }
}

fn pairwise(inst: &Instance, r: &Routes) -> [f64; 3] {
    let rel = |a: &ControlSignal, b: &ControlSignal| relative_l2(&inst.grid, 0, a.values(), b.values()).unwrap();
    [rel(&r.oracle, &r.fredholm), rel(&r.oracle, &r.riccati), rel(&r.fredholm, &r.riccati)]
}

fn report(id: usize, name: &str, pass: bool, detail: String) -> bool {
    println!("criterion {id} [{name}]: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    pass
}

fn three_way_agreement() -> bool {
    let mut disc = Vec::new();
    let mut times = Vec::new();
    for n in [100, 200] {
        let start = Instant::now();
        let inst = instance(n);
        let r = routes(&inst);
        disc.push(pairwise(&inst, &r));
        times.push(start.elapsed().as_secs_f64());
    }
    let orders: Vec<f64> = (0..3).map(|i| observed_order(disc[0][i], disc[1][i])).collect();
    let pass = disc[0].iter().all(|e| *e <= 5e-2)
        && disc[1].iter().all(|e| *e <= 2.5e-2)
        && orders.iter().all(|o| *o >= 1.0)
        && times.iter().all(|t| *t <= 60.0);
    report(
        1,
        "three-way agreement",
        pass,
        format!(
            "n=100 {:.3e}/{:.3e}/{:.3e}, n=200 {:.3e}/{:.3e}/{:.3e}, orders {:.2}/{:.2}/{:.2}, times {:.2}s/{:.2}s",
            disc[0][0], disc[0][1], disc[0][2], disc[1][0], disc[1][1], disc[1][2], orders[0], orders[1], orders[2], times[0], times[1]
        ),
    )
}

fn classical_limit() -> bool {
    let grid = TimeGrid::new(1.0, 200).unwrap();
    let sys = scalar_system(0.0, 1.0, 1.0, 0.0, &grid).unwrap();
    let ric = solve_riccati_with(&sys, &grid, &RiccatiOptions::every(1)).unwrap();
    let err = (ric.p0(0)[(0, 0)] - 1f64.tanh()).abs();
    let (p1, p2) = (ric.max_p1_norm(), ric.max_p2_norm());
    report(
        2,
        "classical limit",
        err <= 1e-3 && p1 <= 1e-10 && p2 <= 1e-10,
        format!("|P0(0) - tanh 1| = {err:.3e}, max|P1| = {p1:.3e}, max|P2| = {p2:.3e}"),
    )
}

fn value_consistency() -> bool {
    let inst = instance(200);
    let (ric, trk) = fields(&inst, &RiccatiOptions::every(20));
    let (u, w) = closed_loop(&inst.sys, &inst.grid, &ric, &trk, &inst.xi).unwrap();
    let j = cost(&inst.sys, &inst.grid, &w, &u, &inst.y, 0).unwrap();
    let v = value_function(&ric, &trk, 0, &inst.xi).unwrap();
    let rel = (v - j).abs() / (1.0 + v.abs());
    let checkpoints: Vec<usize> = ric.checkpoints().collect();
    let exact_m = checkpoints.iter().all(|&k| value_function(&ric, &trk, k, &InitialState::zero(2, k)).unwrap() == trk.m(k));
    report(
        3,
        "value function",
        rel <= 1e-2 && exact_m,
        format!("W = {v:.6e}, cost = {j:.6e}, relative gap {rel:.3e}, W(0) = M exact at {} checkpoints: {exact_m}", checkpoints.len()),
    )
}

fn final_conditions() -> bool {
    let inst = instance(100);
    let n = 100;
    let zero_m = |m: &DMatrix<f64>| m.iter().all(|x| *x == 0.0);
    let (ric, trk) = fields(&inst, &RiccatiOptions::default());
    let riccati = zero_m(ric.p0(n)) && zero_m(ric.p1_stacked(n)) && zero_m(ric.stored_p2(n).unwrap());
    let tracking = trk.d1(n).iter().all(|x| *x == 0.0) && trk.d2_stacked(n).iter().all(|x| *x == 0.0) && trk.m(n) == 0.0;
    let z = fundamental_matrix(&inst.sys, &inst.grid).unwrap();
    let kt = build_kernel(&inst.sys, &z, &inst.grid, 0).unwrap();
    let f = build_forcing(&inst.sys, &z, &inst.grid, &inst.xi, &inst.y).unwrap();
    let p = solve_fredholm(&kt, &f, &inst.grid).unwrap();
    let costate = p.at(n).iter().all(|x| *x == 0.0);
    let r = resolvent(&kt, &inst.grid).unwrap();
    let kernels = (0..=n).all(|j| zero_m(&kt.ktilde(n, j)) && zero_m(&kt.ktilde(j, n)) && zero_m(&r.at(n, j)) && zero_m(&r.at(j, n)));
    let mut synthesis = true;
    for k in [0, 30, 70, n] {
        let restricted = kt.restrict(k);
        let rk = resolvent(&restricted, &inst.grid).unwrap();
        let s = synthesis_kernels(&inst.sys, &z, &rk, &inst.grid, k).unwrap();
        synthesis &= zero_m(&s.q0(n));
        if k == n {
            synthesis &= s.h0(n) == DMatrix::identity(2, 2) && s.memory_norm() == 0.0;
        }
    }
    report(
        4,
        "final conditions",
        riccati && tracking && costate && kernels && synthesis,
        format!("riccati {riccati}, tracking {tracking}, costate {costate}, kernel/resolvent {kernels}, Q0/H0 {synthesis}"),
    )
}

fn dissipation() -> bool {
    let inst = instance(100);
    let h = inst.grid.step();
    let (ric, trk) = fields(&inst, &RiccatiOptions::default());
    let (u, w) = closed_loop(&inst.sys, &inst.grid, &ric, &trk, &inst.xi).unwrap();
    let opt = di_residual(&inst.sys, &inst.grid, &ric, &trk, &w, &u, &inst.y).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = f64::INFINITY;
    for _ in 0..100 {
        let (amp, freq, phase) = (rng.gen_range(0.01..1.0), rng.gen_range(0.0..8.0), rng.gen_range(0.0..6.3));
        let noise: Vec<f64> = (0..=100).map(|_| rng.gen_range(-0.2..0.2)).collect();
        let pert = ControlSignal::new(
            0,
            u.values()
                .iter()
                .enumerate()
                .map(|(i, v)| v.map(|x| x + amp * ((freq * inst.grid.node(i) + phase).sin() + noise[i])))
                .collect(),
        );
        let wp = simulate(&inst.sys, &inst.grid, &inst.xi, &pert).unwrap();
        let res = di_residual(&inst.sys, &inst.grid, &ric, &trk, &wp, &pert, &inst.y).unwrap();
        worst = worst.min(res.min_slack());
    }
    let optimal = opt.max_abs_slack();
    report(
        5,
        "dissipation inequality",
        worst >= -1e-8 && optimal <= 5.0 * h,
        format!("min perturbed slack {worst:.3e}, max optimal |slack| {optimal:.3e} (5h = {:.1e})", 5.0 * h),
    )
}

fn restart() -> bool {
    let inst = instance(100);
    let (ric, trk) = fields(&inst, &RiccatiOptions::default());
    let (u, w) = closed_loop(&inst.sys, &inst.grid, &ric, &trk, &inst.xi).unwrap();
    let mid = 50;
    let (u2, w2) = closed_loop(&inst.sys, &inst.grid, &ric, &trk, &w.extend_state(mid).unwrap()).unwrap();
    let du = (mid..=100).map(|i| (u.at(i) - u2.at(i)).norm()).fold(0.0, f64::max);
    let dw = (mid..=100).map(|i| (w.at(i) - w2.at(i)).norm()).fold(0.0, f64::max);
    report(6, "restart", du <= 1e-8 && dw <= 1e-8, format!("max control gap {du:.3e}, max state gap {dw:.3e}"))
}

fn operator_identities() -> bool {
    let taus = [0.2, 0.4, 0.5, 0.6, 0.8];
    let omega = |t: f64| DVector::from_vec(vec![1.0 + 0.5 * t, (2.0 * t).cos()]);
    let xi = |t: f64| DVector::from_vec(vec![(1.5 * t).sin() - 0.3, 0.7 * (-t).exp()]);
    let mut table = Vec::new();
    for n in [50, 100, 200] {
        let inst = instance(n);
        let idx: Vec<usize> = taus.iter().map(|t| inst.grid.index_of(*t).unwrap()).collect();
        let (ric, trk) = fields(&inst, &RiccatiOptions::default().with_neighbourhoods(&idx));
        let o = make_domain_element(&inst.grid, 0, omega).unwrap();
        let x = make_domain_element(&inst.grid, 0, xi).unwrap();
        let row: Vec<(f64, f64)> = idx
            .iter()
            .map(|&j| {
                (
                    riccati_operator_residual(&ric, &inst.sys, j, &o, &x).unwrap(),
                    tracking_operator_residual(&trk, &ric, &inst.sys, j, &x, &inst.y).unwrap(),
                )
            })
            .collect();
        table.push(row);
    }
    let mut min_ratio = f64::INFINITY;
    for pair in table.windows(2) {
        for (coarse, fine) in pair[0].iter().zip(&pair[1]) {
            min_ratio = min_ratio.min(coarse.0 / fine.0).min(coarse.1 / fine.1);
        }
    }
    let worst = |g: usize| table[g].iter().map(|(a, b)| a.max(*b)).fold(0.0, f64::max);
    report(
        7,
        "operator identities",
        min_ratio >= 1.8,
        format!("max residual n=50/100/200: {:.3e}/{:.3e}/{:.3e}, min reduction factor {min_ratio:.2}", worst(0), worst(1), worst(2)),
    )
}

fn oracle_integrity() -> bool {
    let inst = instance(100);
    let map = build_affine_map(&inst.sys, &inst.grid, &inst.xi).unwrap();
    let r = routes(&inst);
    let j = discrete_cost(&map, &inst.y, &r.oracle).unwrap();
    let gap = gradient_check(&map, &inst.y, &r.oracle, 1e-5).unwrap();
    let jf = discrete_cost(&map, &inst.y, &r.fredholm).unwrap();
    let jr = discrete_cost(&map, &inst.y, &r.riccati).unwrap();
    report(
        8,
        "oracle integrity",
        gap <= 1e-6 * (1.0 + j.abs()) && j <= jf && j <= jr,
        format!("gradient gap {gap:.3e}, costs oracle {j:.10e} fredholm {jf:.10e} riccati {jr:.10e}"),
    )
}

fn structure() -> bool {
    let inst = instance(100);
    let z = fundamental_matrix(&inst.sys, &inst.grid).unwrap();
    let kt = build_kernel(&inst.sys, &z, &inst.grid, 0).unwrap();
    let mut asym = 0.0f64;
    for i in 0..=100 {
        for j in 0..=100 {
            asym = asym.max((kt.ktilde(i, j) - kt.ktilde(j, i).transpose()).amax());
        }
    }
    let (ric, _) = fields(&inst, &RiccatiOptions::default());
    let p0_asym = ric.p0_asymmetry();
    let norms: Vec<f64> = (0..=100).map(|k| resolvent(&kt.restrict(k), &inst.grid).unwrap().max_norm()).collect();
    let growth = norms.iter().copied().fold(0.0, f64::max) / norms[0];
    report(
        9,
        "structure invariants",
        asym <= 1e-10 && p0_asym <= 1e-10 && growth <= 2.0,
        format!("kernel asymmetry {asym:.3e}, P0 asymmetry {p0_asym:.3e}, resolvent growth over tau {growth:.3}"),
    )
}

fn main() -> ExitCode {
    let results = [
        three_way_agreement(),
        classical_limit(),
        value_consistency(),
        final_conditions(),
        dissipation(),
        restart(),
        operator_identities(),
        oracle_integrity(),
        structure(),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, p)| !**p).map(|(i, _)| i + 1).collect();
    println!("acceptance: {} of {} criteria passed", results.len() - failed.len(), results.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
