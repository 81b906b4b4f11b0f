use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::instances::{random_history, random_instance, scalar_system, Instance};
use crate::model::{cost, fundamental_matrix, simulate, voc_solution, ControlSignal, InitialState, ReferenceSignal, TimeGrid};

fn instance(n: usize) -> Instance {
    random_instance(7, 2, 1, 1, &TimeGrid::new(1.0, n).unwrap()).unwrap()
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

#[test]
fn kernel_is_symmetric_and_vanishes_at_final_time() {
    let inst = instance(30);
    let z = fundamental_matrix(&inst.sys, &inst.grid).unwrap();
    for k in [0, 11] {
        let kt = build_kernel(&inst.sys, &z, &inst.grid, k).unwrap();
        for i in k..=30 {
            for j in k..=30 {
                assert_eq!(kt.ktilde(i, j), kt.ktilde(j, i).transpose());
            }
            assert_eq!(kt.ktilde(30, i), DMatrix::zeros(2, 2));
            assert_eq!(kt.ktilde(i, 30), DMatrix::zeros(2, 2));
        }
    }
}

#[test]
fn kernel_entry_matches_direct_sum() {
    let inst = instance(20);
    let z = fundamental_matrix(&inst.sys, &inst.grid).unwrap();
    let kt = build_kernel(&inst.sys, &z, &inst.grid, 0).unwrap();
    let (i, j) = (5, 9);
    let h = inst.grid.step();
    let ctc = inst.sys.c().transpose() * inst.sys.c();
    let mut direct = DMatrix::zeros(2, 2);
    for l in j..=20 {
        let w = if l == j || l == 20 { h / 2.0 } else { h };
        direct += z.at(l - i) * &ctc * z.transposed(l - j) * w;
    }
    assert!((kt.ktilde(i, j) - direct).norm() < 1e-13);
}

#[test]
fn kernel_restriction_matches_rebuild() {
    let inst = instance(16);
    let z = fundamental_matrix(&inst.sys, &inst.grid).unwrap();
    let full = build_kernel(&inst.sys, &z, &inst.grid, 0).unwrap();
    let direct = build_kernel(&inst.sys, &z, &inst.grid, 6).unwrap();
    assert_eq!(full.restrict(6), direct);
}

#[test]
fn zero_output_map_gives_zero_kernel_and_resolvent() {
    let inst = instance(12);
    let sys = inst.sys.with_c(DMatrix::zeros(1, 2)).unwrap();
    let z = fundamental_matrix(&sys, &inst.grid).unwrap();
    let kt = build_kernel(&sys, &z, &inst.grid, 0).unwrap();
    assert!(kt.dense().iter().all(|x| *x == 0.0));
    let r = resolvent(&kt, &inst.grid).unwrap();
    assert_eq!(r.max_norm(), 0.0);
}

#[test]
fn forcing_of_pure_integrator_is_remaining_time() {
    let grid = TimeGrid::new(2.0, 10).unwrap();
    let sys = scalar_system(0.0, 1.0, 1.0, 0.0, &grid).unwrap();
    let z = fundamental_matrix(&sys, &grid).unwrap();
    let xi = InitialState::at_origin(DVector::from_element(1, 1.0));
    let y = ReferenceSignal::zero(1, &grid);
    let f = build_forcing(&sys, &z, &grid, &xi, &y).unwrap();
    for (i, t) in grid.nodes().enumerate() {
        assert!((f.values[i][0] - (2.0 - t)).abs() < 1e-13);
    }
    assert_eq!(f.values[10][0], 0.0);
}

#[test]
fn zero_data_give_zero_forcing_and_costate() {
    let inst = instance(12);
    let z = fundamental_matrix(&inst.sys, &inst.grid).unwrap();
    let xi = InitialState::zero(2, 4);
    let y = ReferenceSignal::zero(1, &inst.grid);
    let f = build_forcing(&inst.sys, &z, &inst.grid, &xi, &y).unwrap();
    assert!(f.values.iter().all(|v| v.norm() == 0.0));
    let kt = build_kernel(&inst.sys, &z, &inst.grid, 4).unwrap();
    let p = solve_fredholm(&kt, &f, &inst.grid).unwrap();
    assert!(p.values().iter().all(|v| v.norm() == 0.0));
}

#[test]
fn without_control_the_costate_is_the_forcing() {
    let inst = instance(12);
    let sys = inst.sys.with_b(DMatrix::zeros(2, 1)).unwrap();
    let z = fundamental_matrix(&sys, &inst.grid).unwrap();
    let kt = build_kernel(&sys, &z, &inst.grid, 0).unwrap();
    let f = build_forcing(&sys, &z, &inst.grid, &inst.xi, &inst.y).unwrap();
    let p = solve_fredholm(&kt, &f, &inst.grid).unwrap();
    for (a, b) in p.values().iter().zip(&f.values) {
        assert!((a - b).norm() < 1e-14);
    }
    let u = optimal_control_fredholm(&p, sys.b());
    assert!(u.values().iter().all(|v| v.norm() == 0.0));
}

fn discrete_residual(kt: &TrackingKernel, f: &Forcing, p: &CostateTrajectory, grid: &TimeGrid) -> f64 {
    let k = kt.start();
    let n = grid.steps();
    let w = grid.trapezoid(k, n);
    let bbt = kt.b() * kt.b().transpose();
    let mut worst = 0.0f64;
    for i in k..=n {
        let mut r = p.at(i) - &f.values[i - k];
        for j in k..=n {
            r += kt.ktilde(i, j) * &bbt * p.at(j) * w[j - k];
        }
        worst = worst.max(r.norm());
    }
    worst
}

#[test]
fn nystrom_solution_satisfies_the_discrete_equation() {
    let inst = instance(40);
    let z = fundamental_matrix(&inst.sys, &inst.grid).unwrap();
    for k in [0, 15] {
        let xi = random_history(3, &inst.grid, k, inst.xi.head().clone()).unwrap();
        let kt = build_kernel(&inst.sys, &z, &inst.grid, k).unwrap();
        let f = build_forcing(&inst.sys, &z, &inst.grid, &xi, &inst.y).unwrap();
        let p = solve_fredholm(&kt, &f, &inst.grid).unwrap();
        assert!(discrete_residual(&kt, &f, &p, &inst.grid) <= 1e-10);
        assert_eq!(p.at(40).norm(), 0.0);
    }
}

#[test]
fn resolvent_vanishes_on_final_row_and_column() {
    let inst = instance(20);
    let z = fundamental_matrix(&inst.sys, &inst.grid).unwrap();
    let kt = build_kernel(&inst.sys, &z, &inst.grid, 3).unwrap();
    let r = resolvent(&kt, &inst.grid).unwrap();
    for j in 3..=20 {
        assert_eq!(r.at(20, j), DMatrix::zeros(2, 2));
        assert_eq!(r.at(j, 20), DMatrix::zeros(2, 2));
    }
}

#[test]
fn resolvent_matches_two_term_neumann_series() {
    let inst = instance(20);
    let sys = inst.sys.with_c(inst.sys.c() * 0.2).unwrap();
    let grid = &inst.grid;
    let z = fundamental_matrix(&sys, grid).unwrap();
    let kt = build_kernel(&sys, &z, grid, 0).unwrap();
    let r = resolvent(&kt, grid).unwrap();
    let nodes = 21;
    let kb = kt.dense() * crate::blocks::block_diagonal(sys.bbt(), nodes);
    let l = crate::blocks::scale_block_columns(&kb, 2, &grid.trapezoid(0, 20));
    let two_term = &kb - &l * &kb;
    let ln = inf_norm(&l);
    assert!(ln < 0.5);
    let bound = ln * ln / (1.0 - ln) * inf_norm(&kb);
    let err = inf_norm(&(r.dense() - two_term));
    assert!(err <= bound * (1.0 + 1e-9), "{err} > {bound}");
    assert!(err > 0.0);
}

fn fredholm_control(inst: &Instance, xi: &InitialState) -> (ControlSignal, CostateTrajectory) {
    let z = fundamental_matrix(&inst.sys, &inst.grid).unwrap();
    let kt = build_kernel(&inst.sys, &z, &inst.grid, xi.tau_index()).unwrap();
    let f = build_forcing(&inst.sys, &z, &inst.grid, xi, &inst.y).unwrap();
    let p = solve_fredholm(&kt, &f, &inst.grid).unwrap();
    (optimal_control_fredholm(&p, inst.sys.b()), p)
}

fn kernels(inst: &Instance, k: usize) -> SynthesisKernels {
    let z = fundamental_matrix(&inst.sys, &inst.grid).unwrap();
    let kt = build_kernel(&inst.sys, &z, &inst.grid, k).unwrap();
    let r = resolvent(&kt, &inst.grid).unwrap();
    synthesis_kernels(&inst.sys, &z, &r, &inst.grid, k).unwrap()
}

#[test]
fn synthesis_reproduces_the_direct_costate_control() {
    let inst = instance(40);
    for k in [0, 10] {
        let xi = random_history(5, &inst.grid, k, inst.xi.head().clone()).unwrap();
        let (u_direct, _) = fredholm_control(&inst, &xi);
        let (u_syn, w_syn) = apply_synthesis(&kernels(&inst, k), &xi, &inst.y).unwrap();
        let rel = crate::metrics::relative_l2(&inst.grid, k, u_direct.values(), u_syn.values()).unwrap();
        assert!(rel <= 1e-8, "k={k}: {rel}");
        assert_eq!(w_syn.at(k), xi.head());
        let z = fundamental_matrix(&inst.sys, &inst.grid).unwrap();
        let w_voc = voc_solution(&inst.sys, &inst.grid, &z, &xi, &u_syn).unwrap();
        assert!(w_voc.max_distance(&w_syn) < 1e-10);
    }
}

#[test]
fn synthesis_closed_loop_consistency_is_second_order() {
    // The synthesized trajectory is the variation-of-constants solution, which
    // differs from the stepped solution only by the discretization error.
    let errs: Vec<f64> = [20, 40]
        .iter()
        .map(|&n| {
            let inst = instance(n);
            let (u, w) = apply_synthesis(&kernels(&inst, 0), &inst.xi, &inst.y).unwrap();
            simulate(&inst.sys, &inst.grid, &inst.xi, &u).unwrap().max_distance(&w)
        })
        .collect();
    assert!(errs[1] < 1e-9 || errs[0] / errs[1] > 3.0, "{errs:?}");
}

#[test]
fn synthesis_at_final_time() {
    let inst = instance(10);
    let s = kernels(&inst, 10);
    assert_eq!(s.h0(10), DMatrix::identity(2, 2));
    assert_eq!(s.q0(10), DMatrix::zeros(2, 2));
    assert_eq!(s.memory_norm(), 0.0);
    let mid = kernels(&inst, 4);
    assert_eq!(mid.q0(10), DMatrix::zeros(2, 2));
}

#[test]
fn synthesis_of_zero_data_is_zero() {
    let inst = instance(10);
    let (u, w) = apply_synthesis(&kernels(&inst, 3), &InitialState::zero(2, 3), &ReferenceSignal::zero(1, &inst.grid)).unwrap();
    assert!(u.values().iter().all(|v| v.norm() == 0.0));
    assert!(w.window().iter().all(|v| v.norm() == 0.0));
}

#[test]
fn synthesis_is_linear_in_the_data() {
    let inst = instance(16);
    let s = kernels(&inst, 5);
    let x1 = random_history(1, &inst.grid, 5, DVector::from_vec(vec![0.3, -1.0])).unwrap();
    let x2 = random_history(2, &inst.grid, 5, DVector::from_vec(vec![1.2, 0.4])).unwrap();
    let y2 = ReferenceSignal::from_fn(&inst.grid, |t| DVector::from_element(1, t * t));
    let (a, b) = (0.7, -2.1);
    let (u1, w1) = apply_synthesis(&s, &x1, &inst.y).unwrap();
    let (u2, w2) = apply_synthesis(&s, &x2, &y2).unwrap();
    let ymix = ReferenceSignal::new(inst.y.values().iter().zip(y2.values()).map(|(p, q)| p * a + q * b).collect());
    let (u, w) = apply_synthesis(&s, &x1.combine(a, &x2, b).unwrap(), &ymix).unwrap();
    for i in 5..=16 {
        assert!((u.at(i) - (u1.at(i) * a + u2.at(i) * b)).norm() < 1e-12);
        assert!((w.at(i) - (w1.at(i) * a + w2.at(i) * b)).norm() < 1e-12);
    }
}

#[test]
fn costate_residual_decreases_under_refinement() {
    let res: Vec<f64> = [40, 80]
        .iter()
        .map(|&n| {
            let inst = instance(n);
            let (u, p) = fredholm_control(&inst, &inst.xi);
            let w = simulate(&inst.sys, &inst.grid, &inst.xi, &u).unwrap();
            costate_residual(&inst.sys, &p, &w, &inst.y, &inst.grid, 0).unwrap()
        })
        .collect();
    assert!(res[0] / res[1] >= 1.8, "{res:?}");
}

#[test]
fn costate_residual_of_exact_tracking_is_zero() {
    let inst = instance(10);
    let p = CostateTrajectory::new(0, vec![DVector::zeros(2); 11]);
    let w = simulate(&inst.sys, &inst.grid, &inst.xi, &ControlSignal::zero(1, 0, &inst.grid)).unwrap();
    let y = ReferenceSignal::new(w.values().iter().map(|v| inst.sys.c() * v).collect());
    assert!(costate_residual(&inst.sys, &p, &w, &y, &inst.grid, 0).unwrap() < 1e-14);
}

#[test]
fn fredholm_control_beats_random_perturbations() {
    let inst = instance(40);
    let (u, _) = fredholm_control(&inst, &inst.xi);
    let cost_of = |u: &ControlSignal| {
        let w = simulate(&inst.sys, &inst.grid, &inst.xi, u).unwrap();
        cost(&inst.sys, &inst.grid, &w, u, &inst.y, 0).unwrap()
    };
    let best = cost_of(&u);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100 {
        let scale = rng.gen_range(0.01..0.5);
        let pert = ControlSignal::new(0, u.values().iter().map(|v| v.map(|x| x + scale * rng.gen_range(-1.0..1.0))).collect());
        assert!(cost_of(&pert) >= best);
    }
}
