mod common;

use mflqr_core::linalg::{max_abs_diff, min_symmetric_eigenvalue, sup_norm, Matrix};
use mflqr_core::oracle::{exact_cost, verify_maximum_principle, MomentState, ResidualKind};
use mflqr_core::{optimal_cost, solve_finite, CostSpec, GainPair, StageWeights};

const INSTANCES: u64 = 100;

fn scale(m: &Matrix) -> f64 {
    sup_norm(m).max(1.0)
}

#[test]
fn value_matrices_are_symmetric_and_semidefinite() {
    let mut rng = common::rng(11);
    for _ in 0..INSTANCES {
        let horizon = common::pick(&mut rng, 0, 6);
        let (sys, cost) = common::random_finite(&mut rng, 3, 2, horizon);
        let traj = solve_finite(&sys, &cost, None).unwrap();
        assert!(traj.assumptions.holds());
        assert!(traj.solvable);
        for s in &traj.steps {
            let tol = 1e-9 * scale(&s.p).max(scale(&s.p_bar));
            assert!(max_abs_diff(&s.p, &s.p.transpose()) <= tol);
            assert!(max_abs_diff(&s.p_bar, &s.p_bar.transpose()) <= tol);
            assert!(min_symmetric_eigenvalue(&s.p).unwrap() >= -tol);
            assert!(min_symmetric_eigenvalue(&(&s.p + &s.p_bar)).unwrap() >= -tol);
            assert!(min_symmetric_eigenvalue(&s.ups1).unwrap() > 1e-9);
            assert!(min_symmetric_eigenvalue(&s.ups2).unwrap() > 1e-9);
        }
    }
}

#[test]
fn first_value_matrix_grows_with_horizon() {
    let mut rng = common::rng(12);
    for _ in 0..INSTANCES {
        let (sys, base) = common::random_finite(&mut rng, 3, 2, 0);
        let n = sys.n();
        let mut prev: Option<(Matrix, Matrix)> = None;
        for horizon in 0..=20 {
            let cost = CostSpec::finite(
                base.weights.clone(),
                Matrix::zeros(n, n),
                Matrix::zeros(n, n),
                horizon,
            )
            .unwrap();
            let traj = solve_finite(&sys, &cost, None).unwrap();
            let s0 = &traj.steps[0];
            let sum = &s0.p + &s0.p_bar;
            if let Some((p, ps)) = &prev {
                let tol = 1e-8 * scale(&sum).max(scale(&s0.p));
                assert!(min_symmetric_eigenvalue(&(&s0.p - p)).unwrap() >= -tol);
                assert!(min_symmetric_eigenvalue(&(&sum - ps)).unwrap() >= -tol);
            }
            prev = Some((s0.p.clone(), sum));
        }
    }
}

#[test]
fn closed_loop_forms_reproduce_the_recursion() {
    let mut rng = common::rng(13);
    for _ in 0..INSTANCES {
        let horizon = common::pick(&mut rng, 0, 5);
        let (sys, cost) = common::random_finite(&mut rng, 3, 2, horizon);
        let traj = solve_finite(&sys, &cost, None).unwrap();
        let w = &cost.weights;
        for s in &traj.steps {
            let (p1, pb1) = traj.value_matrices(s.k + 1).unwrap();
            let k = &s.gains.k;
            let t = s.gains.total();
            let a_cl = &sys.a + &sys.b * k;
            let c_cl = &sys.c + &sys.d * k;
            let p = &w.q
                + k.transpose() * &w.r * k
                + a_cl.transpose() * p1 * &a_cl
                + (c_cl.transpose() * p1 * &c_cl) * sys.sigma2;
            let a_m = sys.a_sum() + sys.b_sum() * &t;
            let c_m = sys.c_sum() + sys.d_sum() * &t;
            let ps = w.q_sum()
                + t.transpose() * w.r_sum() * &t
                + a_m.transpose() * (p1 + pb1) * &a_m
                + (c_m.transpose() * p1 * &c_m) * sys.sigma2;
            let tol = 1e-8 * scale(&p).max(scale(&ps));
            assert!(max_abs_diff(&p, &s.p) <= tol);
            assert!(max_abs_diff(&ps, &(&s.p + &s.p_bar)) <= tol);
        }
    }
}

#[test]
fn cost_of_any_feedback_telescopes_to_optimum_plus_penalties() {
    let mut rng = common::rng(14);
    for _ in 0..INSTANCES {
        let horizon = common::pick(&mut rng, 0, 4);
        let (sys, cost) = common::random_finite(&mut rng, 2, 1, horizon);
        let (n, m) = (sys.n(), sys.m());
        let traj = solve_finite(&sys, &cost, None).unwrap();
        let init = common::random_gaussian(&mut rng, n);
        let gains: Vec<GainPair> = (0..=horizon)
            .map(|_| GainPair {
                k: common::gauss(&mut rng, m, n, 0.7),
                k_bar: common::gauss(&mut rng, m, n, 0.7),
            })
            .collect();
        let j = exact_cost(&sys, &cost, &gains, &init, None).unwrap();
        let mut penalty = 0.0;
        let mut state = MomentState::from_initial(&init);
        for (g, s) in gains.iter().zip(&traj.steps) {
            let dk = &g.k - &s.gains.k;
            let dt = g.total() - s.gains.total();
            penalty += (dk.transpose() * &s.ups1 * &dk * &state.sigma).trace();
            penalty += (state.mu.transpose() * dt.transpose() * &s.ups2 * &dt * &state.mu)[(0, 0)];
            state = state.step(&sys, g);
        }
        let expect = optimal_cost(&traj, &init).unwrap() + penalty;
        assert!(
            (j - expect).abs() <= 1e-6 * j.abs().max(1.0),
            "{j} vs {expect}"
        );
    }
}

#[test]
fn costate_blocks_and_equilibrium_conditions() {
    let mut rng = common::rng(15);
    for _ in 0..INSTANCES {
        let horizon = common::pick(&mut rng, 0, 6);
        let (sys, cost) = common::random_finite(&mut rng, 3, 2, horizon);
        let traj = solve_finite(&sys, &cost, None).unwrap();
        let size = traj
            .steps
            .iter()
            .map(|s| scale(&s.p).max(scale(&s.p_bar)).max(scale(&s.ups2)))
            .fold(1.0, f64::max);
        let report = verify_maximum_principle(&sys, &cost, &traj, None, 1e-8 * size).unwrap();
        assert!(report.passed(), "{:?}", report.violations());
        assert!(report.max_residual(ResidualKind::BlockSum) <= 1e-8 * size);
    }
}

#[test]
fn standard_problem_has_vanishing_mean_blocks() {
    let mut rng = common::rng(16);
    for _ in 0..20 {
        let n = common::pick(&mut rng, 1, 3);
        let m = common::pick(&mut rng, 1, 2);
        let mut sys = common::random_system(&mut rng, n, m);
        sys.a_bar.fill(0.0);
        sys.b_bar.fill(0.0);
        sys.c_bar.fill(0.0);
        sys.d_bar.fill(0.0);
        let q = common::psd(&mut rng, n, n);
        let r = common::pd(&mut rng, m);
        let w = StageWeights::new(q, Matrix::zeros(n, n), r, Matrix::zeros(m, m)).unwrap();
        let pt = common::psd(&mut rng, n, n);
        let cost = CostSpec::finite(w, pt, Matrix::zeros(n, n), 4).unwrap();
        let traj = solve_finite(&sys, &cost, None).unwrap();
        let report = verify_maximum_principle(&sys, &cost, &traj, None, 1e-10).unwrap();
        for b in &report.costate.blocks {
            assert!(sup_norm(&b.p_bar1) < 1e-12);
            assert!(sup_norm(&b.p_bar2) < 1e-12);
            assert!(sup_norm(&b.p_bar3) < 1e-12);
        }
        for s in &traj.steps {
            assert!(sup_norm(&s.gains.k_bar) < 1e-12);
        }
    }
}
