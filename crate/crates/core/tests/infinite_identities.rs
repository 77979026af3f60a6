mod common;

use mflqr_core::infinite::{are_residuals, solve_are, AreOptions};
use mflqr_core::linalg::{max_abs_diff, min_symmetric_eigenvalue, sup_norm, Matrix};
use mflqr_core::oracle::{truncated_cost, MomentState};
use mflqr_core::{
    finite::riccati_map, is_mean_square_stable, stabilization_verdict, AreSolution, CostSpec,
    MeanFieldSystem, StageWeights,
};
use rand_chacha::ChaCha8Rng;

const INSTANCES: usize = 100;

fn scale(m: &Matrix) -> f64 {
    sup_norm(m).max(1.0)
}

/// Random infinite-horizon instances whose value iteration converges.
fn converged_instances(seed: u64, count: usize) -> Vec<(MeanFieldSystem, CostSpec, AreSolution)> {
    let mut rng: ChaCha8Rng = common::rng(seed);
    let mut out = Vec::new();
    let mut tried = 0;
    while out.len() < count {
        tried += 1;
        assert!(tried < 20 * count, "too few convergent instances");
        let n = common::pick(&mut rng, 1, 3);
        let m = common::pick(&mut rng, 1, 2);
        let sys = common::random_system(&mut rng, n, m);
        let cost = CostSpec::infinite(common::random_weights(&mut rng, n, m));
        let sol = solve_are(&sys, &cost, &AreOptions::default()).unwrap();
        if sol.converged {
            out.push((sys, cost, sol));
        }
    }
    out
}

#[test]
fn fixed_point_residuals_and_curvature_bounds() {
    for (sys, cost, sol) in converged_instances(21, INSTANCES) {
        let tol = 1e-10 * scale(&sol.p).max(scale(&sol.p_bar));
        assert!(sol.residual1 <= 10.0 * tol.max(1e-10));
        assert!(sol.residual2 <= 10.0 * tol.max(1e-10));
        let (r1, r2) = are_residuals(&sys, &cost.weights, &sol.p, &sol.p_bar).unwrap();
        assert_eq!((r1, r2), (sol.residual1, sol.residual2));
        let w = &cost.weights;
        assert!(min_symmetric_eigenvalue(&(&sol.ups1 - &w.r)).unwrap() >= -1e-9 * scale(&sol.ups1));
        assert!(
            min_symmetric_eigenvalue(&(&sol.ups2 - w.r_sum())).unwrap() >= -1e-9 * scale(&sol.ups2)
        );
    }
}

#[test]
fn value_iterates_increase_monotonically() {
    for (sys, cost, sol) in converged_instances(22, INSTANCES) {
        let n = sys.n();
        let mut p = Matrix::zeros(n, n);
        let mut pb = Matrix::zeros(n, n);
        for _ in 0..sol.iterations.min(300) {
            let (p_next, pb_next) = riccati_map(&sys, &cost.weights, &p, &pb).unwrap().unwrap();
            let tol = 1e-9 * scale(&p_next).max(scale(&pb_next));
            assert!(min_symmetric_eigenvalue(&(&p_next - &p)).unwrap() >= -tol);
            assert!(min_symmetric_eigenvalue(&(&p_next + &pb_next - &p - &pb)).unwrap() >= -tol);
            p = p_next;
            pb = pb_next;
        }
    }
}

#[test]
fn stationary_closed_loop_identities() {
    for (sys, cost, sol) in converged_instances(23, INSTANCES) {
        let w = &cost.weights;
        let g = sol.gains.as_ref().unwrap();
        let k = &g.k;
        let t = g.total();
        let a_cl = &sys.a + &sys.b * k;
        let c_cl = &sys.c + &sys.d * k;
        let p = &w.q
            + k.transpose() * &w.r * k
            + a_cl.transpose() * &sol.p * &a_cl
            + (c_cl.transpose() * &sol.p * &c_cl) * sys.sigma2;
        let a_m = sys.a_sum() + sys.b_sum() * &t;
        let c_m = sys.c_sum() + sys.d_sum() * &t;
        let sum = &sol.p + &sol.p_bar;
        let ps = w.q_sum()
            + t.transpose() * w.r_sum() * &t
            + a_m.transpose() * &sum * &a_m
            + (c_m.transpose() * &sol.p * &c_m) * sys.sigma2;
        let tol = 1e-8 * scale(&sol.p).max(scale(&sum));
        assert!(max_abs_diff(&p, &sol.p) <= tol);
        assert!(max_abs_diff(&ps, &sum) <= tol);
    }
}

#[test]
fn lyapunov_function_drops_by_the_stage_cost() {
    let mut rng = common::rng(24);
    for (sys, cost, sol) in converged_instances(24, INSTANCES) {
        let g = sol.gains.as_ref().unwrap();
        let init = common::random_gaussian(&mut rng, sys.n());
        let mut state = MomentState::from_initial(&init);
        for _ in 0..30 {
            let v = state.quadratic(&sol.p, &sol.p_bar);
            let stage = state.stage_cost(&cost.weights, g);
            let next = state.step(&sys, g);
            let v_next = next.quadratic(&sol.p, &sol.p_bar);
            // rounding scale of the quadratic forms involved
            let size = (scale(&sol.p) + scale(&sol.p_bar)) * state.mean_square();
            assert!(v_next <= v + 1e-9 * size);
            let drop = v - v_next;
            assert!((drop - stage).abs() <= 1e-8 * size, "{drop} vs {stage}");
            state = next;
        }
    }
}

#[test]
fn verdict_implies_closed_loop_stability() {
    for (sys, cost, sol) in converged_instances(25, INSTANCES) {
        let v = stabilization_verdict(&sys, &cost, &sol, None).unwrap();
        assert!(v.consistent, "{v:?}\n{sys:?}\n{cost:?}\n{sol:?}");
        if v.stabilizable {
            assert!(
                is_mean_square_stable(&sys, sol.gains.as_ref().unwrap())
                    .unwrap()
                    .stable
            );
        }
    }
}

#[test]
fn stationary_gains_are_first_order_optimal() {
    let mut rng = common::rng(26);
    for (sys, cost, sol) in converged_instances(26, 30) {
        let g = sol.gains.clone().unwrap();
        let stab = is_mean_square_stable(&sys, &g).unwrap();
        if !stab.stable || stab.spectral_radius_moment > 0.9 || stab.spectral_radius_mean > 0.95 {
            continue;
        }
        let init = common::random_gaussian(&mut rng, sys.n());
        let steps = 2000;
        let base = truncated_cost(&sys, &cost.weights, &g, &init, steps);
        for which in 0..2 {
            for i in 0..g.k.len() {
                for delta in [1e-5, -1e-5] {
                    let mut h = g.clone();
                    if which == 0 {
                        h.k[i] += delta;
                    } else {
                        h.k_bar[i] += delta;
                    }
                    let c = truncated_cost(&sys, &cost.weights, &h, &init, steps);
                    assert!(c >= base - 1e-8 * base.max(1.0), "{c} < {base}");
                }
            }
        }
    }
}

#[test]
fn zero_state_weights_give_zero_solution() {
    let (sys, _) = common::stable_scalar();
    let cost = CostSpec::infinite(StageWeights::scalar(0.0, 0.0, 1.0, 1.0));
    let sol = solve_are(&sys, &cost, &AreOptions::default()).unwrap();
    assert!(sol.converged);
    assert_eq!(sol.p[(0, 0)], 0.0);
    assert_eq!(sol.p_bar[(0, 0)], 0.0);
}
