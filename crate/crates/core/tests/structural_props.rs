mod common;

use mflqr_core::linalg::{is_psd, null_space, sup_norm, Matrix, Vector};
use mflqr_core::oracle::MomentState;
use mflqr_core::simulate::{simulate, Feedback, Sequential, SimulationConfig};
use mflqr_core::structural::{is_separately_detectable, unobservable_subspaces, LiftedSystem};
use mflqr_core::{
    is_exactly_detectable, is_exactly_observable, CostSpec, GainPair, InitialState,
    MeanFieldSystem, StageWeights,
};
use rand_chacha::ChaCha8Rng;

/// Random orthogonal matrix from the QR factor of a Gaussian matrix.
fn orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    common::gauss(rng, n, n, 1.0).qr().q()
}

/// Block upper-triangular dynamics in a hidden basis, with the output weights
/// blind to the leading block, so that unobservable subspaces are common.
fn structured_instance(rng: &mut ChaCha8Rng) -> (MeanFieldSystem, CostSpec) {
    let n = common::pick(rng, 1, 3);
    let hidden = common::pick(rng, 0, n);
    let u = orthogonal(rng, n);
    let mut tri = |scale: f64| {
        let mut m = common::gauss(rng, n, n, scale);
        for i in hidden..n {
            for j in 0..hidden {
                m[(i, j)] = 0.0;
            }
        }
        &u * m * u.transpose()
    };
    let a = tri(0.7);
    let a_bar = tri(0.4);
    let c = tri(0.4);
    let c_bar = tri(0.3);
    let mut blind = |rank_cap: usize| {
        let r = common::pick(rng, 0, rank_cap);
        let l = common::gauss(rng, n - hidden, r, 1.0);
        let mut q = Matrix::zeros(n, n);
        q.view_mut((hidden, hidden), (n - hidden, n - hidden))
            .copy_from(&(&l * l.transpose()));
        &u * q * u.transpose()
    };
    let q = blind(n - hidden);
    let q_sum = blind(n - hidden);
    let sigma2 = if common::pick(rng, 0, 4) == 0 {
        0.0
    } else {
        common::uniform(rng, 0.2, 1.5)
    };
    let sys = MeanFieldSystem::new(
        a,
        a_bar,
        Matrix::zeros(n, 1),
        Matrix::zeros(n, 1),
        c,
        c_bar,
        Matrix::zeros(n, 1),
        Matrix::zeros(n, 1),
        sigma2,
    )
    .unwrap();
    let w = StageWeights::new(
        q.clone(),
        &q_sum - &q,
        Matrix::identity(1, 1),
        Matrix::zeros(1, 1),
    )
    .unwrap();
    (sys, CostSpec::infinite(w))
}

#[test]
fn observability_implies_both_detectability_notions_order() {
    let mut rng = common::rng(31);
    let mut observable = 0;
    let mut unobservable = 0;
    for _ in 0..100 {
        let (sys, cost) = structured_instance(&mut rng);
        let obs = is_exactly_observable(&sys, &cost).unwrap();
        let det = is_exactly_detectable(&sys, &cost).unwrap();
        let sep = is_separately_detectable(&sys, &cost).unwrap();
        if obs.observable {
            observable += 1;
            assert!(det.detectable);
        } else {
            unobservable += 1;
        }
        if sep.detectable {
            assert!(det.detectable);
        }
        assert_eq!(obs.unobservable_dim, det.unobservable_dim);
    }
    assert!(
        observable > 5 && unobservable > 5,
        "{observable} / {unobservable}"
    );
}

/// Output energy of the exact open-loop moments over `steps` steps, relative
/// to the accumulated `E|x|²` times the output weight size.
fn output_energy(sys: &MeanFieldSystem, w: &StageWeights, start: MomentState, steps: usize) -> f64 {
    let zero = GainPair::zeros(sys.n(), sys.m());
    let weight = sup_norm(&w.q).max(sup_norm(&w.q_sum())).max(1e-300);
    let mut state = start;
    let mut total = 0.0;
    let mut size = 0.0;
    for _ in 0..steps {
        total += state.stage_cost(w, &zero);
        size += state.mean_square() * weight;
        state = state.step(sys, &zero);
    }
    if size == 0.0 {
        0.0
    } else {
        total / size
    }
}

#[test]
fn unobservable_moments_produce_no_output_and_others_do() {
    let mut rng = common::rng(32);
    for _ in 0..100 {
        let (sys, cost) = structured_instance(&mut rng);
        let n = sys.n();
        let w = &cost.weights;
        let sub = unobservable_subspaces(&sys, w);
        let d = 2 * n * (n + 1) / 2 + 1;
        let (v1, v2) = (&sub.centered, &sub.mean);
        let y = common::gauss(&mut rng, v1.ncols(), v1.ncols(), 1.0);
        let hidden = MomentState {
            mu: v2 * Vector::from_fn(v2.ncols(), |_, _| common::uniform(&mut rng, -1.0, 1.0)),
            sigma: v1 * &y * y.transpose() * v1.transpose(),
        };
        assert!(output_energy(&sys, w, hidden, d) < 1e-12);

        // directions orthogonal to the subspaces are seen within d steps
        let perp1 = null_space(&v1.transpose(), 1e-9);
        for j in 0..perp1.ncols() {
            let x = perp1.column(j).into_owned();
            let s = MomentState {
                mu: Vector::zeros(n),
                sigma: &x * x.transpose(),
            };
            assert!(output_energy(&sys, w, s, d) > 1e-8);
        }
        let perp2 = null_space(&v2.transpose(), 1e-9);
        for j in 0..perp2.ncols() {
            let s = MomentState {
                mu: perp2.column(j).into_owned(),
                sigma: Matrix::zeros(n, n),
            };
            assert!(output_energy(&sys, w, s, d) > 1e-8);
        }
    }
}

/// Rank test of the standard pair: stack `Q W` over all words `W` in `A` and
/// `C` of length below `n`.
fn word_gramian_rank(a: &Matrix, c: &Matrix, q: &Matrix, noisy: bool) -> usize {
    let n = a.nrows();
    let mut words = vec![Matrix::identity(n, n)];
    let mut frontier = words.clone();
    for _ in 1..n {
        let mut next = Vec::new();
        for wd in &frontier {
            next.push(wd * a);
            if noisy {
                next.push(wd * c);
            }
        }
        words.extend(next.iter().cloned());
        frontier = next;
    }
    let mut stacked = Matrix::zeros(n * words.len(), n);
    for (i, wd) in words.iter().enumerate() {
        stacked.view_mut((i * n, 0), (n, n)).copy_from(&(q * wd));
    }
    n - null_space(&stacked, 1e-9).ncols()
}

#[test]
fn standard_systems_match_classical_rank_test() {
    let mut rng = common::rng(33);
    for _ in 0..100 {
        let (mut sys, cost) = structured_instance(&mut rng);
        sys.a_bar.fill(0.0);
        sys.c_bar.fill(0.0);
        let n = sys.n();
        let w = StageWeights::new(
            cost.weights.q.clone(),
            Matrix::zeros(n, n),
            Matrix::identity(1, 1),
            Matrix::zeros(1, 1),
        )
        .unwrap();
        let cost = CostSpec::infinite(w);
        let rank = word_gramian_rank(&sys.a, &sys.c, &cost.weights.q, sys.sigma2 > 0.0);
        let obs = is_exactly_observable(&sys, &cost).unwrap();
        assert_eq!(obs.observable, rank == n);
        assert_eq!(
            unobservable_subspaces(&sys, &cost.weights).centered.ncols(),
            n - rank
        );
    }
}

#[test]
fn moment_operator_preserves_the_psd_cone() {
    let mut rng = common::rng(34);
    for _ in 0..100 {
        let n = common::pick(&mut rng, 1, 3);
        let m = common::pick(&mut rng, 1, 2);
        let sys = common::random_system(&mut rng, n, m);
        let w = common::random_weights(&mut rng, n, m);
        let gains = GainPair {
            k: common::gauss(&mut rng, m, n, 0.5),
            k_bar: common::gauss(&mut rng, m, n, 0.5),
        };
        let lifted = LiftedSystem::closed_loop(&sys, &w, &gains);
        let op = lifted.moment_operator();
        assert_eq!(op.matrix.nrows(), n * (2 * n + 1));
        for i in 0..n {
            for j in 0..n {
                assert_eq!(lifted.a_tilde[(n + i, j)], 0.0);
                assert_eq!(lifted.c_tilde[(n + i, j)], 0.0);
                assert_eq!(lifted.c_tilde[(n + i, n + j)], 0.0);
            }
        }
        let rank = common::pick(&mut rng, 1, 2 * n);
        let s = common::psd(&mut rng, 2 * n, rank);
        assert!(is_psd(&op.apply(&s)));
    }
}

#[test]
fn hidden_unstable_mode_is_not_detectable_and_grows() {
    // x1 is invisible and grows; x2 is observed and stable
    let sys = MeanFieldSystem::new(
        Matrix::from_row_slice(2, 2, &[1.05, 0.0, 0.0, 0.5]),
        Matrix::zeros(2, 2),
        Matrix::zeros(2, 1),
        Matrix::zeros(2, 1),
        Matrix::from_row_slice(2, 2, &[0.2, 0.0, 0.0, 0.3]),
        Matrix::zeros(2, 2),
        Matrix::zeros(2, 1),
        Matrix::zeros(2, 1),
        1.0,
    )
    .unwrap();
    let q = Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
    let cost = CostSpec::infinite(
        StageWeights::new(
            q,
            Matrix::zeros(2, 2),
            Matrix::identity(1, 1),
            Matrix::zeros(1, 1),
        )
        .unwrap(),
    );
    let det = is_exactly_detectable(&sys, &cost).unwrap();
    assert!(!det.detectable);
    assert!(!det.unstable_unobservable_modes.is_empty());

    let init = InitialState::Deterministic(Vector::from_column_slice(&[1.0, 0.0]));
    let cfg = SimulationConfig {
        horizon: 200,
        n_paths: 2000,
        record_paths: true,
        ..SimulationConfig::default()
    };
    let res = simulate(&sys, Feedback::Zero, &init, &cfg, &Sequential).unwrap();
    let rec = res.paths.as_ref().unwrap();
    assert!(rec.states.iter().flatten().all(|x| x[1] == 0.0));
    // E x1² grows like (1.05² + 0.04)^k
    assert!(res.msq_path[200] > 1e4 * res.msq_path[0]);
}
