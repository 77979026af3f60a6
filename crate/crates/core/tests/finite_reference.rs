mod common;

use mflqr_core::linalg::{max_abs_diff, min_symmetric_eigenvalue, Matrix, Vector};
use mflqr_core::oracle::exact_cost;
use mflqr_core::{control_at, optimal_cost, solve_finite, InitialState};

fn sym3(v: [f64; 6]) -> Matrix {
    Matrix::from_row_slice(
        3,
        3,
        &[v[0], v[1], v[2], v[1], v[3], v[4], v[2], v[4], v[5]],
    )
}

// Reference values from an independent float64 implementation of the
// recursion, written separately from this crate.
#[test]
fn section_example_matches_reference_recursion() {
    let (sys, cost) = common::finite_example();
    let traj = solve_finite(&sys, &cost, None).unwrap();
    assert!(traj.solvable);
    assert!(traj.assumptions.holds());
    let p = [
        sym3([2.025611, 0.352646, 0.363894, 2.896039, 1.472377, 4.640958]),
        sym3([1.907307, 0.314749, 0.267706, 2.811679, 1.352322, 4.408428]),
        sym3([1.658223, 0.161004, 0.023799, 2.547165, 0.839204, 3.379191]),
        sym3([0.994806, 0.297793, -0.114473, 2.417059, 0.839532, 3.360139]),
    ];
    for (k, expect) in p.iter().enumerate() {
        let d = max_abs_diff(&traj.steps[k].p, expect);
        assert!(d < 2e-6, "P_{k} off by {d}");
    }
    let p_bar3 = sym3([0.666995, 0.074072, -0.005786, 1.033116, 0.132462, -1.318778]);
    let p_bar0 = sym3([1.216698, 1.293489, -1.197784, 6.231981, 0.643952, -1.497615]);
    assert!(max_abs_diff(&traj.steps[3].p_bar, &p_bar3) < 2e-6);
    assert!(max_abs_diff(&traj.steps[0].p_bar, &p_bar0) < 2e-6);

    let dets = [
        (34.6169, 213.3807),
        (177.1119, 648.6976),
        (201.2280, 1570.9872),
        (297.9459, 2101.2360),
    ];
    for (i, (d1, d2)) in dets.iter().enumerate() {
        let s = &traj.steps[3 - i];
        assert!((s.ups1.determinant() - d1).abs() < 1e-3);
        assert!((s.ups2.determinant() - d2).abs() < 1e-3);
    }
    let k0 = Matrix::from_row_slice(
        2,
        3,
        &[
            -0.411105, -0.48698, -0.397486, 0.000799, -0.258841, -0.525155,
        ],
    );
    let kb0 = Matrix::from_row_slice(
        2,
        3,
        &[
            0.069469, 0.339435, 0.296463, -0.357473, -0.691862, -0.779148,
        ],
    );
    assert!(max_abs_diff(&traj.steps[0].gains.k, &k0) < 2e-6);
    assert!(max_abs_diff(&traj.steps[0].gains.k_bar, &kb0) < 2e-6);
}

#[test]
fn optimal_cost_and_control_at_first_axis() {
    let (sys, cost) = common::finite_example();
    let traj = solve_finite(&sys, &cost, None).unwrap();
    let e1 = Vector::from_column_slice(&[1.0, 0.0, 0.0]);
    let init = InitialState::Deterministic(e1.clone());
    let j = optimal_cost(&traj, &init).unwrap();
    // deterministic start: Ex_0 = x_0, so both blocks contribute
    assert!((j - (2.025611 + 1.216698)).abs() < 2e-6);
    let exact = exact_cost(&sys, &cost, &traj.gain_schedule(), &init, None).unwrap();
    assert!((exact - j).abs() < 1e-9);
    let u = control_at(&traj, 0, &e1, &e1).unwrap();
    assert!((u[0] + 0.341636).abs() < 2e-6);
    assert!((u[1] + 0.356674).abs() < 2e-6);
    let zero = InitialState::Deterministic(Vector::zeros(3));
    assert_eq!(optimal_cost(&traj, &zero).unwrap(), 0.0);
}

/// Eigenvalues of a symmetric 3x3 matrix from the trigonometric solution of
/// its characteristic cubic.
fn symmetric_cubic_eigenvalues(a: &Matrix) -> [f64; 3] {
    let p1 = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
    let q = a.trace() / 3.0;
    let p2 = (a[(0, 0)] - q).powi(2) + (a[(1, 1)] - q).powi(2) + (a[(2, 2)] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let b = (a - Matrix::identity(3, 3) * q) / p;
    let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    [lo, 3.0 * q - hi - lo, hi]
}

#[test]
fn min_eigenvalue_agrees_with_characteristic_polynomial() {
    let (sys, cost) = common::finite_example();
    let traj = solve_finite(&sys, &cost, None).unwrap();
    for step in &traj.steps {
        for m in [&step.p, &step.p_bar] {
            let cubic = symmetric_cubic_eigenvalues(m);
            let direct = min_symmetric_eigenvalue(m).unwrap();
            assert!((cubic[0] - direct).abs() < 1e-10, "{cubic:?} vs {direct}");
        }
    }
    let p3 = &traj.steps[3].p;
    let expect = symmetric_cubic_eigenvalues(p3)[0];
    assert!(expect > 0.0);
    assert!((min_symmetric_eigenvalue(p3).unwrap() - expect).abs() < 1e-12);
}
