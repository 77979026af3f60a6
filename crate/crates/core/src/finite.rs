//! Backward coupled Riccati recursion for the finite-horizon problem.
//!
//! From `(P_{k+1}, P̄_{k+1})` each stage forms
//!
//! ```text
//! Υ1 = R + B'P B + σ² D'P D              M1 = B'P A + σ² D'P C
//! Υ2 = R + R̄ + (B+B̄)'(P+P̄)(B+B̄) + σ² (D+D̄)'P(D+D̄)
//! M2 = (B+B̄)'(P+P̄)(A+Ā) + σ² (D+D̄)'P(C+C̄)
//! K  = -Υ1⁻¹ M1                           K̄ = -(Υ2⁻¹ M2 - Υ1⁻¹ M1)
//! ```
//!
//! and steps `P` and `P̄` backward. The problem is uniquely solvable exactly
//! when every `Υ1`, `Υ2` is positive definite.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{
    all_finite, min_symmetric_eigenvalue, spd_solve, symmetrize, Matrix, Vector, DEFINITENESS_TOL,
};
use crate::model::{
    stage_at, validate_assumptions, AssumptionReport, CostSpec, GainPair, InitialState,
    MeanFieldSystem, Schedule, StageWeights,
};

/// The control-curvature matrices of one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Curvature {
    pub ups1: Matrix,
    pub ups2: Matrix,
    pub m1: Matrix,
    pub m2: Matrix,
}

/// Builds `Υ1, Υ2, M1, M2` from the next-stage `(P, P̄)`.
pub fn curvature(sys: &MeanFieldSystem, w: &StageWeights, p: &Matrix, p_bar: &Matrix) -> Curvature {
    let s2 = sys.sigma2;
    let b_sum = sys.b_sum();
    let d_sum = sys.d_sum();
    let p_sum = p + p_bar;
    let bt = sys.b.transpose();
    let dt = sys.d.transpose();
    let ups1 = &w.r + &bt * p * &sys.b + (&dt * p * &sys.d) * s2;
    let m1 = &bt * p * &sys.a + (&dt * p * &sys.c) * s2;
    let ups2 =
        w.r_sum() + b_sum.transpose() * &p_sum * &b_sum + (d_sum.transpose() * p * &d_sum) * s2;
    let m2 = b_sum.transpose() * &p_sum * sys.a_sum() + (d_sum.transpose() * p * sys.c_sum()) * s2;
    Curvature {
        ups1: symmetrize(&ups1),
        ups2: symmetrize(&ups2),
        m1,
        m2,
    }
}

/// `(P, P̄)` one stage earlier, given the curvature and the solved ratios
/// `X1 = Υ1⁻¹ M1`, `X2 = Υ2⁻¹ M2`.
pub(crate) fn step_back(
    sys: &MeanFieldSystem,
    w: &StageWeights,
    p: &Matrix,
    p_bar: &Matrix,
    cv: &Curvature,
    x1: &Matrix,
    x2: &Matrix,
) -> (Matrix, Matrix) {
    let s2 = sys.sigma2;
    let at = sys.a.transpose();
    let ct = sys.c.transpose();
    let abt = sys.a_bar.transpose();
    let cbt = sys.c_bar.transpose();
    let a_sum = sys.a_sum();
    let g1 = cv.m1.transpose() * x1;
    let g2 = cv.m2.transpose() * x2;
    let p_new = &w.q + &at * p * &sys.a + (&ct * p * &sys.c) * s2 - &g1;
    let p_bar_new = &w.q_bar
        + &at * p * &sys.a_bar
        + (&ct * p * &sys.c_bar) * s2
        + &abt * p * &sys.a
        + (&cbt * p * &sys.c) * s2
        + &abt * p * &sys.a_bar
        + (&cbt * p * &sys.c_bar) * s2
        + a_sum.transpose() * p_bar * &a_sum
        + g1
        - g2;
    (symmetrize(&p_new), symmetrize(&p_bar_new))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurvatureBlock {
    Ups1,
    Ups2,
}

/// Where and why positivity of the curvature failed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositivityFailure {
    pub step: usize,
    pub block: CurvatureBlock,
    pub min_eigenvalue: f64,
}

/// Result of one backward stage.
pub(crate) enum Update {
    Solved {
        cv: Curvature,
        gains: GainPair,
        p: Matrix,
        p_bar: Matrix,
    },
    NotPositive {
        block: CurvatureBlock,
        min_eigenvalue: f64,
    },
}

pub(crate) fn riccati_update(
    sys: &MeanFieldSystem,
    w: &StageWeights,
    p_next: &Matrix,
    p_bar_next: &Matrix,
) -> Result<Update> {
    let cv = curvature(sys, w, p_next, p_bar_next);
    for (block, u) in [
        (CurvatureBlock::Ups1, &cv.ups1),
        (CurvatureBlock::Ups2, &cv.ups2),
    ] {
        let min_eigenvalue = min_symmetric_eigenvalue(u)?;
        if !min_eigenvalue.is_finite() && u.nrows() > 0 {
            return Err(Error::NonFinite {
                quantity: "curvature",
                step: 0,
            });
        }
        if min_eigenvalue < DEFINITENESS_TOL {
            return Ok(Update::NotPositive {
                block,
                min_eigenvalue,
            });
        }
    }
    let (Some(x1), Some(x2)) = (spd_solve(&cv.ups1, &cv.m1), spd_solve(&cv.ups2, &cv.m2)) else {
        // Cholesky can still fail right at the tolerance band.
        return Ok(Update::NotPositive {
            block: CurvatureBlock::Ups1,
            min_eigenvalue: min_symmetric_eigenvalue(&cv.ups1)?,
        });
    };
    let gains = GainPair {
        k: -&x1,
        k_bar: -(&x2 - &x1),
    };
    let (p, p_bar) = step_back(sys, w, p_next, p_bar_next, &cv, &x1, &x2);
    Ok(Update::Solved {
        cv,
        gains,
        p,
        p_bar,
    })
}

/// One backward stage `(P_{k+1}, P̄_{k+1}) ↦ (P_k, P̄_k)`; `None` when the
/// curvature is not positive definite.
pub fn riccati_map(
    sys: &MeanFieldSystem,
    w: &StageWeights,
    p: &Matrix,
    p_bar: &Matrix,
) -> Result<Option<(Matrix, Matrix)>> {
    Ok(match riccati_update(sys, w, p, p_bar)? {
        Update::Solved { p, p_bar, .. } => Some((p, p_bar)),
        Update::NotPositive { .. } => None,
    })
}

/// Curvature and gains for a given `(P, P̄)` pair, using a general (LU)
/// inverse so that indefinite curvature is allowed. Used to evaluate
/// candidate algebraic roots that need not be stabilizing.
pub fn feedback_for(
    sys: &MeanFieldSystem,
    w: &StageWeights,
    p: &Matrix,
    p_bar: &Matrix,
) -> Option<(Curvature, GainPair)> {
    let cv = curvature(sys, w, p, p_bar);
    let x1 = cv.ups1.clone().lu().solve(&cv.m1)?;
    let x2 = cv.ups2.clone().lu().solve(&cv.m2)?;
    if !(all_finite(&x1) && all_finite(&x2)) {
        return None;
    }
    let gains = GainPair {
        k: -&x1,
        k_bar: -(&x2 - &x1),
    };
    Some((cv, gains))
}

/// All quantities of stage `k` of the recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiStep {
    pub k: usize,
    pub p: Matrix,
    pub p_bar: Matrix,
    pub ups1: Matrix,
    pub ups2: Matrix,
    pub m1: Matrix,
    pub m2: Matrix,
    pub gains: GainPair,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiTrajectory {
    /// Stages in increasing `k`. When unsolvable, only the stages after the
    /// failure are present.
    pub steps: Vec<RiccatiStep>,
    pub horizon: usize,
    pub solvable: bool,
    pub failure: Option<PositivityFailure>,
    pub assumptions: AssumptionReport,
    pub p_terminal: Matrix,
    pub p_bar_terminal: Matrix,
}

impl RiccatiTrajectory {
    pub fn failure_step(&self) -> Option<usize> {
        self.failure.map(|f| f.step)
    }

    pub fn step(&self, k: usize) -> Result<&RiccatiStep> {
        self.steps
            .iter()
            .find(|s| s.k == k)
            .ok_or(Error::IndexOutOfRange {
                index: k,
                max: self.horizon,
            })
    }

    /// `(P_k, P̄_k)` for `k = 0..=N+1`.
    pub fn value_matrices(&self, k: usize) -> Result<(&Matrix, &Matrix)> {
        if k == self.horizon + 1 {
            return Ok((&self.p_terminal, &self.p_bar_terminal));
        }
        let s = self.step(k)?;
        Ok((&s.p, &s.p_bar))
    }

    pub fn gain_schedule(&self) -> Vec<GainPair> {
        self.steps.iter().map(|s| s.gains.clone()).collect()
    }
}

/// Runs the backward recursion from the terminal weights.
///
/// An indefinite or singular curvature ends the recursion with
/// `solvable = false`; that is a verdict, not an error. The assumption report
/// is attached so callers can tell whether the solvability iff applies.
pub fn solve_finite(
    sys: &MeanFieldSystem,
    cost: &CostSpec,
    schedule: Option<&Schedule>,
) -> Result<RiccatiTrajectory> {
    let horizon = cost.finite_horizon()?;
    let assumptions = validate_assumptions(sys, cost)?;
    if let Some(s) = schedule {
        s.validate(sys.n(), sys.m(), horizon)?;
    }
    let mut p = cost.p_terminal.clone();
    let mut p_bar = cost.p_bar_terminal.clone();
    let mut steps = Vec::with_capacity(horizon + 1);
    let mut failure = None;
    for k in (0..=horizon).rev() {
        let (stage_sys, w) = stage_at(sys, cost, schedule, k);
        match riccati_update(stage_sys, w, &p, &p_bar).map_err(|e| match e {
            Error::NonFinite { quantity, .. } => Error::NonFinite { quantity, step: k },
            other => other,
        })? {
            Update::Solved {
                cv,
                gains,
                p: p_k,
                p_bar: p_bar_k,
            } => {
                if !(all_finite(&p_k) && all_finite(&p_bar_k) && gains.is_finite()) {
                    return Err(Error::NonFinite {
                        quantity: "P",
                        step: k,
                    });
                }
                steps.push(RiccatiStep {
                    k,
                    p: p_k.clone(),
                    p_bar: p_bar_k.clone(),
                    ups1: cv.ups1,
                    ups2: cv.ups2,
                    m1: cv.m1,
                    m2: cv.m2,
                    gains,
                });
                p = p_k;
                p_bar = p_bar_k;
            }
            Update::NotPositive {
                block,
                min_eigenvalue,
            } => {
                failure = Some(PositivityFailure {
                    step: k,
                    block,
                    min_eigenvalue,
                });
                break;
            }
        }
    }
    steps.reverse();
    Ok(RiccatiTrajectory {
        steps,
        horizon,
        solvable: failure.is_none(),
        failure,
        assumptions,
        p_terminal: cost.p_terminal.clone(),
        p_bar_terminal: cost.p_bar_terminal.clone(),
    })
}

/// `E(x_0'P_0x_0) + Ex_0'P̄_0Ex_0 = tr(P_0 Σ_0) + μ'(P_0 + P̄_0)μ`.
pub fn optimal_cost(traj: &RiccatiTrajectory, init: &InitialState) -> Result<f64> {
    if !traj.solvable {
        return Err(Error::Unsolvable {
            step: traj.failure_step().unwrap_or(0),
        });
    }
    let s0 = traj.step(0)?;
    init.check_dim(s0.p.nrows())?;
    Ok(quadratic_value(&s0.p, &s0.p_bar, init))
}

/// `tr(P Σ) + μ'(P + P̄)μ` for the moments of `init`.
pub fn quadratic_value(p: &Matrix, p_bar: &Matrix, init: &InitialState) -> f64 {
    let mu = init.mean();
    let cov = init.covariance();
    (p * cov).trace() + (mu.transpose() * (p + p_bar) * &mu)[(0, 0)]
}

/// `u_k = K_k x + K̄_k Ex`.
pub fn control_at(traj: &RiccatiTrajectory, k: usize, x: &Vector, ex: &Vector) -> Result<Vector> {
    if k > traj.horizon {
        return Err(Error::IndexOutOfRange {
            index: k,
            max: traj.horizon,
        });
    }
    let step = traj.step(k)?;
    let n = step.p.nrows();
    for v in [x, ex] {
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                name: "x",
                rows: n,
                cols: 1,
                found_rows: v.len(),
                found_cols: 1,
            });
        }
    }
    Ok(step.gains.apply(x, ex))
}
