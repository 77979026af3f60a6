//! Coupled algebraic Riccati equations by value iteration.
//!
//! The finite-horizon stage map is iterated from `P = P̄ = 0` until it reaches
//! a fixed point `(P, P̄)`; the stationary feedback is then
//! `K = -Υ1⁻¹M1`, `K̄ = -(Υ2⁻¹M2 - Υ1⁻¹M1)` evaluated at that fixed point.

use alloc::vec::Vec;
use core::sync::atomic::{AtomicBool, Ordering};

use crate::error::{Error, Result};
use crate::finite::{curvature, feedback_for, riccati_update, step_back, Update};
use crate::linalg::{max_abs_diff, polynomial_roots, sup_norm, Matrix};
use crate::model::{
    validate_assumptions, AssumptionReport, CostSpec, GainPair, Horizon, MeanFieldSystem,
    StageWeights,
};

/// Iterates whose sup-norm exceeds this are treated as diverging.
pub const DIVERGENCE_BOUND: f64 = 1e12;

#[derive(Debug, Clone, Copy)]
pub struct AreOptions<'a> {
    pub tol: f64,
    pub max_iter: usize,
    /// Checked once per iteration; setting it stops the solver early.
    pub cancel: Option<&'a AtomicBool>,
}

impl Default for AreOptions<'_> {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
            cancel: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    /// The iterates left the `DIVERGENCE_BOUND` ball.
    Diverged,
    /// A curvature block lost positive definiteness mid-iteration.
    Indefinite,
    Cancelled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AreSolution {
    pub p: Matrix,
    pub p_bar: Matrix,
    pub ups1: Matrix,
    pub ups2: Matrix,
    pub m1: Matrix,
    pub m2: Matrix,
    /// `None` only when the curvature at the last iterate is singular.
    pub gains: Option<GainPair>,
    pub iterations: usize,
    /// Sup-norm defect of the `P` equation.
    pub residual1: f64,
    /// Sup-norm defect of the `P̄` equation.
    pub residual2: f64,
    /// Sup-norm change of the last iteration.
    pub last_delta: f64,
    pub converged: bool,
    pub termination: Termination,
    pub assumptions: AssumptionReport,
}

/// Sup-norm defects of both algebraic equations at `(P, P̄)`.
///
/// Uses a general inverse of the curvature, so non-stabilizing roots can be
/// checked too. `None` if a curvature block is singular.
pub fn are_residuals(
    sys: &MeanFieldSystem,
    w: &StageWeights,
    p: &Matrix,
    p_bar: &Matrix,
) -> Option<(f64, f64)> {
    let cv = curvature(sys, w, p, p_bar);
    let x1 = cv.ups1.clone().lu().solve(&cv.m1)?;
    let x2 = cv.ups2.clone().lu().solve(&cv.m2)?;
    let (p_next, p_bar_next) = step_back(sys, w, p, p_bar, &cv, &x1, &x2);
    Some((max_abs_diff(&p_next, p), max_abs_diff(&p_bar_next, p_bar)))
}

fn finish(
    sys: &MeanFieldSystem,
    w: &StageWeights,
    p: Matrix,
    p_bar: Matrix,
    iterations: usize,
    last_delta: f64,
    termination: Termination,
    assumptions: AssumptionReport,
) -> AreSolution {
    let (residual1, residual2) =
        are_residuals(sys, w, &p, &p_bar).unwrap_or((f64::INFINITY, f64::INFINITY));
    let (cv, gains) = match feedback_for(sys, w, &p, &p_bar) {
        Some((cv, g)) => (cv, Some(g)),
        None => (curvature(sys, w, &p, &p_bar), None),
    };
    AreSolution {
        p,
        p_bar,
        ups1: cv.ups1,
        ups2: cv.ups2,
        m1: cv.m1,
        m2: cv.m2,
        gains,
        iterations,
        residual1,
        residual2,
        last_delta,
        converged: termination == Termination::Converged,
        termination,
        assumptions,
    }
}

/// Value iteration on the coupled algebraic Riccati equations.
///
/// Stops when the iterate change is below `tol` and both equation defects
/// are below `10 tol`. Non-convergence is reported through
/// [`AreSolution::termination`], with the last iterate attached.
pub fn solve_are(
    sys: &MeanFieldSystem,
    cost: &CostSpec,
    opts: &AreOptions<'_>,
) -> Result<AreSolution> {
    if cost.horizon != Horizon::Infinite {
        return Err(Error::WrongHorizon {
            expected: "infinite",
        });
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol",
            reason: alloc::string::String::from("must be positive"),
        });
    }
    let assumptions = validate_assumptions(sys, cost)?;
    let w = &cost.weights;
    let n = sys.n();
    let mut p = Matrix::zeros(n, n);
    let mut p_bar = Matrix::zeros(n, n);
    let mut delta = f64::INFINITY;
    for it in 0..opts.max_iter {
        if opts.cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
            return Ok(finish(
                sys,
                w,
                p,
                p_bar,
                it,
                delta,
                Termination::Cancelled,
                assumptions,
            ));
        }
        let (p_next, p_bar_next) = match riccati_update(sys, w, &p, &p_bar)? {
            Update::Solved { p, p_bar, .. } => (p, p_bar),
            Update::NotPositive { .. } => {
                return Ok(finish(
                    sys,
                    w,
                    p,
                    p_bar,
                    it,
                    delta,
                    Termination::Indefinite,
                    assumptions,
                ))
            }
        };
        delta = max_abs_diff(&p_next, &p).max(max_abs_diff(&p_bar_next, &p_bar));
        p = p_next;
        p_bar = p_bar_next;
        if !delta.is_finite() || sup_norm(&p).max(sup_norm(&p_bar)) > DIVERGENCE_BOUND {
            return Ok(finish(
                sys,
                w,
                p,
                p_bar,
                it + 1,
                delta,
                Termination::Diverged,
                assumptions,
            ));
        }
        if delta < opts.tol {
            if let Some((r1, r2)) = are_residuals(sys, w, &p, &p_bar) {
                if r1 < 10.0 * opts.tol && r2 < 10.0 * opts.tol {
                    return Ok(finish(
                        sys,
                        w,
                        p,
                        p_bar,
                        it + 1,
                        delta,
                        Termination::Converged,
                        assumptions,
                    ));
                }
            }
        }
    }
    Ok(finish(
        sys,
        w,
        p,
        p_bar,
        opts.max_iter,
        delta,
        Termination::MaxIterations,
        assumptions,
    ))
}

/// One real root `P` of the scalar `P` equation and the real roots `P̄` of the
/// `P̄` equation that go with it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarRootBranch {
    pub p: f64,
    pub p_bar: Vec<f64>,
}

const IMAG_TOL: f64 = 1e-8;
const DENOMINATOR_TOL: f64 = 1e-12;

fn real_roots(coeffs: &[f64]) -> Result<Vec<f64>> {
    let mut roots: Vec<f64> = polynomial_roots(coeffs)?
        .into_iter()
        .filter(|z| z.im.abs() < IMAG_TOL)
        .map(|z| z.re)
        .collect();
    roots.sort_by(|a, b| a.total_cmp(b));
    Ok(roots)
}

/// All real solutions of the algebraic equations for `n = m = 1`.
///
/// Denominators are cleared so each equation becomes a quadratic; roots that
/// make a curvature term vanish are discarded. `P` roots are listed in
/// increasing order, each with its increasing `P̄` roots.
pub fn scalar_are_roots(sys: &MeanFieldSystem, w: &StageWeights) -> Result<Vec<ScalarRootBranch>> {
    if sys.n() != 1 || sys.m() != 1 {
        return Err(Error::InvalidParameter {
            name: "system",
            reason: alloc::string::String::from("root enumeration needs n = m = 1"),
        });
    }
    w.check_dims(1, 1)?;
    let s = |m: &Matrix| m[(0, 0)];
    let (a, ab, b, bb) = (s(&sys.a), s(&sys.a_bar), s(&sys.b), s(&sys.b_bar));
    let (c, cb, d, db) = (s(&sys.c), s(&sys.c_bar), s(&sys.d), s(&sys.d_bar));
    let s2 = sys.sigma2;
    let (q, qb, r, rb) = (s(&w.q), s(&w.q_bar), s(&w.r), s(&w.r_bar));

    // (Q + αP)(R + βP) - γP² = 0
    let alpha = a * a + s2 * c * c - 1.0;
    let beta = b * b + s2 * d * d;
    let gamma = (b * a + s2 * d * c) * (b * a + s2 * d * c);
    let p_roots = real_roots(&[alpha * beta - gamma, q * beta + alpha * r, q * r])?;

    let (a_s, b_s, c_s, d_s) = (a + ab, b + bb, c + cb, d + db);
    let mut out = Vec::new();
    for p in p_roots {
        let ups1 = r + beta * p;
        if ups1.abs() < DENOMINATOR_TOL {
            continue;
        }
        let m1 = (b * a + s2 * d * c) * p;
        // (k0 + e P̄)(u0 + u1 P̄) - (m0 + m1 P̄)² = 0
        let k0 =
            qb + (2.0 * a * ab + ab * ab) * p + s2 * (2.0 * c * cb + cb * cb) * p + m1 * m1 / ups1;
        let e = a_s * a_s - 1.0;
        let u0 = r + rb + b_s * b_s * p + s2 * d_s * d_s * p;
        let u1 = b_s * b_s;
        let n0 = b_s * a_s * p + s2 * d_s * c_s * p;
        let n1 = b_s * a_s;
        let coeffs = [
            e * u1 - n1 * n1,
            k0 * u1 + e * u0 - 2.0 * n0 * n1,
            k0 * u0 - n0 * n0,
        ];
        let p_bar = real_roots(&coeffs)?
            .into_iter()
            .filter(|pb| (u0 + u1 * pb).abs() >= DENOMINATOR_TOL)
            .collect();
        out.push(ScalarRootBranch { p, p_bar });
    }
    Ok(out)
}
