//! Problem data: the mean-field system, the quadratic cost, initial states,
//! feedback gains, and the weight-matrix assumption checks.

use alloc::string::ToString;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{
    all_finite, is_symmetric, min_symmetric_eigenvalue, symmetrize, Matrix, Vector,
    DEFINITENESS_TOL, SYMMETRY_TOL,
};

/// Coefficients of
/// `x_{k+1} = A x + Ā Ex + B u + B̄ Eu + (C x + C̄ Ex + D u + D̄ Eu) w_k`,
/// with scalar white noise `w_k` of variance `sigma2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldSystem {
    pub a: Matrix,
    pub a_bar: Matrix,
    pub b: Matrix,
    pub b_bar: Matrix,
    pub c: Matrix,
    pub c_bar: Matrix,
    pub d: Matrix,
    pub d_bar: Matrix,
    pub sigma2: f64,
}

fn check_shape(name: &'static str, m: &Matrix, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::DimensionMismatch {
            name,
            rows,
            cols,
            found_rows: m.nrows(),
            found_cols: m.ncols(),
        });
    }
    if !all_finite(m) {
        return Err(Error::InvalidParameter {
            name,
            reason: "contains NaN or infinite entries".to_string(),
        });
    }
    Ok(())
}

fn check_symmetric(name: &'static str, m: &Matrix) -> Result<()> {
    if !is_symmetric(m, SYMMETRY_TOL) {
        return Err(Error::InvalidParameter {
            name,
            reason: "not symmetric within 1e-10".to_string(),
        });
    }
    Ok(())
}

impl MeanFieldSystem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: Matrix,
        a_bar: Matrix,
        b: Matrix,
        b_bar: Matrix,
        c: Matrix,
        c_bar: Matrix,
        d: Matrix,
        d_bar: Matrix,
        sigma2: f64,
    ) -> Result<Self> {
        let sys = Self {
            a,
            a_bar,
            b,
            b_bar,
            c,
            c_bar,
            d,
            d_bar,
            sigma2,
        };
        sys.validate()?;
        Ok(sys)
    }

    /// One-dimensional system (`n = m = 1`).
    #[allow(clippy::too_many_arguments)]
    pub fn scalar(
        a: f64,
        a_bar: f64,
        b: f64,
        b_bar: f64,
        c: f64,
        c_bar: f64,
        d: f64,
        d_bar: f64,
        sigma2: f64,
    ) -> Self {
        let s = |v| Matrix::from_element(1, 1, v);
        Self {
            a: s(a),
            a_bar: s(a_bar),
            b: s(b),
            b_bar: s(b_bar),
            c: s(c),
            c_bar: s(c_bar),
            d: s(d),
            d_bar: s(d_bar),
            sigma2,
        }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        let m = self.b.ncols();
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "n",
                reason: "state dimension must be positive".to_string(),
            });
        }
        if m == 0 {
            return Err(Error::InvalidParameter {
                name: "m",
                reason: "control dimension must be positive".to_string(),
            });
        }
        check_shape("A", &self.a, n, n)?;
        check_shape("Abar", &self.a_bar, n, n)?;
        check_shape("C", &self.c, n, n)?;
        check_shape("Cbar", &self.c_bar, n, n)?;
        check_shape("B", &self.b, n, m)?;
        check_shape("Bbar", &self.b_bar, n, m)?;
        check_shape("D", &self.d, n, m)?;
        check_shape("Dbar", &self.d_bar, n, m)?;
        if !(self.sigma2.is_finite() && self.sigma2 >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "sigma2",
                reason: "noise variance must be finite and nonnegative".to_string(),
            });
        }
        Ok(())
    }

    /// Drift of the mean dynamics, `A + Ā`.
    pub fn a_sum(&self) -> Matrix {
        &self.a + &self.a_bar
    }

    pub fn b_sum(&self) -> Matrix {
        &self.b + &self.b_bar
    }

    pub fn c_sum(&self) -> Matrix {
        &self.c + &self.c_bar
    }

    pub fn d_sum(&self) -> Matrix {
        &self.d + &self.d_bar
    }

    /// True when every mean-field coefficient is zero.
    pub fn is_standard(&self) -> bool {
        [&self.a_bar, &self.b_bar, &self.c_bar, &self.d_bar]
            .iter()
            .all(|m| m.iter().all(|v| *v == 0.0))
    }
}

/// Per-stage weights `Q, Q̄, R, R̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageWeights {
    pub q: Matrix,
    pub q_bar: Matrix,
    pub r: Matrix,
    pub r_bar: Matrix,
}

impl StageWeights {
    /// Symmetrizes each matrix after checking symmetry to 1e-10.
    pub fn new(q: Matrix, q_bar: Matrix, r: Matrix, r_bar: Matrix) -> Result<Self> {
        for (name, m) in [("Q", &q), ("Qbar", &q_bar), ("R", &r), ("Rbar", &r_bar)] {
            if !m.is_square() {
                return Err(Error::NotSquare(name));
            }
            check_symmetric(name, m)?;
        }
        Ok(Self {
            q: symmetrize(&q),
            q_bar: symmetrize(&q_bar),
            r: symmetrize(&r),
            r_bar: symmetrize(&r_bar),
        })
    }

    pub fn scalar(q: f64, q_bar: f64, r: f64, r_bar: f64) -> Self {
        let s = |v| Matrix::from_element(1, 1, v);
        Self {
            q: s(q),
            q_bar: s(q_bar),
            r: s(r),
            r_bar: s(r_bar),
        }
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            q: Matrix::zeros(n, n),
            q_bar: Matrix::zeros(n, n),
            r: Matrix::zeros(m, m),
            r_bar: Matrix::zeros(m, m),
        }
    }

    pub fn q_sum(&self) -> Matrix {
        &self.q + &self.q_bar
    }

    pub fn r_sum(&self) -> Matrix {
        &self.r + &self.r_bar
    }

    pub fn check_dims(&self, n: usize, m: usize) -> Result<()> {
        check_shape("Q", &self.q, n, n)?;
        check_shape("Qbar", &self.q_bar, n, n)?;
        check_shape("R", &self.r, m, m)?;
        check_shape("Rbar", &self.r_bar, m, m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    /// Stages `k = 0..=N` with terminal weight at `N + 1`.
    Finite(usize),
    Infinite,
}

/// Quadratic cost with optional terminal weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    pub weights: StageWeights,
    pub p_terminal: Matrix,
    pub p_bar_terminal: Matrix,
    pub horizon: Horizon,
}

impl CostSpec {
    pub fn finite(
        weights: StageWeights,
        p_terminal: Matrix,
        p_bar_terminal: Matrix,
        horizon: usize,
    ) -> Result<Self> {
        for (name, m) in [
            ("P_terminal", &p_terminal),
            ("Pbar_terminal", &p_bar_terminal),
        ] {
            if !m.is_square() {
                return Err(Error::NotSquare(name));
            }
            check_symmetric(name, m)?;
        }
        Ok(Self {
            weights,
            p_terminal: symmetrize(&p_terminal),
            p_bar_terminal: symmetrize(&p_bar_terminal),
            horizon: Horizon::Finite(horizon),
        })
    }

    /// Infinite-horizon cost; terminal weights are zero.
    pub fn infinite(weights: StageWeights) -> Self {
        let n = weights.q.nrows();
        Self {
            weights,
            p_terminal: Matrix::zeros(n, n),
            p_bar_terminal: Matrix::zeros(n, n),
            horizon: Horizon::Infinite,
        }
    }

    pub fn finite_horizon(&self) -> Result<usize> {
        match self.horizon {
            Horizon::Finite(n) => Ok(n),
            Horizon::Infinite => Err(Error::WrongHorizon { expected: "finite" }),
        }
    }

    pub fn check_dims(&self, n: usize, m: usize) -> Result<()> {
        self.weights.check_dims(n, m)?;
        check_shape("P_terminal", &self.p_terminal, n, n)?;
        check_shape("Pbar_terminal", &self.p_bar_terminal, n, n)
    }
}

/// One stage of a time-varying problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub system: MeanFieldSystem,
    pub weights: StageWeights,
}

/// Optional per-step coefficients for the finite-horizon solver; entry `k`
/// replaces the constant system and weights at stage `k`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Schedule {
    pub stages: Vec<Stage>,
}

impl Schedule {
    pub fn validate(&self, n: usize, m: usize, horizon: usize) -> Result<()> {
        if self.stages.len() != horizon + 1 {
            return Err(Error::InvalidParameter {
                name: "schedule",
                reason: alloc::format!(
                    "expected {} stages, found {}",
                    horizon + 1,
                    self.stages.len()
                ),
            });
        }
        for stage in &self.stages {
            stage.system.validate()?;
            if stage.system.n() != n || stage.system.m() != m {
                return Err(Error::InvalidParameter {
                    name: "schedule",
                    reason: "stage dimensions differ from the base system".to_string(),
                });
            }
            stage.weights.check_dims(n, m)?;
        }
        Ok(())
    }
}

/// System and weights in force at stage `k`.
pub fn stage_at<'a>(
    sys: &'a MeanFieldSystem,
    cost: &'a CostSpec,
    schedule: Option<&'a Schedule>,
    k: usize,
) -> (&'a MeanFieldSystem, &'a StageWeights) {
    match schedule {
        Some(s) => (&s.stages[k].system, &s.stages[k].weights),
        None => (sys, &cost.weights),
    }
}

/// Distribution of `x_0`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Deterministic(Vector),
    Gaussian { mean: Vector, cov: Matrix },
    Ensemble(Vec<Vector>),
}

impl InitialState {
    pub fn gaussian(mean: Vector, cov: Matrix) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch {
                name: "cov",
                rows: mean.len(),
                cols: mean.len(),
                found_rows: cov.nrows(),
                found_cols: cov.ncols(),
            });
        }
        check_symmetric("cov", &cov)?;
        if min_symmetric_eigenvalue(&cov)? < -DEFINITENESS_TOL {
            return Err(Error::InvalidParameter {
                name: "cov",
                reason: "covariance is not positive semidefinite".to_string(),
            });
        }
        Ok(Self::Gaussian {
            mean,
            cov: symmetrize(&cov),
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Deterministic(x) => x.len(),
            Self::Gaussian { mean, .. } => mean.len(),
            Self::Ensemble(xs) => xs.first().map_or(0, |x| x.len()),
        }
    }

    pub fn mean(&self) -> Vector {
        match self {
            Self::Deterministic(x) => x.clone(),
            Self::Gaussian { mean, .. } => mean.clone(),
            Self::Ensemble(xs) => {
                let n = self.dim();
                let mut acc = Vector::zeros(n);
                for x in xs {
                    acc += x;
                }
                acc / (xs.len().max(1) as f64)
            }
        }
    }

    /// `E[(x_0 - Ex_0)(x_0 - Ex_0)']`; ensembles use the population covariance.
    pub fn covariance(&self) -> Matrix {
        let n = self.dim();
        match self {
            Self::Deterministic(_) => Matrix::zeros(n, n),
            Self::Gaussian { cov, .. } => cov.clone(),
            Self::Ensemble(xs) => {
                let mu = self.mean();
                let mut acc = Matrix::zeros(n, n);
                for x in xs {
                    let dx = x - &mu;
                    acc += &dx * dx.transpose();
                }
                acc / (xs.len().max(1) as f64)
            }
        }
    }

    pub fn check_dim(&self, n: usize) -> Result<()> {
        if self.dim() != n {
            return Err(Error::DimensionMismatch {
                name: "initial_state",
                rows: n,
                cols: 1,
                found_rows: self.dim(),
                found_cols: 1,
            });
        }
        if let Self::Ensemble(xs) = self {
            if xs.is_empty() || xs.iter().any(|x| x.len() != n) {
                return Err(Error::InvalidParameter {
                    name: "initial_state",
                    reason: "ensemble samples must be non-empty n-vectors".to_string(),
                });
            }
        }
        Ok(())
    }
}

/// Linear feedback `u = K x + K̄ Ex`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainPair {
    pub k: Matrix,
    pub k_bar: Matrix,
}

impl GainPair {
    pub fn new(k: Matrix, k_bar: Matrix) -> Result<Self> {
        check_shape("K", &k, k.nrows(), k.ncols())?;
        check_shape("Kbar", &k_bar, k.nrows(), k.ncols())?;
        Ok(Self { k, k_bar })
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            k: Matrix::zeros(m, n),
            k_bar: Matrix::zeros(m, n),
        }
    }

    pub fn scalar(k: f64, k_bar: f64) -> Self {
        Self {
            k: Matrix::from_element(1, 1, k),
            k_bar: Matrix::from_element(1, 1, k_bar),
        }
    }

    /// `K + K̄`, the gain acting on the mean.
    pub fn total(&self) -> Matrix {
        &self.k + &self.k_bar
    }

    pub fn apply(&self, x: &Vector, ex: &Vector) -> Vector {
        &self.k * x + &self.k_bar * ex
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.k) && all_finite(&self.k_bar)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Requirement {
    PositiveSemidefinite,
    PositiveDefinite,
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionCheck {
    pub matrix: &'static str,
    pub requirement: Requirement,
    pub min_eigenvalue: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssumptionSet {
    /// Semidefinite weights for the finite-horizon problem.
    FiniteHorizon,
    /// `R ≻ 0, R + R̄ ≻ 0, Q ⪰ 0, Q + Q̄ ⪰ 0` for the infinite-horizon problem.
    InfiniteHorizon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub set: AssumptionSet,
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn holds(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, matrix: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.matrix == matrix)
    }
}

fn check(matrix: &'static str, m: &Matrix, requirement: Requirement) -> Result<AssumptionCheck> {
    let min_eigenvalue = min_symmetric_eigenvalue(m)?;
    let passed = match requirement {
        Requirement::PositiveSemidefinite => min_eigenvalue >= -DEFINITENESS_TOL,
        Requirement::PositiveDefinite => min_eigenvalue >= DEFINITENESS_TOL,
        Requirement::Zero => m.iter().all(|v| v.abs() <= SYMMETRY_TOL),
    };
    Ok(AssumptionCheck {
        matrix,
        requirement,
        min_eigenvalue,
        passed,
    })
}

/// Checks the weight-matrix assumptions that match `cost.horizon`.
///
/// Failed checks are reported, not raised; only dimension problems error.
pub fn validate_assumptions(sys: &MeanFieldSystem, cost: &CostSpec) -> Result<AssumptionReport> {
    sys.validate()?;
    cost.check_dims(sys.n(), sys.m())?;
    let w = &cost.weights;
    let q_sum = w.q_sum();
    let r_sum = w.r_sum();
    let psd = Requirement::PositiveSemidefinite;
    let pd = Requirement::PositiveDefinite;
    let (set, checks) = match cost.horizon {
        Horizon::Finite(_) => {
            let p_sum = &cost.p_terminal + &cost.p_bar_terminal;
            (
                AssumptionSet::FiniteHorizon,
                alloc::vec![
                    check("Q", &w.q, psd)?,
                    check("Q+Qbar", &q_sum, psd)?,
                    check("R", &w.r, psd)?,
                    check("R+Rbar", &r_sum, psd)?,
                    check("P_terminal", &cost.p_terminal, psd)?,
                    check("P_terminal+Pbar_terminal", &p_sum, psd)?,
                ],
            )
        }
        Horizon::Infinite => (
            AssumptionSet::InfiniteHorizon,
            alloc::vec![
                check("R", &w.r, pd)?,
                check("R+Rbar", &r_sum, pd)?,
                check("Q", &w.q, psd)?,
                check("Q+Qbar", &q_sum, psd)?,
                check("P_terminal", &cost.p_terminal, Requirement::Zero)?,
                check("Pbar_terminal", &cost.p_bar_terminal, Requirement::Zero)?,
            ],
        ),
    };
    Ok(AssumptionReport { set, checks })
}
