//! Independent checks of the Riccati solvers: exact moment propagation of the
//! cost under arbitrary linear feedback, direct numerical minimization over
//! gains, and the costate form of the maximum principle.

use alloc::string::ToString;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::finite::{solve_finite, RiccatiTrajectory};
use crate::linalg::{sup_norm, symmetrize, Matrix, Vector};
use crate::model::{
    stage_at, CostSpec, GainPair, InitialState, MeanFieldSystem, Schedule, StageWeights,
};

/// Mean and centered covariance of `x_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub mu: Vector,
    pub sigma: Matrix,
}

impl MomentState {
    pub fn from_initial(init: &InitialState) -> Self {
        Self {
            mu: init.mean(),
            sigma: init.covariance(),
        }
    }

    /// Moments one step later under `u = F x + G Ex`.
    pub fn step(&self, sys: &MeanFieldSystem, gains: &GainPair) -> Self {
        let total = gains.total();
        let a_cl = &sys.a + &sys.b * &gains.k;
        let c_cl = &sys.c + &sys.d * &gains.k;
        let mu = (sys.a_sum() + sys.b_sum() * &total) * &self.mu;
        let c_mu = (sys.c_sum() + sys.d_sum() * &total) * &self.mu;
        let sigma = &a_cl * &self.sigma * a_cl.transpose()
            + (&c_cl * &self.sigma * c_cl.transpose() + &c_mu * c_mu.transpose()) * sys.sigma2;
        Self {
            mu,
            sigma: symmetrize(&sigma),
        }
    }

    /// `E[x'Qx + Ex'Q̄Ex + u'Ru + Eu'R̄Eu]` at these moments.
    pub fn stage_cost(&self, w: &StageWeights, gains: &GainPair) -> f64 {
        let total = gains.total();
        let centered = &w.q + gains.k.transpose() * &w.r * &gains.k;
        let mean = w.q_sum() + total.transpose() * w.r_sum() * &total;
        (centered * &self.sigma).trace() + (self.mu.transpose() * mean * &self.mu)[(0, 0)]
    }

    /// `E[x'Px] + Ex'P̄Ex`.
    pub fn quadratic(&self, p: &Matrix, p_bar: &Matrix) -> f64 {
        (p * &self.sigma).trace() + (self.mu.transpose() * (p + p_bar) * &self.mu)[(0, 0)]
    }

    /// `E[x'x]`.
    pub fn mean_square(&self) -> f64 {
        self.sigma.trace() + self.mu.norm_squared()
    }
}

fn check_schedule_len(gains: &[GainPair], horizon: usize, n: usize, m: usize) -> Result<()> {
    if gains.len() != horizon + 1 {
        return Err(Error::InvalidParameter {
            name: "gain_schedule",
            reason: alloc::format!("expected {} gain pairs, got {}", horizon + 1, gains.len()),
        });
    }
    for g in gains {
        for (name, k) in [("K", &g.k), ("Kbar", &g.k_bar)] {
            if k.nrows() != m || k.ncols() != n {
                return Err(Error::DimensionMismatch {
                    name,
                    rows: m,
                    cols: n,
                    found_rows: k.nrows(),
                    found_cols: k.ncols(),
                });
            }
        }
    }
    Ok(())
}

/// Finite-horizon cost of the feedback schedule, with no sampling.
pub fn exact_cost(
    sys: &MeanFieldSystem,
    cost: &CostSpec,
    gain_schedule: &[GainPair],
    init: &InitialState,
    schedule: Option<&Schedule>,
) -> Result<f64> {
    let horizon = cost.finite_horizon()?;
    init.check_dim(sys.n())?;
    check_schedule_len(gain_schedule, horizon, sys.n(), sys.m())?;
    if let Some(s) = schedule {
        s.validate(sys.n(), sys.m(), horizon)?;
    }
    Ok(rollout(
        sys,
        cost,
        gain_schedule,
        &MomentState::from_initial(init),
        schedule,
    ))
}

fn rollout(
    sys: &MeanFieldSystem,
    cost: &CostSpec,
    gains: &[GainPair],
    start: &MomentState,
    schedule: Option<&Schedule>,
) -> f64 {
    let mut state = start.clone();
    let mut total = 0.0;
    for (k, g) in gains.iter().enumerate() {
        let (s, w) = stage_at(sys, cost, schedule, k);
        total += state.stage_cost(w, g);
        state = state.step(s, g);
    }
    total + state.quadratic(&cost.p_terminal, &cost.p_bar_terminal)
}

/// Infinite-horizon cost under constant feedback, truncated after `steps`
/// stages.
pub fn truncated_cost(
    sys: &MeanFieldSystem,
    w: &StageWeights,
    gains: &GainPair,
    init: &InitialState,
    steps: usize,
) -> f64 {
    let mut state = MomentState::from_initial(init);
    let mut total = 0.0;
    for _ in 0..steps {
        total += state.stage_cost(w, gains);
        state = state.step(sys, gains);
    }
    total
}

#[derive(Debug, Clone, Copy)]
pub struct BruteForceOptions {
    /// Random starting points.
    pub starts: usize,
    pub seed: u64,
    /// BFGS iterations per start.
    pub max_iter: usize,
    /// Stop when the sup-norm of the gradient falls below this, relative to
    /// `max(1, |cost|)`.
    pub grad_tol: f64,
    /// Also start from the Riccati gains. Off by default so the search stays
    /// independent of the solver it checks.
    pub include_riccati_start: bool,
}

impl Default for BruteForceOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            seed: 7,
            max_iter: 2000,
            grad_tol: 1e-9,
            include_riccati_start: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub gains: Vec<GainPair>,
    /// Summed cost from stage 0 over the initial states.
    pub cost: f64,
    /// Some start hit the iteration cap before meeting the gradient test.
    pub budget_exhausted: bool,
    /// Final value of the searched objective from each start, Riccati start
    /// first when used.
    pub start_costs: Vec<f64>,
    pub evaluations: usize,
}

const MAX_STATE_DIM: usize = 3;
const MAX_INPUT_DIM: usize = 2;
const MAX_HORIZON: usize = 4;

fn pack(gains: &[GainPair]) -> Vector {
    let mut v = Vec::new();
    for g in gains {
        v.extend(g.k.iter().copied());
        v.extend(g.k_bar.iter().copied());
    }
    Vector::from_vec(v)
}

fn unpack(v: &Vector, n: usize, m: usize, stages: usize) -> Vec<GainPair> {
    let block = m * n;
    (0..stages)
        .map(|k| {
            let base = 2 * block * k;
            GainPair {
                k: Matrix::from_column_slice(m, n, &v.as_slice()[base..base + block]),
                k_bar: Matrix::from_column_slice(
                    m,
                    n,
                    &v.as_slice()[base + block..base + 2 * block],
                ),
            }
        })
        .collect()
}

type S3 = nalgebra::Matrix3<f64>;
type In3 = nalgebra::Matrix3x2<f64>;
type Gain = nalgebra::Matrix2x3<f64>;
type R2 = nalgebra::Matrix2<f64>;
type V3 = nalgebra::Vector3<f64>;

/// Problem data zero-padded to `n = 3`, `m = 2`. Padding adds states that stay
/// at zero and inputs that are never used, so the cost is unchanged while the
/// rollout runs on stack matrices.
struct Padded {
    a: S3,
    a_sum: S3,
    c: S3,
    c_sum: S3,
    b: In3,
    b_sum: In3,
    d: In3,
    d_sum: In3,
    sigma2: f64,
    q: S3,
    q_sum: S3,
    r: R2,
    r_sum: R2,
    p_t: S3,
    p_t_sum: S3,
}

fn pad<const R: usize, const C: usize>(m: &Matrix) -> nalgebra::SMatrix<f64, R, C> {
    let mut out = nalgebra::SMatrix::<f64, R, C>::zeros();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out[(i, j)] = m[(i, j)];
        }
    }
    out
}

impl Padded {
    fn new(sys: &MeanFieldSystem, cost: &CostSpec) -> Self {
        let w = &cost.weights;
        Self {
            a: pad(&sys.a),
            a_sum: pad(&sys.a_sum()),
            c: pad(&sys.c),
            c_sum: pad(&sys.c_sum()),
            b: pad(&sys.b),
            b_sum: pad(&sys.b_sum()),
            d: pad(&sys.d),
            d_sum: pad(&sys.d_sum()),
            sigma2: sys.sigma2,
            q: pad(&w.q),
            q_sum: pad(&w.q_sum()),
            r: pad(&w.r),
            r_sum: pad(&w.r_sum()),
            p_t: pad(&cost.p_terminal),
            p_t_sum: pad(&(&cost.p_terminal + &cost.p_bar_terminal)),
        }
    }

    fn rollout(&self, gains: &[(Gain, Gain)], mu0: &V3, sigma0: &S3) -> f64 {
        let mut mu = *mu0;
        let mut sigma = *sigma0;
        let mut total = 0.0;
        for (f, g) in gains {
            let t = f + g;
            let centered = self.q + f.transpose() * self.r * f;
            let mean = self.q_sum + t.transpose() * self.r_sum * t;
            total += (centered * sigma).trace() + mu.dot(&(mean * mu));
            let a_cl = self.a + self.b * f;
            let c_cl = self.c + self.d * f;
            let c_mu = (self.c_sum + self.d_sum * t) * mu;
            sigma = a_cl * sigma * a_cl.transpose()
                + (c_cl * sigma * c_cl.transpose() + c_mu * c_mu.transpose()) * self.sigma2;
            mu = (self.a_sum + self.b_sum * t) * mu;
        }
        total + (self.p_t * sigma).trace() + mu.dot(&(self.p_t_sum * mu))
    }
}

/// Sum over the starts of the cost-to-go from every stage, so each stage's
/// gains are pinned down even where the time-0 trajectory has decayed.
struct Objective {
    problem: Padded,
    starts: Vec<(V3, S3)>,
    n: usize,
    m: usize,
    stages: usize,
    evaluations: usize,
}

impl Objective {
    fn gains(&self, v: &Vector) -> Vec<(Gain, Gain)> {
        let block = self.m * self.n;
        (0..self.stages)
            .map(|k| {
                let base = 2 * block * k;
                let mut f = Gain::zeros();
                let mut g = Gain::zeros();
                // column-major, matching `pack`
                for j in 0..self.n {
                    for i in 0..self.m {
                        f[(i, j)] = v[base + j * self.m + i];
                        g[(i, j)] = v[base + block + j * self.m + i];
                    }
                }
                (f, g)
            })
            .collect()
    }

    fn value(&mut self, v: &Vector) -> f64 {
        self.evaluations += 1;
        let gains = self.gains(v);
        (0..self.stages)
            .map(|from| self.cost_from(&gains, from))
            .sum()
    }

    fn cost_from(&self, gains: &[(Gain, Gain)], from: usize) -> f64 {
        self.starts
            .iter()
            .map(|(mu, sigma)| self.problem.rollout(&gains[from..], mu, sigma))
            .sum()
    }

    fn gradient(&mut self, v: &Vector) -> Vector {
        let mut g = Vector::zeros(v.len());
        let mut probe = v.clone();
        for i in 0..v.len() {
            let h = 1e-6 * (1.0 + v[i].abs());
            probe[i] = v[i] + h;
            let up = self.value(&probe);
            probe[i] = v[i] - h;
            let down = self.value(&probe);
            probe[i] = v[i];
            g[i] = (up - down) / (2.0 * h);
        }
        g
    }
}

/// BFGS with Armijo backtracking. Returns the final point, its value and
/// whether the gradient test was met.
fn bfgs(obj: &mut Objective, x0: Vector, opts: &BruteForceOptions) -> (Vector, f64, bool) {
    let dim = x0.len();
    let mut x = x0;
    let mut f = obj.value(&x);
    let mut g = obj.gradient(&x);
    let mut h = Matrix::identity(dim, dim);
    let mut stalled = 0;
    for _ in 0..opts.max_iter {
        if !f.is_finite() {
            return (x, f, false);
        }
        if g.amax() <= opts.grad_tol * f.abs().max(1.0) {
            return (x, f, true);
        }
        let mut dir = -(&h * &g);
        let mut slope = g.dot(&dir);
        if slope >= 0.0 {
            h = Matrix::identity(dim, dim);
            dir = -g.clone();
            slope = g.dot(&dir);
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + &dir * t;
            let ft = obj.value(&trial);
            if ft.is_finite() && ft <= f + 1e-4 * t * slope {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            // no descent possible at this resolution: finite-difference
            // noise floor reached
            return (x, f, true);
        };
        let g_new = obj.gradient(&x_new);
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let i = Matrix::identity(dim, dim);
            let left = &i - (&s * y.transpose()) * rho;
            let right = &i - (&y * s.transpose()) * rho;
            h = &left * &h * &right + (&s * s.transpose()) * rho;
        }
        if f - f_new <= 1e-14 * f.abs().max(1.0) {
            stalled += 1;
            if stalled >= 10 {
                return (x_new, f_new, true);
            }
        } else {
            stalled = 0;
        }
        x = x_new;
        f = f_new;
        g = g_new;
    }
    (x, f, false)
}

/// Minimizes the summed exact cost over all initial states in `inits` with
/// respect to every entry of the gain schedule `{(F_k, G_k)}`.
///
/// Several initial states make the mean-feedback gains identifiable: with a
/// single one, only `(F_k + G_k) Ex_k` enters the cost.
pub fn brute_force_optimize(
    sys: &MeanFieldSystem,
    cost: &CostSpec,
    inits: &[InitialState],
    opts: &BruteForceOptions,
) -> Result<BruteForceResult> {
    let horizon = cost.finite_horizon()?;
    let (n, m) = (sys.n(), sys.m());
    if n > MAX_STATE_DIM || m > MAX_INPUT_DIM || horizon > MAX_HORIZON {
        return Err(Error::InvalidParameter {
            name: "problem",
            reason: "brute force is limited to n <= 3, m <= 2, N <= 4".to_string(),
        });
    }
    if inits.is_empty() {
        return Err(Error::InvalidParameter {
            name: "inits",
            reason: "need at least one initial state".to_string(),
        });
    }
    for init in inits {
        init.check_dim(n)?;
    }
    cost.check_dims(n, m)?;
    let stages = horizon + 1;
    let mut obj = Objective {
        problem: Padded::new(sys, cost),
        starts: inits
            .iter()
            .map(|i| {
                let s = MomentState::from_initial(i);
                let mut mu = V3::zeros();
                for (i, v) in s.mu.iter().enumerate() {
                    mu[i] = *v;
                }
                (mu, pad(&s.sigma))
            })
            .collect(),
        n,
        m,
        stages,
        evaluations: 0,
    };

    let mut starting_points = Vec::new();
    if opts.include_riccati_start {
        let traj = solve_finite(sys, cost, None)?;
        if traj.solvable {
            starting_points.push(pack(&traj.gain_schedule()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let dim = 2 * m * n * stages;
    for _ in 0..opts.starts {
        let v: Vec<f64> = (0..dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                0.5 * z
            })
            .collect();
        starting_points.push(Vector::from_vec(v));
    }

    let mut best: Option<(Vector, f64)> = None;
    let mut budget_exhausted = false;
    let mut start_costs = Vec::with_capacity(starting_points.len());
    for x0 in starting_points {
        let (x, f, ok) = bfgs(&mut obj, x0, opts);
        budget_exhausted |= !ok;
        start_costs.push(f);
        if f.is_finite() && best.as_ref().is_none_or(|(_, fb)| f < *fb) {
            best = Some((x, f));
        }
    }
    let (x, _) = best.ok_or(Error::NonFinite {
        quantity: "brute-force cost",
        step: 0,
    })?;
    let cost = obj.cost_from(&obj.gains(&x), 0);
    Ok(BruteForceResult {
        gains: unpack(&x, n, m, stages),
        cost,
        budget_exhausted,
        start_costs,
        evaluations: obj.evaluations,
    })
}

/// Costate blocks at stage `k`: `λ_{k-1}` is linear in `(x_k, Ex_k)` through
/// `P_k` and the three mean blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct CostateBlocks {
    pub k: usize,
    pub p: Matrix,
    pub p_bar1: Matrix,
    pub p_bar2: Matrix,
    pub p_bar3: Matrix,
}

impl CostateBlocks {
    pub fn p_bar_sum(&self) -> Matrix {
        &self.p_bar1 + &self.p_bar2 + &self.p_bar3
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostateTrajectory {
    /// Stages `0..=N` in increasing order.
    pub blocks: Vec<CostateBlocks>,
}

/// Backward recursion of the three mean blocks from `(P̄_{N+1}, 0, 0)`.
pub fn costate_blocks(
    sys: &MeanFieldSystem,
    cost: &CostSpec,
    traj: &RiccatiTrajectory,
    schedule: Option<&Schedule>,
) -> Result<CostateTrajectory> {
    if !traj.solvable {
        return Err(Error::Unsolvable {
            step: traj.failure_step().unwrap_or(0),
        });
    }
    let n = sys.n();
    let mut b1 = cost.p_bar_terminal.clone();
    let mut b2 = Matrix::zeros(n, n);
    let mut b3 = Matrix::zeros(n, n);
    let mut p_next = cost.p_terminal.clone();
    let mut blocks = Vec::with_capacity(traj.horizon + 1);
    for k in (0..=traj.horizon).rev() {
        let (s, w) = stage_at(sys, cost, schedule, k);
        let step = traj.step(k)?;
        let kk = &step.gains.k;
        let kb = &step.gains.k_bar;
        let total = step.gains.total();
        let s2 = s.sigma2;
        let a_sum = s.a_sum();
        let b_sum = s.b_sum();
        let at = s.a.transpose();
        let ct = s.c.transpose();
        let abt = s.a_bar.transpose();
        let cbt = s.c_bar.transpose();
        let ast = a_sum.transpose();
        let p = &p_next;
        let mean_cl = &a_sum + &b_sum * &total;

        let n1 = &w.q_bar
            + &at * p * &s.a_bar
            + (&ct * p * &s.c_bar) * s2
            + &at * p * &s.b * kb
            + (&ct * p * &s.d * kb) * s2
            + &at * p * &s.b_bar * &total
            + (&ct * p * &s.d_bar * &total) * s2
            + &at * &b1 * &mean_cl;
        let n2 = &abt * p * &s.a
            + (&cbt * p * &s.c) * s2
            + &abt * p * &s.b * kk
            + (&cbt * p * &s.d * kk) * s2
            + &ast * &b2 * (&s.a + &s.b * kk);
        let n3 = &abt * p * &s.a_bar
            + (&cbt * p * &s.c_bar) * s2
            + &abt * p * &s.b * kb
            + (&cbt * p * &s.d * kb) * s2
            + &abt * p * &s.b_bar * &total
            + (&cbt * p * &s.d_bar * &total) * s2
            + &ast * &b2 * (&s.a_bar + &s.b * kb + &s.b_bar * &total)
            + &abt * &b1 * &mean_cl
            + &ast * &b3 * &mean_cl;
        blocks.push(CostateBlocks {
            k,
            p: step.p.clone(),
            p_bar1: n1.clone(),
            p_bar2: n2.clone(),
            p_bar3: n3.clone(),
        });
        b1 = n1;
        b2 = n2;
        b3 = n3;
        p_next = step.p.clone();
    }
    blocks.reverse();
    Ok(CostateTrajectory { blocks })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualKind {
    /// `P̄¹ + P̄² + P̄³ - P̄`
    BlockSum,
    /// `Υ1 K + M1`
    Equilibrium1,
    /// `Υ2 (K + K̄) + M2`
    Equilibrium2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageResidual {
    pub k: usize,
    pub kind: ResidualKind,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaximumPrincipleReport {
    pub costate: CostateTrajectory,
    pub residuals: Vec<StageResidual>,
    pub tol: f64,
}

impl MaximumPrincipleReport {
    pub fn violations(&self) -> Vec<StageResidual> {
        self.residuals
            .iter()
            .copied()
            .filter(|r| !(r.residual <= self.tol))
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.violations().is_empty()
    }

    pub fn max_residual(&self, kind: ResidualKind) -> f64 {
        self.residuals
            .iter()
            .filter(|r| r.kind == kind)
            .fold(0.0, |acc, r| acc.max(r.residual))
    }
}

/// Checks the costate block-sum identity and the reduced equilibrium
/// conditions `Υ1 K + M1 = 0`, `Υ2 (K+K̄) + M2 = 0` at every stage.
pub fn verify_maximum_principle(
    sys: &MeanFieldSystem,
    cost: &CostSpec,
    traj: &RiccatiTrajectory,
    schedule: Option<&Schedule>,
    tol: f64,
) -> Result<MaximumPrincipleReport> {
    let costate = costate_blocks(sys, cost, traj, schedule)?;
    let mut residuals = Vec::with_capacity(3 * costate.blocks.len());
    for (blocks, step) in costate.blocks.iter().zip(&traj.steps) {
        let k = step.k;
        residuals.push(StageResidual {
            k,
            kind: ResidualKind::BlockSum,
            residual: sup_norm(&(blocks.p_bar_sum() - &step.p_bar)),
        });
        residuals.push(StageResidual {
            k,
            kind: ResidualKind::Equilibrium1,
            residual: sup_norm(&(&step.ups1 * &step.gains.k + &step.m1)),
        });
        residuals.push(StageResidual {
            k,
            kind: ResidualKind::Equilibrium2,
            residual: sup_norm(&(&step.ups2 * step.gains.total() + &step.m2)),
        });
    }
    Ok(MaximumPrincipleReport {
        costate,
        residuals,
        tol,
    })
}

/// Initial states for the brute-force objective: unit means along each axis
/// plus the all-ones mean, sharing one covariance.
pub fn probe_initial_states(n: usize, cov: &Matrix) -> Vec<InitialState> {
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let mut mu = Vector::zeros(n);
        mu[i] = 1.0;
        out.push(InitialState::Gaussian {
            mean: mu,
            cov: cov.clone(),
        });
    }
    out.push(InitialState::Gaussian {
        mean: Vector::from_element(n, 1.0),
        cov: cov.clone(),
    });
    out
}
