//! Monte Carlo simulation of the mean-field system under linear feedback.
//!
//! Every path owns a ChaCha8 stream selected by its index, so results do not
//! depend on how paths are scheduled across threads. Ensemble statistics are
//! reduced with a fixed pairwise tree for the same reason.

use alloc::string::ToString;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{psd_sqrt, Matrix, Vector};
use crate::model::{CostSpec, GainPair, Horizon, InitialState, MeanFieldSystem};

/// A state entry above this magnitude ends the run as diverged.
pub const OVERFLOW_BOUND: f64 = 1e150;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    /// `w ~ N(0, σ²)`
    Gaussian,
    /// `w = ±σ` with equal probability.
    Rademacher,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanMode {
    /// `Ex_k` from the exact mean recursion.
    Analytic,
    /// `Ex_k` replaced by the cross-path average at each step.
    EnsembleAverage,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationConfig {
    /// Number of transitions; states `x_0..=x_horizon` are produced.
    pub horizon: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub noise: Noise,
    pub mean_mode: MeanMode,
    /// Keep every path's states and controls (needed by [`empirical_cost`]).
    pub record_paths: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            horizon: 50,
            n_paths: 10_000,
            seed: 1,
            noise: Noise::Gaussian,
            mean_mode: MeanMode::Analytic,
            record_paths: false,
        }
    }
}

/// Control law applied during a run.
#[derive(Debug, Clone, Copy)]
pub enum Feedback<'a> {
    /// `u = 0`
    Zero,
    Constant(&'a GainPair),
    /// Gains for stages `0..len`; the run may not be longer.
    Schedule(&'a [GainPair]),
}

impl Feedback<'_> {
    fn at(&self, k: usize) -> Option<&GainPair> {
        match self {
            Self::Zero => None,
            Self::Constant(g) => Some(g),
            Self::Schedule(s) => s.get(k),
        }
    }
}

/// One sample path in flight.
#[derive(Debug, Clone)]
pub struct PathState {
    pub x: Vector,
    /// Control applied in the last transition.
    pub u: Vector,
    rng: ChaCha8Rng,
}

/// Runs a per-path update over all paths. Implementations may reorder or
/// parallelize; each update touches only its own path.
pub trait PathExecutor {
    fn for_each(&self, paths: &mut [PathState], f: &(dyn Fn(&mut PathState) + Sync));
}

/// Plain loop over the paths.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl PathExecutor for Sequential {
    fn for_each(&self, paths: &mut [PathState], f: &(dyn Fn(&mut PathState) + Sync)) {
        for p in paths {
            f(p);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordedPaths {
    /// `states[i][k]` is `x_k` on path `i`.
    pub states: Vec<Vec<Vector>>,
    /// `controls[i][k]` is `u_k` on path `i`.
    pub controls: Vec<Vec<Vector>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    /// `Ex_k` for every completed step.
    pub mean_path: Vec<Vector>,
    /// `Eu_k` for every completed transition.
    pub mean_control_path: Vec<Vector>,
    /// Ensemble average of `x_k'x_k`.
    pub msq_path: Vec<f64>,
    /// Standard error of each `msq_path` entry.
    pub msq_stderr: Vec<f64>,
    pub paths: Option<RecordedPaths>,
    /// The run stopped early on overflow.
    pub diverged: bool,
    pub n_paths: usize,
}

/// Sum of `xs` by recursive halving; the grouping depends only on `xs.len()`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        len => {
            let (l, r) = xs.split_at(len / 2);
            pairwise_sum(l) + pairwise_sum(r)
        }
    }
}

fn pairwise_sum_vec(xs: &[&Vector], dim: usize) -> Vector {
    match xs.len() {
        0 => Vector::zeros(dim),
        1 => xs[0].clone(),
        len => {
            let (l, r) = xs.split_at(len / 2);
            pairwise_sum_vec(l, dim) + pairwise_sum_vec(r, dim)
        }
    }
}

fn ensemble_mean(paths: &[PathState], dim: usize) -> Vector {
    let refs: Vec<&Vector> = paths.iter().map(|p| &p.x).collect();
    pairwise_sum_vec(&refs, dim) / paths.len() as f64
}

/// Mean and standard error of the mean.
fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, libm::sqrt(var / n))
}

fn draw_noise(noise: Noise, rng: &mut ChaCha8Rng) -> f64 {
    match noise {
        Noise::Gaussian => StandardNormal.sample(rng),
        Noise::Rademacher => {
            if rng.next_u32() & 1 == 0 {
                1.0
            } else {
                -1.0
            }
        }
    }
}

fn initial_paths(init: &InitialState, cfg: &SimulationConfig) -> Vec<PathState> {
    let n = init.dim();
    let root = match init {
        InitialState::Gaussian { cov, .. } => Some(psd_sqrt(cov)),
        _ => None,
    };
    (0..cfg.n_paths)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let x = match init {
                InitialState::Deterministic(x) => x.clone(),
                InitialState::Gaussian { mean, .. } => {
                    let z = Vector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
                    mean + root.as_ref().expect("gaussian root") * z
                }
                InitialState::Ensemble(xs) => xs[i % xs.len()].clone(),
            };
            PathState {
                x,
                u: Vector::zeros(0),
                rng,
            }
        })
        .collect()
}

fn overflowed(paths: &[PathState]) -> bool {
    paths.iter().any(|p| {
        p.x.iter()
            .any(|v| !v.is_finite() || v.abs() > OVERFLOW_BOUND)
    })
}

/// Simulates `cfg.n_paths` sample paths of the closed loop.
pub fn simulate(
    sys: &MeanFieldSystem,
    feedback: Feedback<'_>,
    init: &InitialState,
    cfg: &SimulationConfig,
    executor: &dyn PathExecutor,
) -> Result<SimulationResult> {
    let (n, m) = (sys.n(), sys.m());
    init.check_dim(n)?;
    if cfg.n_paths == 0 {
        return Err(Error::InvalidParameter {
            name: "n_paths",
            reason: "must be at least 1".to_string(),
        });
    }
    match feedback {
        Feedback::Zero => {}
        Feedback::Constant(g) => check_gain(g, n, m)?,
        Feedback::Schedule(s) => {
            if s.len() < cfg.horizon {
                return Err(Error::InvalidParameter {
                    name: "feedback",
                    reason: alloc::format!(
                        "schedule has {} stages, run needs {}",
                        s.len(),
                        cfg.horizon
                    ),
                });
            }
            for g in s {
                check_gain(g, n, m)?;
            }
        }
    }

    let scale = libm::sqrt(sys.sigma2);
    let a_sum = sys.a_sum();
    let b_sum = sys.b_sum();
    let zero_gain = GainPair::zeros(n, m);
    let mut paths = initial_paths(init, cfg);
    let mut ex = match cfg.mean_mode {
        MeanMode::Analytic => init.mean(),
        MeanMode::EnsembleAverage => ensemble_mean(&paths, n),
    };

    let mut mean_path = Vec::with_capacity(cfg.horizon + 1);
    let mut mean_control_path = Vec::with_capacity(cfg.horizon);
    let mut msq_path = Vec::with_capacity(cfg.horizon + 1);
    let mut msq_stderr = Vec::with_capacity(cfg.horizon + 1);
    let mut recorded = cfg.record_paths.then(|| RecordedPaths {
        states: paths.iter().map(|p| alloc::vec![p.x.clone()]).collect(),
        controls: (0..cfg.n_paths).map(|_| Vec::new()).collect(),
    });
    let mut record_moments = |paths: &[PathState], ex: &Vector| {
        let sq: Vec<f64> = paths.iter().map(|p| p.x.norm_squared()).collect();
        let (msq, se) = mean_and_stderr(&sq);
        mean_path.push(ex.clone());
        msq_path.push(msq);
        msq_stderr.push(se);
    };
    record_moments(&paths, &ex);

    let mut diverged = false;
    for k in 0..cfg.horizon {
        let gains = feedback.at(k).unwrap_or(&zero_gain);
        let eu = gains.total() * &ex;
        let drift_mean = &sys.a_bar * &ex + &sys.b_bar * &eu;
        let diffusion_mean = &sys.c_bar * &ex + &sys.d_bar * &eu;
        let noise = cfg.noise;
        let update = |p: &mut PathState| {
            let u = &gains.k * &p.x + &gains.k_bar * &ex;
            let w = scale * draw_noise(noise, &mut p.rng);
            let drift = &sys.a * &p.x + &sys.b * &u + &drift_mean;
            let diffusion = &sys.c * &p.x + &sys.d * &u + &diffusion_mean;
            p.x = drift + diffusion * w;
            p.u = u;
        };
        executor.for_each(&mut paths, &update);
        if overflowed(&paths) {
            diverged = true;
            break;
        }
        mean_control_path.push(eu.clone());
        if let Some(rec) = recorded.as_mut() {
            for (i, p) in paths.iter().enumerate() {
                rec.states[i].push(p.x.clone());
                rec.controls[i].push(p.u.clone());
            }
        }
        ex = match cfg.mean_mode {
            MeanMode::Analytic => &a_sum * &ex + &b_sum * &eu,
            MeanMode::EnsembleAverage => ensemble_mean(&paths, n),
        };
        record_moments(&paths, &ex);
    }

    Ok(SimulationResult {
        mean_path,
        mean_control_path,
        msq_path,
        msq_stderr,
        paths: recorded,
        diverged,
        n_paths: cfg.n_paths,
    })
}

fn check_gain(g: &GainPair, n: usize, m: usize) -> Result<()> {
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
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

fn quad(x: &Vector, w: &Matrix) -> f64 {
    (x.transpose() * w * x)[(0, 0)]
}

/// Plug-in estimate of the cost from recorded paths.
///
/// Sums stages `0..truncation`. For a finite horizon `N`, `truncation` must be
/// `N + 1` and the terminal term at `x_{N+1}` is added. The mean terms come
/// from `mean_path`; the standard error reflects path-to-path variation.
pub fn empirical_cost(
    result: &SimulationResult,
    cost: &CostSpec,
    truncation: usize,
) -> Result<CostEstimate> {
    let rec = result
        .paths
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter {
            name: "result",
            reason: "paths were not recorded".to_string(),
        })?;
    let terminal = match cost.horizon {
        Horizon::Finite(n) => {
            if truncation != n + 1 {
                return Err(Error::InvalidParameter {
                    name: "truncation",
                    reason: alloc::format!("finite horizon {n} needs truncation {}", n + 1),
                });
            }
            true
        }
        Horizon::Infinite => false,
    };
    let needed_states = if terminal { truncation + 1 } else { truncation };
    if result.mean_path.len() < needed_states || result.mean_control_path.len() < truncation {
        return Err(Error::InvalidParameter {
            name: "truncation",
            reason: "simulation is shorter than the requested sum".to_string(),
        });
    }
    let w = &cost.weights;
    let mut mean_part = 0.0;
    for k in 0..truncation {
        mean_part +=
            quad(&result.mean_path[k], &w.q_bar) + quad(&result.mean_control_path[k], &w.r_bar);
    }
    if terminal {
        mean_part += quad(&result.mean_path[truncation], &cost.p_bar_terminal);
    }
    let per_path: Vec<f64> = rec
        .states
        .iter()
        .zip(&rec.controls)
        .map(|(xs, us)| {
            let mut c = 0.0;
            for k in 0..truncation {
                c += quad(&xs[k], &w.q) + quad(&us[k], &w.r);
            }
            if terminal {
                c += quad(&xs[truncation], &cost.p_terminal);
            }
            c
        })
        .collect();
    let (mean, stderr) = mean_and_stderr(&per_path);
    Ok(CostEstimate {
        estimate: mean + mean_part,
        stderr,
    })
}
