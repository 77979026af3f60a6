//! Linear-quadratic control of discrete-time mean-field stochastic systems.
//!
//! The dynamics are
//!
//! ```text
//! x_{k+1} = (A x_k + Ā E x_k + B u_k + B̄ E u_k) + (C x_k + C̄ E x_k + D u_k + D̄ E u_k) w_k
//! ```
//!
//! with scalar noise `w_k` of mean zero and variance `σ²`. The crate solves the
//! finite-horizon problem by a backward coupled Riccati recursion, the
//! infinite-horizon problem by value iteration on the coupled algebraic
//! Riccati equations, and decides mean-square stabilizability through exact
//! observability and detectability tests. A Monte Carlo simulator and exact
//! moment-based oracles are included for cross-checking.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

pub mod error;
pub mod finite;
pub mod infinite;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod simulate;
pub mod structural;

pub use error::{Error, Result};
pub use finite::{
    control_at, optimal_cost, solve_finite, CurvatureBlock, PositivityFailure, RiccatiStep,
    RiccatiTrajectory,
};
pub use infinite::{
    are_residuals, scalar_are_roots, solve_are, AreOptions, AreSolution, ScalarRootBranch,
    Termination,
};
pub use linalg::{Matrix, Vector};
pub use model::{
    validate_assumptions, AssumptionReport, CostSpec, GainPair, Horizon, InitialState,
    MeanFieldSystem, Schedule, Stage, StageWeights,
};
pub use oracle::{
    brute_force_optimize, exact_cost, verify_maximum_principle, BruteForceOptions,
    BruteForceResult, CostateTrajectory, MaximumPrincipleReport, MomentState,
};
pub use simulate::{
    empirical_cost, simulate, CostEstimate, Feedback, MeanMode, Noise, PathExecutor, Sequential,
    SimulationConfig, SimulationResult,
};
pub use structural::{
    is_exactly_detectable, is_exactly_observable, is_mean_square_stable, stabilization_verdict,
    LiftedSystem, MomentOperator, MsStability, Regime, StabilizationVerdict,
};
