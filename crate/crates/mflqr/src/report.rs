//! Serializable command outputs. Every report re-parses from its own JSON.

use serde::{Deserialize, Serialize};

use mflqr_core::structural::{MomentBlock, StabilityClass};
use mflqr_core::{
    AreSolution, CurvatureBlock, MsStability, Regime, RiccatiTrajectory, StabilizationVerdict,
    Termination,
};

use crate::format::Precision;
use crate::problem::Rows;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepReport {
    pub k: usize,
    #[serde(rename = "P")]
    pub p: Rows,
    #[serde(rename = "Pbar")]
    pub p_bar: Rows,
    #[serde(rename = "Ups1")]
    pub ups1: Rows,
    #[serde(rename = "Ups2")]
    pub ups2: Rows,
    #[serde(rename = "M1")]
    pub m1: Rows,
    #[serde(rename = "M2")]
    pub m2: Rows,
    pub det_ups1: f64,
    pub det_ups2: f64,
    #[serde(rename = "K")]
    pub k_gain: Rows,
    #[serde(rename = "Kbar")]
    pub k_bar_gain: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureReport {
    pub step: usize,
    pub block: String,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteReport {
    pub horizon: usize,
    pub solvable: bool,
    pub assumptions_hold: bool,
    pub failure: Option<FailureReport>,
    /// Increasing `k`.
    pub steps: Vec<StepReport>,
    pub optimal_cost: Option<f64>,
}

impl FiniteReport {
    pub fn new(traj: &RiccatiTrajectory, optimal_cost: Option<f64>, pr: Precision) -> Self {
        let steps = traj
            .steps
            .iter()
            .map(|s| StepReport {
                k: s.k,
                p: pr.matrix(&s.p),
                p_bar: pr.matrix(&s.p_bar),
                ups1: pr.matrix(&s.ups1),
                ups2: pr.matrix(&s.ups2),
                m1: pr.matrix(&s.m1),
                m2: pr.matrix(&s.m2),
                det_ups1: pr.round(s.ups1.determinant()),
                det_ups2: pr.round(s.ups2.determinant()),
                k_gain: pr.matrix(&s.gains.k),
                k_bar_gain: pr.matrix(&s.gains.k_bar),
            })
            .collect();
        Self {
            horizon: traj.horizon,
            solvable: traj.solvable,
            assumptions_hold: traj.assumptions.holds(),
            failure: traj.failure.map(|f| FailureReport {
                step: f.step,
                block: match f.block {
                    CurvatureBlock::Ups1 => "Ups1",
                    CurvatureBlock::Ups2 => "Ups2",
                }
                .to_string(),
                min_eigenvalue: pr.round(f.min_eigenvalue),
            }),
            steps,
            optimal_cost: optimal_cost.map(|c| pr.round(c)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RootReport {
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "Pbar")]
    pub p_bar: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfiniteReport {
    pub termination: String,
    pub converged: bool,
    pub assumptions_hold: bool,
    pub iterations: usize,
    pub residual1: f64,
    pub residual2: f64,
    pub last_delta: f64,
    #[serde(rename = "P")]
    pub p: Rows,
    #[serde(rename = "Pbar")]
    pub p_bar: Rows,
    #[serde(rename = "Ups1")]
    pub ups1: Rows,
    #[serde(rename = "Ups2")]
    pub ups2: Rows,
    #[serde(rename = "M1")]
    pub m1: Rows,
    #[serde(rename = "M2")]
    pub m2: Rows,
    #[serde(rename = "K")]
    pub k_gain: Option<Rows>,
    #[serde(rename = "Kbar")]
    pub k_bar_gain: Option<Rows>,
    /// Real solutions of the scalar algebraic equations, when `n = m = 1`.
    pub scalar_roots: Option<Vec<RootReport>>,
    pub optimal_cost: Option<f64>,
}

pub fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::Converged => "converged",
        Termination::MaxIterations => "max_iterations",
        Termination::Diverged => "diverged",
        Termination::Indefinite => "indefinite",
        Termination::Cancelled => "cancelled",
    }
}

impl InfiniteReport {
    pub fn new(
        sol: &AreSolution,
        roots: Option<&[mflqr_core::ScalarRootBranch]>,
        optimal_cost: Option<f64>,
        pr: Precision,
    ) -> Self {
        Self {
            termination: termination_name(sol.termination).to_string(),
            converged: sol.converged,
            assumptions_hold: sol.assumptions.holds(),
            iterations: sol.iterations,
            residual1: pr.round(sol.residual1),
            residual2: pr.round(sol.residual2),
            last_delta: pr.round(sol.last_delta),
            p: pr.matrix(&sol.p),
            p_bar: pr.matrix(&sol.p_bar),
            ups1: pr.matrix(&sol.ups1),
            ups2: pr.matrix(&sol.ups2),
            m1: pr.matrix(&sol.m1),
            m2: pr.matrix(&sol.m2),
            k_gain: sol.gains.as_ref().map(|g| pr.matrix(&g.k)),
            k_bar_gain: sol.gains.as_ref().map(|g| pr.matrix(&g.k_bar)),
            scalar_roots: roots.map(|rs| {
                rs.iter()
                    .map(|b| RootReport {
                        p: pr.round(b.p),
                        p_bar: b.p_bar.iter().map(|v| pr.round(*v)).collect(),
                    })
                    .collect()
            }),
            optimal_cost: optimal_cost.map(|c| pr.round(c)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityReport {
    pub stable: bool,
    pub class: String,
    pub spectral_radius_mean: f64,
    pub spectral_radius_moment: f64,
}

impl StabilityReport {
    pub fn new(ms: &MsStability, pr: Precision) -> Self {
        Self {
            stable: ms.stable,
            class: match ms.class {
                StabilityClass::Stable => "stable",
                StabilityClass::Marginal => "marginal",
                StabilityClass::Unstable => "unstable",
            }
            .to_string(),
            spectral_radius_mean: pr.round(ms.spectral_radius_mean),
            spectral_radius_moment: pr.round(ms.spectral_radius_moment),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeReport {
    pub block: String,
    pub re: f64,
    pub im: f64,
    pub modulus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateReport {
    #[serde(rename = "P")]
    pub p: Rows,
    #[serde(rename = "Pbar")]
    pub p_bar: Rows,
    pub min_eig_p: f64,
    pub min_eig_p_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckReport {
    pub observable: bool,
    pub detectable: bool,
    pub unobservable_dim: usize,
    pub moment_dim: usize,
    pub unstable_unobservable_modes: Vec<ModeReport>,
    pub are_termination: String,
    pub regime: String,
    pub stabilizable: bool,
    pub conditional: bool,
    pub consistent: bool,
    pub certificate: Option<CertificateReport>,
    pub synthesized_gains: Option<StabilityReport>,
    pub supplied_gains: Option<StabilityReport>,
    pub admissible_roots: Vec<[f64; 2]>,
}

impl CheckReport {
    pub fn new(
        v: &StabilizationVerdict,
        are: &AreSolution,
        supplied: Option<&MsStability>,
        pr: Precision,
    ) -> Self {
        Self {
            observable: v.observability.observable,
            detectable: v.detectability.detectable,
            unobservable_dim: v.observability.unobservable_dim,
            moment_dim: v.observability.moment_dim,
            unstable_unobservable_modes: v
                .detectability
                .unstable_unobservable_modes
                .iter()
                .map(|m| ModeReport {
                    block: match m.block {
                        MomentBlock::Centered => "centered",
                        MomentBlock::Mean => "mean",
                    }
                    .to_string(),
                    re: pr.round(m.eigenvalue.re),
                    im: pr.round(m.eigenvalue.im),
                    modulus: pr.round(m.modulus()),
                })
                .collect(),
            are_termination: termination_name(are.termination).to_string(),
            regime: match v.regime {
                Regime::Observability => "observability",
                Regime::Detectability => "detectability",
                Regime::Unverified => "unverified",
            }
            .to_string(),
            stabilizable: v.stabilizable,
            conditional: v.conditional,
            consistent: v.consistent,
            certificate: v.certificate.as_ref().map(|c| CertificateReport {
                p: pr.matrix(&c.p),
                p_bar: pr.matrix(&c.p_bar),
                min_eig_p: pr.round(c.min_eig_p),
                min_eig_p_sum: pr.round(c.min_eig_p_sum),
            }),
            synthesized_gains: v.closed_loop.as_ref().map(|m| StabilityReport::new(m, pr)),
            supplied_gains: supplied.map(|m| StabilityReport::new(m, pr)),
            admissible_roots: v
                .admissible_roots
                .iter()
                .map(|&(p, pb)| [pr.round(p), pr.round(pb)])
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationReport {
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
    pub gains: String,
    pub noise: String,
    pub mean_mode: String,
    pub diverged: bool,
    pub msq_initial: f64,
    pub msq_final: f64,
    pub msq_stderr_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleCheck {
    pub name: String,
    /// `None` when the check does not apply to this problem.
    pub passed: Option<bool>,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyReport {
    pub checks: Vec<OracleCheck>,
    pub passed: bool,
}

/// JSON text with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}
