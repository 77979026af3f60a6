//! Exact observability and detectability of the open-loop mean-field system,
//! mean-square stability of closed loops, and the stabilizability verdict.
//!
//! With `u = 0` the pair `(x - Ex, Ex)` has second moments `(Σ_k, μ_k μ_k')`:
//!
//! ```text
//! μ_{k+1} = (A+Ā) μ_k
//! Σ_{k+1} = A Σ_k A' + σ² (C Σ_k C' + c_k c_k'),   c_k = (C+C̄) μ_k
//! ```
//!
//! and the output energy is `tr(Q Σ_k) + μ_k'(Q+Q̄) μ_k`. A PSD `Σ` produces
//! zero output forever iff its range stays inside `ker Q`, so the unobservable
//! initial moments are exactly the PSD matrices supported on
//!
//! * `V1`, the largest subspace of `ker Q` invariant under `A` and `C`, and
//! * `V2`, the largest subspace of `ker(Q+Q̄)` invariant under `A+Ā` whose
//!   image under `C+C̄` lies in `V1`.
//!
//! (`C` and `C+C̄` drop out when `σ² = 0`.)

use alloc::vec::Vec;

use nalgebra::Complex;

use crate::error::Result;
use crate::infinite::{AreSolution, ScalarRootBranch};
use crate::linalg::{
    congruence_operator, eigenvalues, min_symmetric_eigenvalue, null_space, spectral_radius,
    sym_dim, Matrix, DEFINITENESS_TOL,
};
use crate::model::{CostSpec, GainPair, MeanFieldSystem, StageWeights};

/// Spectral radii within this distance below 1 are not counted as stable.
pub const STABILITY_MARGIN: f64 = 1e-9;

const SUBSPACE_TOL: f64 = 1e-9;

fn projector_complement(basis: &Matrix) -> Matrix {
    let n = basis.nrows();
    Matrix::identity(n, n) - basis * basis.transpose()
}

/// Largest subspace `U ⊆ span(start)` with `F U ⊆ U` for every `F` in
/// `invariant` and `G U ⊆ span(target)` for every `G` in `into`.
fn largest_subspace(start: Matrix, invariant: &[&Matrix], into: &[(&Matrix, &Matrix)]) -> Matrix {
    let mut basis = start;
    loop {
        let r = basis.ncols();
        if r == 0 {
            return basis;
        }
        let off = projector_complement(&basis);
        let mut blocks: Vec<Matrix> = invariant.iter().map(|f| &off * *f * &basis).collect();
        for (g, target) in into {
            blocks.push(projector_complement(target) * *g * &basis);
        }
        let n = basis.nrows();
        let mut stacked = Matrix::zeros(blocks.len() * n, r);
        for (i, b) in blocks.iter().enumerate() {
            stacked.view_mut((i * n, 0), (n, r)).copy_from(b);
        }
        let y = null_space(&stacked, SUBSPACE_TOL);
        if y.ncols() == r {
            return basis;
        }
        basis = &basis * y;
    }
}

/// The two unobservable subspaces for output weights `q_out` on the centered
/// state and `q_sum_out` on the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct UnobservableSubspaces {
    /// Orthonormal basis of `V1` (columns).
    pub centered: Matrix,
    /// Orthonormal basis of `V2` (columns).
    pub mean: Matrix,
}

impl UnobservableSubspaces {
    /// Dimension of the set of unobservable initial second-moment pairs
    /// `(Σ_0, μ_0 μ_0')` as a subspace of symmetric matrix pairs.
    pub fn moment_dim(&self) -> usize {
        sym_dim(self.centered.ncols()) + sym_dim(self.mean.ncols())
    }
}

/// Unobservable subspaces for arbitrary output matrices: zero output means
/// `q_out (x - Ex) = 0` and `q_sum_out Ex = 0` along the trajectory.
///
/// With `coupled = false` the mean subspace ignores the diffusion condition
/// `(C+C̄) V2 ⊆ V1`, which gives a larger (more conservative) subspace.
pub fn unobservable_subspaces_for(
    sys: &MeanFieldSystem,
    q_out: &Matrix,
    q_sum_out: &Matrix,
    coupled: bool,
) -> UnobservableSubspaces {
    let noisy = sys.sigma2 > 0.0;
    let a_sum = sys.a_sum();
    let c_sum = sys.c_sum();
    let centered_maps: Vec<&Matrix> = if noisy {
        alloc::vec![&sys.a, &sys.c]
    } else {
        alloc::vec![&sys.a]
    };
    let centered = largest_subspace(null_space(q_out, SUBSPACE_TOL), &centered_maps, &[]);
    let mean = if noisy && coupled {
        largest_subspace(
            null_space(q_sum_out, SUBSPACE_TOL),
            &[&a_sum],
            &[(&c_sum, &centered)],
        )
    } else {
        largest_subspace(null_space(q_sum_out, SUBSPACE_TOL), &[&a_sum], &[])
    };
    UnobservableSubspaces { centered, mean }
}

pub fn unobservable_subspaces(sys: &MeanFieldSystem, w: &StageWeights) -> UnobservableSubspaces {
    unobservable_subspaces_for(sys, &w.q, &w.q_sum(), true)
}

/// Dimension of the moment space the tests work in: pairs of symmetric
/// `n x n` matrices.
pub fn moment_space_dim(n: usize) -> usize {
    2 * sym_dim(n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservabilityReport {
    pub observable: bool,
    pub unobservable_dim: usize,
    pub moment_dim: usize,
}

pub fn is_exactly_observable(
    sys: &MeanFieldSystem,
    cost: &CostSpec,
) -> Result<ObservabilityReport> {
    cost.check_dims(sys.n(), sys.m())?;
    let sub = unobservable_subspaces(sys, &cost.weights);
    let unobservable_dim = sub.moment_dim();
    Ok(ObservabilityReport {
        observable: unobservable_dim == 0,
        unobservable_dim,
        moment_dim: moment_space_dim(sys.n()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentBlock {
    /// Second moment of `x - Ex`.
    Centered,
    /// The mean `Ex`.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnobservableMode {
    pub block: MomentBlock,
    pub eigenvalue: Complex<f64>,
}

impl UnobservableMode {
    pub fn modulus(&self) -> f64 {
        libm::hypot(self.eigenvalue.re, self.eigenvalue.im)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectabilityReport {
    pub detectable: bool,
    pub unobservable_dim: usize,
    /// Eigenvalues of the unobservable dynamics with modulus `≥ 1 - margin`.
    /// Centered-block eigenvalues are those of the second-moment operator,
    /// mean-block ones those of `A+Ā` on `V2`.
    pub unstable_unobservable_modes: Vec<UnobservableMode>,
}

fn restrict(f: &Matrix, basis: &Matrix) -> Matrix {
    basis.transpose() * f * basis
}

fn detectability_of(
    sys: &MeanFieldSystem,
    sub: &UnobservableSubspaces,
) -> Result<DetectabilityReport> {
    let mut modes = Vec::new();
    let r1 = sub.centered.ncols();
    if r1 > 0 {
        let a_r = restrict(&sys.a, &sub.centered);
        let c_r = restrict(&sys.c, &sub.centered);
        let op = congruence_operator(&[(1.0, &a_r), (sys.sigma2, &c_r)], r1);
        for z in eigenvalues(&op)? {
            modes.push(UnobservableMode {
                block: MomentBlock::Centered,
                eigenvalue: z,
            });
        }
    }
    if sub.mean.ncols() > 0 {
        for z in eigenvalues(&restrict(&sys.a_sum(), &sub.mean))? {
            modes.push(UnobservableMode {
                block: MomentBlock::Mean,
                eigenvalue: z,
            });
        }
    }
    modes.retain(|m| m.modulus() >= 1.0 - STABILITY_MARGIN);
    Ok(DetectabilityReport {
        detectable: modes.is_empty(),
        unobservable_dim: sub.moment_dim(),
        unstable_unobservable_modes: modes,
    })
}

pub fn is_exactly_detectable(
    sys: &MeanFieldSystem,
    cost: &CostSpec,
) -> Result<DetectabilityReport> {
    cost.check_dims(sys.n(), sys.m())?;
    detectability_of(sys, &unobservable_subspaces(sys, &cost.weights))
}

/// Detectability in the sense "`Q(x_k - Ex_k) = 0` and `(Q+Q̄)Ex_k = 0` for
/// all `k` imply mean-square decay", with the centered and mean conditions
/// taken separately. It implies [`is_exactly_detectable`].
pub fn is_separately_detectable(
    sys: &MeanFieldSystem,
    cost: &CostSpec,
) -> Result<DetectabilityReport> {
    cost.check_dims(sys.n(), sys.m())?;
    let w = &cost.weights;
    detectability_of(
        sys,
        &unobservable_subspaces_for(sys, &w.q, &w.q_sum(), false),
    )
}

/// Closed-loop matrices under `u = K x + K̄ Ex`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    /// `A + B K`
    pub a_cl: Matrix,
    /// `C + D K`
    pub c_cl: Matrix,
    /// `A + Ā + (B + B̄)(K + K̄)`
    pub a_mean: Matrix,
    /// `C + C̄ + (D + D̄)(K + K̄)`
    pub c_mean: Matrix,
}

impl ClosedLoop {
    pub fn new(sys: &MeanFieldSystem, gains: &GainPair) -> Self {
        let total = gains.total();
        Self {
            a_cl: &sys.a + &sys.b * &gains.k,
            c_cl: &sys.c + &sys.d * &gains.k,
            a_mean: sys.a_sum() + sys.b_sum() * &total,
            c_mean: sys.c_sum() + sys.d_sum() * &total,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityClass {
    Stable,
    /// A radius lies within the margin of 1.
    Marginal,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsStability {
    pub stable: bool,
    pub class: StabilityClass,
    /// Spectral radius of `A + Ā + (B+B̄)(K+K̄)`.
    pub spectral_radius_mean: f64,
    /// Spectral radius of `S ↦ (A+BK) S (A+BK)' + σ² (C+DK) S (C+DK)'`.
    pub spectral_radius_moment: f64,
}

/// Centered second-moment operator of the closed loop in `svec` coordinates.
pub fn centered_moment_operator(sys: &MeanFieldSystem, gains: &GainPair) -> Matrix {
    let cl = ClosedLoop::new(sys, gains);
    congruence_operator(&[(1.0, &cl.a_cl), (sys.sigma2, &cl.c_cl)], sys.n())
}

fn classify(radius: f64) -> StabilityClass {
    if radius < 1.0 - STABILITY_MARGIN {
        StabilityClass::Stable
    } else if radius <= 1.0 + STABILITY_MARGIN {
        StabilityClass::Marginal
    } else {
        StabilityClass::Unstable
    }
}

pub fn is_mean_square_stable(sys: &MeanFieldSystem, gains: &GainPair) -> Result<MsStability> {
    let n = sys.n();
    let m = sys.m();
    for (name, g) in [("K", &gains.k), ("Kbar", &gains.k_bar)] {
        if g.nrows() != m || g.ncols() != n {
            return Err(crate::error::Error::DimensionMismatch {
                name,
                rows: m,
                cols: n,
                found_rows: g.nrows(),
                found_cols: g.ncols(),
            });
        }
    }
    let cl = ClosedLoop::new(sys, gains);
    let spectral_radius_mean = spectral_radius(&cl.a_mean)?;
    let spectral_radius_moment = spectral_radius(&centered_moment_operator(sys, gains))?;
    let class = match (
        classify(spectral_radius_mean),
        classify(spectral_radius_moment),
    ) {
        (StabilityClass::Stable, StabilityClass::Stable) => StabilityClass::Stable,
        (StabilityClass::Unstable, _) | (_, StabilityClass::Unstable) => StabilityClass::Unstable,
        _ => StabilityClass::Marginal,
    };
    Ok(MsStability {
        stable: class == StabilityClass::Stable,
        class,
        spectral_radius_mean,
        spectral_radius_moment,
    })
}

/// Closed-loop dynamics of `X_k = (x_k - Ex_k, Ex_k)`:
/// `X_{k+1} = Ã X_k + C̃ X_k w_k`, with output weight `Q̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedSystem {
    pub a_tilde: Matrix,
    pub c_tilde: Matrix,
    pub q_tilde: Matrix,
    pub sigma2: f64,
}

impl LiftedSystem {
    pub fn closed_loop(sys: &MeanFieldSystem, w: &StageWeights, gains: &GainPair) -> Self {
        let n = sys.n();
        let cl = ClosedLoop::new(sys, gains);
        let total = gains.total();
        let mut a_tilde = Matrix::zeros(2 * n, 2 * n);
        a_tilde.view_mut((0, 0), (n, n)).copy_from(&cl.a_cl);
        a_tilde.view_mut((n, n), (n, n)).copy_from(&cl.a_mean);
        let mut c_tilde = Matrix::zeros(2 * n, 2 * n);
        c_tilde.view_mut((0, 0), (n, n)).copy_from(&cl.c_cl);
        c_tilde.view_mut((0, n), (n, n)).copy_from(&cl.c_mean);
        let mut q_tilde = Matrix::zeros(2 * n, 2 * n);
        q_tilde
            .view_mut((0, 0), (n, n))
            .copy_from(&(&w.q + gains.k.transpose() * &w.r * &gains.k));
        q_tilde
            .view_mut((n, n), (n, n))
            .copy_from(&(w.q_sum() + total.transpose() * w.r_sum() * &total));
        Self {
            a_tilde,
            c_tilde,
            q_tilde,
            sigma2: sys.sigma2,
        }
    }

    /// The `u = 0` lift, with output weight `diag(Q, Q+Q̄)`.
    pub fn open_loop(sys: &MeanFieldSystem, w: &StageWeights) -> Self {
        Self::closed_loop(sys, w, &GainPair::zeros(sys.n(), sys.m()))
    }

    pub fn moment_operator(&self) -> MomentOperator {
        let order = self.a_tilde.nrows();
        MomentOperator {
            matrix: congruence_operator(
                &[(1.0, &self.a_tilde), (self.sigma2, &self.c_tilde)],
                order,
            ),
            order,
        }
    }
}

/// `S ↦ Ã S Ã' + σ² C̃ S C̃'` on symmetric `2n x 2n` matrices, in `svec`
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentOperator {
    pub matrix: Matrix,
    pub order: usize,
}

impl MomentOperator {
    pub fn apply(&self, s: &Matrix) -> Matrix {
        let v = &self.matrix * crate::linalg::svec(s);
        crate::linalg::smat(&v, self.order)
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        spectral_radius(&self.matrix)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Exact observability verified: the certificate needs `P ≻ 0`, `P+P̄ ≻ 0`.
    Observability,
    /// Only exact detectability verified: `P ⪰ 0`, `P+P̄ ⪰ 0` suffices.
    Detectability,
    /// Neither structural assumption holds; the verdict is conditional.
    Unverified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub p: Matrix,
    pub p_bar: Matrix,
    pub min_eig_p: f64,
    pub min_eig_p_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilizationVerdict {
    pub stabilizable: bool,
    /// True when the structural assumption behind the iff was not verified.
    pub conditional: bool,
    pub regime: Regime,
    pub observability: ObservabilityReport,
    pub detectability: DetectabilityReport,
    /// Present when the algebraic equations were solved.
    pub certificate: Option<Certificate>,
    /// Mean-square stability of the synthesized gains.
    pub closed_loop: Option<MsStability>,
    /// Algebraic root pairs that satisfy the certificate's sign condition.
    pub admissible_roots: Vec<(f64, f64)>,
    /// `stabilizable` agrees with the closed-loop stability check.
    pub consistent: bool,
}

fn sign_condition(regime: Regime, min_p: f64, min_sum: f64) -> bool {
    match regime {
        Regime::Observability => min_p >= DEFINITENESS_TOL && min_sum >= DEFINITENESS_TOL,
        Regime::Detectability | Regime::Unverified => {
            min_p >= -DEFINITENESS_TOL && min_sum >= -DEFINITENESS_TOL
        }
    }
}

/// Decides mean-square stabilizability from the algebraic Riccati solution.
///
/// Under exact observability the system is stabilizable iff the equations have
/// a solution with `P ≻ 0` and `P+P̄ ≻ 0`; under exact detectability the
/// semidefinite version applies. Without a converged solution the verdict is
/// negative; scalar root branches, when given, are screened for an admissible
/// pair to back that up. When neither structural assumption holds, a positive
/// verdict additionally requires the synthesized gains to be mean-square
/// stabilizing, and the verdict is flagged conditional.
pub fn stabilization_verdict(
    sys: &MeanFieldSystem,
    cost: &CostSpec,
    are: &AreSolution,
    roots: Option<&[ScalarRootBranch]>,
) -> Result<StabilizationVerdict> {
    let observability = is_exactly_observable(sys, cost)?;
    let detectability = is_exactly_detectable(sys, cost)?;
    let regime = if observability.observable {
        Regime::Observability
    } else if detectability.detectable {
        Regime::Detectability
    } else {
        Regime::Unverified
    };

    let mut admissible_roots = Vec::new();
    for br in roots.unwrap_or(&[]) {
        for &pb in &br.p_bar {
            if sign_condition(regime, br.p, br.p + pb) {
                admissible_roots.push((br.p, pb));
            }
        }
    }

    let (certificate, closed_loop, stabilizable) = if are.converged {
        let min_eig_p = min_symmetric_eigenvalue(&are.p)?;
        let min_eig_p_sum = min_symmetric_eigenvalue(&(&are.p + &are.p_bar))?;
        let closed_loop = match &are.gains {
            Some(g) => Some(is_mean_square_stable(sys, g)?),
            None => None,
        };
        let mut ok = sign_condition(regime, min_eig_p, min_eig_p_sum);
        if regime == Regime::Unverified {
            // no iff available: only a stabilizing synthesized gain counts
            ok &= closed_loop.is_some_and(|c| c.stable);
        }
        let cert = Certificate {
            p: are.p.clone(),
            p_bar: are.p_bar.clone(),
            min_eig_p,
            min_eig_p_sum,
        };
        (Some(cert), closed_loop, ok)
    } else {
        (None, None, false)
    };
    let consistent = match &closed_loop {
        Some(cl) => !stabilizable || cl.stable,
        None => !stabilizable && (roots.is_none() || admissible_roots.is_empty()),
    };
    Ok(StabilizationVerdict {
        stabilizable,
        conditional: regime == Regime::Unverified,
        regime,
        observability,
        detectability,
        certificate,
        closed_loop,
        admissible_roots,
        consistent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infinite::{scalar_are_roots, solve_are, AreOptions};
    use crate::linalg::{is_psd, svec};

    fn stable_example() -> (MeanFieldSystem, CostSpec) {
        (
            MeanFieldSystem::scalar(1.1, 0.2, 0.4, 0.1, 0.9, 0.5, 0.8, 0.2, 1.0),
            CostSpec::infinite(StageWeights::scalar(2.0, 1.0, 1.0, 1.0)),
        )
    }

    fn unstable_example() -> (MeanFieldSystem, CostSpec) {
        (
            MeanFieldSystem::scalar(2.0, 0.8, 0.5, 1.0, 1.0, 1.0, -0.8, 0.6, 1.0),
            CostSpec::infinite(StageWeights::scalar(1.0, 1.0, 1.0, 1.0)),
        )
    }

    fn diag_system(a: &[f64], c: &[f64], sigma2: f64) -> MeanFieldSystem {
        let n = a.len();
        MeanFieldSystem::new(
            Matrix::from_diagonal(&crate::linalg::Vector::from_column_slice(a)),
            Matrix::zeros(n, n),
            Matrix::zeros(n, 1),
            Matrix::zeros(n, 1),
            Matrix::from_diagonal(&crate::linalg::Vector::from_column_slice(c)),
            Matrix::zeros(n, n),
            Matrix::zeros(n, 1),
            Matrix::zeros(n, 1),
            sigma2,
        )
        .unwrap()
    }

    #[test]
    fn positive_weights_are_observable() {
        let (sys, cost) = stable_example();
        let r = is_exactly_observable(&sys, &cost).unwrap();
        assert!(r.observable);
        assert_eq!(r.unobservable_dim, 0);
        assert!(is_exactly_detectable(&sys, &cost).unwrap().detectable);
    }

    #[test]
    fn zero_weights_leave_everything_unobservable() {
        let sys = diag_system(&[0.5, 2.0], &[0.3, 0.1], 1.0);
        let cost = CostSpec::infinite(StageWeights::zeros(2, 1));
        let r = is_exactly_observable(&sys, &cost).unwrap();
        assert!(!r.observable);
        assert_eq!(r.unobservable_dim, r.moment_dim);
        let d = is_exactly_detectable(&sys, &cost).unwrap();
        assert!(!d.detectable);
        assert!(d
            .unstable_unobservable_modes
            .iter()
            .any(|m| m.block == MomentBlock::Mean && (m.modulus() - 2.0).abs() < 1e-12));
    }

    #[test]
    fn zero_weights_with_stable_open_loop_are_detectable() {
        let sys = diag_system(&[0.5, -0.3], &[0.2, 0.1], 1.0);
        let cost = CostSpec::infinite(StageWeights::zeros(2, 1));
        let d = is_exactly_detectable(&sys, &cost).unwrap();
        assert!(d.detectable);
        assert!(d.unstable_unobservable_modes.is_empty());
    }

    #[test]
    fn diffusion_can_reveal_a_hidden_mean() {
        // the mean is invisible to Q+Q̄ but its noise leaks into an observed
        // centered direction
        let mut sys = diag_system(&[0.5, 0.5], &[0.0, 0.0], 1.0);
        sys.a_bar = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        sys.c_bar = Matrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let q = Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let w =
            StageWeights::new(q.clone(), -q, Matrix::identity(1, 1), Matrix::zeros(1, 1)).unwrap();
        let cost = CostSpec::infinite(w);
        let sub = unobservable_subspaces(&sys, &cost.weights);
        assert_eq!(sub.centered.ncols(), 1);
        assert_eq!(sub.mean.ncols(), 1);
        assert!(sub.mean[(0, 0)].abs() < 1e-12);
        let loose = unobservable_subspaces_for(&sys, &cost.weights.q, &cost.weights.q_sum(), false);
        assert_eq!(loose.mean.ncols(), 2);
        assert!(is_exactly_detectable(&sys, &cost).unwrap().detectable);
        let separate = is_separately_detectable(&sys, &cost).unwrap();
        assert!(!separate.detectable);
        assert_eq!(separate.unstable_unobservable_modes.len(), 1);
        assert_eq!(
            separate.unstable_unobservable_modes[0].block,
            MomentBlock::Mean
        );
    }

    #[test]
    fn noiseless_systems_ignore_diffusion() {
        let sys = diag_system(&[0.5, 0.5], &[5.0, 5.0], 0.0);
        let q = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let w = StageWeights::new(
            q.clone(),
            Matrix::zeros(2, 2),
            Matrix::identity(1, 1),
            Matrix::zeros(1, 1),
        )
        .unwrap();
        let sub = unobservable_subspaces(&sys, &w);
        assert_eq!(sub.centered.ncols(), 1);
        assert_eq!(sub.mean.ncols(), 1);
    }

    #[test]
    fn stability_of_zero_dynamics() {
        let sys = diag_system(&[0.0, 0.0], &[0.0, 0.0], 1.0);
        let s = is_mean_square_stable(&sys, &GainPair::zeros(2, 1)).unwrap();
        assert!(s.stable);
        assert_eq!(s.spectral_radius_mean, 0.0);
        assert_eq!(s.spectral_radius_moment, 0.0);
    }

    #[test]
    fn marginal_radius_is_not_stable() {
        let sys = diag_system(&[1.0], &[0.0], 1.0);
        let s = is_mean_square_stable(&sys, &GainPair::zeros(1, 1)).unwrap();
        assert!(!s.stable);
        assert_eq!(s.class, StabilityClass::Marginal);
    }

    #[test]
    fn scalar_moment_radius_has_closed_form() {
        let (sys, _) = stable_example();
        let g = GainPair::scalar(-1.1861, -0.2561);
        let s = is_mean_square_stable(&sys, &g).unwrap();
        let a = 1.1 + 0.4 * -1.1861;
        let c = 0.9 + 0.8 * -1.1861;
        assert!((s.spectral_radius_moment - (a * a + c * c)).abs() < 1e-12);
        assert!(
            (s.spectral_radius_mean - libm::fabs(1.3 + 0.5 * (-1.1861 - 0.2561))).abs() < 1e-12
        );
        assert!(s.stable);
    }

    #[test]
    fn lifted_operator_keeps_psd_and_matches_block_radii() {
        let (sys, cost) = stable_example();
        let g = GainPair::scalar(-1.1861, -0.2561);
        let lifted = LiftedSystem::closed_loop(&sys, &cost.weights, &g);
        assert_eq!(lifted.a_tilde[(1, 0)], 0.0);
        assert_eq!(lifted.c_tilde[(1, 0)], 0.0);
        assert_eq!(lifted.c_tilde[(1, 1)], 0.0);
        let op = lifted.moment_operator();
        let s = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let image = op.apply(&s);
        assert!(is_psd(&image));
        assert_eq!(svec(&image).len(), 3);
        let ms = is_mean_square_stable(&sys, &g).unwrap();
        let rho = op.spectral_radius().unwrap();
        let expect = ms
            .spectral_radius_moment
            .max(ms.spectral_radius_mean * ms.spectral_radius_mean);
        assert!((rho - expect).abs() < 1e-9, "{rho} vs {expect}");
    }

    #[test]
    fn verdicts_on_scalar_examples() {
        let (sys, cost) = stable_example();
        let are = solve_are(&sys, &cost, &AreOptions::default()).unwrap();
        let v = stabilization_verdict(&sys, &cost, &are, None).unwrap();
        assert!(v.stabilizable && v.consistent && !v.conditional);
        assert_eq!(v.regime, Regime::Observability);
        assert!(v.closed_loop.unwrap().stable);

        let (sys, cost) = unstable_example();
        let are = solve_are(&sys, &cost, &AreOptions::default()).unwrap();
        let roots = scalar_are_roots(&sys, &cost.weights).unwrap();
        let v = stabilization_verdict(&sys, &cost, &are, Some(&roots)).unwrap();
        assert!(!v.stabilizable);
        assert!(v.admissible_roots.is_empty());
        assert!(v.consistent);
    }

    #[test]
    fn zero_cost_detectable_system_is_stabilizable_with_zero_certificate() {
        let sys = MeanFieldSystem::scalar(0.5, 0.1, 1.0, 0.0, 0.3, 0.0, 0.0, 0.0, 1.0);
        let cost = CostSpec::infinite(StageWeights::scalar(0.0, 0.0, 1.0, 0.0));
        let are = solve_are(&sys, &cost, &AreOptions::default()).unwrap();
        let v = stabilization_verdict(&sys, &cost, &are, None).unwrap();
        assert_eq!(v.regime, Regime::Detectability);
        assert!(v.stabilizable);
        assert_eq!(v.certificate.unwrap().p[(0, 0)], 0.0);
    }
}
