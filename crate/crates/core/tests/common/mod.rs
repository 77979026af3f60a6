#![allow(dead_code)]

use mflqr_core::linalg::{Matrix, Vector};
use mflqr_core::{CostSpec, InitialState, MeanFieldSystem, StageWeights};
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal, Uniform};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    Uniform::new(lo, hi).unwrap().sample(rng)
}

pub fn pick(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    Uniform::new_inclusive(lo, hi).unwrap().sample(rng)
}

/// `L L'` with `L` of the given rank.
pub fn psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> Matrix {
    let l = gauss(rng, n, rank, 1.0);
    &l * l.transpose()
}

pub fn pd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    psd(rng, n, n) + Matrix::identity(n, n) * 0.1
}

pub fn random_system(rng: &mut ChaCha8Rng, n: usize, m: usize) -> MeanFieldSystem {
    let sigma2 = uniform(rng, 0.0, 1.5);
    MeanFieldSystem::new(
        gauss(rng, n, n, 0.6),
        gauss(rng, n, n, 0.3),
        gauss(rng, n, m, 0.6),
        gauss(rng, n, m, 0.3),
        gauss(rng, n, n, 0.4),
        gauss(rng, n, n, 0.2),
        gauss(rng, n, m, 0.4),
        gauss(rng, n, m, 0.2),
        sigma2,
    )
    .unwrap()
}

/// Weights with `Q, Q+Q̄ ⪰ 0` (possibly singular) and `R, R+R̄ ≻ 0`; the barred
/// parts may be indefinite.
pub fn random_weights(rng: &mut ChaCha8Rng, n: usize, m: usize) -> StageWeights {
    let rq = pick(rng, 0, n);
    let q = psd(rng, n, rq);
    let rs = pick(rng, 0, n);
    let q_sum = psd(rng, n, rs);
    let r = pd(rng, m);
    let r_sum = pd(rng, m);
    StageWeights::new(q.clone(), &q_sum - &q, r.clone(), &r_sum - &r).unwrap()
}

pub fn random_finite(
    rng: &mut ChaCha8Rng,
    max_n: usize,
    max_m: usize,
    horizon: usize,
) -> (MeanFieldSystem, CostSpec) {
    let n = pick(rng, 1, max_n);
    let m = pick(rng, 1, max_m);
    let sys = random_system(rng, n, m);
    let w = random_weights(rng, n, m);
    let pt = psd(rng, n, n);
    let pt_sum = psd(rng, n, n);
    let cost = CostSpec::finite(w, pt.clone(), &pt_sum - &pt, horizon).unwrap();
    (sys, cost)
}

pub fn random_gaussian(rng: &mut ChaCha8Rng, n: usize) -> InitialState {
    let mean = Vector::from_fn(n, |_, _| StandardNormal.sample(rng));
    InitialState::gaussian(mean, pd(rng, n)).unwrap()
}

/// The three-state, two-input example with its terminal weights.
pub fn finite_example() -> (MeanFieldSystem, CostSpec) {
    let m3 = |v: [f64; 9]| Matrix::from_row_slice(3, 3, &v);
    let m32 = |v: [f64; 6]| Matrix::from_row_slice(3, 2, &v);
    let sys = MeanFieldSystem::new(
        m3([1.1, 0.9, 0.8, 0.0, 0.6, 1.2, 0.4, 0.9, 1.0]),
        m3([0.5, 1.0, 0.9, 0.8, 0.7, 1.2, 1.1, 2.0, 1.9]),
        m32([2.0, 0.3, 1.1, 0.6, 0.9, 1.3]),
        m32([1.2, 0.6, 0.9, 1.0, 0.0, 0.8]),
        m3([0.8, 0.9, 1.5, 1.2, 1.0, 0.8, 0.0, 0.6, 0.4]),
        m3([1.0, 0.0, 0.3, 0.5, 0.6, 0.9, 0.7, 1.2, 0.8]),
        m32([0.5, 0.4, 2.0, 0.9, 1.0, 0.0]),
        m32([2.0, 1.0, 0.5, 0.8, 0.0, 0.5]),
        1.0,
    )
    .unwrap();
    let diag = |v: &[f64]| Matrix::from_diagonal(&Vector::from_column_slice(v));
    let w = StageWeights::new(
        diag(&[0.0, 2.0, 1.0]),
        diag(&[1.0, -1.0, 0.0]),
        diag(&[0.0, 2.0]),
        diag(&[1.0, -2.0]),
    )
    .unwrap();
    let cost = CostSpec::finite(w, diag(&[1.0, 2.0, 0.0]), diag(&[1.0, -1.0, 1.0]), 3).unwrap();
    (sys, cost)
}

pub fn stable_scalar() -> (MeanFieldSystem, StageWeights) {
    (
        MeanFieldSystem::scalar(1.1, 0.2, 0.4, 0.1, 0.9, 0.5, 0.8, 0.2, 1.0),
        StageWeights::scalar(2.0, 1.0, 1.0, 1.0),
    )
}

pub fn unstable_scalar() -> (MeanFieldSystem, StageWeights) {
    (
        MeanFieldSystem::scalar(2.0, 0.8, 0.5, 1.0, 1.0, 1.0, -0.8, 0.6, 1.0),
        StageWeights::scalar(1.0, 1.0, 1.0, 1.0),
    )
}
