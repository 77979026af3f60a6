//! Rayon-backed path executor.

use mflqr_core::simulate::PathState;
use mflqr_core::PathExecutor;
use rayon::prelude::*;

pub const THREADS_ENV: &str = "MFLQR_THREADS";

/// Runs path updates on a dedicated thread pool. Paths own their random
/// streams and reductions happen afterwards in path order, so results do not
/// depend on the thread count.
pub struct Rayon {
    pool: rayon::ThreadPool,
}

impl Rayon {
    pub fn new(threads: Option<usize>) -> Self {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(t) = threads {
            builder = builder.num_threads(t.max(1));
        }
        Self {
            pool: builder.build().expect("thread pool"),
        }
    }

    /// Thread cap from `MFLQR_THREADS`; unset or unparsable means no cap.
    pub fn from_env() -> Self {
        let cap = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok());
        Self::new(cap)
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl PathExecutor for Rayon {
    fn for_each(&self, paths: &mut [PathState], f: &(dyn Fn(&mut PathState) + Sync)) {
        self.pool
            .install(|| paths.par_iter_mut().with_min_len(64).for_each(f));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mflqr_core::{
        simulate, Feedback, GainPair, InitialState, Matrix, MeanFieldSystem, Sequential,
        SimulationConfig, Vector,
    };

    #[test]
    fn matches_sequential_bit_for_bit() {
        let sys = MeanFieldSystem::scalar(1.1, 0.2, 0.4, 0.1, 0.9, 0.5, 0.8, 0.2, 1.0);
        let gains = GainPair::scalar(-1.1861, -0.2561);
        let init = InitialState::gaussian(
            Vector::from_element(1, 1.0),
            Matrix::from_element(1, 1, 2.0),
        )
        .unwrap();
        let cfg = SimulationConfig {
            horizon: 20,
            n_paths: 3000,
            ..Default::default()
        };
        let seq = simulate(&sys, Feedback::Constant(&gains), &init, &cfg, &Sequential).unwrap();
        for t in [1, 3, 8] {
            let par = simulate(
                &sys,
                Feedback::Constant(&gains),
                &init,
                &cfg,
                &Rayon::new(Some(t)),
            )
            .unwrap();
            assert_eq!(seq.msq_path, par.msq_path);
            assert_eq!(seq.mean_path, par.mean_path);
        }
    }
}
