//! Experiment orchestration for `ccprobe-core`: configuration, file formats,
//! a rayon-backed batch runner and one function per command.

pub mod config;
pub mod experiments;
pub mod formats;

use ccprobe_core::BatchRunner;
use rayon::prelude::*;

pub use config::ExperimentConfig;
pub use experiments::{Check, Lab};

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("trace violates the smoothness budget: max slope {max_slope} > delta {delta}")]
    InfeasibleTrace { delta: f64, max_slope: f64 },
    #[error("transfer needs at least two traces, got {0}")]
    TooFewTraces(usize),
    #[error("controller `learned` needs `learned.checkpoint` in the config")]
    MissingCheckpoint,
}

/// Runs batch jobs on a dedicated rayon pool. Results come back in job
/// order, so output does not depend on the worker count.
pub struct RayonRunner {
    pool: rayon::ThreadPool,
}

impl RayonRunner {
    /// `workers == 0` lets rayon pick one thread per core.
    pub fn new(workers: usize) -> anyhow::Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
        Ok(Self { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl BatchRunner for RayonRunner {
    fn map<T, F>(&self, n: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(job).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ccprobe_core::Sequential;

    #[test]
    fn rayon_matches_sequential_order() {
        let r = RayonRunner::new(3).unwrap();
        let job = |i: usize| i * i + 1;
        assert_eq!(r.map(100, job), Sequential.map(100, job));
    }
}
