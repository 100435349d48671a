//! Retraining the learned controller on a mix of benign and adversarial traces.
//!
//! Each training draw picks the adversarial list with probability `mix_p` and
//! then a trace uniformly from the chosen list. One draw lasts one episode.
//! The adversarial list is frozen for the whole run.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::adversary::{repeated_stats, BaselineStats, TargetFactory};
use crate::learned::{train_controller_weighted, LearnedPolicy, RewardParams, TraceSampler, TrainConfig, TrainOutcome};
use crate::netsim::{BandwidthTrace, SimConfig};
use crate::{BatchRunner, Error, Result};

/// Default share of adversarial draws.
pub const DEFAULT_MIX_P: f64 = 0.2;

/// The mixing ratios swept when studying `mix_p`.
pub const SWEEP_GRID: [f64; 6] = [0.0, 0.1, 0.2, 0.5, 0.8, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct TracePool {
    pub benign: Vec<BandwidthTrace>,
    pub adversarial: Vec<BandwidthTrace>,
    pub mix_p: f64,
}

impl TracePool {
    pub fn new(benign: Vec<BandwidthTrace>, adversarial: Vec<BandwidthTrace>, mix_p: f64) -> Result<Self> {
        let pool = Self {
            benign,
            adversarial,
            mix_p,
        };
        pool.validate()?;
        Ok(pool)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mix_p) {
            return Err(Error::Config(format!("mix_p must be in [0, 1], got {}", self.mix_p)));
        }
        if self.mix_p < 1.0 && self.benign.is_empty() {
            return Err(Error::Config(String::from("benign traces required when mix_p < 1")));
        }
        if self.mix_p > 0.0 && self.adversarial.is_empty() {
            return Err(Error::Config(String::from(
                "adversarial traces required when mix_p > 0",
            )));
        }
        Ok(())
    }
}

/// Bernoulli(`mix_p`) choice of list, then a uniform pick within it.
pub fn sample_trace<'a>(pool: &'a TracePool, rng: &mut ChaCha8Rng) -> &'a BandwidthTrace {
    // Comparing against a uniform draw keeps p = 0 and p = 1 exact.
    let adversarial = rng.random::<f64>() < pool.mix_p;
    let list = if adversarial { &pool.adversarial } else { &pool.benign };
    &list[rng.random_range(0..list.len())]
}

impl TraceSampler for TracePool {
    fn sample(&self, rng: &mut ChaCha8Rng) -> BandwidthTrace {
        sample_trace(self, rng).clone()
    }
}

/// Continues training `policy` with draws from `pool`; everything else is
/// the plain controller training loop.
///
/// The final pick is validated on `benign_val` and `adversarial_val` mixed
/// with the pool's own ratio, so validation matches what training optimizes.
#[allow(clippy::too_many_arguments)]
pub fn adversarial_retrain<R: BatchRunner>(
    policy: &LearnedPolicy,
    pool: &TracePool,
    benign_val: &[BandwidthTrace],
    adversarial_val: &[BandwidthTrace],
    sim: &SimConfig,
    reward: &RewardParams,
    train: &TrainConfig,
    runner: &R,
) -> Result<TrainOutcome> {
    pool.validate()?;
    let (traces, weights) = mixed_validation(benign_val, adversarial_val, pool.mix_p)?;
    train_controller_weighted(policy, pool, &traces, &weights, sim, reward, train, runner)
}

/// Traces and weights for a `p`-mixed objective; a list with zero total
/// weight is left out.
pub fn mixed_validation(
    benign: &[BandwidthTrace],
    adversarial: &[BandwidthTrace],
    p: f64,
) -> Result<(Vec<BandwidthTrace>, Vec<f64>)> {
    let mut traces = Vec::new();
    let mut weights = Vec::new();
    for (list, share) in [(benign, 1.0 - p), (adversarial, p)] {
        if share > 0.0 {
            if list.is_empty() {
                return Err(Error::Config(format!("validation list with weight {share} is empty")));
            }
            traces.extend(list.iter().cloned());
            weights.extend(core::iter::repeat_n(share / list.len() as f64, list.len()));
        }
    }
    Ok((traces, weights))
}

/// Per-set means for one controller.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRow {
    pub set: String,
    pub stats: BaselineStats,
}

/// Mean utilization and delay of `target` on each named set, `runs_per_trace`
/// repetitions per trace.
pub fn evaluate_suite<R: BatchRunner>(
    target: &TargetFactory<'_>,
    sets: &[(String, Vec<BandwidthTrace>)],
    config: &SimConfig,
    runs_per_trace: usize,
    runner: &R,
) -> Result<Vec<SuiteRow>> {
    if sets.is_empty() {
        return Err(Error::Config(String::from("no trace sets to evaluate")));
    }
    sets.iter()
        .map(|(name, traces)| {
            Ok(SuiteRow {
                set: name.clone(),
                stats: repeated_stats(target, traces, config, runs_per_trace, runner)?,
            })
        })
        .collect()
}
