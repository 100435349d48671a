//! A small parametric congestion controller and its training loop.
//!
//! Once per monitoring interval the policy maps normalized observation
//! features to an action `a` in `[-a_max, a_max]` and the window becomes
//! `max(1, cwnd * 2^a)`. Training maximizes the mean per-interval reward
//!
//! ```text
//! R = (T - lambda * L) / B_max * D,   D = gamma * RTT_min / RTT  if gamma * RTT_min < RTT
//!                                     D = 1                      otherwise
//! ```
//!
//! with the cross-entropy method from [`crate::optim`].

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand_chacha::ChaCha8Rng;

use crate::cc::{clamp_cwnd, AckInfo, CongestionControl, CwndDecision, LossKind, Phase};
use crate::netsim::{run_episode, BandwidthTrace, Observation, SimConfig, TraceSource};
use crate::optim::{Cem, CemConfig, GenerationStats};
use crate::{derive_seed, rng_from_seed, BatchRunner, Error, Micros, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct RewardParams {
    pub lambda: f64,
    pub gamma: f64,
    /// Normalizing bandwidth in Mbps.
    pub b_max: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            gamma: 1.2,
            b_max: 96.0,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.gamma >= 1.0 && self.b_max > 0.0) {
            return Err(Error::Config(format!(
                "reward needs lambda >= 0, gamma >= 1, b_max > 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Delay discount: `gamma * min_rtt / rtt` once the RTT exceeds the margin, else 1.
pub fn delay_factor(rtt: f64, min_rtt: f64, gamma: f64) -> f64 {
    if gamma * min_rtt < rtt {
        gamma * min_rtt / rtt
    } else {
        1.0
    }
}

/// Per-interval controller reward.
pub fn controller_reward(obs: &Observation, params: &RewardParams) -> Result<f64> {
    if !(obs.min_rtt_ms > 0.0) {
        return Err(Error::Domain(format!(
            "min_rtt must be positive, got {}",
            obs.min_rtt_ms
        )));
    }
    let d = delay_factor(obs.rtt_ms, obs.min_rtt_ms, params.gamma);
    Ok((obs.throughput_mbps - params.lambda * obs.loss_mbps) / params.b_max * d)
}

/// Mean per-interval reward of an episode.
pub fn mean_reward(observations: &[Observation], params: &RewardParams) -> Result<f64> {
    if observations.is_empty() {
        return Err(Error::EmptyLog);
    }
    let mut sum = 0.0;
    for obs in observations {
        sum += controller_reward(obs, params)?;
    }
    Ok(sum / observations.len() as f64)
}

/// Normalized inputs a policy can read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Feature {
    /// Smoothed RTT over min RTT.
    RttRatio,
    /// Acknowledged throughput over the normalizing bandwidth.
    Throughput,
    /// Loss rate over the normalizing bandwidth.
    Loss,
    /// Smoothed RTT minus min RTT, in units of 100 ms.
    QueuingDelay,
    /// The policy's previous action over its bound.
    PrevAction,
    /// Link capacity over the normalizing bandwidth.
    Capacity,
}

impl Feature {
    pub const CONTROLLER: [Feature; 5] = [
        Feature::RttRatio,
        Feature::Throughput,
        Feature::Loss,
        Feature::QueuingDelay,
        Feature::PrevAction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::RttRatio => "rtt_ratio",
            Feature::Throughput => "throughput",
            Feature::Loss => "loss",
            Feature::QueuingDelay => "queuing_delay",
            Feature::PrevAction => "prev_action",
            Feature::Capacity => "capacity",
        }
    }

    fn value(self, obs: &Observation, prev_action: f64, action_bound: f64, norm_mbps: f64) -> f64 {
        let v = match self {
            Feature::RttRatio => {
                if obs.min_rtt_ms > 0.0 {
                    obs.rtt_ms / obs.min_rtt_ms
                } else {
                    1.0
                }
            }
            Feature::Throughput => obs.throughput_mbps / norm_mbps,
            Feature::Loss => obs.loss_mbps / norm_mbps,
            Feature::QueuingDelay => (obs.rtt_ms - obs.min_rtt_ms) / 100.0,
            Feature::PrevAction => prev_action / action_bound,
            Feature::Capacity => obs.capacity_mbps / norm_mbps,
        };
        if v.is_finite() {
            v.clamp(-10.0, 10.0)
        } else {
            0.0
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "rtt_ratio" => Feature::RttRatio,
            "throughput" => Feature::Throughput,
            "loss" => Feature::Loss,
            "queuing_delay" => Feature::QueuingDelay,
            "prev_action" => Feature::PrevAction,
            "capacity" => Feature::Capacity,
            other => return Err(Error::Config(format!("unknown feature `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Topology {
    /// `z = w . x + b`
    Linear,
    /// `z = v . tanh(W x + b) + c`
    Hidden { width: usize },
}

impl Topology {
    pub fn param_len(self, inputs: usize) -> usize {
        match self {
            Topology::Linear => inputs + 1,
            Topology::Hidden { width } => width * (inputs + 1) + width + 1,
        }
    }
}

/// Feature list, topology and weights of a bounded-action policy. Shared by
/// the learned controller and the adversaries.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Policy {
    pub features: Vec<Feature>,
    pub topology: Topology,
    pub action_bound: f64,
    /// Bandwidth (Mbps) that rate features are divided by.
    pub norm_mbps: f64,
    pub params: Vec<f64>,
}

pub type LearnedPolicy = Policy;

impl Policy {
    /// All-zero policy, which always emits action 0.
    pub fn zeros(features: Vec<Feature>, topology: Topology, action_bound: f64, norm_mbps: f64) -> Self {
        let params = vec![0.0; topology.param_len(features.len())];
        Self {
            features,
            topology,
            action_bound,
            norm_mbps,
            params,
        }
    }

    /// Controller policy over the standard features with `a_max = 2` and one
    /// hidden layer of width 16.
    pub fn controller(norm_mbps: f64) -> Self {
        Self::zeros(
            Feature::CONTROLLER.to_vec(),
            Topology::Hidden { width: 16 },
            2.0,
            norm_mbps,
        )
    }

    /// Like [`Policy::controller`] with a linear head only.
    pub fn linear_controller(norm_mbps: f64) -> Self {
        Self::zeros(Feature::CONTROLLER.to_vec(), Topology::Linear, 2.0, norm_mbps)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Config(String::from("policy needs at least one feature")));
        }
        if !(self.action_bound > 0.0 && self.action_bound.is_finite()) {
            return Err(Error::Config(format!(
                "action bound must be positive, got {}",
                self.action_bound
            )));
        }
        if !(self.norm_mbps > 0.0) {
            return Err(Error::Config(format!(
                "norm_mbps must be positive, got {}",
                self.norm_mbps
            )));
        }
        if let Topology::Hidden { width: 0 } = self.topology {
            return Err(Error::Config(String::from("hidden layer width must be positive")));
        }
        let want = self.topology.param_len(self.features.len());
        if self.params.len() != want {
            return Err(Error::Config(format!(
                "policy has {} parameters, topology needs {want}",
                self.params.len()
            )));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config(String::from("policy parameters must be finite")));
        }
        Ok(())
    }

    pub fn with_params(&self, params: Vec<f64>) -> Self {
        Self { params, ..self.clone() }
    }

    pub fn feature_vector(&self, obs: &Observation, prev_action: f64) -> Vec<f64> {
        self.features
            .iter()
            .map(|f| f.value(obs, prev_action, self.action_bound, self.norm_mbps))
            .collect()
    }

    /// Pre-squash output for an input vector.
    pub fn raw_output(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let p = &self.params;
        match self.topology {
            Topology::Linear => p[..n].iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + p[n],
            Topology::Hidden { width } => {
                let (w, rest) = p.split_at(width * n);
                let (b, rest) = rest.split_at(width);
                let (v, c) = rest.split_at(width);
                let mut z = c[0];
                for j in 0..width {
                    let pre = w[j * n..(j + 1) * n].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b[j];
                    z += v[j] * libm::tanh(pre);
                }
                z
            }
        }
    }

    /// Bounded action for an input vector; never leaves `[-a_max, a_max]`.
    pub fn action_from(&self, x: &[f64]) -> f64 {
        let a = self.action_bound * libm::tanh(self.raw_output(x));
        if a.is_nan() {
            0.0
        } else {
            a.clamp(-self.action_bound, self.action_bound)
        }
    }

    pub fn action(&self, obs: &Observation, prev_action: f64) -> f64 {
        self.action_from(&self.feature_vector(obs, prev_action))
    }
}

/// Window multiplier `2^a` chosen by the policy.
pub fn act(policy: &Policy, obs: &Observation, prev_action: f64) -> f64 {
    libm::exp2(policy.action(obs, prev_action))
}

/// The learned controller: no per-ACK logic, one multiplicative step per
/// monitoring interval.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedController {
    pub policy: Policy,
    pub cwnd: f64,
    pub prev_action: f64,
}

impl LearnedController {
    pub fn new(policy: Policy, initial_cwnd: f64) -> Self {
        Self {
            policy,
            cwnd: clamp_cwnd(initial_cwnd),
            prev_action: 0.0,
        }
    }
}

impl CongestionControl for LearnedController {
    fn on_ack(&mut self, _ack: &AckInfo) -> CwndDecision {
        self.decision()
    }

    fn on_loss(&mut self, kind: LossKind, _now: Micros) -> CwndDecision {
        if kind == LossKind::Timeout {
            self.cwnd = 1.0;
        }
        self.decision()
    }

    fn on_interval(&mut self, obs: &Observation) -> CwndDecision {
        let a = self.policy.action(obs, self.prev_action);
        self.prev_action = a;
        self.cwnd = clamp_cwnd(self.cwnd * libm::exp2(a));
        self.decision()
    }

    fn cwnd(&self) -> f64 {
        self.cwnd
    }

    fn phase(&self) -> Phase {
        Phase::CongestionAvoidance
    }

    fn ssthresh(&self) -> f64 {
        f64::INFINITY
    }
}

/// Source of training traces.
pub trait TraceSampler {
    fn sample(&self, rng: &mut ChaCha8Rng) -> BandwidthTrace;
}

/// Uniform choice from a fixed list.
impl TraceSampler for [BandwidthTrace] {
    fn sample(&self, rng: &mut ChaCha8Rng) -> BandwidthTrace {
        use rand::Rng;
        self[rng.random_range(0..self.len())].clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub cem: CemConfig,
    /// Traces each candidate is scored on per generation.
    pub episodes_per_eval: usize,
    pub initial_cwnd: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            cem: CemConfig::default(),
            episodes_per_eval: 2,
            initial_cwnd: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub policy: Policy,
    pub history: Vec<GenerationStats>,
    /// Mean validation return before and after training.
    pub initial_return: f64,
    pub final_return: f64,
    /// The optimizer's mean after the last generation, whether or not it won.
    pub final_mean: Policy,
}

/// Mean episodic return of `policy` over `traces`.
pub fn evaluate_policy<R: BatchRunner>(
    policy: &Policy,
    traces: &[BandwidthTrace],
    sim: &SimConfig,
    reward: &RewardParams,
    initial_cwnd: f64,
    runner: &R,
) -> Result<f64> {
    let weights = vec![1.0 / traces.len().max(1) as f64; traces.len()];
    evaluate_weighted(policy, traces, &weights, sim, reward, initial_cwnd, runner)
}

/// Weighted sum of episodic returns; `weights[i]` belongs to `traces[i]`.
pub fn evaluate_weighted<R: BatchRunner>(
    policy: &Policy,
    traces: &[BandwidthTrace],
    weights: &[f64],
    sim: &SimConfig,
    reward: &RewardParams,
    initial_cwnd: f64,
    runner: &R,
) -> Result<f64> {
    if traces.is_empty() || traces.len() != weights.len() {
        return Err(Error::Config(format!(
            "need matching non-empty traces and weights, got {} and {}",
            traces.len(),
            weights.len()
        )));
    }
    let returns = runner.map(traces.len(), |i| {
        episode_return(
            policy,
            &traces[i],
            sim,
            reward,
            initial_cwnd,
            derive_seed(sim.rng_seed, i as u64),
        )
    });
    let mut sum = 0.0;
    for (r, w) in returns.into_iter().zip(weights) {
        sum += r? * w;
    }
    Ok(sum)
}

fn episode_return(
    policy: &Policy,
    trace: &BandwidthTrace,
    sim: &SimConfig,
    reward: &RewardParams,
    initial_cwnd: f64,
    seed: u64,
) -> Result<f64> {
    let config = SimConfig {
        rng_seed: seed,
        record_events: false,
        ..sim.clone()
    };
    let mut cc = crate::cc::CcHandle::Learned(LearnedController::new(policy.clone(), initial_cwnd));
    let log = run_episode(&config, TraceSource::Fixed(trace), &mut cc, None)?;
    mean_reward(&log.observations, reward)
}

/// Trains `policy` with the cross-entropy method.
///
/// Every generation draws `episodes_per_eval` traces from `sampler`; all
/// candidates are scored on the same draws. The returned policy is the best
/// of the initial policy, the final mean and the best candidate seen, judged
/// on `validation`, so it never scores below the starting point there.
pub fn train_controller<S: TraceSampler + ?Sized, R: BatchRunner>(
    policy: &Policy,
    sampler: &S,
    validation: &[BandwidthTrace],
    sim: &SimConfig,
    reward: &RewardParams,
    train: &TrainConfig,
    runner: &R,
) -> Result<TrainOutcome> {
    let weights = vec![1.0 / validation.len().max(1) as f64; validation.len()];
    train_controller_weighted(policy, sampler, validation, &weights, sim, reward, train, runner)
}

/// [`train_controller`] with a weighted validation objective.
#[allow(clippy::too_many_arguments)]
pub fn train_controller_weighted<S: TraceSampler + ?Sized, R: BatchRunner>(
    policy: &Policy,
    sampler: &S,
    validation: &[BandwidthTrace],
    weights: &[f64],
    sim: &SimConfig,
    reward: &RewardParams,
    train: &TrainConfig,
    runner: &R,
) -> Result<TrainOutcome> {
    policy.validate()?;
    reward.validate()?;
    sim.validate()?;
    let initial_return = evaluate_weighted(policy, validation, weights, sim, reward, train.initial_cwnd, runner)?;
    if train.cem.generations == 0 {
        return Ok(TrainOutcome {
            policy: policy.clone(),
            history: Vec::new(),
            initial_return,
            final_return: initial_return,
            final_mean: policy.clone(),
        });
    }
    if train.episodes_per_eval == 0 {
        return Err(Error::Config(String::from("episodes_per_eval must be positive")));
    }

    let mut cem = Cem::new(policy.params.clone(), train.cem.clone())?;
    let mut rng = rng_from_seed(derive_seed(train.cem.seed, 0x0074_7261_696e));
    let mut history = Vec::with_capacity(train.cem.generations);
    for generation in 0..train.cem.generations {
        let traces: Vec<BandwidthTrace> = (0..train.episodes_per_eval).map(|_| sampler.sample(&mut rng)).collect();
        let candidates = cem.ask();
        let gen_sim = SimConfig {
            rng_seed: derive_seed(sim.rng_seed, generation as u64),
            ..sim.clone()
        };
        let jobs = candidates.len() * traces.len();
        let results = runner.map(jobs, |j| {
            let (c, t) = (j / traces.len(), j % traces.len());
            let candidate = policy.with_params(candidates[c].clone());
            episode_return(
                &candidate,
                &traces[t],
                &gen_sim,
                reward,
                train.initial_cwnd,
                gen_sim.rng_seed,
            )
        });
        let mut returns = vec![0.0; candidates.len()];
        for (j, r) in results.into_iter().enumerate() {
            returns[j / traces.len()] += r? / traces.len() as f64;
        }
        history.push(cem.tell(&candidates, &returns)?);
        if cem.converged() {
            break;
        }
    }

    let mut best = (policy.clone(), initial_return);
    let mut contenders = vec![policy.with_params(cem.mean().to_vec())];
    if let Some((params, _)) = cem.best() {
        contenders.push(policy.with_params(params.to_vec()));
    }
    for candidate in contenders {
        let r = evaluate_weighted(&candidate, validation, weights, sim, reward, train.initial_cwnd, runner)?;
        if r > best.1 {
            best = (candidate, r);
        }
    }
    Ok(TrainOutcome {
        policy: best.0,
        history,
        initial_return,
        final_return: best.1,
        final_mean: policy.with_params(cem.mean().to_vec()),
    })
}
