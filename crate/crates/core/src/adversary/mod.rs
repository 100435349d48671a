//! Closed-loop adversaries against a congestion controller.
//!
//! Two surfaces are supported. The feature surface rescales the minimum RTT
//! the controller reads, `min_rtt * (1 + a * x)`, leaving the path untouched.
//! The environment surface picks the next trace interval's capacity, projected
//! onto a smoothness budget.
//!
//! Rewards are per observation. The naive reward is the negated controller
//! reward. The delay-constrained reward is
//!
//! ```text
//! r_t = -U_t + P_t,   P_t = -alpha  if mean(d[t-H+1..=t]) < tau and mean(d[t-K+1..=t]) < tau
//!                     P_t = 0       otherwise
//! ```
//!
//! with `d_t = RTT_t - RTT_min` in ms. Policies act once per trace interval.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::cc::CcHandle;
use crate::learned::{controller_reward, Feature, Policy, RewardParams, Topology};
use crate::metrics::{delay_stats, utilization};
use crate::netsim::{
    run_episode, BandwidthTrace, EnvDriver, EpisodeLog, Observation, ObservationIntercept, SimConfig, TraceSource,
};
use crate::optim::{Cem, CemConfig};
use crate::tracegen::{gen_random_trace, project_next, SmoothnessBudget};
use crate::{derive_seed, rng_from_seed, BatchRunner, Error, Result};

/// Adversaries share the controller's policy representation.
pub type AdversaryPolicy = Policy;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DelayConstraint {
    /// Queuing-delay threshold in ms.
    pub tau: f64,
    pub alpha: f64,
    pub window_h: usize,
    pub window_k: usize,
}

impl Default for DelayConstraint {
    fn default() -> Self {
        Self {
            tau: 0.0,
            alpha: 1.0,
            window_h: 5,
            window_k: 1,
        }
    }
}

impl DelayConstraint {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0 && self.alpha > 0.0 && self.window_k >= 1 && self.window_k <= self.window_h) {
            return Err(Error::Config(format!(
                "delay constraint needs tau >= 0, alpha > 0, 1 <= K <= H, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PerturbMode {
    Adversarial,
    RandomNoise,
    Clean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct FeatureBound {
    /// Half-width of the multiplier range around 1.
    pub x_fraction: f64,
    pub mode: PerturbMode,
}

impl FeatureBound {
    pub fn validate(&self) -> Result<()> {
        if !(self.x_fraction >= 0.0 && self.x_fraction < 1.0) {
            return Err(Error::Config(format!(
                "x_fraction must be in [0, 1), got {}",
                self.x_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Surface {
    FeatureMinRtt,
    EnvBandwidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RewardMode {
    Naive,
    DelayConstrained,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarySpec {
    pub surface: Surface,
    pub reward_mode: RewardMode,
    pub constraint: DelayConstraint,
    pub feature_bound: Option<FeatureBound>,
    pub budget: Option<SmoothnessBudget>,
    pub policy: AdversaryPolicy,
}

impl AdversarySpec {
    /// Zero-initialized spec for the environment surface.
    pub fn env(budget: SmoothnessBudget, constraint: DelayConstraint, topology: Topology) -> Self {
        let mut features = Feature::CONTROLLER.to_vec();
        features.push(Feature::Capacity);
        Self {
            surface: Surface::EnvBandwidth,
            reward_mode: RewardMode::DelayConstrained,
            constraint,
            feature_bound: None,
            policy: Policy::zeros(features, topology, 1.0, budget.bw_max),
            budget: Some(budget),
        }
    }

    /// Zero-initialized spec for the min-RTT surface.
    pub fn feature(bound: FeatureBound, constraint: DelayConstraint, reward_mode: RewardMode, norm_mbps: f64) -> Self {
        Self {
            surface: Surface::FeatureMinRtt,
            reward_mode,
            constraint,
            feature_bound: Some(bound),
            budget: None,
            policy: Policy::zeros(Feature::CONTROLLER.to_vec(), Topology::Linear, 1.0, norm_mbps),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.constraint.validate()?;
        self.policy.validate()?;
        match self.surface {
            Surface::FeatureMinRtt => self
                .feature_bound
                .ok_or_else(|| Error::Config(String::from("feature surface needs a feature bound")))?
                .validate(),
            Surface::EnvBandwidth => self
                .budget
                .ok_or_else(|| Error::Config(String::from("environment surface needs a smoothness budget")))?
                .validate(),
        }
    }
}

pub fn naive_reward(controller_reward: f64) -> f64 {
    -controller_reward
}

/// `rtt - min_rtt` in ms.
pub fn queuing_delay(obs: &Observation) -> Result<f64> {
    if obs.rtt_ms < obs.min_rtt_ms {
        return Err(Error::Domain(format!(
            "rtt {} ms below min rtt {} ms",
            obs.rtt_ms, obs.min_rtt_ms
        )));
    }
    Ok(obs.rtt_ms - obs.min_rtt_ms)
}

/// `-alpha` when both the H-window and K-window mean delays sit strictly
/// below tau. Returns 0 while fewer than H delays are available.
pub fn delay_penalty(history: &[f64], constraint: &DelayConstraint) -> f64 {
    let (h, k) = (constraint.window_h, constraint.window_k);
    if h == 0 || k == 0 || history.len() < h {
        return 0.0;
    }
    let mean = |w: &[f64]| w.iter().sum::<f64>() / w.len() as f64;
    let local = mean(&history[history.len() - h..]);
    let recent = mean(&history[history.len() - k..]);
    if local < constraint.tau && recent < constraint.tau {
        -constraint.alpha
    } else {
        0.0
    }
}

pub fn env_reward(obs: &Observation, history: &[f64], constraint: &DelayConstraint) -> f64 {
    -obs.utilization + delay_penalty(history, constraint)
}

/// Perceived min RTT under `bound`; `action` is clamped to `[-1, 1]`.
pub fn perturb_min_rtt(true_min_rtt: f64, action: f64, bound: &FeatureBound, rng: &mut ChaCha8Rng) -> f64 {
    let x = bound.x_fraction;
    match bound.mode {
        PerturbMode::Adversarial => true_min_rtt * (1.0 + action.clamp(-1.0, 1.0) * x),
        PerturbMode::RandomNoise => true_min_rtt * rng.random_range(1.0 - x..=1.0 + x),
        PerturbMode::Clean => true_min_rtt,
    }
}

/// Mean per-observation adversarial return of a finished episode, computed
/// from ground-truth observations.
pub fn episode_adv_return(
    observations: &[Observation],
    mode: RewardMode,
    constraint: &DelayConstraint,
    reward: &RewardParams,
) -> Result<f64> {
    if observations.is_empty() {
        return Err(Error::EmptyLog);
    }
    let mut history = Vec::with_capacity(observations.len());
    let mut sum = 0.0;
    for obs in observations {
        sum += match mode {
            RewardMode::Naive => naive_reward(controller_reward(obs, reward)?),
            RewardMode::DelayConstrained => {
                history.push(queuing_delay(obs)?);
                env_reward(obs, &history, constraint)
            }
        };
    }
    Ok(sum / observations.len() as f64)
}

/// Min-RTT perturbation driven by a policy (or noise) once per trace interval.
#[derive(Debug, Clone)]
pub struct FeatureAttack {
    pub policy: AdversaryPolicy,
    pub bound: FeatureBound,
    prev_action: f64,
    rng: ChaCha8Rng,
}

impl FeatureAttack {
    pub fn new(policy: AdversaryPolicy, bound: FeatureBound) -> Self {
        Self {
            policy,
            bound,
            prev_action: 0.0,
            rng: rng_from_seed(0),
        }
    }
}

impl ObservationIntercept for FeatureAttack {
    fn begin(&mut self, seed: u64) {
        self.prev_action = 0.0;
        self.rng = rng_from_seed(derive_seed(seed, 0x6665_6174));
    }

    fn perceived_min_rtt(&mut self, obs: &Observation) -> f64 {
        let a = match self.bound.mode {
            PerturbMode::Adversarial => self.policy.action(obs, self.prev_action),
            _ => 0.0,
        };
        self.prev_action = a;
        perturb_min_rtt(obs.min_rtt_ms, a, &self.bound, &mut self.rng)
    }
}

/// Capacity chosen by a policy: `a` in `[-1, 1]` maps linearly onto the
/// budget range and is then projected onto the smoothness budget.
#[derive(Debug, Clone)]
pub struct EnvAttack {
    pub policy: AdversaryPolicy,
    pub budget: SmoothnessBudget,
    history: Vec<f64>,
    prev_action: f64,
}

impl EnvAttack {
    pub fn new(policy: AdversaryPolicy, budget: SmoothnessBudget) -> Self {
        Self {
            policy,
            budget,
            history: Vec::new(),
            prev_action: 0.0,
        }
    }

    /// Values emitted so far in this episode.
    pub fn history(&self) -> &[f64] {
        &self.history
    }
}

impl EnvDriver for EnvAttack {
    fn begin(&mut self, _seed: u64) {
        self.history.clear();
        self.prev_action = 0.0;
    }

    fn next_capacity(&mut self, obs: &Observation) -> f64 {
        let a = self.policy.action(obs, self.prev_action);
        self.prev_action = a;
        let b = &self.budget;
        let proposed = b.bw_min + (a + 1.0) / 2.0 * (b.bw_max - b.bw_min);
        let v = project_next(&self.history, proposed, b);
        self.history.push(v);
        v
    }

    fn peak_capacity(&self) -> f64 {
        self.budget.bw_max
    }
}

/// Builds a fresh target controller for each episode.
pub type TargetFactory<'a> = dyn Fn() -> Result<CcHandle> + Sync + 'a;

/// Reference conditions for tau and for baseline comparisons.
#[derive(Debug, Clone, PartialEq)]
pub enum Baseline {
    CleanTraces(Vec<BandwidthTrace>),
    RandomBaseline {
        budget: SmoothnessBudget,
        n: usize,
        seed: u64,
    },
}

impl Baseline {
    pub fn traces(&self, config: &SimConfig) -> Result<Vec<BandwidthTrace>> {
        let traces = match self {
            Baseline::CleanTraces(t) => t.clone(),
            Baseline::RandomBaseline { budget, n, seed } => (0..*n)
                .map(|i| {
                    gen_random_trace(
                        config.trace_len(),
                        budget,
                        config.trace_interval,
                        derive_seed(*seed, i as u64),
                    )
                })
                .collect::<Result<_>>()?,
        };
        if traces.is_empty() {
            return Err(Error::Config(String::from("baseline set is empty")));
        }
        Ok(traces)
    }
}

/// Repetitions per baseline trace.
pub const BASELINE_RUNS: usize = 3;

/// Means over every baseline episode.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BaselineStats {
    pub utilization: f64,
    pub mean_delay_ms: f64,
    pub p95_delay_ms: f64,
    pub episodes: usize,
}

/// Utilization, mean and P95 per-ACK delay of one episode.
fn episode_metrics(log: &EpisodeLog) -> Result<(f64, f64, f64)> {
    let u = utilization(log, &log.trace)?;
    let (mean, p95) = delay_stats(log, log.base_rtt).unwrap_or((0.0, 0.0));
    Ok((u, mean, p95))
}

/// Runs the unperturbed target over the baseline set, `BASELINE_RUNS` times each.
pub fn baseline_stats<R: BatchRunner>(
    target: &TargetFactory<'_>,
    baseline: &Baseline,
    config: &SimConfig,
    runner: &R,
) -> Result<BaselineStats> {
    repeated_stats(target, &baseline.traces(config)?, config, BASELINE_RUNS, runner)
}

/// Means over `runs` repetitions of every trace. Repetition `r` uses the
/// seed `derive_seed(config.rng_seed, r)`.
pub fn repeated_stats<R: BatchRunner>(
    target: &TargetFactory<'_>,
    traces: &[BandwidthTrace],
    config: &SimConfig,
    runs: usize,
    runner: &R,
) -> Result<BaselineStats> {
    if traces.is_empty() || runs == 0 {
        return Err(Error::Config(String::from("need at least one trace and one run")));
    }
    let jobs = traces.len() * runs;
    let results = runner.map(jobs, |j| {
        let (t, rep) = (j / runs, j % runs);
        let run_config = SimConfig {
            rng_seed: derive_seed(config.rng_seed, rep as u64),
            record_events: false,
            ..config.clone()
        };
        let mut cc = target()?;
        let log = run_episode(&run_config, TraceSource::Fixed(&traces[t]), &mut cc, None)?;
        episode_metrics(&log)
    });
    let mut acc = (0.0, 0.0, 0.0);
    for r in results {
        let (u, m, p) = r?;
        acc = (acc.0 + u, acc.1 + m, acc.2 + p);
    }
    let n = jobs as f64;
    Ok(BaselineStats {
        utilization: acc.0 / n,
        mean_delay_ms: acc.1 / n,
        p95_delay_ms: acc.2 / n,
        episodes: jobs,
    })
}

/// Mean queuing delay (ms) of the unperturbed target over the baseline.
pub fn calibrate_tau<R: BatchRunner>(
    target: &TargetFactory<'_>,
    baseline: &Baseline,
    config: &SimConfig,
    runner: &R,
) -> Result<f64> {
    Ok(baseline_stats(target, baseline, config, runner)?.mean_delay_ms)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct AdvTrainConfig {
    pub cem: CemConfig,
    /// Rollouts per candidate per generation.
    pub episodes_per_eval: usize,
}

impl Default for AdvTrainConfig {
    fn default() -> Self {
        // Adversary inputs are O(1) and useful policies saturate the action,
        // so start with wider noise than the controller does.
        Self {
            cem: CemConfig {
                init_std: 1.0,
                ..CemConfig::default()
            },
            episodes_per_eval: 1,
        }
    }
}

/// One adversarial rollout as seen by the selector.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// Capacity the target actually saw.
    pub trace: BandwidthTrace,
    /// Controller-visible min RTT per trace interval (feature surface only).
    pub perceived_min_rtt_ms: Vec<f64>,
    pub utilization: f64,
    pub mean_delay_ms: f64,
    pub p95_delay_ms: f64,
    pub adv_return: f64,
}

impl Rollout {
    fn from_log(log: EpisodeLog, adv_return: f64) -> Result<Self> {
        let (utilization, mean_delay_ms, p95_delay_ms) = episode_metrics(&log)?;
        Ok(Self {
            trace: log.trace,
            perceived_min_rtt_ms: log.perceived_min_rtt_ms,
            utilization,
            mean_delay_ms,
            p95_delay_ms,
            adv_return,
        })
    }

    pub fn satisfies(&self, tau: f64) -> bool {
        self.mean_delay_ms >= tau
    }
}

/// The lowest-utilization rollout whose mean delay is at least `tau`.
pub fn select_worst(rollouts: &[Rollout], tau: f64) -> Result<&Rollout> {
    rollouts
        .iter()
        .filter(|r| r.satisfies(tau))
        .min_by(|a, b| a.utilization.total_cmp(&b.utilization))
        .ok_or(Error::NoFeasibleTrace { tau_ms: tau })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdvGenerationStats {
    pub generation: usize,
    pub elite_mean: f64,
    pub best_return: f64,
    /// Share of this generation's rollouts with mean delay at least tau.
    pub constraint_satisfaction_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryOutcome {
    pub policy: AdversaryPolicy,
    pub history: Vec<AdvGenerationStats>,
    /// Lowest-utilization rollout that met the delay constraint, over every
    /// rollout of training and the final evaluation.
    pub worst: Option<Rollout>,
    /// Lowest-utilization rollout regardless of delay.
    pub worst_unconstrained: Option<Rollout>,
    pub rollouts: usize,
}

/// One rollout of `policy` against a fresh target.
///
/// `env_trace` is the environment for the feature surface and ignored for
/// the environment surface.
pub fn rollout(
    spec: &AdversarySpec,
    policy: &AdversaryPolicy,
    target: &TargetFactory<'_>,
    env_trace: Option<&BandwidthTrace>,
    config: &SimConfig,
    reward: &RewardParams,
) -> Result<Rollout> {
    let config = SimConfig {
        record_events: false,
        ..config.clone()
    };
    let mut cc = target()?;
    let log = match spec.surface {
        Surface::EnvBandwidth => {
            let budget = spec
                .budget
                .ok_or_else(|| Error::Config(String::from("environment surface needs a smoothness budget")))?;
            let mut driver = EnvAttack::new(policy.clone(), budget);
            run_episode(&config, TraceSource::Driven(&mut driver), &mut cc, None)?
        }
        Surface::FeatureMinRtt => {
            let bound = spec
                .feature_bound
                .ok_or_else(|| Error::Config(String::from("feature surface needs a feature bound")))?;
            let trace =
                env_trace.ok_or_else(|| Error::Config(String::from("feature surface needs an environment trace")))?;
            let mut attack = FeatureAttack::new(policy.clone(), bound);
            run_episode(&config, TraceSource::Fixed(trace), &mut cc, Some(&mut attack))?
        }
    };
    let ret = episode_adv_return(&log.observations, spec.reward_mode, &spec.constraint, reward)?;
    Rollout::from_log(log, ret)
}

#[derive(Default)]
struct Tracker {
    worst: Option<Rollout>,
    worst_unconstrained: Option<Rollout>,
    count: usize,
}

impl Tracker {
    fn offer(&mut self, r: Rollout, tau: Option<f64>) {
        self.count += 1;
        let lower = |cur: &Option<Rollout>| cur.as_ref().is_none_or(|c| r.utilization < c.utilization);
        if tau.is_none_or(|t| r.satisfies(t)) && lower(&self.worst) {
            self.worst = Some(r.clone());
        }
        if lower(&self.worst_unconstrained) {
            self.worst_unconstrained = Some(r);
        }
    }
}

/// Trains an adversary with the cross-entropy method.
///
/// Every candidate is scored by its mean adversarial return over
/// `episodes_per_eval` rollouts; environment traces for the feature surface
/// cycle through `env_traces`. In delay-constrained mode the selector only
/// keeps rollouts whose mean delay reaches `spec.constraint.tau`; in naive
/// mode nothing is filtered.
pub fn train_adversary<R: BatchRunner>(
    spec: &AdversarySpec,
    target: &TargetFactory<'_>,
    env_traces: &[BandwidthTrace],
    config: &SimConfig,
    reward: &RewardParams,
    train: &AdvTrainConfig,
    runner: &R,
) -> Result<AdversaryOutcome> {
    spec.validate()?;
    config.validate()?;
    if spec.surface == Surface::FeatureMinRtt && env_traces.is_empty() {
        return Err(Error::Config(String::from(
            "feature surface needs at least one environment trace",
        )));
    }
    if train.episodes_per_eval == 0 {
        return Err(Error::Config(String::from("episodes_per_eval must be positive")));
    }
    let tau = match spec.reward_mode {
        RewardMode::DelayConstrained => Some(spec.constraint.tau),
        RewardMode::Naive => None,
    };
    let env_for = |i: usize| env_traces.get(i % env_traces.len().max(1));
    let episodes = train.episodes_per_eval;
    let mut tracker = Tracker::default();
    let mut history = Vec::with_capacity(train.cem.generations);

    let mut cem = Cem::new(spec.policy.params.clone(), train.cem.clone())?;
    for generation in 0..train.cem.generations {
        let candidates = cem.ask();
        let results = runner.map(candidates.len() * episodes, |j| {
            let (c, e) = (j / episodes, j % episodes);
            let run_config = SimConfig {
                rng_seed: derive_seed(config.rng_seed, (generation * episodes + e) as u64),
                ..config.clone()
            };
            let policy = spec.policy.with_params(candidates[c].clone());
            rollout(
                spec,
                &policy,
                target,
                env_for(generation * episodes + e),
                &run_config,
                reward,
            )
        });
        let mut returns = vec![0.0; candidates.len()];
        let mut satisfied = 0usize;
        for (j, r) in results.into_iter().enumerate() {
            let r = r?;
            returns[j / episodes] += r.adv_return / episodes as f64;
            if tau.is_none_or(|t| r.satisfies(t)) {
                satisfied += 1;
            }
            tracker.offer(r, tau);
        }
        let stats = cem.tell(&candidates, &returns)?;
        history.push(AdvGenerationStats {
            generation,
            elite_mean: stats.elite_mean,
            best_return: stats.best_return,
            constraint_satisfaction_rate: satisfied as f64 / (candidates.len() * episodes) as f64,
        });
        if cem.converged() {
            break;
        }
    }

    // Final evaluation: the converged mean and the best candidate, on every
    // environment trace (or one fresh seed for the environment surface).
    let mut contenders = vec![spec.policy.with_params(cem.mean().to_vec())];
    if let Some((params, _)) = cem.best() {
        contenders.push(spec.policy.with_params(params.to_vec()));
    }
    let evals = env_traces.len().max(1);
    let eval_config = SimConfig {
        rng_seed: derive_seed(config.rng_seed, 0x6576_616c),
        ..config.clone()
    };
    let results = runner.map(contenders.len() * evals, |j| {
        let (c, e) = (j / evals, j % evals);
        rollout(spec, &contenders[c], target, env_traces.get(e), &eval_config, reward)
    });
    let mut scores = vec![0.0; contenders.len()];
    for (j, r) in results.into_iter().enumerate() {
        let r = r?;
        scores[j / evals] += r.adv_return / evals as f64;
        tracker.offer(r, tau);
    }
    let pick = if train.cem.generations == 0 || scores.len() < 2 || scores[0] >= scores[1] {
        0
    } else {
        1
    };
    Ok(AdversaryOutcome {
        policy: contenders.swap_remove(pick),
        history,
        worst: tracker.worst,
        worst_unconstrained: tracker.worst_unconstrained,
        rollouts: tracker.count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cc::{Algorithm, CcConfig};
    use crate::{Sequential, MS, SEC};

    fn obs(rtt: f64, min: f64, util: f64) -> Observation {
        Observation {
            time: 0,
            rtt_ms: rtt,
            min_rtt_ms: min,
            throughput_mbps: 0.0,
            loss_mbps: 0.0,
            utilization: util,
            capacity_mbps: 48.0,
            cwnd: 10.0,
        }
    }

    #[test]
    fn queuing_delay_examples() {
        assert_eq!(queuing_delay(&obs(25.0, 20.0, 0.0)).unwrap(), 5.0);
        assert_eq!(queuing_delay(&obs(20.0, 20.0, 0.0)).unwrap(), 0.0);
        assert!(matches!(queuing_delay(&obs(19.0, 20.0, 0.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn penalty_examples() {
        let c = DelayConstraint {
            tau: 10.0,
            ..DelayConstraint::default()
        };
        assert_eq!(delay_penalty(&[2.0, 3.0, 2.0, 3.0, 2.0], &c), -1.0);
        assert_eq!(delay_penalty(&[2.0, 3.0, 2.0, 3.0, 50.0], &c), 0.0);
        assert_eq!(delay_penalty(&[10.0; 5], &c), 0.0);
        assert_eq!(env_reward(&obs(20.0, 20.0, 0.8), &[50.0; 5], &c), -0.8);
        assert_eq!(env_reward(&obs(20.0, 20.0, 0.0), &[0.0; 5], &c), -1.0);
    }

    #[test]
    fn perturbation_examples() {
        let mut rng = rng_from_seed(1);
        let adv = FeatureBound {
            x_fraction: 0.5,
            mode: PerturbMode::Adversarial,
        };
        assert_eq!(perturb_min_rtt(20.0, 1.0, &adv, &mut rng), 30.0);
        assert_eq!(perturb_min_rtt(20.0, 0.0, &adv, &mut rng), 20.0);
        let clean = FeatureBound {
            mode: PerturbMode::Clean,
            ..adv
        };
        assert_eq!(perturb_min_rtt(20.0, 1.0, &clean, &mut rng), 20.0);
        let noise = FeatureBound {
            mode: PerturbMode::RandomNoise,
            ..adv
        };
        for _ in 0..100 {
            let v = perturb_min_rtt(20.0, 1.0, &noise, &mut rng);
            assert!((10.0..=30.0).contains(&v));
        }
    }

    fn short() -> SimConfig {
        SimConfig {
            episode_duration: 5 * SEC,
            buffer_peak_mbps: Some(96.0),
            ..SimConfig::default()
        }
    }

    #[test]
    fn driven_trace_replays_identically() {
        let config = short();
        let budget = SmoothnessBudget::default();
        let mut spec = AdversarySpec::env(budget, DelayConstraint::default(), Topology::Linear);
        spec.policy.params = vec![0.3, -0.2, 0.1, 0.5, 0.9, -2.0, 0.1];
        let target = || CcConfig::default().build(Algorithm::Cubic);
        let r = rollout(&spec, &spec.policy, &target, None, &config, &RewardParams::default()).unwrap();
        assert!(budget.is_feasible(&r.trace.values));
        let mut cc = target().unwrap();
        let log = run_episode(&config, TraceSource::Fixed(&r.trace), &mut cc, None).unwrap();
        assert_eq!(utilization(&log, &log.trace).unwrap(), r.utilization);
    }

    #[test]
    fn zero_generations_keeps_policy() {
        let config = short();
        let spec = AdversarySpec::env(
            SmoothnessBudget::default(),
            DelayConstraint::default(),
            Topology::Linear,
        );
        let target = || CcConfig::default().build(Algorithm::Reno);
        let train = AdvTrainConfig {
            cem: CemConfig {
                generations: 0,
                ..CemConfig::default()
            },
            ..AdvTrainConfig::default()
        };
        let out = train_adversary(
            &spec,
            &target,
            &[],
            &config,
            &RewardParams::default(),
            &train,
            &Sequential,
        )
        .unwrap();
        assert_eq!(out.policy, spec.policy);
        assert!(out.history.is_empty());
    }

    #[test]
    fn tau_is_deterministic() {
        let config = short();
        let target = || CcConfig::default().build(Algorithm::Vegas);
        let base = Baseline::RandomBaseline {
            budget: SmoothnessBudget::default(),
            n: 2,
            seed: 5,
        };
        let a = calibrate_tau(&target, &base, &config, &Sequential).unwrap();
        let b = calibrate_tau(&target, &base, &config, &Sequential).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn selector_enforces_tau() {
        let mk = |u, d| Rollout {
            trace: BandwidthTrace::constant(10.0, 100 * MS, 1),
            perceived_min_rtt_ms: Vec::new(),
            utilization: u,
            mean_delay_ms: d,
            p95_delay_ms: d,
            adv_return: -u,
        };
        let rs = [mk(0.5, 3.0), mk(0.7, 12.0), mk(0.8, 20.0)];
        assert_eq!(select_worst(&rs, 10.0).unwrap().utilization, 0.7);
        assert!(matches!(select_worst(&rs, 30.0), Err(Error::NoFeasibleTrace { .. })));
    }
}
