//! Experiment configuration.
//!
//! One TOML document describes a whole experiment. Every section has
//! defaults, so an empty file is a valid config; unknown keys anywhere are
//! rejected. Times are given in milliseconds (seconds for the episode).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use ccprobe_core::adversary::{AdvTrainConfig, DelayConstraint, FeatureBound, PerturbMode, RewardMode};
use ccprobe_core::cc::{Algorithm, CcConfig};
use ccprobe_core::learned::{RewardParams, Topology, TrainConfig};
use ccprobe_core::netsim::SimConfig;
use ccprobe_core::optim::CemConfig;
use ccprobe_core::tracegen::SmoothnessBudget;
use ccprobe_core::{derive_seed, MS, SEC};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Environment variable naming the directory relative output paths live under.
pub const OUTPUT_ROOT_ENV: &str = "CCPROBE_OUTPUT_ROOT";

/// Seed streams derived from the top-level seed.
pub mod stream {
    pub const RANDOM_BASELINE: u64 = 1;
    pub const BENIGN_POOL: u64 = 2;
    pub const CONTROLLER_CEM: u64 = 3;
    pub const ADVERSARY_CEM: u64 = 4;
    pub const RETRAIN_CEM: u64 = 5;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Repetitions per (controller, trace) pair.
    pub runs: usize,
    pub controllers: Vec<Algorithm>,
    pub sim: SimSection,
    pub cc: CcConfig,
    pub reward: RewardParams,
    pub budget: SmoothnessBudget,
    pub traces: TraceSection,
    pub adversary: AdversarySection,
    pub learned: LearnedSection,
    pub retrain: RetrainSection,
    pub lp_case: LpCaseSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            runs: 3,
            controllers: vec![
                Algorithm::Reno,
                Algorithm::Cubic,
                Algorithm::Vegas,
                Algorithm::Illinois,
                Algorithm::Lp,
                Algorithm::BbrLite,
            ],
            sim: SimSection::default(),
            cc: CcConfig::default(),
            reward: RewardParams::default(),
            budget: SmoothnessBudget::default(),
            traces: TraceSection::default(),
            adversary: AdversarySection::default(),
            learned: LearnedSection::default(),
            retrain: RetrainSection::default(),
            lp_case: LpCaseSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub tick_ms: u64,
    pub one_way_delay_ms: u64,
    pub queue_capacity_bdp: f64,
    pub packet_size: u32,
    pub episode_s: u64,
    pub trace_interval_ms: u64,
    pub monitor_interval_ms: u64,
    pub min_rto_ms: u64,
    pub initial_rto_ms: u64,
    /// Capacity the buffer is sized for; the budget's `bw_max` when absent.
    pub buffer_peak_mbps: Option<f64>,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            tick_ms: d.tick / MS,
            one_way_delay_ms: d.one_way_delay / MS,
            queue_capacity_bdp: d.queue_capacity_bdp,
            packet_size: d.packet_size,
            episode_s: d.episode_duration / SEC,
            trace_interval_ms: d.trace_interval / MS,
            monitor_interval_ms: d.monitor_interval / MS,
            min_rto_ms: d.min_rto / MS,
            initial_rto_ms: d.initial_rto / MS,
            buffer_peak_mbps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceSection {
    /// Native trace files for the clean condition.
    pub clean: Vec<PathBuf>,
    /// Capacity of the constant clean trace used when `clean` is empty.
    pub clean_mbps: f64,
    /// Budget-matched random traces in the random baseline.
    pub random_count: usize,
}

impl Default for TraceSection {
    fn default() -> Self {
        Self {
            clean: Vec::new(),
            clean_mbps: 48.0,
            random_count: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceName {
    Env,
    Feature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdversarySection {
    pub surface: SurfaceName,
    pub reward_mode: RewardMode,
    pub alpha: f64,
    pub window_h: usize,
    pub window_k: usize,
    /// Fixed delay threshold; calibrated from the baseline when absent.
    pub tau_ms: Option<f64>,
    pub x_fraction: f64,
    pub perturb_mode: PerturbMode,
    /// Width of the hidden layer; 0 for a linear policy.
    pub hidden_width: usize,
    pub cem: CemConfig,
    pub episodes_per_eval: usize,
    /// Independent optimizer runs per target; the worst trace over all wins.
    pub restarts: usize,
    /// Controllers to attack; all configured controllers when empty.
    pub targets: Vec<Algorithm>,
}

impl Default for AdversarySection {
    fn default() -> Self {
        let c = DelayConstraint::default();
        let t = AdvTrainConfig::default();
        Self {
            surface: SurfaceName::Env,
            reward_mode: RewardMode::DelayConstrained,
            alpha: c.alpha,
            window_h: c.window_h,
            window_k: c.window_k,
            tau_ms: None,
            x_fraction: 0.5,
            perturb_mode: PerturbMode::Adversarial,
            hidden_width: 0,
            cem: t.cem,
            episodes_per_eval: t.episodes_per_eval,
            restarts: 1,
            targets: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnedSection {
    /// Policy used wherever the `learned` controller appears.
    pub checkpoint: Option<PathBuf>,
    pub hidden_width: usize,
    /// Benign random traces in the training pool.
    pub benign_traces: usize,
    /// The first this many benign traces double as the validation set.
    pub validation_traces: usize,
    pub cem: CemConfig,
    pub episodes_per_eval: usize,
    pub initial_cwnd: f64,
}

impl Default for LearnedSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            checkpoint: None,
            hidden_width: 16,
            benign_traces: 20,
            validation_traces: 5,
            cem: t.cem,
            episodes_per_eval: t.episodes_per_eval,
            initial_cwnd: t.initial_cwnd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrainSection {
    pub mix_p: f64,
    pub cem: CemConfig,
    pub episodes_per_eval: usize,
    pub sweep: Vec<f64>,
}

impl Default for RetrainSection {
    fn default() -> Self {
        Self {
            mix_p: ccprobe_core::advtrain::DEFAULT_MIX_P,
            cem: CemConfig {
                generations: 50,
                ..CemConfig::default()
            },
            episodes_per_eval: 4,
            sweep: ccprobe_core::advtrain::SWEEP_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LpCaseSection {
    /// Loss-only controller run on the same burst trace.
    pub compare: Algorithm,
    pub trough_mbps: Vec<f64>,
    pub peak_mbps: Vec<f64>,
    /// Rise and fall lengths in trace intervals.
    pub rise: Vec<usize>,
    pub fall: Vec<usize>,
}

impl Default for LpCaseSection {
    fn default() -> Self {
        Self {
            compare: Algorithm::Reno,
            trough_mbps: vec![10.0, 20.0],
            peak_mbps: vec![90.0, 60.0],
            rise: vec![10, 5],
            fall: vec![20, 10],
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let config: Self = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.runs == 0 {
            bail!("runs must be at least 1");
        }
        self.sim_config().validate()?;
        self.cc.validate()?;
        self.reward.validate()?;
        self.budget.validate()?;
        self.constraint(0.0).validate()?;
        self.feature_bound().validate()?;
        self.adversary.cem.validate()?;
        self.learned.cem.validate()?;
        self.retrain.cem.validate()?;
        if self.traces.random_count == 0 {
            bail!("traces.random_count must be at least 1");
        }
        if !(self.traces.clean_mbps > 0.0) {
            bail!("traces.clean_mbps must be positive");
        }
        if self.learned.benign_traces == 0 || self.learned.validation_traces == 0 {
            bail!("learned.benign_traces and learned.validation_traces must be positive");
        }
        if self.learned.validation_traces > self.learned.benign_traces {
            bail!("learned.validation_traces cannot exceed learned.benign_traces");
        }
        if self.learned.episodes_per_eval == 0
            || self.retrain.episodes_per_eval == 0
            || self.adversary.episodes_per_eval == 0
        {
            bail!("episodes_per_eval must be positive");
        }
        if self.adversary.restarts == 0 {
            bail!("adversary.restarts must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.retrain.mix_p) || self.retrain.sweep.iter().any(|p| !(0.0..=1.0).contains(p)) {
            bail!("mixing ratios must lie in [0, 1]");
        }
        let lp = &self.lp_case;
        if lp.trough_mbps.is_empty() || lp.peak_mbps.is_empty() || lp.rise.is_empty() || lp.fall.is_empty() {
            bail!("lp_case grids must be non-empty");
        }
        Ok(())
    }

    /// Resolved simulator settings.
    pub fn sim_config(&self) -> SimConfig {
        let s = &self.sim;
        SimConfig {
            tick: s.tick_ms * MS,
            one_way_delay: s.one_way_delay_ms * MS,
            queue_capacity_bdp: s.queue_capacity_bdp,
            packet_size: s.packet_size,
            episode_duration: s.episode_s * SEC,
            trace_interval: s.trace_interval_ms * MS,
            monitor_interval: s.monitor_interval_ms * MS,
            rng_seed: self.seed,
            record_events: false,
            min_rto: s.min_rto_ms * MS,
            initial_rto: s.initial_rto_ms * MS,
            buffer_peak_mbps: Some(s.buffer_peak_mbps.unwrap_or(self.budget.bw_max)),
        }
    }

    pub fn stream_seed(&self, stream: u64) -> u64 {
        derive_seed(self.seed, stream)
    }

    pub fn constraint(&self, tau: f64) -> DelayConstraint {
        DelayConstraint {
            tau,
            alpha: self.adversary.alpha,
            window_h: self.adversary.window_h,
            window_k: self.adversary.window_k,
        }
    }

    pub fn feature_bound(&self) -> FeatureBound {
        FeatureBound {
            x_fraction: self.adversary.x_fraction,
            mode: self.adversary.perturb_mode,
        }
    }

    pub fn adversary_topology(&self) -> Topology {
        match self.adversary.hidden_width {
            0 => Topology::Linear,
            width => Topology::Hidden { width },
        }
    }

    pub fn controller_topology(&self) -> Topology {
        match self.learned.hidden_width {
            0 => Topology::Linear,
            width => Topology::Hidden { width },
        }
    }

    pub fn adversary_train(&self, target_index: usize, restart: usize) -> AdvTrainConfig {
        let per_target = derive_seed(self.stream_seed(stream::ADVERSARY_CEM), target_index as u64);
        AdvTrainConfig {
            cem: CemConfig {
                seed: derive_seed(per_target, restart as u64),
                ..self.adversary.cem.clone()
            },
            episodes_per_eval: self.adversary.episodes_per_eval,
        }
    }

    pub fn controller_train(&self) -> TrainConfig {
        TrainConfig {
            cem: CemConfig {
                seed: self.stream_seed(stream::CONTROLLER_CEM),
                ..self.learned.cem.clone()
            },
            episodes_per_eval: self.learned.episodes_per_eval,
            initial_cwnd: self.learned.initial_cwnd,
        }
    }

    pub fn retrain_train(&self) -> TrainConfig {
        TrainConfig {
            cem: CemConfig {
                seed: self.stream_seed(stream::RETRAIN_CEM),
                ..self.retrain.cem.clone()
            },
            episodes_per_eval: self.retrain.episodes_per_eval,
            initial_cwnd: self.learned.initial_cwnd,
        }
    }

    /// Controllers to attack.
    pub fn targets(&self) -> Vec<Algorithm> {
        if self.adversary.targets.is_empty() {
            self.controllers.clone()
        } else {
            self.adversary.targets.clone()
        }
    }

    /// SHA-256 over the canonical serialization of the resolved config.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).unwrap_or_default();
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Output directory, with relative paths placed under the output root.
    pub fn output_path(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output_dir.is_relative() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }
}
