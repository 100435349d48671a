//! One function per command. Every command writes its CSV and JSON outputs
//! under the lab's output directory and returns the invariant checks it ran.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use ccprobe_core::adversary::{
    calibrate_tau, rollout, train_adversary, AdversaryOutcome, AdversarySpec, Baseline, RewardMode, Rollout,
};
use ccprobe_core::advtrain::{adversarial_retrain, TracePool};
use ccprobe_core::cc::{Algorithm, CcHandle};
use ccprobe_core::learned::{train_controller, Feature, LearnedController, Policy};
use ccprobe_core::metrics::EpisodeReport;
use ccprobe_core::netsim::{run_episode, BandwidthTrace, EpisodeLog, EventKind, SimConfig, TraceSource};
use ccprobe_core::optim::GenerationStats;
use ccprobe_core::tracegen::{gen_random_trace, gen_triangle_burst};
use ccprobe_core::{derive_seed, BatchRunner, MS};
use serde::Serialize;

use crate::config::{stream, ExperimentConfig, SurfaceName};
use crate::formats::{self, provenance};
use crate::{LabError, RayonRunner};

/// Outcome of one invariant check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

type Factory = Box<dyn Fn() -> ccprobe_core::Result<CcHandle> + Sync>;

/// Shared state of a command invocation.
pub struct Lab<'a> {
    pub config: ExperimentConfig,
    pub runner: &'a RayonRunner,
    pub out: PathBuf,
    pub dump_series: bool,
    hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub model: String,
    pub setting: String,
    pub utilization: f64,
    pub delay_ms: f64,
    pub p95_ms: f64,
    pub episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeRow {
    pub model: String,
    pub setting: String,
    pub trace: usize,
    pub run: usize,
    pub utilization: f64,
    pub mean_delay_ms: f64,
    pub p95_delay_ms: f64,
    pub mean_reward: f64,
    pub smoothness_linear: f64,
    pub smoothness_log: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BaselineOutput {
    pub rows: Vec<SummaryRow>,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackRow {
    pub model: String,
    pub surface: String,
    pub reward_mode: String,
    pub tau_ms: f64,
    pub baseline_utilization: f64,
    pub baseline_delay_ms: f64,
    pub baseline_p95_ms: f64,
    pub attack_utilization: f64,
    pub attack_delay_ms: f64,
    pub attack_p95_ms: f64,
    pub delta_utilization: f64,
    pub delta_delay_ms: f64,
    /// Rollout of the final policy from the restart that found the selected trace.
    pub policy_utilization: f64,
    pub policy_delay_ms: f64,
    pub constraint_met: bool,
    pub rollouts: usize,
}

/// One optimizer run against one target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartRow {
    pub model: String,
    pub restart: usize,
    pub policy_utilization: f64,
    pub policy_delay_ms: f64,
    /// Absent when no rollout met the delay constraint.
    pub worst_utilization: Option<f64>,
    pub worst_delay_ms: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttackOutput {
    pub rows: Vec<AttackRow>,
    pub restarts: Vec<RestartRow>,
    /// Selected trace per target (environment surface only).
    #[serde(skip)]
    pub traces: Vec<(Algorithm, BandwidthTrace)>,
    /// Every restart's selected trace per target.
    #[serde(skip)]
    pub restart_traces: Vec<(Algorithm, Vec<BandwidthTrace>)>,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferCell {
    pub trace: String,
    pub model: String,
    pub utilization: f64,
    pub delay_ms: f64,
    pub p95_ms: f64,
    /// Lowest utilization in this model's column.
    pub column_min: bool,
    /// Trace was generated against this model.
    pub diagonal: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransferOutput {
    pub cells: Vec<TransferCell>,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpCaseRow {
    pub model: String,
    pub trough_mbps: f64,
    pub peak_mbps: f64,
    pub rise: usize,
    pub fall: usize,
    pub utilization: f64,
    pub mean_delay_ms: f64,
    pub early_backoffs: usize,
    pub loss_backoffs: usize,
    pub drops: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LpCaseOutput {
    pub rows: Vec<LpCaseRow>,
    /// Threshold crossings found by replaying the logged one-way delays.
    pub oracle_crossings: usize,
    #[serde(skip)]
    pub burst: Option<BandwidthTrace>,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainOutput {
    #[serde(skip)]
    pub policy: Policy,
    pub checkpoint: PathBuf,
    pub initial_return: f64,
    pub final_return: f64,
    pub random_baseline: SummaryRow,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrainRow {
    pub mix_p: f64,
    pub policy: String,
    pub set: String,
    pub utilization: f64,
    pub delay_ms: f64,
    pub p95_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RetrainOutput {
    pub rows: Vec<RetrainRow>,
    pub checkpoint: PathBuf,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub mix_p: f64,
    pub random_utilization: f64,
    pub random_delay_ms: f64,
    pub adversarial_utilization: f64,
    pub adversarial_delay_ms: f64,
    pub validation_return: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepOutput {
    pub initial: Vec<RetrainRow>,
    pub rows: Vec<SweepRow>,
    pub checks: Vec<Check>,
}

/// How `gen-trace` builds its values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceKind {
    Random {
        seed: u64,
    },
    Burst {
        trough: f64,
        peak: f64,
        rise: usize,
        fall: usize,
    },
    Constant {
        mbps: f64,
    },
    Alternating,
    Uniform {
        seed: u64,
    },
}

fn mode_name(mode: RewardMode) -> &'static str {
    match mode {
        RewardMode::Naive => "naive",
        RewardMode::DelayConstrained => "delay_constrained",
    }
}

fn p_label(p: f64) -> String {
    format!("p{p}")
}

impl<'a> Lab<'a> {
    pub fn new(config: ExperimentConfig, runner: &'a RayonRunner) -> anyhow::Result<Self> {
        config.validate()?;
        let out = config.output_path();
        let hash = config.hash();
        Ok(Self {
            config,
            runner,
            out,
            dump_series: false,
            hash,
        })
    }

    pub fn with_output(mut self, out: PathBuf) -> Self {
        self.out = out;
        self
    }

    pub fn provenance(&self) -> String {
        provenance(&self.hash, self.config.seed)
    }

    pub fn sim(&self) -> SimConfig {
        self.config.sim_config()
    }

    fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.out.join(rel)
    }

    fn write_csv<T: Serialize>(&self, rel: impl AsRef<Path>, rows: &[T]) -> anyhow::Result<()> {
        formats::write_csv(&self.path(rel), rows, &self.provenance())
    }

    pub fn learned_policy(&self) -> anyhow::Result<Policy> {
        let path = self
            .config
            .learned
            .checkpoint
            .as_ref()
            .ok_or(LabError::MissingCheckpoint)?;
        formats::read_checkpoint(path)
    }

    fn factory(&self, alg: Algorithm) -> anyhow::Result<Factory> {
        match alg {
            Algorithm::Learned => Ok(policy_factory(self.learned_policy()?, self.config.learned.initial_cwnd)),
            other => {
                let cc = self.config.cc.clone();
                cc.build(other)?;
                Ok(Box::new(move || cc.build(other)))
            }
        }
    }

    pub fn clean_traces(&self) -> anyhow::Result<Vec<BandwidthTrace>> {
        let sim = self.sim();
        if self.config.traces.clean.is_empty() {
            return Ok(vec![BandwidthTrace::constant(
                self.config.traces.clean_mbps,
                sim.trace_interval,
                sim.trace_len(),
            )]);
        }
        self.config
            .traces
            .clean
            .iter()
            .map(|p| formats::read_trace(p))
            .collect()
    }

    pub fn random_baseline(&self) -> Baseline {
        Baseline::RandomBaseline {
            budget: self.config.budget,
            n: self.config.traces.random_count,
            seed: self.config.stream_seed(stream::RANDOM_BASELINE),
        }
    }

    pub fn random_traces(&self) -> anyhow::Result<Vec<BandwidthTrace>> {
        Ok(self.random_baseline().traces(&self.sim())?)
    }

    /// Benign training pool; its first `validation_traces` entries validate.
    pub fn benign_pool(&self) -> anyhow::Result<Vec<BandwidthTrace>> {
        let sim = self.sim();
        let base = self.config.stream_seed(stream::BENIGN_POOL);
        (0..self.config.learned.benign_traces)
            .map(|i| {
                gen_random_trace(
                    sim.trace_len(),
                    &self.config.budget,
                    sim.trace_interval,
                    derive_seed(base, i as u64),
                )
                .map_err(Into::into)
            })
            .collect()
    }

    /// Every (trace, run) episode of one controller. Run `r` uses the seed
    /// `derive_seed(sim.rng_seed, r)`.
    fn episodes(
        &self,
        model: &str,
        setting: &str,
        factory: &Factory,
        traces: &[BandwidthTrace],
    ) -> anyhow::Result<(Vec<EpisodeRow>, SummaryRow)> {
        let sim = self.sim();
        let runs = self.config.runs;
        let reward = self.config.reward;
        let results = self.runner.map(traces.len() * runs, |j| {
            let (t, run) = (j / runs, j % runs);
            let config = SimConfig {
                rng_seed: derive_seed(sim.rng_seed, run as u64),
                ..sim.clone()
            };
            let mut cc = factory()?;
            let log = run_episode(&config, TraceSource::Fixed(&traces[t]), &mut cc, None)?;
            EpisodeReport::from_log(&log, &reward)
        });
        let mut rows = Vec::with_capacity(results.len());
        for (j, r) in results.into_iter().enumerate() {
            let r = r?;
            rows.push(EpisodeRow {
                model: model.to_string(),
                setting: setting.to_string(),
                trace: j / runs,
                run: j % runs,
                utilization: r.utilization,
                mean_delay_ms: r.mean_delay_ms,
                p95_delay_ms: r.p95_delay_ms,
                mean_reward: r.mean_reward,
                smoothness_linear: r.smoothness_linear,
                smoothness_log: r.smoothness_log,
            });
        }
        let summary = summarize(model, setting, &rows);
        Ok((rows, summary))
    }

    fn dump(&self, name: &str, factory: &Factory, trace: &BandwidthTrace) -> anyhow::Result<()> {
        let mut cc = factory()?;
        let log = run_episode(&self.sim(), TraceSource::Fixed(trace), &mut cc, None)?;
        formats::write_series(
            &self.path(format!("series/{name}.csv")),
            &log.series,
            &self.provenance(),
        )
    }

    /// Controllers on the clean and random-baseline sets.
    pub fn baseline(&self, controllers: &[Algorithm]) -> anyhow::Result<BaselineOutput> {
        let sets = [("clean", self.clean_traces()?), ("random", self.random_traces()?)];
        let mut all = Vec::new();
        let mut rows = Vec::new();
        for &alg in controllers {
            let factory = self.factory(alg)?;
            for (setting, traces) in &sets {
                let (episodes, summary) = self.episodes(alg.name(), setting, &factory, traces)?;
                if self.dump_series {
                    self.dump(&format!("{}_{setting}", alg.name()), &factory, &traces[0])?;
                }
                all.extend(episodes);
                rows.push(summary);
            }
        }
        let in_range = all.iter().all(|r| (0.0..=1.0).contains(&r.utilization));
        let checks = vec![Check::new(
            "utilization in [0, 1]",
            in_range,
            format!("{} episodes", all.len()),
        )];
        self.write_csv("baseline.csv", &rows)?;
        self.write_csv("baseline_episodes.csv", &all)?;
        let out = BaselineOutput { rows, checks };
        formats::write_json(&self.path("baseline.json"), &out)?;
        Ok(out)
    }

    fn adversary_spec(&self, tau: f64) -> AdversarySpec {
        let a = &self.config.adversary;
        let constraint = self.config.constraint(tau);
        let mut spec = match a.surface {
            SurfaceName::Env => AdversarySpec::env(self.config.budget, constraint, self.config.adversary_topology()),
            SurfaceName::Feature => AdversarySpec::feature(
                self.config.feature_bound(),
                constraint,
                a.reward_mode,
                self.config.budget.bw_max,
            ),
        };
        spec.reward_mode = a.reward_mode;
        spec.policy = Policy::zeros(
            spec.policy.features.clone(),
            self.config.adversary_topology(),
            spec.policy.action_bound,
            spec.policy.norm_mbps,
        );
        spec
    }

    /// Trains adversaries against each target and keeps the worst trace.
    pub fn attack(&self, targets: &[Algorithm]) -> anyhow::Result<AttackOutput> {
        let sim = self.sim();
        let reward = self.config.reward;
        let surface = self.config.adversary.surface;
        let (baseline, env_traces) = match surface {
            SurfaceName::Env => (self.random_baseline(), Vec::new()),
            SurfaceName::Feature => {
                let clean = self.clean_traces()?;
                (Baseline::CleanTraces(clean.clone()), clean)
            }
        };
        let mut rows = Vec::new();
        let mut traces = Vec::new();
        let mut restart_traces = Vec::new();
        let mut restart_rows = Vec::new();
        let mut checks = Vec::new();
        for (index, &alg) in targets.iter().enumerate() {
            let factory = self.factory(alg)?;
            let base_traces = baseline.traces(&sim)?;
            let (_, base) = self.episodes(alg.name(), "baseline", &factory, &base_traces)?;
            let tau = match self.config.adversary.tau_ms {
                Some(t) => t,
                None => calibrate_tau(&*factory, &baseline, &sim, self.runner)?,
            };
            let spec = self.adversary_spec(tau);

            let mut best: Option<(Rollout, AdversaryOutcome, Rollout)> = None;
            let mut per_restart = Vec::new();
            for restart in 0..self.config.adversary.restarts {
                let train = self.config.adversary_train(index, restart);
                let outcome = train_adversary(&spec, &*factory, &env_traces, &sim, &reward, &train, self.runner)
                    .with_context(|| format!("training adversary against {alg}"))?;
                let dir = format!("attack/{}", alg.name());
                formats::write_checkpoint(&self.path(format!("{dir}/r{restart}.ckpt")), &outcome.policy)?;
                self.write_csv(format!("{dir}/r{restart}_train.csv"), &outcome.history)?;
                let policy_run = rollout(&spec, &outcome.policy, &*factory, env_traces.first(), &sim, &reward)?;
                restart_rows.push(RestartRow {
                    model: alg.name().to_string(),
                    restart,
                    policy_utilization: policy_run.utilization,
                    policy_delay_ms: policy_run.mean_delay_ms,
                    worst_utilization: outcome.worst.as_ref().map(|w| w.utilization),
                    worst_delay_ms: outcome.worst.as_ref().map(|w| w.mean_delay_ms),
                });
                let Some(worst) = outcome.worst.clone() else {
                    continue;
                };
                if surface == SurfaceName::Env {
                    formats::write_trace(
                        &self.path(format!("{dir}/r{restart}.trace")),
                        &worst.trace,
                        &self.config.budget,
                    )?;
                    per_restart.push(worst.trace.clone());
                }
                if best.as_ref().is_none_or(|(b, _, _)| worst.utilization < b.utilization) {
                    best = Some((worst, outcome, policy_run));
                }
            }
            let Some((worst, outcome, policy_run)) = best else {
                checks.push(Check::new(
                    format!("{alg}: selector found a trace"),
                    false,
                    format!("no rollout reached tau = {tau:.3} ms"),
                ));
                continue;
            };

            if surface == SurfaceName::Env {
                formats::write_trace(
                    &self.path(format!("attack/{}.trace", alg.name())),
                    &worst.trace,
                    &self.config.budget,
                )?;
                // Replaying the realized trace must reproduce the rollout.
                let mut cc = factory()?;
                let log = run_episode(&sim, TraceSource::Fixed(&worst.trace), &mut cc, None)?;
                let replay = EpisodeReport::from_log(&log, &reward)?;
                checks.push(Check::new(
                    format!("{alg}: replay reproduces rollout"),
                    replay.utilization == worst.utilization && replay.mean_delay_ms == worst.mean_delay_ms,
                    format!("{} vs {}", replay.utilization, worst.utilization),
                ));
                let feasible = per_restart.iter().all(|t| self.config.budget.is_feasible(&t.values));
                checks.push(Check::new(
                    format!("{alg}: emitted traces feasible"),
                    feasible,
                    format!("{} traces", per_restart.len() + 1),
                ));
                traces.push((alg, worst.trace.clone()));
                restart_traces.push((alg, per_restart));
            } else {
                let rows: Vec<MinRttRow> = worst
                    .perceived_min_rtt_ms
                    .iter()
                    .enumerate()
                    .map(|(i, &m)| MinRttRow {
                        time_ms: (i as u64 * sim.trace_interval / MS) as f64,
                        perceived_min_rtt_ms: m,
                    })
                    .collect();
                self.write_csv(format!("attack/{}.minrtt.csv", alg.name()), &rows)?;
            }
            if spec.reward_mode == RewardMode::DelayConstrained {
                checks.push(Check::new(
                    format!("{alg}: selected delay >= tau"),
                    worst.mean_delay_ms >= tau,
                    format!("{:.3} ms vs tau {tau:.3} ms", worst.mean_delay_ms),
                ));
            }
            rows.push(AttackRow {
                model: alg.name().to_string(),
                surface: match surface {
                    SurfaceName::Env => "env".into(),
                    SurfaceName::Feature => "feature".into(),
                },
                reward_mode: mode_name(spec.reward_mode).into(),
                tau_ms: tau,
                baseline_utilization: base.utilization,
                baseline_delay_ms: base.delay_ms,
                baseline_p95_ms: base.p95_ms,
                attack_utilization: worst.utilization,
                attack_delay_ms: worst.mean_delay_ms,
                attack_p95_ms: worst.p95_delay_ms,
                delta_utilization: worst.utilization - base.utilization,
                delta_delay_ms: worst.mean_delay_ms - base.delay_ms,
                policy_utilization: policy_run.utilization,
                policy_delay_ms: policy_run.mean_delay_ms,
                constraint_met: worst.mean_delay_ms >= tau,
                rollouts: outcome.rollouts,
            });
        }
        self.write_csv("attack.csv", &rows)?;
        self.write_csv("attack_restarts.csv", &restart_rows)?;
        let out = AttackOutput {
            rows,
            restarts: restart_rows,
            traces,
            restart_traces,
            checks,
        };
        formats::write_json(&self.path("attack.json"), &out)?;
        Ok(out)
    }

    /// Every controller on every named trace.
    pub fn transfer(
        &self,
        controllers: &[Algorithm],
        traces: &[(String, BandwidthTrace)],
    ) -> anyhow::Result<TransferOutput> {
        if traces.len() < 2 {
            return Err(LabError::TooFewTraces(traces.len()).into());
        }
        let mut cells = Vec::new();
        for &alg in controllers {
            let factory = self.factory(alg)?;
            for (name, trace) in traces {
                let (_, s) = self.episodes(alg.name(), name, &factory, std::slice::from_ref(trace))?;
                cells.push(TransferCell {
                    trace: name.clone(),
                    model: alg.name().to_string(),
                    utilization: s.utilization,
                    delay_ms: s.delay_ms,
                    p95_ms: s.p95_ms,
                    column_min: false,
                    diagonal: name == alg.name(),
                });
            }
        }
        mark_column_minima(&mut cells);
        let feasible = traces.iter().all(|(_, t)| self.config.budget.is_feasible(&t.values));
        let checks = vec![
            Check::new(
                "matrix complete",
                cells.len() == controllers.len() * traces.len(),
                format!("{} cells", cells.len()),
            ),
            Check::new("input traces feasible", feasible, String::new()),
        ];
        self.write_csv("transfer.csv", &cells)?;
        let out = TransferOutput { cells, checks };
        formats::write_json(&self.path("transfer.json"), &out)?;
        Ok(out)
    }

    /// Searches the burst grid for a loss-free trace on which LP backs off
    /// early, then runs the comparison controllers on the same trace.
    pub fn lp_case(&self) -> anyhow::Result<LpCaseOutput> {
        let sim = SimConfig {
            record_events: true,
            ..self.sim()
        };
        let g = &self.config.lp_case;
        let lp_factory = self.factory(Algorithm::Lp)?;
        let mut found = None;
        'search: for &trough in &g.trough_mbps {
            for &peak in &g.peak_mbps {
                for &rise in &g.rise {
                    for &fall in &g.fall {
                        if !(trough < peak) {
                            continue;
                        }
                        let burst = gen_triangle_burst(sim.trace_len(), trough, peak, rise, fall, sim.trace_interval)?;
                        if !self.config.budget.is_feasible(&burst.values) {
                            continue;
                        }
                        let mut cc = lp_factory()?;
                        let log = run_episode(&sim, TraceSource::Fixed(&burst), &mut cc, None)?;
                        if log.early_backoffs() >= 1 && log.loss_backoffs() == 0 && log.counters.dropped == 0 {
                            found = Some(((trough, peak, rise, fall), burst, log));
                            break 'search;
                        }
                    }
                }
            }
        }
        let Some(((trough, peak, rise, fall), burst, lp_log)) = found else {
            let checks = vec![Check::new(
                "loss-free burst with an LP early backoff",
                false,
                "grid exhausted",
            )];
            let out = LpCaseOutput {
                rows: Vec::new(),
                oracle_crossings: 0,
                burst: None,
                checks,
            };
            formats::write_json(&self.path("lp_case.json"), &out)?;
            return Ok(out);
        };
        formats::write_trace(&self.path("lp_case/burst.trace"), &burst, &self.config.budget)?;

        let lp = &self.config.cc.lp;
        let owds: Vec<u64> = lp_log
            .events
            .iter()
            .filter(|e| e.kind == EventKind::AckReceived)
            .filter_map(|e| e.owd_sample)
            .collect();
        let crossings = sowd_crossings(&owds, lp.ewma_gain, lp.threshold_fraction);

        let row = |model: &str, log: &EpisodeLog| -> anyhow::Result<LpCaseRow> {
            let r = EpisodeReport::from_log(log, &self.config.reward)?;
            Ok(LpCaseRow {
                model: model.to_string(),
                trough_mbps: trough,
                peak_mbps: peak,
                rise,
                fall,
                utilization: r.utilization,
                mean_delay_ms: r.mean_delay_ms,
                early_backoffs: r.early_backoffs,
                loss_backoffs: r.loss_backoffs,
                drops: log.counters.dropped,
            })
        };
        let quiet = SimConfig {
            record_events: false,
            ..sim.clone()
        };
        let run = |factory: &Factory| -> anyhow::Result<EpisodeLog> {
            let mut cc = factory()?;
            Ok(run_episode(&quiet, TraceSource::Fixed(&burst), &mut cc, None)?)
        };
        let lp_row = row("lp", &lp_log)?;
        let mut rows = vec![lp_row.clone()];
        let mut checks = vec![
            Check::new(
                "loss-free burst with an LP early backoff",
                true,
                format!(
                    "trough {trough} peak {peak} rise {rise} fall {fall}: {} early backoffs",
                    lp_row.early_backoffs
                ),
            ),
            Check::new(
                "OWD replay confirms a threshold crossing",
                crossings >= 1,
                format!("{crossings} crossings"),
            ),
        ];
        formats::write_series(&self.path("lp_case/series_lp.csv"), &lp_log.series, &self.provenance())?;

        let cmp = g.compare;
        let cmp_log = run(&self.factory(cmp)?)?;
        let cmp_row = row(cmp.name(), &cmp_log)?;
        checks.push(Check::new(
            format!("{cmp} has no early backoffs"),
            cmp_row.early_backoffs == 0,
            format!(
                "{} early, {} loss backoffs",
                cmp_row.early_backoffs, cmp_row.loss_backoffs
            ),
        ));
        formats::write_series(
            &self.path(format!("lp_case/series_{cmp}.csv")),
            &cmp_log.series,
            &self.provenance(),
        )?;
        rows.push(cmp_row);

        if self.config.learned.checkpoint.is_some() {
            let learned_log = run(&self.factory(Algorithm::Learned)?)?;
            let learned_row = row("learned", &learned_log)?;
            checks.push(Check::new(
                "learned utilization above LP",
                learned_row.utilization > lp_row.utilization,
                format!("{:.4} vs {:.4}", learned_row.utilization, lp_row.utilization),
            ));
            formats::write_series(
                &self.path("lp_case/series_learned.csv"),
                &learned_log.series,
                &self.provenance(),
            )?;
            rows.push(learned_row);
        }
        self.write_csv("lp_case.csv", &rows)?;
        let out = LpCaseOutput {
            rows,
            oracle_crossings: crossings,
            burst: Some(burst),
            checks,
        };
        formats::write_json(&self.path("lp_case.json"), &out)?;
        Ok(out)
    }

    fn initial_policy(&self) -> Policy {
        Policy::zeros(
            Feature::CONTROLLER.to_vec(),
            self.config.controller_topology(),
            2.0,
            self.config.budget.bw_max,
        )
    }

    /// Trains the learned controller on the benign pool.
    pub fn train(&self, init: Option<&Path>) -> anyhow::Result<TrainOutput> {
        let init = match init {
            Some(p) => formats::read_checkpoint(p)?,
            None => self.initial_policy(),
        };
        let benign = self.benign_pool()?;
        let validation = &benign[..self.config.learned.validation_traces];
        let out = train_controller(
            &init,
            &benign[..],
            validation,
            &self.sim(),
            &self.config.reward,
            &self.config.controller_train(),
            self.runner,
        )?;
        let checkpoint = self.path("train/learned.ckpt");
        formats::write_checkpoint(&checkpoint, &out.policy)?;
        self.write_csv("train/train_log.csv", &out.history)?;
        let factory = policy_factory(out.policy.clone(), self.config.learned.initial_cwnd);
        let (_, random) = self.episodes("learned", "random", &factory, &self.random_traces()?)?;
        self.write_csv("train/train_eval.csv", std::slice::from_ref(&random))?;
        let checks = vec![Check::new(
            "validation return did not drop",
            out.final_return >= out.initial_return,
            format!("{:.6} -> {:.6}", out.initial_return, out.final_return),
        )];
        let result = TrainOutput {
            policy: out.policy,
            checkpoint,
            initial_return: out.initial_return,
            final_return: out.final_return,
            random_baseline: random,
            checks,
        };
        formats::write_json(&self.path("train/train.json"), &result)?;
        Ok(result)
    }

    fn suite_rows(
        &self,
        p: f64,
        name: &str,
        policy: &Policy,
        adversarial: &[BandwidthTrace],
    ) -> anyhow::Result<Vec<RetrainRow>> {
        let factory = policy_factory(policy.clone(), self.config.learned.initial_cwnd);
        let mut rows = Vec::new();
        for (set, traces) in [
            ("random_baseline", self.random_traces()?),
            ("adversarial", adversarial.to_vec()),
        ] {
            let (_, s) = self.episodes(name, set, &factory, &traces)?;
            rows.push(RetrainRow {
                mix_p: p,
                policy: name.to_string(),
                set: set.to_string(),
                utilization: s.utilization,
                delay_ms: s.delay_ms,
                p95_ms: s.p95_ms,
            });
        }
        Ok(rows)
    }

    fn retrain_once(
        &self,
        init: &Policy,
        benign: &[BandwidthTrace],
        adversarial: &[BandwidthTrace],
        p: f64,
    ) -> anyhow::Result<(Policy, Vec<GenerationStats>, f64)> {
        let pool = TracePool::new(benign.to_vec(), adversarial.to_vec(), p)?;
        let validation = &benign[..self.config.learned.validation_traces.min(benign.len())];
        let out = adversarial_retrain(
            init,
            &pool,
            validation,
            adversarial,
            &self.sim(),
            &self.config.reward,
            &self.config.retrain_train(),
            self.runner,
        )?;
        Ok((out.policy, out.history, out.final_return))
    }

    fn load_pool(
        &self,
        benign_dir: Option<&Path>,
        adv_dir: &Path,
    ) -> anyhow::Result<(Vec<BandwidthTrace>, Vec<BandwidthTrace>)> {
        let benign = match benign_dir {
            Some(d) => formats::read_trace_dir(d)?,
            None => self.benign_pool()?,
        };
        let adversarial = formats::read_trace_dir(adv_dir)?;
        Ok((benign, adversarial))
    }

    /// Continues training a checkpoint on a `mix_p` benign/adversarial pool.
    /// The input checkpoint is never written.
    pub fn retrain(
        &self,
        init_path: &Path,
        benign_dir: Option<&Path>,
        adv_dir: &Path,
        p: f64,
    ) -> anyhow::Result<RetrainOutput> {
        let before = std::fs::read(init_path).with_context(|| format!("reading {}", init_path.display()))?;
        let init = formats::read_checkpoint(init_path)?;
        let (benign, adversarial) = self.load_pool(benign_dir, adv_dir)?;
        let (policy, history, _) = self.retrain_once(&init, &benign, &adversarial, p)?;
        let checkpoint = self.path(format!("retrain/{}.ckpt", p_label(p)));
        if checkpoint.canonicalize().ok() == init_path.canonicalize().ok() && checkpoint.exists() {
            bail!("retrained checkpoint would overwrite its input {}", init_path.display());
        }
        formats::write_checkpoint(&checkpoint, &policy)?;
        self.write_csv(format!("retrain/{}_log.csv", p_label(p)), &history)?;
        let mut rows = self.suite_rows(p, "initial", &init, &adversarial)?;
        rows.extend(self.suite_rows(p, "retrained", &policy, &adversarial)?);
        self.write_csv(format!("retrain/{}.csv", p_label(p)), &rows)?;
        let after = std::fs::read(init_path)?;
        let checks = vec![Check::new(
            "input checkpoint unchanged",
            before == after,
            init_path.display().to_string(),
        )];
        let out = RetrainOutput {
            rows,
            checkpoint,
            checks,
        };
        formats::write_json(&self.path(format!("retrain/{}.json", p_label(p))), &out)?;
        Ok(out)
    }

    /// Retrains from the same checkpoint for every configured mixing ratio.
    pub fn sweep_p(&self, init_path: &Path, benign_dir: Option<&Path>, adv_dir: &Path) -> anyhow::Result<SweepOutput> {
        let init = formats::read_checkpoint(init_path)?;
        let (benign, adversarial) = self.load_pool(benign_dir, adv_dir)?;
        self.sweep_traces(&init, &benign, &adversarial)
    }

    /// [`Lab::sweep_p`] on in-memory pools.
    pub fn sweep_traces(
        &self,
        init: &Policy,
        benign: &[BandwidthTrace],
        adversarial: &[BandwidthTrace],
    ) -> anyhow::Result<SweepOutput> {
        let initial = self.suite_rows(f64::NAN, "initial", init, adversarial)?;
        let mut rows = Vec::new();
        for &p in &self.config.retrain.sweep {
            let (policy, history, validation_return) = self.retrain_once(init, benign, adversarial, p)?;
            formats::write_checkpoint(&self.path(format!("sweep/{}.ckpt", p_label(p))), &policy)?;
            self.write_csv(format!("sweep/{}_log.csv", p_label(p)), &history)?;
            let suite = self.suite_rows(p, "retrained", &policy, adversarial)?;
            rows.push(SweepRow {
                mix_p: p,
                random_utilization: suite[0].utilization,
                random_delay_ms: suite[0].delay_ms,
                adversarial_utilization: suite[1].utilization,
                adversarial_delay_ms: suite[1].delay_ms,
                validation_return,
            });
        }
        self.write_csv("sweep_p.csv", &rows)?;
        self.write_csv("sweep_initial.csv", &initial)?;
        let checks = vec![Check::new(
            "one row per mixing ratio",
            rows.len() == self.config.retrain.sweep.len(),
            format!("{} rows", rows.len()),
        )];
        let out = SweepOutput { initial, rows, checks };
        formats::write_json(&self.path("sweep_p.json"), &out)?;
        Ok(out)
    }

    /// Builds a trace; all but the unconstrained kinds must meet the budget.
    pub fn gen_trace(
        &self,
        kind: TraceKind,
        len: Option<usize>,
        path: &Path,
        unchecked: bool,
    ) -> anyhow::Result<(BandwidthTrace, Vec<Check>)> {
        use ccprobe_core::tracegen::{gen_unconstrained, Unconstrained};
        let sim = self.sim();
        let b = &self.config.budget;
        let len = len.unwrap_or(sim.trace_len());
        let trace = match kind {
            TraceKind::Random { seed } => gen_random_trace(len, b, sim.trace_interval, seed)?,
            TraceKind::Burst {
                trough,
                peak,
                rise,
                fall,
            } => gen_triangle_burst(len, trough, peak, rise, fall, sim.trace_interval)?,
            TraceKind::Constant { mbps } => BandwidthTrace::constant(mbps, sim.trace_interval, len),
            TraceKind::Alternating => gen_unconstrained(
                len,
                b.bw_min,
                b.bw_max,
                Unconstrained::Alternating,
                sim.trace_interval,
                0,
            )?,
            TraceKind::Uniform { seed } => gen_unconstrained(
                len,
                b.bw_min,
                b.bw_max,
                Unconstrained::Uniform,
                sim.trace_interval,
                seed,
            )?,
        };
        let feasible = b.is_feasible(&trace.values);
        let check = Check::new(
            "trace within budget",
            feasible,
            format!(
                "max slope {:.3}, delta {}",
                formats::max_slope(&trace.values, b.window_k),
                b.delta
            ),
        );
        if feasible {
            formats::write_trace(path, &trace, b)?;
        } else if unchecked {
            formats::write_trace_unchecked(path, &trace)?;
        } else {
            return Err(formats::check_feasible(&trace, b).unwrap_err())
                .context(format!("not writing {}", path.display()));
        }
        Ok((trace, vec![check]))
    }
}

#[derive(Debug, Clone, Serialize)]
struct MinRttRow {
    time_ms: f64,
    perceived_min_rtt_ms: f64,
}

/// Means over episode rows.
pub fn summarize(model: &str, setting: &str, rows: &[EpisodeRow]) -> SummaryRow {
    let n = rows.len().max(1) as f64;
    SummaryRow {
        model: model.to_string(),
        setting: setting.to_string(),
        utilization: rows.iter().map(|r| r.utilization).sum::<f64>() / n,
        delay_ms: rows.iter().map(|r| r.mean_delay_ms).sum::<f64>() / n,
        p95_ms: rows.iter().map(|r| r.p95_delay_ms).sum::<f64>() / n,
        episodes: rows.len(),
    }
}

pub fn policy_factory(policy: Policy, initial_cwnd: f64) -> Factory {
    Box::new(move || Ok(CcHandle::Learned(LearnedController::new(policy.clone(), initial_cwnd))))
}

/// Flags the lowest-utilization cell of each model's column; ties all count.
pub fn mark_column_minima(cells: &mut [TransferCell]) {
    let models: Vec<String> = cells.iter().map(|c| c.model.clone()).collect();
    for model in models {
        let min = cells
            .iter()
            .filter(|c| c.model == model)
            .map(|c| c.utilization)
            .fold(f64::INFINITY, f64::min);
        for c in cells.iter_mut().filter(|c| c.model == model) {
            c.column_min = c.utilization == min;
        }
    }
}

/// Fresh crossings of the early-congestion threshold when the one-way delays
/// are replayed through the smoothing filter and the running min/max.
pub fn sowd_crossings(owds: &[u64], gain: f64, fraction: f64) -> usize {
    let mut sowd = 0.0;
    let mut min = f64::INFINITY;
    let mut max = 0.0f64;
    let mut above = false;
    let mut count = 0;
    for (i, &o) in owds.iter().enumerate() {
        let o = o as f64;
        sowd = if i == 0 { o } else { sowd + gain * (o - sowd) };
        min = min.min(o);
        max = max.max(o);
        let now_above = sowd > min + fraction * (max - min);
        if now_above && !above {
            count += 1;
        }
        above = now_above;
    }
    count
}

/// Traces named by controller, read from an earlier `attack` run.
pub fn attack_traces(out: &Path, controllers: &[Algorithm]) -> anyhow::Result<Vec<(String, BandwidthTrace)>> {
    let mut traces = Vec::new();
    for alg in controllers {
        let path = out.join(format!("attack/{}.trace", alg.name()));
        if path.exists() {
            traces.push((alg.name().to_string(), formats::read_trace(&path)?));
        }
    }
    Ok(traces)
}
