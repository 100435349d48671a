//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line.
//!
//! Criteria 3, 4 and 6 to 9 share one trained controller and one set of
//! attacks, built once by whichever test gets there first.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use ccprobe::config::SurfaceName;
use ccprobe::experiments::{AttackOutput, SweepOutput};
use ccprobe::{formats, ExperimentConfig, Lab, RayonRunner};
use ccprobe_core::adversary::{
    episode_adv_return, queuing_delay, AdversarySpec, DelayConstraint, EnvAttack, RewardMode,
};
use ccprobe_core::cc::Algorithm;
use ccprobe_core::cc::CcHandle;
use ccprobe_core::learned::{controller_reward, LearnedController, Policy, RewardParams, Topology};
use ccprobe_core::metrics::{cwnd_series, cwnd_smoothness, EpisodeReport};
use ccprobe_core::netsim::{run_episode, BandwidthTrace, EnvDriver, EpisodeLog, Observation, TraceSource};
use ccprobe_core::tracegen::{avg_abs_slope, gen_random_trace, SmoothnessBudget};
use ccprobe_core::MS;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

const RULE_BASED: [Algorithm; 5] = [
    Algorithm::Reno,
    Algorithm::Cubic,
    Algorithm::Vegas,
    Algorithm::Illinois,
    Algorithm::Lp,
];

fn report(n: u32, passed: bool, detail: &str) {
    let line = format!("criterion {n:>2}: {} {detail}\n", if passed { "PASS" } else { "FAIL" });
    // Bypass the harness's capture so the line shows up on success too.
    let _ = std::io::stdout().write_all(line.as_bytes());
    assert!(passed, "criterion {n}: {detail}");
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

struct Fixture {
    _dir: TempDir,
    root: PathBuf,
    runner: RayonRunner,
    config: ExperimentConfig,
    learned: Policy,
    rule_attacks: Vec<(Algorithm, AttackOutput, Duration)>,
    learned_attack: AttackOutput,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let root = dir.path().to_path_buf();
        let runner = RayonRunner::new(0).unwrap();
        let mut config = ExperimentConfig {
            output_dir: root.clone(),
            ..ExperimentConfig::default()
        };

        let trained = Lab::new(config.clone(), &runner)
            .unwrap()
            .with_output(root.join("train"))
            .train(None)
            .unwrap();
        config.learned.checkpoint = Some(trained.checkpoint.clone());

        let mut rule_attacks = Vec::new();
        for alg in RULE_BASED {
            let lab = Lab::new(config.clone(), &runner)
                .unwrap()
                .with_output(root.join("attack").join(alg.name()));
            let start = Instant::now();
            let out = lab.attack(&[alg]).unwrap();
            rule_attacks.push((alg, out, start.elapsed()));
        }

        let mut learned_config = config.clone();
        learned_config.adversary.restarts = 2;
        let learned_attack = Lab::new(learned_config, &runner)
            .unwrap()
            .with_output(root.join("attack_learned"))
            .attack(&[Algorithm::Learned])
            .unwrap();

        Fixture {
            _dir: dir,
            root,
            runner,
            config,
            learned: trained.policy,
            rule_attacks,
            learned_attack,
        }
    })
}

fn sweep() -> &'static (SweepOutput, Duration) {
    static S: OnceLock<(SweepOutput, Duration)> = OnceLock::new();
    S.get_or_init(|| {
        let f = fixture();
        let mut config = f.config.clone();
        config.retrain.sweep = vec![0.2, 1.0];
        let lab = Lab::new(config, &f.runner).unwrap().with_output(f.root.join("sweep"));
        let benign = lab.benign_pool().unwrap();
        let adversarial: Vec<BandwidthTrace> = f.learned_attack.restart_traces[0].1.clone();
        let start = Instant::now();
        let out = lab.sweep_traces(&f.learned, &benign, &adversarial).unwrap();
        (out, start.elapsed())
    })
}

fn observation(rng: &mut ChaCha8Rng) -> Observation {
    let min_rtt_ms = rng.random_range(5.0..80.0);
    Observation {
        time: 0,
        rtt_ms: min_rtt_ms * rng.random_range(1.0..2.0),
        min_rtt_ms,
        throughput_mbps: rng.random_range(0.0..96.0),
        loss_mbps: rng.random_range(0.0..5.0),
        utilization: rng.random_range(0.0..1.0),
        capacity_mbps: rng.random_range(1.0..96.0),
        cwnd: rng.random_range(1.0..500.0),
    }
}

fn reward_oracle(o: &Observation, lambda: f64, gamma: f64, b_max: f64) -> f64 {
    let d = if gamma * o.min_rtt_ms < o.rtt_ms {
        gamma * o.min_rtt_ms / o.rtt_ms
    } else {
        1.0
    };
    (o.throughput_mbps - lambda * o.loss_mbps) / b_max * d
}

fn constrained_oracle(obs: &[Observation], c: &DelayConstraint) -> f64 {
    let delays: Vec<f64> = obs.iter().map(|o| o.rtt_ms - o.min_rtt_ms).collect();
    let mut total = 0.0;
    for t in 0..obs.len() {
        let mut penalty = 0.0;
        if t + 1 >= c.window_h {
            let local: f64 = delays[t + 1 - c.window_h..=t].iter().sum::<f64>() / c.window_h as f64;
            let recent: f64 = delays[t + 1 - c.window_k..=t].iter().sum::<f64>() / c.window_k as f64;
            if local < c.tau && recent < c.tau {
                penalty = -c.alpha;
            }
        }
        total += -obs[t].utilization + penalty;
    }
    total / obs.len() as f64
}

fn slope_oracle(values: &[f64], t: usize, k: usize) -> f64 {
    let mut sum = 0.0;
    let mut i = t;
    while i > t - k {
        sum += (values[i] - values[i - 1]).abs();
        i -= 1;
    }
    sum / k as f64
}

fn smoothness_oracle(series: &[(f64, f64)], k: usize) -> (f64, f64) {
    let cwnd: Vec<f64> = series.iter().map(|p| p.1).collect();
    let n = series.len() - k;
    let linear = (k..series.len()).map(|t| slope_oracle(&cwnd, t, k)).sum::<f64>() / n as f64;
    let log = (k..series.len())
        .map(|t| {
            (t + 1 - k..=t)
                .map(|i| (series[i].1.ln() - series[i - 1].1.ln()).abs() / (series[i].0 - series[i - 1].0))
                .sum::<f64>()
                / k as f64
        })
        .sum::<f64>()
        / n as f64;
    (linear, log)
}

#[test]
fn criterion_01_reward_math_oracles() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut failures = Vec::new();
    let cases = 50;

    // Worked examples.
    let hand = Observation {
        rtt_ms: 20.0,
        min_rtt_ms: 20.0,
        throughput_mbps: 50.0,
        loss_mbps: 0.0,
        ..observation(&mut rng)
    };
    let r = controller_reward(
        &hand,
        &RewardParams {
            lambda: 10.0,
            gamma: 1.2,
            b_max: 100.0,
        },
    )
    .unwrap();
    if !close(r, 0.5) {
        failures.push(format!("reward example {r}"));
    }
    let q = queuing_delay(&Observation {
        rtt_ms: 25.0,
        min_rtt_ms: 20.0,
        ..hand
    })
    .unwrap();
    if !close(q, 5.0) {
        failures.push(format!("queuing delay example {q}"));
    }
    if !close(avg_abs_slope(&[10.0, 20.0, 15.0, 15.0], 3, 3).unwrap(), 5.0) {
        failures.push("slope example".into());
    }
    let (lin, log) = cwnd_smoothness(&[(0.0, 10.0), (1.0, 20.0)], 1).unwrap();
    if !close(lin, 10.0) || !close(log, 2f64.ln()) {
        failures.push(format!("smoothness example {lin} {log}"));
    }

    for case in 0..cases {
        let params = RewardParams {
            lambda: rng.random_range(0.0..20.0),
            gamma: rng.random_range(1.0..2.0),
            b_max: rng.random_range(10.0..200.0),
        };
        let obs: Vec<Observation> = (0..rng.random_range(1..15)).map(|_| observation(&mut rng)).collect();

        // Controller reward with its delay discount.
        for o in &obs {
            let got = controller_reward(o, &params).unwrap();
            let want = reward_oracle(o, params.lambda, params.gamma, params.b_max);
            if !close(got, want) {
                failures.push(format!("reward case {case}: {got} vs {want}"));
            }
        }

        // Naive adversary: negated controller reward.
        let constraint = DelayConstraint {
            tau: rng.random_range(0.0..60.0),
            alpha: rng.random_range(0.1..2.0),
            window_h: rng.random_range(1..6),
            window_k: 1,
        };
        let constraint = DelayConstraint {
            window_k: rng.random_range(1..=constraint.window_h),
            ..constraint
        };
        let naive = episode_adv_return(&obs, RewardMode::Naive, &constraint, &params).unwrap();
        let want = -obs
            .iter()
            .map(|o| reward_oracle(o, params.lambda, params.gamma, params.b_max))
            .sum::<f64>()
            / obs.len() as f64;
        if !close(naive, want) {
            failures.push(format!("naive case {case}: {naive} vs {want}"));
        }

        // Delay-constrained adversary.
        let got = episode_adv_return(&obs, RewardMode::DelayConstrained, &constraint, &params).unwrap();
        let want = constrained_oracle(&obs, &constraint);
        if !close(got, want) {
            failures.push(format!("constrained case {case}: {got} vs {want}"));
        }

        // Average absolute slope.
        let values: Vec<f64> = (0..rng.random_range(6..20))
            .map(|_| rng.random_range(1.0..96.0))
            .collect();
        let k = rng.random_range(1..5);
        for t in k..values.len() {
            let got = avg_abs_slope(&values, t, k).unwrap();
            let want = slope_oracle(&values, t, k);
            if !close(got, want) {
                failures.push(format!("slope case {case}: {got} vs {want}"));
            }
        }

        // Linear and log-scaled cwnd smoothness.
        let mut time = 0.0;
        let series: Vec<(f64, f64)> = (0..rng.random_range(6..20))
            .map(|_| {
                time += rng.random_range(0.01..1.0);
                (time, rng.random_range(1.0..1000.0))
            })
            .collect();
        let k = rng.random_range(1..5);
        let (lin, log) = cwnd_smoothness(&series, k).unwrap();
        let (want_lin, want_log) = smoothness_oracle(&series, k);
        if !close(lin, want_lin) || !close(log, want_log) {
            failures.push(format!(
                "smoothness case {case}: ({lin}, {log}) vs ({want_lin}, {want_log})"
            ));
        }
    }
    let elapsed = start.elapsed();
    report(
        1,
        failures.is_empty() && elapsed < Duration::from_secs(1),
        &format!(
            "{cases} random cases per formula, {} mismatches, {elapsed:.2?}",
            failures.len()
        ),
    );
}

/// Range and windowed-slope check written without the library's helpers.
fn trace_ok(values: &[f64], delta: f64, k: usize, lo: f64, hi: f64) -> bool {
    if values.iter().any(|&v| !(lo..=hi).contains(&v)) {
        return false;
    }
    for t in k..values.len() {
        let mut s = 0.0;
        for i in (t + 1 - k)..=t {
            s += (values[i] - values[i - 1]).abs();
        }
        if s / k as f64 > delta {
            return false;
        }
    }
    true
}

#[test]
fn criterion_02_budget_feasibility() {
    let start = Instant::now();
    let budget = SmoothnessBudget::default();
    assert_eq!(
        (budget.delta, budget.window_k, budget.bw_min, budget.bw_max),
        (48.0, 1, 1.0, 96.0)
    );
    let len = 600;
    let mut bad = 0;
    for seed in 0..500 {
        let t = gen_random_trace(len, &budget, 100 * MS, seed).unwrap();
        bad += usize::from(t.len() != len || !trace_ok(&t.values, 48.0, 1, 1.0, 96.0));
    }
    // Adversarial traces: random policies driven by random observations
    // through the same projection the attack uses.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let template = AdversarySpec::env(budget, DelayConstraint::default(), Topology::Hidden { width: 4 }).policy;
    for _ in 0..500 {
        let params: Vec<f64> = (0..template.params.len())
            .map(|_| rng.random_range(-5.0..5.0))
            .collect();
        let mut driver = EnvAttack::new(template.with_params(params), budget);
        driver.begin(0);
        let values: Vec<f64> = (0..len).map(|_| driver.next_capacity(&observation(&mut rng))).collect();
        bad += usize::from(!trace_ok(&values, 48.0, 1, 1.0, 96.0));
    }
    let elapsed = start.elapsed();
    report(
        2,
        bad == 0 && elapsed < Duration::from_secs(10),
        &format!("1000 traces, {bad} infeasible, {elapsed:.2?}"),
    );
}

fn mean_delay_ms(log: &EpisodeLog) -> f64 {
    let n = log.rtt_samples.len().max(1) as f64;
    log.rtt_samples
        .iter()
        .map(|&r| (r - log.base_rtt) as f64 / MS as f64)
        .sum::<f64>()
        / n
}

fn build(f: &Fixture, alg: Algorithm) -> CcHandle {
    match alg {
        Algorithm::Learned => {
            CcHandle::Learned(LearnedController::new(f.learned.clone(), f.config.learned.initial_cwnd))
        }
        other => f.config.cc.build(other).unwrap(),
    }
}

fn replay(f: &Fixture, alg: Algorithm, trace: &BandwidthTrace) -> EpisodeLog {
    let mut cc = build(f, alg);
    run_episode(&f.config.sim_config(), TraceSource::Fixed(trace), &mut cc, None).unwrap()
}

#[test]
fn criterion_03_delay_constraint() {
    let f = fixture();
    let mut checked = 0;
    let mut violations = Vec::new();
    let outputs = f.rule_attacks.iter().map(|(_, o, _)| o).chain([&f.learned_attack]);
    for out in outputs {
        for (alg, traces) in &out.restart_traces {
            let row = out.rows.iter().find(|r| r.model == alg.name()).unwrap();
            assert_eq!(row.reward_mode, "delay_constrained");
            for trace in traces {
                let d = mean_delay_ms(&replay(f, *alg, trace));
                checked += 1;
                if d < row.tau_ms {
                    violations.push(format!("{alg}: {d:.3} < {:.3}", row.tau_ms));
                }
            }
        }
        for row in &out.rows {
            checked += 1;
            if row.attack_delay_ms < row.tau_ms {
                violations.push(format!(
                    "{} row: {:.3} < {:.3}",
                    row.model, row.attack_delay_ms, row.tau_ms
                ));
            }
        }
    }
    report(
        3,
        checked > 0 && violations.is_empty(),
        &format!("{checked} selections checked, violations {violations:?}"),
    );
}

#[test]
fn criterion_04_directional_degradation() {
    let f = fixture();
    let mut ok = true;
    let mut parts = Vec::new();
    for (alg, out, elapsed) in &f.rule_attacks {
        let Some(row) = out.rows.first() else {
            ok = false;
            parts.push(format!("{alg}: no trace"));
            continue;
        };
        let drop_pp = 100.0 * (row.baseline_utilization - row.attack_utilization);
        ok &= drop_pp >= 3.0 && *elapsed <= Duration::from_secs(600);
        parts.push(format!("{alg} -{drop_pp:.1}pp in {elapsed:.0?}"));
    }
    report(4, ok, &parts.join(", "));
}

#[test]
fn criterion_05_naive_ambiguity() {
    let f = fixture();
    let mut config = f.config.clone();
    config.adversary.surface = SurfaceName::Feature;
    config.adversary.reward_mode = RewardMode::Naive;
    config.adversary.restarts = 3;
    let lab = Lab::new(config, &f.runner).unwrap().with_output(f.root.join("naive"));
    let out = lab.attack(&[Algorithm::Vegas]).unwrap();
    let row = &out.rows[0];
    let both: Vec<usize> = out
        .restarts
        .iter()
        .filter(|r| r.policy_utilization < row.baseline_utilization && r.policy_delay_ms < row.baseline_delay_ms)
        .map(|r| r.restart)
        .collect();
    let runs: Vec<String> = out
        .restarts
        .iter()
        .map(|r| format!("({:.4}, {:.2} ms)", r.policy_utilization, r.policy_delay_ms))
        .collect();
    report(
        5,
        !both.is_empty(),
        &format!(
            "vegas clean ({:.4}, {:.2} ms), converged runs {}, lowering both: {both:?}",
            row.baseline_utilization,
            row.baseline_delay_ms,
            runs.join(" ")
        ),
    );
}

#[test]
fn criterion_06_lp_case() {
    let f = fixture();
    let lab = Lab::new(f.config.clone(), &f.runner)
        .unwrap()
        .with_output(f.root.join("lp_case"));
    let out = lab.lp_case().unwrap();
    let lp = out.rows.iter().find(|r| r.model == "lp");
    let learned = out.rows.iter().find(|r| r.model == "learned");
    let (passed, detail) = match (lp, learned) {
        (Some(lp), Some(learned)) => (
            lp.early_backoffs >= 1
                && lp.loss_backoffs == 0
                && lp.drops == 0
                && out.oracle_crossings >= 1
                && learned.utilization > lp.utilization,
            format!(
                "lp {} early backoffs, {} drops, util {:.4}; learned util {:.4}",
                lp.early_backoffs, lp.drops, lp.utilization, learned.utilization
            ),
        ),
        _ => (false, String::from("no loss-free burst found")),
    };
    report(6, passed, &detail);
}

#[test]
fn criterion_07_smoothness_ordering() {
    let f = fixture();
    let trace = &f.learned_attack.traces[0].1;
    let report_of = |alg| EpisodeReport::from_log(&replay(f, alg, trace), &f.config.reward).unwrap();
    let learned = report_of(Algorithm::Learned);
    let cubic = report_of(Algorithm::Cubic);
    let vegas = report_of(Algorithm::Vegas);

    let series = cwnd_series(&replay(f, Algorithm::Learned, trace));
    let scaled: Vec<(f64, f64)> = series.iter().map(|&(t, c)| (t, 10.0 * c)).collect();
    let (_, log) = cwnd_smoothness(&series, 1).unwrap();
    let (_, log_scaled) = cwnd_smoothness(&scaled, 1).unwrap();
    let invariant = close(log, log_scaled);
    report(
        7,
        learned.smoothness_linear > cubic.smoothness_linear
            && learned.smoothness_linear > vegas.smoothness_linear
            && invariant,
        &format!(
            "linear: learned {:.3}, cubic {:.3}, vegas {:.3}; log: learned {:.3}, cubic {:.3}, vegas {:.3}; \
             learned log {log:.9} vs x10 {log_scaled:.9}",
            learned.smoothness_linear,
            cubic.smoothness_linear,
            vegas.smoothness_linear,
            learned.smoothness_log,
            cubic.smoothness_log,
            vegas.smoothness_log
        ),
    );
}

fn row_util(out: &SweepOutput, p: f64) -> (f64, f64) {
    let r = out.rows.iter().find(|r| r.mix_p == p).unwrap();
    (r.random_utilization, r.adversarial_utilization)
}

fn initial_util(out: &SweepOutput, set: &str) -> f64 {
    out.initial.iter().find(|r| r.set == set).unwrap().utilization
}

#[test]
fn criterion_08_adversarial_retraining() {
    let (out, elapsed) = sweep();
    let (random, adversarial) = row_util(out, 0.2);
    let gain_pp = 100.0 * (adversarial - initial_util(out, "adversarial"));
    let loss_pp = 100.0 * (initial_util(out, "random_baseline") - random);
    report(
        8,
        gain_pp >= 3.0 && loss_pp <= 3.0 && *elapsed <= Duration::from_secs(20 * 60),
        &format!(
            "adversarial {gain_pp:+.2}pp, random {:+.2}pp, sweep of 2 ratios in {elapsed:.0?}",
            -loss_pp
        ),
    );
}

#[test]
fn criterion_09_mixing_ratio_sweep() {
    let (out, _) = sweep();
    let (low, _) = row_util(out, 0.2);
    let (high, _) = row_util(out, 1.0);
    report(
        9,
        high < low,
        &format!("random-baseline utilization p=1 {high:.4}, p=0.2 {low:.4}"),
    );
}

const SMALL_CONFIG: &str = r#"
seed = 7
runs = 1
controllers = ["reno", "vegas", "lp"]

[traces]
random_count = 2

[adversary]
targets = ["reno"]

[adversary.cem]
generations = 2
population = 6
init_std = 1.0

[learned]
benign_traces = 3
validation_traces = 1
episodes_per_eval = 1

[learned.cem]
generations = 2
population = 6

[retrain]
episodes_per_eval = 1
sweep = [0.0, 1.0]

[retrain.cem]
generations = 2
population = 6
"#;

fn run_all(config: &Path, out: &Path, workers: usize) -> Vec<String> {
    let bin = env!("CARGO_BIN_EXE_ccprobe");
    let o = |rel: &str| out.join(rel).display().to_string();
    let steps: Vec<Vec<String>> = vec![
        vec!["train".into()],
        vec!["baseline".into(), "--dump-series".into()],
        vec!["attack".into()],
        vec![
            "gen-trace".into(),
            "--kind".into(),
            "random".into(),
            "--trace-seed".into(),
            "3".into(),
            o("gen/random.trace"),
        ],
        vec![
            "gen-trace".into(),
            "--kind".into(),
            "burst".into(),
            o("gen/burst.trace"),
        ],
        vec![
            "transfer".into(),
            "--trace".into(),
            format!("reno={}", o("attack/reno.trace")),
            "--trace".into(),
            format!("random={}", o("gen/random.trace")),
        ],
        vec!["lp-case".into()],
        vec![
            "retrain".into(),
            "--init".into(),
            o("train/learned.ckpt"),
            "--mix-p".into(),
            "0.5".into(),
            "--pool".into(),
            format!("adv={}", o("attack/reno")),
        ],
        vec![
            "sweep-p".into(),
            "--init".into(),
            o("train/learned.ckpt"),
            "--pool".into(),
            format!("adv={}", o("attack/reno")),
        ],
        vec![
            "export".into(),
            "--mahimahi".into(),
            o("gen/random.trace"),
            o("gen/random.mm"),
        ],
    ];
    let mut failures = Vec::new();
    for args in steps {
        let status = Command::new(bin)
            .arg("--config")
            .arg(config)
            .arg("--out")
            .arg(out)
            .arg("--workers")
            .arg(workers.to_string())
            .args(&args)
            .output()
            .unwrap();
        if status.status.code() == Some(2) {
            failures.push(format!("{}: {}", args[0], String::from_utf8_lossy(&status.stderr)));
        }
    }
    failures
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn criterion_10_determinism() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("small.toml");
    std::fs::write(&config, SMALL_CONFIG).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let mut errors = run_all(&config, &a, 1);
    errors.extend(run_all(&config, &b, 2));

    let (fa, fb) = (files(&a), files(&b));
    let csvs: Vec<&PathBuf> = fa
        .iter()
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    let mut differing = Vec::new();
    for rel in &fa {
        let ext = rel.extension().and_then(|e| e.to_str()).unwrap_or("");
        let (x, y) = (a.join(rel), b.join(rel));
        let same = match ext {
            "csv" => {
                formats::csv_body(&std::fs::read_to_string(&x).unwrap())
                    == std::fs::read_to_string(&y)
                        .map(|s| formats::csv_body(&s))
                        .unwrap_or_default()
            }
            // JSON reports embed absolute output paths.
            "json" => true,
            _ => std::fs::read(&x).ok() == std::fs::read(&y).ok(),
        };
        if !same {
            differing.push(rel.display().to_string());
        }
    }
    report(
        10,
        errors.is_empty() && fa == fb && csvs.len() >= 10 && differing.is_empty(),
        &format!(
            "{} files, {} csv, differing {differing:?}, command errors {errors:?}",
            fa.len(),
            csvs.len()
        ),
    );
}
