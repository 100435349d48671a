use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use ccprobe::experiments::{all_passed, attack_traces, Check, TraceKind};
use ccprobe::{formats, ExperimentConfig, Lab, RayonRunner};
use ccprobe_core::adversary::RewardMode;
use ccprobe_core::cc::Algorithm;
use clap::{Parser, Subcommand, ValueEnum};

/// Adversarial trace generation and evaluation for congestion controllers.
#[derive(Parser)]
#[command(name = "ccprobe", version)]
struct Cli {
    /// TOML experiment config; defaults apply to anything left out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the top-level seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Surface {
    Env,
    Feature,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Random,
    Burst,
    Constant,
    Alternating,
    Uniform,
}

#[derive(Subcommand)]
enum Command {
    /// Clean and random-baseline performance of every controller.
    Baseline {
        /// Also write one time series per controller and setting.
        #[arg(long)]
        dump_series: bool,
        #[arg(long = "controller")]
        controllers: Vec<Algorithm>,
    },
    /// Train adversaries and emit the worst traces.
    Attack {
        #[arg(long = "target")]
        targets: Vec<Algorithm>,
        #[arg(long)]
        surface: Option<Surface>,
        /// Drop the delay constraint from the reward and the selector.
        #[arg(long)]
        naive: bool,
    },
    /// Cross-evaluate controllers on named traces (`name=path`).
    Transfer {
        #[arg(long = "trace")]
        traces: Vec<String>,
        #[arg(long = "controller")]
        controllers: Vec<Algorithm>,
    },
    /// Find a loss-free burst on which LP backs off early.
    LpCase,
    /// Train the learned controller, or retrain one when `--pool adv=` is given.
    Train {
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        mix_p: Option<f64>,
        /// `benign=<dir>` and/or `adv=<dir>`.
        #[arg(long, num_args = 1..)]
        pool: Vec<String>,
    },
    /// Retrain a checkpoint on a benign/adversarial mix.
    Retrain {
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        mix_p: Option<f64>,
        #[arg(long, num_args = 1..)]
        pool: Vec<String>,
    },
    /// Retrain once per mixing ratio in `retrain.sweep`.
    SweepP {
        #[arg(long)]
        init: PathBuf,
        #[arg(long, num_args = 1..)]
        pool: Vec<String>,
    },
    /// Write a single trace.
    GenTrace {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        len: Option<usize>,
        #[arg(long, default_value_t = 0)]
        trace_seed: u64,
        #[arg(long, default_value_t = 48.0)]
        mbps: f64,
        #[arg(long, default_value_t = 10.0)]
        trough: f64,
        #[arg(long, default_value_t = 90.0)]
        peak: f64,
        #[arg(long, default_value_t = 10)]
        rise: usize,
        #[arg(long, default_value_t = 20)]
        fall: usize,
        /// Write the trace even if it breaks the smoothness budget.
        #[arg(long)]
        unchecked: bool,
        output: PathBuf,
    },
    /// Convert a native trace to another format.
    Export {
        #[arg(long, required = true)]
        mahimahi: bool,
        input: PathBuf,
        output: PathBuf,
    },
}

struct Pool {
    benign: Option<PathBuf>,
    adv: PathBuf,
}

fn parse_pool(args: &[String]) -> anyhow::Result<Pool> {
    let mut benign = None;
    let mut adv = None;
    for a in args {
        match a.split_once('=') {
            Some(("benign", d)) => benign = Some(PathBuf::from(d)),
            Some(("adv", d)) => adv = Some(PathBuf::from(d)),
            _ => bail!("pool entries look like benign=<dir> or adv=<dir>, got `{a}`"),
        }
    }
    Ok(Pool {
        benign,
        adv: adv.context("--pool needs an adv=<dir> entry")?,
    })
}

fn parse_named(args: &[String]) -> anyhow::Result<Vec<(String, ccprobe_core::netsim::BandwidthTrace)>> {
    args.iter()
        .map(|a| {
            let (name, path) = a
                .split_once('=')
                .with_context(|| format!("expected name=path, got `{a}`"))?;
            Ok((name.to_string(), formats::read_trace(Path::new(path))?))
        })
        .collect()
}

fn report(checks: &[Check]) {
    for c in checks {
        let mark = if c.passed { "ok  " } else { "FAIL" };
        if c.detail.is_empty() {
            println!("{mark} {}", c.name);
        } else {
            println!("{mark} {} ({})", c.name, c.detail);
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<Vec<Check>> {
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = cli.out {
        config.output_dir = out;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let runner = RayonRunner::new(cli.workers)?;
    let pick = |given: Vec<Algorithm>, all: Vec<Algorithm>| if given.is_empty() { all } else { given };

    match cli.command {
        Command::Baseline {
            dump_series,
            controllers,
        } => {
            let mut lab = Lab::new(config, &runner)?;
            lab.dump_series = dump_series;
            let controllers = pick(controllers, lab.config.controllers.clone());
            let out = lab.baseline(&controllers)?;
            for r in &out.rows {
                println!(
                    "{:<9} {:<6} util {:.4}  delay {:8.3} ms  p95 {:8.3} ms",
                    r.model, r.setting, r.utilization, r.delay_ms, r.p95_ms
                );
            }
            Ok(out.checks)
        }
        Command::Attack {
            targets,
            surface,
            naive,
        } => {
            match surface {
                Some(Surface::Env) => config.adversary.surface = ccprobe::config::SurfaceName::Env,
                Some(Surface::Feature) => config.adversary.surface = ccprobe::config::SurfaceName::Feature,
                None => {}
            }
            if naive {
                config.adversary.reward_mode = RewardMode::Naive;
            }
            let lab = Lab::new(config, &runner)?;
            let targets = pick(targets, lab.config.targets());
            let out = lab.attack(&targets)?;
            for r in &out.rows {
                println!(
                    "{:<9} util {:.4} -> {:.4}  delay {:8.3} -> {:8.3} ms  tau {:.3} ms",
                    r.model,
                    r.baseline_utilization,
                    r.attack_utilization,
                    r.baseline_delay_ms,
                    r.attack_delay_ms,
                    r.tau_ms
                );
            }
            Ok(out.checks)
        }
        Command::Transfer { traces, controllers } => {
            let lab = Lab::new(config, &runner)?;
            let controllers = pick(controllers, lab.config.controllers.clone());
            let traces = if traces.is_empty() {
                attack_traces(&lab.out, &controllers)?
            } else {
                parse_named(&traces)?
            };
            let out = lab.transfer(&controllers, &traces)?;
            for c in &out.cells {
                println!(
                    "{:<9} on {:<12} util {:.4}{}",
                    c.model,
                    c.trace,
                    c.utilization,
                    if c.column_min { "  (column min)" } else { "" }
                );
            }
            Ok(out.checks)
        }
        Command::LpCase => {
            let lab = Lab::new(config, &runner)?;
            let out = lab.lp_case()?;
            for r in &out.rows {
                println!(
                    "{:<9} util {:.4}  early {}  loss {}  drops {}",
                    r.model, r.utilization, r.early_backoffs, r.loss_backoffs, r.drops
                );
            }
            Ok(out.checks)
        }
        Command::Train { init, mix_p, pool } => {
            if !pool.is_empty() {
                let init = init.context("retraining needs --init")?;
                return retrain(config, &runner, &init, mix_p, &pool);
            }
            let lab = Lab::new(config, &runner)?;
            let out = lab.train(init.as_deref())?;
            println!(
                "validation return {:.6} -> {:.6}; checkpoint {}",
                out.initial_return,
                out.final_return,
                out.checkpoint.display()
            );
            Ok(out.checks)
        }
        Command::Retrain { init, mix_p, pool } => retrain(config, &runner, &init, mix_p, &pool),
        Command::SweepP { init, pool } => {
            let pool = parse_pool(&pool)?;
            let lab = Lab::new(config, &runner)?;
            let out = lab.sweep_p(&init, pool.benign.as_deref(), &pool.adv)?;
            for r in &out.rows {
                println!(
                    "p {:<4} random util {:.4}  adversarial util {:.4}",
                    r.mix_p, r.random_utilization, r.adversarial_utilization
                );
            }
            Ok(out.checks)
        }
        Command::GenTrace {
            kind,
            len,
            trace_seed,
            mbps,
            trough,
            peak,
            rise,
            fall,
            unchecked,
            output,
        } => {
            let kind = match kind {
                Kind::Random => TraceKind::Random { seed: trace_seed },
                Kind::Burst => TraceKind::Burst {
                    trough,
                    peak,
                    rise,
                    fall,
                },
                Kind::Constant => TraceKind::Constant { mbps },
                Kind::Alternating => TraceKind::Alternating,
                Kind::Uniform => TraceKind::Uniform { seed: trace_seed },
            };
            let lab = Lab::new(config, &runner)?;
            let (_, checks) = lab.gen_trace(kind, len, &output, unchecked)?;
            Ok(checks)
        }
        Command::Export {
            mahimahi: _,
            input,
            output,
        } => {
            let trace = formats::read_trace(&input)?;
            formats::write_text(&output, &formats::format_mahimahi(&trace))?;
            Ok(Vec::new())
        }
    }
}

fn retrain(
    mut config: ExperimentConfig,
    runner: &RayonRunner,
    init: &Path,
    mix_p: Option<f64>,
    pool: &[String],
) -> anyhow::Result<Vec<Check>> {
    let pool = parse_pool(pool)?;
    if let Some(p) = mix_p {
        config.retrain.mix_p = p;
    }
    let p = config.retrain.mix_p;
    let lab = Lab::new(config, runner)?;
    let out = lab.retrain(init, pool.benign.as_deref(), &pool.adv, p)?;
    for r in &out.rows {
        println!(
            "{:<9} {:<15} util {:.4}  delay {:8.3} ms",
            r.policy, r.set, r.utilization, r.delay_ms
        );
    }
    println!("checkpoint {}", out.checkpoint.display());
    Ok(out.checks)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(checks) => {
            report(&checks);
            if all_passed(&checks) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
