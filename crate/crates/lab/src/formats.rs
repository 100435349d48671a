//! On-disk formats.
//!
//! Native trace: a `# interval_ms=<int>` header, then one capacity in Mbps
//! per line. Mahimahi: one millisecond timestamp per 1500-byte delivery
//! opportunity. Checkpoint: a versioned plain-text policy dump. CSV files
//! start with a `#` provenance line carrying the config hash and seed.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use ccprobe_core::learned::{Feature, Policy, Topology};
use ccprobe_core::netsim::{BandwidthTrace, SeriesPoint};
use ccprobe_core::tracegen::SmoothnessBudget;
use ccprobe_core::MS;
use serde::Serialize;

use crate::LabError;

pub const CHECKPOINT_MAGIC: &str = "ccprobe-policy";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Bytes per Mahimahi delivery opportunity.
pub const MAHIMAHI_PACKET: f64 = 1500.0;

pub fn format_trace(trace: &BandwidthTrace) -> String {
    let mut s = format!("# interval_ms={}\n", trace.interval / MS);
    for v in &trace.values {
        let _ = writeln!(s, "{v}");
    }
    s
}

pub fn parse_trace(text: &str) -> anyhow::Result<BandwidthTrace> {
    let mut interval = None;
    let mut values = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(ms) = rest.trim().strip_prefix("interval_ms=") {
                let ms: u64 = ms
                    .trim()
                    .parse()
                    .with_context(|| format!("line {}: bad interval", n + 1))?;
                interval = Some(ms * MS);
            }
            continue;
        }
        let v: f64 = line
            .parse()
            .with_context(|| format!("line {}: `{line}` is not a number", n + 1))?;
        if !(v >= 0.0 && v.is_finite()) {
            bail!("line {}: capacity {v} must be finite and non-negative", n + 1);
        }
        values.push(v);
    }
    let interval = interval.ok_or_else(|| anyhow!("missing `# interval_ms=` header"))?;
    Ok(BandwidthTrace::new(interval, values)?)
}

pub fn read_trace(path: &Path) -> anyhow::Result<BandwidthTrace> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_trace(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Budget and range check applied to every trace before it is written.
pub fn check_feasible(trace: &BandwidthTrace, budget: &SmoothnessBudget) -> Result<(), LabError> {
    if budget.is_feasible(&trace.values) {
        Ok(())
    } else {
        Err(LabError::InfeasibleTrace {
            delta: budget.delta,
            max_slope: max_slope(&trace.values, budget.window_k),
        })
    }
}

/// Largest windowed average absolute slope of a sequence.
pub fn max_slope(values: &[f64], k: usize) -> f64 {
    (k..values.len())
        .filter_map(|t| ccprobe_core::tracegen::avg_abs_slope(values, t, k).ok())
        .fold(0.0, f64::max)
}

pub fn write_trace(path: &Path, trace: &BandwidthTrace, budget: &SmoothnessBudget) -> anyhow::Result<()> {
    check_feasible(trace, budget).with_context(|| format!("refusing to write {}", path.display()))?;
    write_text(path, &format_trace(trace))
}

/// Writes a trace that deliberately ignores the budget.
pub fn write_trace_unchecked(path: &Path, trace: &BandwidthTrace) -> anyhow::Result<()> {
    write_text(path, &format_trace(trace))
}

/// Millisecond timestamps of every delivery opportunity: capacity is
/// integrated one millisecond at a time and a timestamp is emitted each time
/// the running byte count crosses the next multiple of 1500.
pub fn mahimahi_timestamps(trace: &BandwidthTrace) -> Vec<u64> {
    let per_value = trace.interval / MS;
    let mut out = Vec::new();
    let mut bytes = 0.0;
    let mut next = MAHIMAHI_PACKET;
    let mut ms = 0;
    for &mbps in &trace.values {
        // Mbps over one millisecond is 125 bytes per Mbps.
        let per_ms = mbps * 125.0;
        for _ in 0..per_value {
            ms += 1;
            bytes += per_ms;
            while bytes >= next {
                out.push(ms);
                next += MAHIMAHI_PACKET;
            }
        }
    }
    out
}

pub fn format_mahimahi(trace: &BandwidthTrace) -> String {
    let mut s = String::new();
    for t in mahimahi_timestamps(trace) {
        let _ = writeln!(s, "{t}");
    }
    s
}

pub fn format_checkpoint(policy: &Policy) -> String {
    let mut s = format!("{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}\n");
    let names: Vec<&str> = policy.features.iter().map(|f| f.name()).collect();
    let _ = writeln!(s, "features {}", names.join(" "));
    match policy.topology {
        Topology::Linear => s.push_str("topology linear\n"),
        Topology::Hidden { width } => {
            let _ = writeln!(s, "topology hidden {width}");
        }
    }
    let _ = writeln!(s, "action_bound {}", policy.action_bound);
    let _ = writeln!(s, "norm_mbps {}", policy.norm_mbps);
    let _ = writeln!(s, "params {}", policy.params.len());
    for p in &policy.params {
        let _ = writeln!(s, "{p}");
    }
    s
}

pub fn parse_checkpoint(text: &str) -> anyhow::Result<Policy> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let mut next = |what: &str| lines.next().ok_or_else(|| anyhow!("checkpoint ends before {what}"));
    let header = next("header")?;
    let version = header
        .strip_prefix(CHECKPOINT_MAGIC)
        .and_then(|v| v.trim().strip_prefix('v'))
        .ok_or_else(|| anyhow!("not a policy checkpoint: `{header}`"))?;
    if version.parse::<u32>()? != CHECKPOINT_VERSION {
        bail!("unsupported checkpoint version {version}");
    }
    let field = |line: &str, key: &str| -> anyhow::Result<String> {
        line.strip_prefix(key)
            .map(|r| r.trim().to_string())
            .ok_or_else(|| anyhow!("expected `{key}`, found `{line}`"))
    };
    let features = field(next("features")?, "features")?
        .split_whitespace()
        .map(|f| f.parse::<Feature>().map_err(anyhow::Error::from))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let topo = field(next("topology")?, "topology")?;
    let topology = match topo.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["linear"] => Topology::Linear,
        ["hidden", w] => Topology::Hidden { width: w.parse()? },
        _ => bail!("unknown topology `{topo}`"),
    };
    let action_bound: f64 = field(next("action_bound")?, "action_bound")?.parse()?;
    let norm_mbps: f64 = field(next("norm_mbps")?, "norm_mbps")?.parse()?;
    let n: usize = field(next("params")?, "params")?.parse()?;
    let mut params = Vec::with_capacity(n);
    for _ in 0..n {
        params.push(next("all parameters")?.parse::<f64>()?);
    }
    let policy = Policy {
        features,
        topology,
        action_bound,
        norm_mbps,
        params,
    };
    policy.validate()?;
    Ok(policy)
}

pub fn read_checkpoint(path: &Path) -> anyhow::Result<Policy> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_checkpoint(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_checkpoint(path: &Path, policy: &Policy) -> anyhow::Result<()> {
    write_text(path, &format_checkpoint(policy))
}

/// Provenance line placed at the top of every CSV.
pub fn provenance(config_hash: &str, seed: u64) -> String {
    format!("# config_sha256={config_hash} seed={seed}\n")
}

/// Serializes rows to CSV with a header and a provenance comment.
pub fn csv_string<T: Serialize>(rows: &[T], provenance_line: &str) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| anyhow!("{e}"))?)?;
    Ok(format!("{provenance_line}{body}"))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], provenance_line: &str) -> anyhow::Result<()> {
    write_text(path, &csv_string(rows, provenance_line)?)
}

/// CSV body with comment lines removed, for comparing reruns.
pub fn csv_body(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SeriesRow {
    pub time_ms: f64,
    pub cwnd: f64,
    pub ingress_mbps: f64,
    pub egress_mbps: f64,
    pub capacity_mbps: f64,
}

impl From<&SeriesPoint> for SeriesRow {
    fn from(p: &SeriesPoint) -> Self {
        Self {
            time_ms: p.time as f64 / MS as f64,
            cwnd: p.cwnd,
            ingress_mbps: p.ingress_mbps,
            egress_mbps: p.egress_mbps,
            capacity_mbps: p.capacity_mbps,
        }
    }
}

pub fn write_series(path: &Path, series: &[SeriesPoint], provenance_line: &str) -> anyhow::Result<()> {
    let rows: Vec<SeriesRow> = series.iter().map(SeriesRow::from).collect();
    write_csv(path, &rows, provenance_line)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

/// Every native trace in a directory, in file-name order.
pub fn read_trace_dir(dir: &Path) -> anyhow::Result<Vec<BandwidthTrace>> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "trace"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .trace files in {}", dir.display());
    }
    paths.iter().map(|p| read_trace(p)).collect()
}
