//! Episode-level metrics.
//!
//! Delays are measured against the ground-truth base RTT of the path, never
//! against an estimate a controller may have been fed. Percentiles use the
//! nearest-rank definition.
//!
//! Window smoothness comes in two forms. The linear one is the average
//! absolute slope used for bandwidth budgets, applied to cwnd samples and
//! averaged over the series. The log-scaled one replaces each step by
//! `|ln b_i - ln b_{i-1}| / (t_i - t_{i-1})` (natural log, seconds), which
//! makes it invariant to rescaling the window. The linear form has no time
//! normalization; both are computed literally.

use alloc::format;
use alloc::vec::Vec;

use crate::learned::{mean_reward, RewardParams};
use crate::netsim::{BandwidthTrace, EpisodeLog, SeriesPoint};
use crate::tracegen::avg_abs_slope;
use crate::{Error, Micros, Result, MS, SEC};

/// Unique delivered bytes over the capacity integral, clamped to `[0, 1]`.
pub fn utilization(log: &EpisodeLog, trace: &BandwidthTrace) -> Result<f64> {
    if log.duration != trace.duration() {
        return Err(Error::DurationMismatch {
            log_us: log.duration,
            trace_us: trace.duration(),
        });
    }
    let capacity = trace.capacity_bytes();
    if capacity <= 0.0 {
        return Ok(0.0);
    }
    Ok((log.unique_delivered_bytes() as f64 / capacity).clamp(0.0, 1.0))
}

/// Nearest-rank percentile of an ascending slice; `p` in `(0, 100]`.
pub fn nearest_rank(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = libm::ceil(p / 100.0 * sorted.len() as f64) as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Mean and P95 of per-ACK queuing delays in ms.
pub fn delay_stats_ms(delays: &[f64]) -> Result<(f64, f64)> {
    if delays.is_empty() {
        return Err(Error::EmptyLog);
    }
    let mean = delays.iter().sum::<f64>() / delays.len() as f64;
    let mut sorted = delays.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((mean, nearest_rank(&sorted, 95.0).unwrap_or(0.0)))
}

/// Mean and P95 queuing delay (ms) of every ACK: RTT minus `base_rtt`.
pub fn delay_stats(log: &EpisodeLog, base_rtt: Micros) -> Result<(f64, f64)> {
    let delays: Vec<f64> = log
        .rtt_samples
        .iter()
        .map(|&r| r.saturating_sub(base_rtt) as f64 / MS as f64)
        .collect();
    delay_stats_ms(&delays)
}

/// Mean per-ACK queuing delay in ms, or 0 when no ACK arrived.
pub fn mean_delay(log: &EpisodeLog) -> f64 {
    delay_stats(log, log.base_rtt).map_or(0.0, |(m, _)| m)
}

/// Linear and log-scaled smoothness of a `(seconds, cwnd)` series.
pub fn cwnd_smoothness(series: &[(f64, f64)], k: usize) -> Result<(f64, f64)> {
    if k == 0 || series.len() < k + 1 {
        return Err(Error::Index { t: series.len(), k });
    }
    if let Some(&(_, c)) = series.iter().find(|(_, c)| !(*c > 0.0)) {
        return Err(Error::Domain(format!("cwnd must be positive, got {c}")));
    }
    if series.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::Domain("timestamps must be strictly increasing".into()));
    }
    let values: Vec<f64> = series.iter().map(|&(_, c)| c).collect();
    let steps = series.len() - k;
    let mut linear = 0.0;
    let mut log_scaled = 0.0;
    for t in k..series.len() {
        linear += avg_abs_slope(&values, t, k)?;
        let mut s = 0.0;
        for i in t + 1 - k..=t {
            let (t1, b1) = series[i];
            let (t0, b0) = series[i - 1];
            s += libm::fabs(libm::log(b1) - libm::log(b0)) / (t1 - t0);
        }
        log_scaled += s / k as f64;
    }
    Ok((linear / steps as f64, log_scaled / steps as f64))
}

/// The cwnd samples of an episode as `(seconds, cwnd)`.
pub fn cwnd_series(log: &EpisodeLog) -> Vec<(f64, f64)> {
    log.series
        .iter()
        .map(|p| (p.time as f64 / SEC as f64, p.cwnd))
        .collect()
}

/// Summary of one episode.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpisodeReport {
    pub utilization: f64,
    pub mean_delay_ms: f64,
    pub p95_delay_ms: f64,
    pub mean_reward: f64,
    pub smoothness_linear: f64,
    pub smoothness_log: f64,
    pub loss_backoffs: usize,
    pub early_backoffs: usize,
    pub series: Vec<SeriesPoint>,
}

impl EpisodeReport {
    pub fn from_log(log: &EpisodeLog, reward: &RewardParams) -> Result<Self> {
        let utilization = utilization(log, &log.trace)?;
        let (mean_delay_ms, p95_delay_ms) = delay_stats(log, log.base_rtt).unwrap_or((0.0, 0.0));
        let (smoothness_linear, smoothness_log) = cwnd_smoothness(&cwnd_series(log), 1).unwrap_or((0.0, 0.0));
        Ok(Self {
            utilization,
            mean_delay_ms,
            p95_delay_ms,
            mean_reward: mean_reward(&log.observations, reward).unwrap_or(0.0),
            smoothness_linear,
            smoothness_log,
            loss_backoffs: log.loss_backoffs(),
            early_backoffs: log.early_backoffs(),
            series: log.series.clone(),
        })
    }
}
