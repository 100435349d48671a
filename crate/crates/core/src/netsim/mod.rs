//! Single-flow bottleneck path simulation.
//!
//! Time advances in fixed ticks. Within a tick the order is fixed:
//!
//! 1. ACKs due at or before `now` reach the sender and drive the controller;
//!    losses revealed by those ACKs trigger recovery and instant retransmission.
//! 2. The retransmission timer is checked.
//! 3. At monitoring-interval boundaries an [`Observation`] is emitted; at trace
//!    interval boundaries the optional adversaries act.
//! 4. [`LinkState::advance_tick`] injects new packets up to the window and
//!    serves the FIFO at the current capacity.
//!
//! Nothing in the loop draws random numbers of its own, so equal inputs give
//! equal logs; the episode seed is only handed to the pluggable adversaries.

mod episode;
mod link;
mod transport;

pub use episode::{run_episode, Backoff, BackoffCause, EpisodeCounters, EpisodeLog, SeriesPoint};
pub use link::{LinkCounters, LinkState, QueuedPacket};
pub use transport::Transport;

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Micros, Result, MS, SEC};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimConfig {
    pub tick: Micros,
    pub one_way_delay: Micros,
    /// Buffer size as a multiple of the bandwidth-delay product at the
    /// trace's peak capacity.
    pub queue_capacity_bdp: f64,
    pub packet_size: u32,
    pub episode_duration: Micros,
    pub trace_interval: Micros,
    /// Observation period; must divide `trace_interval`.
    pub monitor_interval: Micros,
    pub rng_seed: u64,
    /// Keep the full per-packet event log (large; off for training).
    pub record_events: bool,
    pub min_rto: Micros,
    pub initial_rto: Micros,
    /// Capacity used to size the buffer instead of the trace's own peak, so
    /// that every trace of one experiment sees the same queue.
    pub buffer_peak_mbps: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            tick: MS,
            one_way_delay: 10 * MS,
            queue_capacity_bdp: 2.0,
            packet_size: 1500,
            episode_duration: 60 * SEC,
            trace_interval: 100 * MS,
            monitor_interval: 100 * MS,
            rng_seed: 0,
            record_events: false,
            min_rto: 200 * MS,
            initial_rto: SEC,
            buffer_peak_mbps: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg| Err(Error::Config(msg));
        if self.tick == 0 {
            return fail("tick must be positive".into());
        }
        if !(self.queue_capacity_bdp > 0.0 && self.queue_capacity_bdp.is_finite()) {
            return fail(format!(
                "queue_capacity_bdp must be positive, got {}",
                self.queue_capacity_bdp
            ));
        }
        if self.packet_size == 0 {
            return fail("packet_size must be positive".into());
        }
        if self.trace_interval == 0 || self.trace_interval % self.tick != 0 {
            return fail(format!(
                "trace_interval {} us is not a positive multiple of tick {} us",
                self.trace_interval, self.tick
            ));
        }
        if self.monitor_interval == 0
            || self.monitor_interval % self.tick != 0
            || self.trace_interval % self.monitor_interval != 0
        {
            return fail(format!(
                "monitor_interval {} us must be a multiple of tick and divide trace_interval",
                self.monitor_interval
            ));
        }
        if let Some(peak) = self.buffer_peak_mbps {
            if !(peak > 0.0 && peak.is_finite()) {
                return fail(format!("buffer_peak_mbps must be positive, got {peak}"));
            }
        }
        if self.episode_duration == 0 || self.episode_duration % self.trace_interval != 0 {
            return fail(format!(
                "episode_duration {} us is not a positive multiple of trace_interval {} us",
                self.episode_duration, self.trace_interval
            ));
        }
        Ok(())
    }

    /// Propagation-only round trip time.
    pub fn base_rtt(&self) -> Micros {
        2 * self.one_way_delay
    }

    pub fn trace_len(&self) -> usize {
        (self.episode_duration / self.trace_interval) as usize
    }

    /// Bandwidth-delay product in packets for a capacity in Mbps.
    pub fn bdp_packets(&self, capacity_mbps: f64) -> f64 {
        capacity_mbps * 1e6 / 8.0 * (self.base_rtt() as f64 / SEC as f64) / self.packet_size as f64
    }

    /// Drop-tail limit in bytes for a trace whose peak capacity is given.
    pub fn queue_limit_bytes(&self, peak_mbps: f64) -> u64 {
        let bdp_bytes = peak_mbps * 1e6 / 8.0 * (self.base_rtt() as f64 / SEC as f64);
        let limit = libm::floor(self.queue_capacity_bdp * bdp_bytes) as u64;
        // A zero-delay path still needs room for one packet.
        limit.max(self.packet_size as u64)
    }
}

/// Available capacity, one value in Mbps per fixed interval.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BandwidthTrace {
    pub interval: Micros,
    pub values: Vec<f64>,
}

impl BandwidthTrace {
    pub fn new(interval: Micros, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("bandwidth trace must be non-empty".into()));
        }
        if interval == 0 {
            return Err(Error::Config("trace interval must be positive".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Config(format!("invalid capacity value {v}")));
        }
        Ok(Self { interval, values })
    }

    pub fn constant(mbps: f64, interval: Micros, len: usize) -> Self {
        Self {
            interval,
            values: alloc::vec![mbps; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn duration(&self) -> Micros {
        self.interval * self.values.len() as Micros
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Capacity in force at time `t`; the last value holds past the end.
    pub fn capacity_at(&self, t: Micros) -> f64 {
        let idx = ((t / self.interval) as usize).min(self.values.len() - 1);
        self.values[idx]
    }

    /// Total deliverable bytes over the whole trace.
    pub fn capacity_bytes(&self) -> f64 {
        let secs = self.interval as f64 / SEC as f64;
        self.values.iter().map(|v| v * 1e6 / 8.0 * secs).sum()
    }

    pub fn in_range(&self, lo: f64, hi: f64) -> bool {
        self.values.iter().all(|v| *v >= lo && *v <= hi)
    }
}

/// Per-monitoring-interval snapshot shared by controllers and adversaries.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Observation {
    /// End of the interval.
    pub time: Micros,
    /// Smoothed RTT.
    pub rtt_ms: f64,
    pub min_rtt_ms: f64,
    /// Goodput acknowledged during the interval.
    pub throughput_mbps: f64,
    /// Rate of data declared lost during the interval.
    pub loss_mbps: f64,
    /// Unique bytes leaving the bottleneck over bytes it could have carried.
    pub utilization: f64,
    pub capacity_mbps: f64,
    pub cwnd: f64,
}

impl Observation {
    /// Observation used before any interval has completed.
    pub fn initial(config: &SimConfig, capacity_mbps: f64, cwnd: f64) -> Self {
        let base = config.base_rtt() as f64 / MS as f64;
        Self {
            time: 0,
            rtt_ms: base,
            min_rtt_ms: base,
            throughput_mbps: 0.0,
            loss_mbps: 0.0,
            utilization: 0.0,
            capacity_mbps,
            cwnd,
        }
    }

    /// `rtt - min_rtt`, in ms.
    pub fn queuing_delay_ms(&self) -> f64 {
        self.rtt_ms - self.min_rtt_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum EventKind {
    Sent,
    Delivered,
    Dropped,
    AckReceived,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PacketEvent {
    pub kind: EventKind,
    pub seq: u64,
    pub time: Micros,
    /// Present on `AckReceived`.
    pub rtt_sample: Option<Micros>,
    /// One-way delay of the acknowledged transmission; present on `AckReceived`.
    pub owd_sample: Option<Micros>,
}

/// Rewrites the controller-visible minimum RTT without touching the path.
///
/// Called once per trace interval with the ground-truth observation of the
/// interval that just ended; the returned value (ms) is what the controller
/// reads as its min-RTT estimate until the next call.
pub trait ObservationIntercept {
    fn begin(&mut self, _seed: u64) {}
    fn perceived_min_rtt(&mut self, obs: &Observation) -> f64;
}

/// Chooses the bottleneck capacity online, one trace interval at a time.
pub trait EnvDriver {
    fn begin(&mut self, _seed: u64) {}
    /// Capacity in Mbps for the next trace interval.
    fn next_capacity(&mut self, obs: &Observation) -> f64;
    /// Peak capacity the driver can emit; sizes the buffer.
    fn peak_capacity(&self) -> f64;
}

/// Where the episode's bandwidth comes from.
pub enum TraceSource<'a> {
    Fixed(&'a BandwidthTrace),
    Driven(&'a mut dyn EnvDriver),
}
