use alloc::format;
use alloc::vec::Vec;

use super::link::LinkState;
use super::transport::Transport;
use super::{BandwidthTrace, EventKind, Observation, ObservationIntercept, PacketEvent, SimConfig, TraceSource};
use crate::cc::{AckInfo, CcHandle, CongestionControl, CwndDecision, LossKind, LpIndication, MAX_CWND};
use crate::{Error, Micros, Result, MS, SEC};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum BackoffCause {
    Loss(LossKind),
    Early(LpIndication),
}

/// A controller reaction that shrank (or was meant to shrink) the window.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Backoff {
    pub time: Micros,
    pub cause: BackoffCause,
    pub cwnd_before: f64,
    pub cwnd_after: f64,
}

/// Rates over one monitoring interval, for plotting.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SeriesPoint {
    pub time: Micros,
    pub cwnd: f64,
    pub ingress_mbps: f64,
    pub egress_mbps: f64,
    pub capacity_mbps: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpisodeCounters {
    /// Transmissions offered to the bottleneck, including retransmissions.
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    /// Packets still queued at the end.
    pub queued: u64,
    pub unique_delivered: u64,
    pub acks: u64,
    pub losses_detected: u64,
    pub timeouts: u64,
}

/// Everything an episode produced.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpisodeLog {
    pub duration: Micros,
    pub base_rtt: Micros,
    pub packet_size: u32,
    /// The capacity the link actually ran at, one value per trace interval.
    pub trace: BandwidthTrace,
    /// Ground-truth observations, one per monitoring interval.
    pub observations: Vec<Observation>,
    /// Min-RTT (ms) the controller was shown, one per trace interval.
    pub perceived_min_rtt_ms: Vec<f64>,
    pub series: Vec<SeriesPoint>,
    /// RTT of every ACK that reached the sender.
    pub rtt_samples: Vec<Micros>,
    /// Per-packet events; empty unless `SimConfig::record_events`.
    pub events: Vec<PacketEvent>,
    pub backoffs: Vec<Backoff>,
    pub counters: EpisodeCounters,
}

impl EpisodeLog {
    pub fn unique_delivered_bytes(&self) -> u64 {
        self.counters.unique_delivered * self.packet_size as u64
    }

    pub fn early_backoffs(&self) -> usize {
        self.backoffs
            .iter()
            .filter(|b| matches!(b.cause, BackoffCause::Early(_)))
            .count()
    }

    pub fn loss_backoffs(&self) -> usize {
        self.backoffs
            .iter()
            .filter(|b| matches!(b.cause, BackoffCause::Loss(_)))
            .count()
    }
}

/// Per-interval accumulators.
#[derive(Debug, Clone, Copy, Default)]
struct Window {
    acked_bytes: u64,
    lost_packets: u64,
    capacity_bytes: f64,
    sent: u64,
    delivered: u64,
    unique: u64,
}

struct Sim<'a> {
    config: &'a SimConfig,
    link: LinkState,
    tx: Transport,
    cc: &'a mut CcHandle,
    cwnd: f64,
    pacing: Option<f64>,
    min_rtt_scale: f64,
    log: EpisodeLog,
    window: Window,
    lost: Vec<u64>,
}

impl Sim<'_> {
    fn apply(&mut self, d: CwndDecision) {
        self.cwnd = if d.cwnd.is_nan() {
            1.0
        } else {
            d.cwnd.clamp(1.0, MAX_CWND)
        };
        if d.pacing_rate.is_some() {
            self.pacing = d.pacing_rate;
        }
    }

    fn backoff(&mut self, now: Micros, cause: BackoffCause, before: f64) {
        self.log.backoffs.push(Backoff {
            time: now,
            cause,
            cwnd_before: before,
            cwnd_after: self.cwnd,
        });
    }

    fn process_acks(&mut self, now: Micros) {
        let ps = self.config.packet_size;
        while let Some(ack) = self.tx.pop_due_ack(now) {
            self.lost.clear();
            let mut lost = core::mem::take(&mut self.lost);
            let out = self.tx.on_ack(&ack, now, &mut lost);
            self.log.counters.acks += 1;
            self.log.rtt_samples.push(out.rtt);
            if self.config.record_events {
                self.log.events.push(PacketEvent {
                    kind: EventKind::AckReceived,
                    seq: ack.seq,
                    time: now,
                    rtt_sample: Some(out.rtt),
                    owd_sample: Some(out.owd),
                });
            }
            if out.newly_acked {
                self.window.acked_bytes += ps as u64;
                let before = self.cwnd;
                let d = self.cc.on_ack(&AckInfo {
                    now,
                    rtt_sample: out.rtt,
                    owd_sample: out.owd,
                    acked_bytes: ps as u64,
                    delivered_in_rtt: out.delivered_during_flight,
                    packet_size: ps,
                    min_rtt_scale: self.min_rtt_scale,
                });
                self.apply(d);
                if let Some(ind) = d.indication {
                    self.backoff(now, BackoffCause::Early(ind), before);
                }
            }
            for &seq in &lost {
                self.log.counters.losses_detected += 1;
                self.window.lost_packets += 1;
                if self.tx.enter_recovery(seq) {
                    let before = self.cwnd;
                    let d = self.cc.on_loss(LossKind::TripleDupAck, now);
                    self.apply(d);
                    self.backoff(now, BackoffCause::Loss(LossKind::TripleDupAck), before);
                }
                let pkt = self.tx.retransmit(seq, now);
                self.window.sent += 1;
                let events = self.config.record_events.then_some(&mut self.log.events);
                self.link.enqueue(pkt, now, events);
            }
            self.lost = lost;
            if self.tx.take_recovery_exit() {
                let d = self.cc.on_recovery_exit(now);
                self.apply(d);
            }
        }
    }

    fn check_timeout(&mut self, now: Micros) {
        if let Some(marked) = self.tx.check_timeout(now) {
            self.log.counters.timeouts += 1;
            self.window.lost_packets += marked;
            let before = self.cwnd;
            let d = self.cc.on_loss(LossKind::Timeout, now);
            self.apply(d);
            self.backoff(now, BackoffCause::Loss(LossKind::Timeout), before);
        }
    }

    fn observe(&mut self, now: Micros) -> Observation {
        let secs = self.config.monitor_interval as f64 / SEC as f64;
        let base = self.config.base_rtt() as f64 / MS as f64;
        let ps = self.config.packet_size as f64;
        let w = core::mem::take(&mut self.window);
        let to_mbps = |bytes: f64| bytes * 8.0 / secs / 1e6;
        let utilization = if w.capacity_bytes > 0.0 {
            (w.unique as f64 * ps / w.capacity_bytes).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let capacity_mbps = to_mbps(w.capacity_bytes);
        let obs = Observation {
            time: now,
            rtt_ms: self.tx.srtt().map_or(base, |s| s / MS as f64),
            min_rtt_ms: self.tx.min_rtt().map_or(base, |m| m as f64 / MS as f64),
            throughput_mbps: to_mbps(w.acked_bytes as f64),
            loss_mbps: to_mbps(w.lost_packets as f64 * ps),
            utilization,
            capacity_mbps,
            cwnd: self.cwnd,
        };
        self.log.series.push(SeriesPoint {
            time: now,
            cwnd: self.cwnd,
            ingress_mbps: to_mbps(w.sent as f64 * ps),
            egress_mbps: to_mbps(w.delivered as f64 * ps),
            capacity_mbps,
        });
        self.log.observations.push(obs);
        obs
    }

    fn tick(&mut self, now: Micros) {
        self.tx.refill_pacing(self.pacing, self.config.tick);
        let before = self.link.counters;
        let cwnd = self.cwnd;
        let events = self.config.record_events.then_some(&mut self.log.events);
        self.link.advance_tick(&mut self.tx, cwnd, now, events);
        let after = self.link.counters;
        self.window.sent += after.sent - before.sent;
        self.window.delivered += after.delivered - before.delivered;
        self.window.unique += after.unique_delivered - before.unique_delivered;
        self.window.capacity_bytes += self.link.current_capacity() * self.config.tick as f64 / 8.0;
    }
}

/// Runs one episode. The controller should be freshly built; it is left in
/// its final state so callers can inspect it.
///
/// With `TraceSource::Fixed` the trace interval must match the config and the
/// last value holds if the trace is shorter than the episode. With
/// `TraceSource::Driven` the driver picks each interval's capacity from the
/// previous interval's ground-truth observation.
pub fn run_episode(
    config: &SimConfig,
    source: TraceSource<'_>,
    controller: &mut CcHandle,
    mut intercept: Option<&mut dyn ObservationIntercept>,
) -> Result<EpisodeLog> {
    config.validate()?;
    let (peak, mut source) = match source {
        TraceSource::Fixed(trace) => {
            if trace.interval != config.trace_interval {
                return Err(Error::Config(format!(
                    "trace interval {} us differs from configured trace_interval {} us",
                    trace.interval, config.trace_interval
                )));
            }
            if trace.is_empty() {
                return Err(Error::Config("bandwidth trace must be non-empty".into()));
            }
            (
                config.buffer_peak_mbps.unwrap_or(trace.peak()),
                TraceSource::Fixed(trace),
            )
        }
        TraceSource::Driven(driver) => {
            driver.begin(config.rng_seed);
            let peak = config.buffer_peak_mbps.unwrap_or(driver.peak_capacity());
            (peak, TraceSource::Driven(driver))
        }
    };
    if let Some(i) = intercept.as_deref_mut() {
        i.begin(config.rng_seed);
    }

    let cwnd = controller.cwnd().max(1.0);
    let pacing = controller.decision().pacing_rate;
    let mut sim = Sim {
        config,
        link: LinkState::new(config, peak),
        tx: Transport::new(
            config.packet_size,
            config.one_way_delay,
            config.min_rto,
            config.initial_rto,
        ),
        cc: controller,
        cwnd,
        pacing,
        min_rtt_scale: 1.0,
        log: EpisodeLog {
            duration: config.episode_duration,
            base_rtt: config.base_rtt(),
            packet_size: config.packet_size,
            trace: BandwidthTrace {
                interval: config.trace_interval,
                values: Vec::with_capacity(config.trace_len()),
            },
            observations: Vec::new(),
            perceived_min_rtt_ms: Vec::new(),
            series: Vec::new(),
            rtt_samples: Vec::new(),
            events: Vec::new(),
            backoffs: Vec::new(),
            counters: EpisodeCounters::default(),
        },
        window: Window::default(),
        lost: Vec::new(),
    };

    let mut last_obs = Observation::initial(config, 0.0, cwnd);
    let mut now: Micros = 0;
    loop {
        sim.process_acks(now);
        sim.check_timeout(now);
        if now > 0 && now % config.monitor_interval == 0 {
            last_obs = sim.observe(now);
        }
        if now >= config.episode_duration {
            break;
        }
        if now % config.trace_interval == 0 {
            let capacity = match &mut source {
                TraceSource::Fixed(trace) => trace.capacity_at(now),
                TraceSource::Driven(driver) => {
                    let c = driver.next_capacity(&last_obs);
                    if c.is_finite() {
                        c.max(0.0)
                    } else {
                        0.0
                    }
                }
            };
            sim.link.set_capacity(capacity);
            sim.log.trace.values.push(capacity);
            if now == 0 {
                last_obs.capacity_mbps = capacity;
            }
            if let Some(i) = intercept.as_deref_mut() {
                let perceived = i.perceived_min_rtt(&last_obs);
                sim.min_rtt_scale = if last_obs.min_rtt_ms > 0.0 && perceived.is_finite() && perceived > 0.0 {
                    perceived / last_obs.min_rtt_ms
                } else {
                    1.0
                };
                sim.log
                    .perceived_min_rtt_ms
                    .push(last_obs.min_rtt_ms * sim.min_rtt_scale);
            }
        }
        if now > 0 && now % config.monitor_interval == 0 {
            let mut seen = last_obs;
            seen.min_rtt_ms *= sim.min_rtt_scale;
            let d = sim.cc.on_interval(&seen);
            sim.apply(d);
        }
        sim.tick(now);
        now += config.tick;
    }

    let link = sim.link.counters;
    sim.log.counters.sent = link.sent;
    sim.log.counters.delivered = link.delivered;
    sim.log.counters.dropped = link.dropped;
    sim.log.counters.unique_delivered = link.unique_delivered;
    sim.log.counters.queued = sim.link.queue_len() as u64;
    Ok(sim.log)
}
