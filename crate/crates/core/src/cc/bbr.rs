use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{clamp_cwnd, AckInfo, CongestionControl, CwndDecision, LossKind, Phase, MIN_SSTHRESH};
use crate::{Error, Micros, Result, SEC};

/// Startup gain: the smallest that doubles the delivery rate every round.
const HIGH_GAIN: f64 = 2.885_390_081_777_927;
/// Rounds without 25% bandwidth growth before startup ends.
const FULL_BW_ROUNDS: u32 = 3;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct BbrParams {
    /// Length of the max-bandwidth window, in min-RTTs.
    pub bw_window_rtts: f64,
    pub min_rtt_window: Micros,
    pub cwnd_gain: f64,
    pub gain_cycle: Vec<f64>,
    pub min_cwnd: f64,
    /// Run an exponential startup before cycling; otherwise cycle from the first sample.
    pub startup: bool,
}

impl Default for BbrParams {
    fn default() -> Self {
        Self {
            bw_window_rtts: 10.0,
            min_rtt_window: 10 * SEC,
            cwnd_gain: 2.0,
            gain_cycle: vec![1.25, 0.75, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            min_cwnd: 4.0,
            startup: true,
        }
    }
}

impl BbrParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.bw_window_rtts > 0.0
            && self.min_rtt_window > 0
            && self.cwnd_gain > 0.0
            && !self.gain_cycle.is_empty()
            && self.gain_cycle.iter().all(|g| *g > 0.0)
            && self.min_cwnd >= 1.0;
        if !ok {
            return Err(Error::Config(format!("invalid bbrlite constants {self:?}")));
        }
        Ok(())
    }
}

/// Running maximum over a sliding time window.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowedMax {
    samples: VecDeque<(Micros, f64)>,
}

impl WindowedMax {
    pub fn update(&mut self, now: Micros, value: f64, window: Micros) {
        while self.samples.back().is_some_and(|&(_, v)| v <= value) {
            self.samples.pop_back();
        }
        self.samples.push_back((now, value));
        self.expire(now, window);
    }

    fn expire(&mut self, now: Micros, window: Micros) {
        while self.samples.len() > 1 && self.samples.front().is_some_and(|&(t, _)| t + window < now) {
            self.samples.pop_front();
        }
    }

    pub fn get(&self) -> Option<f64> {
        self.samples.front().map(|&(_, v)| v)
    }
}

/// Running minimum over a sliding time window.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowedMin {
    inner: WindowedMax,
}

impl WindowedMin {
    pub fn update(&mut self, now: Micros, value: f64, window: Micros) {
        self.inner.update(now, -value, window);
    }

    pub fn get(&self) -> Option<f64> {
        self.inner.get().map(|v| -v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Startup,
    Drain,
    ProbeBw,
}

/// Simplified BBR: windowed bandwidth and min-RTT models, an exponential
/// startup with a one-round drain, then a fixed pacing-gain cycle. There is
/// no ProbeRTT state.
#[derive(Debug, Clone, PartialEq)]
pub struct BbrLite {
    pub params: BbrParams,
    pub cwnd: f64,
    /// Bytes per second.
    pub bw: WindowedMax,
    /// Microseconds.
    pub min_rtt: WindowedMin,
    pub cycle_index: usize,
    mode: Mode,
    cycle_start: Micros,
    round_end: Micros,
    full_bw: f64,
    full_bw_rounds: u32,
    min_rtt_scale: f64,
}

impl BbrLite {
    pub fn new(initial_cwnd: f64, params: BbrParams) -> Self {
        let mode = if params.startup { Mode::Startup } else { Mode::ProbeBw };
        Self {
            params,
            cwnd: clamp_cwnd(initial_cwnd),
            bw: WindowedMax::default(),
            min_rtt: WindowedMin::default(),
            cycle_index: 0,
            mode,
            cycle_start: 0,
            round_end: 0,
            full_bw: 0.0,
            full_bw_rounds: 0,
            min_rtt_scale: 1.0,
        }
    }

    /// Min-RTT estimate in µs as the controller sees it.
    pub fn min_rtt_estimate(&self) -> Option<f64> {
        self.min_rtt.get().map(|m| m * self.min_rtt_scale)
    }

    pub fn pacing_gain(&self) -> f64 {
        match self.mode {
            Mode::Startup => HIGH_GAIN,
            Mode::Drain => 1.0 / HIGH_GAIN,
            Mode::ProbeBw => self.params.gain_cycle[self.cycle_index],
        }
    }

    fn cwnd_gain(&self) -> f64 {
        match self.mode {
            Mode::Startup => HIGH_GAIN,
            _ => self.params.cwnd_gain,
        }
    }

    /// `gain * bw * min_rtt` in packets, for `bw` in bytes/s and `min_rtt` in µs.
    pub fn target_cwnd(gain: f64, bw: f64, min_rtt: f64, packet_size: u32) -> f64 {
        gain * bw * (min_rtt / SEC as f64) / packet_size as f64
    }

    /// The model update run on every ACK.
    pub fn bbr_lite_update(&mut self, ack: &AckInfo) -> CwndDecision {
        self.min_rtt_scale = ack.min_rtt_scale;
        let rtt = ack.rtt_sample.max(1);
        self.min_rtt.update(ack.now, rtt as f64, self.params.min_rtt_window);
        let min_rtt = self.min_rtt_estimate().unwrap_or(rtt as f64).max(1.0);

        let sample = ack.delivered_in_rtt as f64 / (rtt as f64 / SEC as f64);
        let window = libm::ceil(self.params.bw_window_rtts * min_rtt) as Micros;
        self.bw.update(ack.now, sample, window);
        let bw = self.bw.get().unwrap_or(sample);

        if ack.now >= self.round_end {
            self.round_end = ack.now + min_rtt as Micros;
            self.on_round(bw, ack.now);
        }
        if self.mode == Mode::ProbeBw && (ack.now - self.cycle_start) as f64 >= min_rtt {
            self.cycle_index = (self.cycle_index + 1) % self.params.gain_cycle.len();
            self.cycle_start = ack.now;
        }

        let target = Self::target_cwnd(self.cwnd_gain(), bw, min_rtt, ack.packet_size);
        self.cwnd = target.max(self.params.min_cwnd);
        CwndDecision {
            cwnd: self.cwnd,
            pacing_rate: Some(self.pacing_gain() * bw),
            indication: None,
        }
    }

    fn on_round(&mut self, bw: f64, now: Micros) {
        match self.mode {
            Mode::Startup => {
                if bw >= self.full_bw * 1.25 {
                    self.full_bw = bw;
                    self.full_bw_rounds = 0;
                } else {
                    self.full_bw_rounds += 1;
                    if self.full_bw_rounds >= FULL_BW_ROUNDS {
                        self.mode = Mode::Drain;
                    }
                }
            }
            Mode::Drain => {
                self.mode = Mode::ProbeBw;
                self.cycle_index = 0;
                self.cycle_start = now;
            }
            Mode::ProbeBw => {}
        }
    }
}

impl CongestionControl for BbrLite {
    fn on_ack(&mut self, ack: &AckInfo) -> CwndDecision {
        self.bbr_lite_update(ack)
    }

    fn on_loss(&mut self, kind: LossKind, _now: Micros) -> CwndDecision {
        if kind == LossKind::Timeout {
            self.cwnd = 1.0;
            if self.params.startup {
                self.mode = Mode::Startup;
                self.full_bw = 0.0;
                self.full_bw_rounds = 0;
            }
        }
        self.decision()
    }

    fn cwnd(&self) -> f64 {
        self.cwnd
    }

    fn phase(&self) -> Phase {
        match self.mode {
            Mode::Startup => Phase::SlowStart,
            _ => Phase::CongestionAvoidance,
        }
    }

    fn ssthresh(&self) -> f64 {
        MIN_SSTHRESH.max(self.cwnd)
    }

    fn decision(&self) -> CwndDecision {
        let bw = self.bw.get();
        CwndDecision {
            cwnd: self.cwnd,
            pacing_rate: bw.map(|b| b * self.pacing_gain()),
            indication: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::MS;

    #[test]
    fn bdp_arithmetic() {
        let bw = 12e6 / 8.0;
        assert!((BbrLite::target_cwnd(1.0, bw, 20_000.0, 1500) - 20.0).abs() < 1e-9);
        assert!((BbrLite::target_cwnd(2.0, bw, 20_000.0, 1500) - 40.0).abs() < 1e-9);
    }

    #[test]
    fn min_filter_keeps_window_minimum() {
        let mut f = WindowedMin::default();
        for (i, v) in [25.0, 21.0, 23.0].into_iter().enumerate() {
            f.update(i as Micros * MS, v, 10 * SEC);
        }
        assert_eq!(f.get(), Some(21.0));
    }

    #[test]
    fn filters_expire_old_samples() {
        let mut f = WindowedMax::default();
        f.update(0, 10.0, 100);
        f.update(50, 5.0, 100);
        assert_eq!(f.get(), Some(10.0));
        f.update(200, 4.0, 100);
        assert_eq!(f.get(), Some(4.0));
    }

    #[test]
    fn steady_state_cycle() {
        let params = BbrParams {
            startup: false,
            ..BbrParams::default()
        };
        let mut b = BbrLite::new(10.0, params);
        // 12 Mbps delivered over a 20 ms RTT: 20 packets per round trip.
        let mut ack = AckInfo::simple(0, 20 * MS, 10 * MS, 1500);
        ack.delivered_in_rtt = 20 * 1500;
        let d = b.on_ack(&ack);
        assert!((d.cwnd - 40.0).abs() < 1e-9);
        assert_eq!(b.cycle_index, 0);
        assert!((d.pacing_rate.unwrap() - 1.25 * 1.5e6).abs() < 1e-6);
        ack.now = 20 * MS;
        b.on_ack(&ack);
        assert_eq!(b.cycle_index, 1);
    }
}
