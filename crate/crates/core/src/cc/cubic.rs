use super::{clamp_cwnd, AckInfo, CongestionControl, CwndDecision, LossKind, Phase, MIN_SSTHRESH};
use crate::{Error, Micros, Result, SEC};
use alloc::format;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct CubicParams {
    pub c: f64,
    pub beta: f64,
    pub fast_convergence: bool,
    pub tcp_friendly: bool,
}

impl Default for CubicParams {
    fn default() -> Self {
        Self {
            c: 0.4,
            beta: 0.7,
            fast_convergence: true,
            tcp_friendly: true,
        }
    }
}

impl CubicParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config(format!(
                "cubic needs c > 0 and beta in (0,1), got c={} beta={}",
                self.c, self.beta
            )));
        }
        Ok(())
    }
}

/// Time for the cubic curve to climb back to `w_max` after a reduction.
pub fn cubic_k(w_max: f64, c: f64, beta: f64) -> f64 {
    libm::cbrt(w_max * (1.0 - beta) / c)
}

/// `W(t) = C (t - K)^3 + w_max`, `t` in seconds since the reduction.
pub fn cubic_window(t: f64, w_max: f64, c: f64, beta: f64) -> f64 {
    let d = t - cubic_k(w_max, c, beta);
    c * d * d * d + w_max
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cubic {
    pub params: CubicParams,
    pub cwnd: f64,
    pub ssthresh: f64,
    pub phase: Phase,
    pub w_max: f64,
    /// Start of the current growth epoch; cleared by every reduction.
    pub epoch_start: Option<Micros>,
    origin: f64,
    k: f64,
    /// Reno-equivalent window for the friendly region.
    w_est: f64,
    min_rtt: Option<Micros>,
}

impl Cubic {
    pub fn new(initial_cwnd: f64, params: CubicParams) -> Self {
        Self {
            params,
            cwnd: clamp_cwnd(initial_cwnd),
            ssthresh: f64::INFINITY,
            phase: Phase::SlowStart,
            w_max: 0.0,
            epoch_start: None,
            origin: 0.0,
            k: 0.0,
            w_est: 0.0,
            min_rtt: None,
        }
    }

    fn avoidance(&mut self, ack: &AckInfo) {
        let p = self.params;
        let start = *self.epoch_start.get_or_insert_with(|| {
            if self.cwnd < self.w_max {
                self.k = libm::cbrt((self.w_max - self.cwnd) / p.c);
                self.origin = self.w_max;
            } else {
                self.k = 0.0;
                self.origin = self.cwnd;
            }
            self.w_est = self.cwnd;
            ack.now
        });
        let rtt = self.min_rtt.unwrap_or(ack.rtt_sample) as f64 / SEC as f64;
        let t = (ack.now - start) as f64 / SEC as f64 + rtt;
        let d = t - self.k;
        let target = self.origin + p.c * d * d * d;
        let acked = ack.acked_packets();
        if target > self.cwnd {
            self.cwnd += acked * (target - self.cwnd) / self.cwnd;
        } else {
            self.cwnd += acked * 0.01 / self.cwnd;
        }
        if p.tcp_friendly {
            self.w_est += acked * 3.0 * (1.0 - p.beta) / (1.0 + p.beta) / self.cwnd;
            if self.w_est > self.cwnd {
                self.cwnd = self.w_est;
            }
        }
    }
}

impl CongestionControl for Cubic {
    fn on_ack(&mut self, ack: &AckInfo) -> CwndDecision {
        self.min_rtt = Some(self.min_rtt.map_or(ack.rtt_sample, |m| m.min(ack.rtt_sample)));
        match self.phase {
            Phase::FastRecovery => {}
            _ if self.cwnd < self.ssthresh => {
                self.cwnd += ack.acked_packets();
                self.phase = Phase::SlowStart;
            }
            _ => {
                self.phase = Phase::CongestionAvoidance;
                self.avoidance(ack);
            }
        }
        self.decision()
    }

    fn on_loss(&mut self, kind: LossKind, _now: Micros) -> CwndDecision {
        let p = self.params;
        self.epoch_start = None;
        self.w_max = if p.fast_convergence && self.cwnd < self.w_max {
            self.cwnd * (1.0 + p.beta) / 2.0
        } else {
            self.cwnd
        };
        self.ssthresh = (self.cwnd * p.beta).max(MIN_SSTHRESH);
        match kind {
            LossKind::TripleDupAck => {
                self.cwnd = clamp_cwnd(self.cwnd * p.beta);
                self.phase = Phase::FastRecovery;
            }
            LossKind::Timeout => {
                self.cwnd = 1.0;
                self.phase = Phase::SlowStart;
            }
        }
        self.decision()
    }

    fn on_recovery_exit(&mut self, _now: Micros) -> CwndDecision {
        if self.phase == Phase::FastRecovery {
            self.phase = Phase::CongestionAvoidance;
        }
        self.decision()
    }

    fn cwnd(&self) -> f64 {
        self.cwnd
    }

    fn phase(&self) -> Phase {
        self.phase
    }

    fn ssthresh(&self) -> f64 {
        self.ssthresh
    }
}
