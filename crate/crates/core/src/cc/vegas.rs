use super::{clamp_cwnd, AckInfo, CongestionControl, CwndDecision, LossKind, Phase, MIN_SSTHRESH};
use crate::{Error, Micros, Result};
use alloc::format;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct VegasParams {
    /// Grow while fewer than `alpha` packets sit in the queue.
    pub alpha: f64,
    /// Shrink once at least `beta` packets sit in the queue.
    pub beta: f64,
    /// Leave slow start once more than `gamma` packets are queued.
    pub gamma: f64,
}

impl Default for VegasParams {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 4.0,
            gamma: 1.0,
        }
    }
}

impl VegasParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha <= self.beta && self.gamma >= 0.0) {
            return Err(Error::Config(format!(
                "vegas needs 0 <= alpha <= beta and gamma >= 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Queue-occupancy estimate in packets: `(expected - actual) * base_rtt`.
pub fn vegas_diff(cwnd: f64, base_rtt: f64, rtt: f64) -> f64 {
    cwnd * (rtt - base_rtt) / rtt
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vegas {
    pub params: VegasParams,
    pub cwnd: f64,
    pub ssthresh: f64,
    pub phase: Phase,
    /// Smallest RTT sample seen, before any perturbation.
    pub base_rtt: Option<Micros>,
    /// Smallest RTT in the current round.
    round_min: Option<Micros>,
    next_decision: Option<Micros>,
}

impl Vegas {
    pub fn new(initial_cwnd: f64, params: VegasParams) -> Self {
        Self {
            params,
            cwnd: clamp_cwnd(initial_cwnd),
            ssthresh: f64::INFINITY,
            phase: Phase::SlowStart,
            base_rtt: None,
            round_min: None,
            next_decision: None,
        }
    }

    fn decide(&mut self, rtt: Micros, scale: f64) {
        let Some(base) = self.base_rtt else { return };
        let base = base as f64 * scale;
        let rtt = rtt as f64;
        let diff = vegas_diff(self.cwnd, base, rtt);
        let p = self.params;
        if self.cwnd < self.ssthresh {
            if diff > p.gamma {
                let target = self.cwnd * base / rtt;
                self.cwnd = clamp_cwnd(self.cwnd.min(target + 1.0));
                self.ssthresh = self.ssthresh.min(self.cwnd - 1.0).max(MIN_SSTHRESH);
                self.phase = Phase::CongestionAvoidance;
            }
        } else if diff >= p.beta {
            self.cwnd = clamp_cwnd(self.cwnd - 1.0);
        } else if diff < p.alpha {
            self.cwnd += 1.0;
        }
    }
}

impl CongestionControl for Vegas {
    fn on_ack(&mut self, ack: &AckInfo) -> CwndDecision {
        let rtt = ack.rtt_sample;
        self.base_rtt = Some(self.base_rtt.map_or(rtt, |b| b.min(rtt)));
        if self.phase == Phase::FastRecovery {
            return self.decision();
        }
        let round_min = self.round_min.map_or(rtt, |m| m.min(rtt));
        if self.next_decision.is_none_or(|t| ack.now >= t) {
            self.decide(round_min, ack.min_rtt_scale);
            self.round_min = None;
            self.next_decision = Some(ack.now + rtt);
        } else {
            self.round_min = Some(round_min);
            if self.cwnd < self.ssthresh {
                self.cwnd += ack.acked_packets();
            }
        }
        if self.cwnd < self.ssthresh {
            self.phase = Phase::SlowStart;
        } else {
            self.phase = Phase::CongestionAvoidance;
        }
        self.decision()
    }

    fn on_loss(&mut self, kind: LossKind, _now: Micros) -> CwndDecision {
        self.ssthresh = (self.cwnd / 2.0).max(MIN_SSTHRESH);
        self.next_decision = None;
        self.round_min = None;
        match kind {
            LossKind::TripleDupAck => {
                self.cwnd = clamp_cwnd(self.ssthresh);
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
            self.cwnd = clamp_cwnd(self.ssthresh);
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::MS;

    fn avoiding(cwnd: f64, base_ms: u64) -> Vegas {
        let mut v = Vegas::new(cwnd, VegasParams::default());
        v.ssthresh = 2.0;
        v.phase = Phase::CongestionAvoidance;
        v.base_rtt = Some(base_ms * MS);
        v
    }

    #[test]
    fn diff_at_beta_decrements() {
        assert!((vegas_diff(20.0, 0.100, 0.125) - 4.0).abs() < 1e-12);
        let mut v = avoiding(20.0, 100);
        let d = v.on_ack(&AckInfo::simple(0, 125 * MS, 62 * MS, 1500));
        assert_eq!(d.cwnd, 19.0);
    }

    #[test]
    fn empty_queue_increments() {
        let mut v = avoiding(20.0, 100);
        assert_eq!(v.on_ack(&AckInfo::simple(0, 100 * MS, 50 * MS, 1500)).cwnd, 21.0);
    }

    #[test]
    fn one_decision_per_round() {
        let mut v = avoiding(20.0, 100);
        v.on_ack(&AckInfo::simple(0, 100 * MS, 50 * MS, 1500));
        v.on_ack(&AckInfo::simple(MS, 100 * MS, 50 * MS, 1500));
        assert_eq!(v.cwnd, 21.0);
        v.on_ack(&AckInfo::simple(100 * MS, 100 * MS, 50 * MS, 1500));
        assert_eq!(v.cwnd, 22.0);
    }

    #[test]
    fn inflated_base_hides_queue() {
        // 25 ms of queueing looks like none if the base is believed to be 125 ms.
        let mut v = avoiding(20.0, 100);
        let mut ack = AckInfo::simple(0, 125 * MS, 62 * MS, 1500);
        ack.min_rtt_scale = 1.25;
        assert_eq!(v.on_ack(&ack).cwnd, 21.0);
        assert_eq!(v.base_rtt, Some(100 * MS));
    }
}
