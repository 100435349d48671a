use super::{clamp_cwnd, reno_increase, AckInfo, CongestionControl, CwndDecision, LossKind, Phase, MIN_SSTHRESH};
use crate::Micros;

/// NewReno without window inflation: the reduced window takes effect when
/// the loss is detected and holds until recovery ends.
#[derive(Debug, Clone, PartialEq)]
pub struct Reno {
    pub cwnd: f64,
    pub ssthresh: f64,
    pub phase: Phase,
}

impl Reno {
    pub fn new(initial_cwnd: f64) -> Self {
        Self {
            cwnd: clamp_cwnd(initial_cwnd),
            ssthresh: f64::INFINITY,
            phase: Phase::SlowStart,
        }
    }
}

impl CongestionControl for Reno {
    fn on_ack(&mut self, ack: &AckInfo) -> CwndDecision {
        if self.phase != Phase::FastRecovery {
            reno_increase(&mut self.cwnd, self.ssthresh, ack.acked_packets());
            self.phase = if self.cwnd < self.ssthresh {
                Phase::SlowStart
            } else {
                Phase::CongestionAvoidance
            };
        }
        self.decision()
    }

    fn on_loss(&mut self, kind: LossKind, _now: Micros) -> CwndDecision {
        self.ssthresh = (self.cwnd / 2.0).max(MIN_SSTHRESH);
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
