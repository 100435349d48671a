use super::{clamp_cwnd, AckInfo, CongestionControl, CwndDecision, LossKind, Phase, MIN_SSTHRESH};
use crate::Micros;

/// Window pinned at a constant regardless of feedback.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixed {
    pub cwnd: f64,
}

impl Fixed {
    pub fn new(cwnd: f64) -> Self {
        Self { cwnd: clamp_cwnd(cwnd) }
    }
}

impl CongestionControl for Fixed {
    fn on_ack(&mut self, _ack: &AckInfo) -> CwndDecision {
        self.decision()
    }

    fn on_loss(&mut self, _kind: LossKind, _now: Micros) -> CwndDecision {
        self.decision()
    }

    fn cwnd(&self) -> f64 {
        self.cwnd
    }

    fn phase(&self) -> Phase {
        Phase::CongestionAvoidance
    }

    fn ssthresh(&self) -> f64 {
        MIN_SSTHRESH.max(self.cwnd)
    }
}
