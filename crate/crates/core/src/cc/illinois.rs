use super::{clamp_cwnd, AckInfo, CongestionControl, CwndDecision, LossKind, Phase, MIN_SSTHRESH};
use crate::{Error, Micros, Result};
use alloc::format;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct IllinoisParams {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    /// Below this window the Reno constants are used.
    pub win_thresh: f64,
}

impl Default for IllinoisParams {
    fn default() -> Self {
        Self {
            alpha_min: 0.3,
            alpha_max: 10.0,
            beta_min: 0.125,
            beta_max: 0.5,
            win_thresh: 15.0,
        }
    }
}

impl IllinoisParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha_min > 0.0
            && self.alpha_min <= self.alpha_max
            && self.beta_min > 0.0
            && self.beta_min <= self.beta_max
            && self.beta_max < 1.0;
        if !ok {
            return Err(Error::Config(format!("invalid illinois constants {self:?}")));
        }
        Ok(())
    }

    /// Additive increase for average queuing delay `da` and maximum `dm`.
    pub fn alpha(&self, da: f64, dm: f64) -> f64 {
        let d1 = dm / 100.0;
        if da <= d1 {
            return self.alpha_max;
        }
        let (dm, da) = (dm - d1, da - d1);
        dm * self.alpha_max / (dm + da * (self.alpha_max - self.alpha_min) / self.alpha_min)
    }

    /// Multiplicative decrease for average queuing delay `da` and maximum `dm`.
    pub fn beta(&self, da: f64, dm: f64) -> f64 {
        let d2 = dm / 10.0;
        let d3 = 8.0 * dm / 10.0;
        if da <= d2 {
            self.beta_min
        } else if da >= d3 {
            self.beta_max
        } else {
            self.beta_min + (self.beta_max - self.beta_min) * (da - d2) / (d3 - d2)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Illinois {
    pub params: IllinoisParams,
    pub cwnd: f64,
    pub ssthresh: f64,
    pub phase: Phase,
    pub alpha: f64,
    pub beta: f64,
    pub base_rtt: Option<Micros>,
    pub max_rtt: Micros,
    round_sum: f64,
    round_count: u32,
    next_update: Option<Micros>,
}

impl Illinois {
    pub fn new(initial_cwnd: f64, params: IllinoisParams) -> Self {
        Self {
            params,
            cwnd: clamp_cwnd(initial_cwnd),
            ssthresh: f64::INFINITY,
            phase: Phase::SlowStart,
            alpha: 1.0,
            beta: 0.5,
            base_rtt: None,
            max_rtt: 0,
            round_sum: 0.0,
            round_count: 0,
            next_update: None,
        }
    }

    fn update_params(&mut self, scale: f64) {
        let p = self.params;
        if self.cwnd < p.win_thresh || self.round_count == 0 {
            self.alpha = 1.0;
            self.beta = 0.5;
            return;
        }
        let base = self.base_rtt.unwrap_or(0) as f64 * scale;
        let dm = (self.max_rtt as f64 - base).max(0.0);
        let da = (self.round_sum / self.round_count as f64 - base).max(0.0);
        if dm <= 0.0 {
            self.alpha = p.alpha_max;
            self.beta = p.beta_min;
            return;
        }
        self.alpha = p.alpha(da, dm);
        self.beta = p.beta(da, dm);
    }
}

impl CongestionControl for Illinois {
    fn on_ack(&mut self, ack: &AckInfo) -> CwndDecision {
        let rtt = ack.rtt_sample;
        self.base_rtt = Some(self.base_rtt.map_or(rtt, |b| b.min(rtt)));
        self.max_rtt = self.max_rtt.max(rtt);
        self.round_sum += rtt as f64;
        self.round_count += 1;
        if self.next_update.is_none_or(|t| ack.now >= t) {
            self.update_params(ack.min_rtt_scale);
            self.round_sum = 0.0;
            self.round_count = 0;
            self.next_update = Some(ack.now + rtt);
        }
        if self.phase == Phase::FastRecovery {
            return self.decision();
        }
        let acked = ack.acked_packets();
        if self.cwnd < self.ssthresh {
            self.cwnd += acked;
            self.phase = Phase::SlowStart;
        } else {
            self.cwnd += acked * self.alpha / self.cwnd;
            self.phase = Phase::CongestionAvoidance;
        }
        self.decision()
    }

    fn on_loss(&mut self, kind: LossKind, _now: Micros) -> CwndDecision {
        let reduced = self.cwnd * (1.0 - self.beta);
        self.ssthresh = reduced.max(MIN_SSTHRESH);
        match kind {
            LossKind::TripleDupAck => {
                self.cwnd = clamp_cwnd(reduced);
                self.phase = Phase::FastRecovery;
            }
            LossKind::Timeout => {
                self.cwnd = 1.0;
                self.phase = Phase::SlowStart;
                self.alpha = 1.0;
                self.beta = 0.5;
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_spans_its_range() {
        let p = IllinoisParams::default();
        assert_eq!(p.alpha(0.0, 100.0), 10.0);
        assert!((p.alpha(100.0, 100.0) - 0.3).abs() < 1e-12);
        assert!(p.alpha(50.0, 100.0) < p.alpha(20.0, 100.0));
    }

    #[test]
    fn beta_piecewise() {
        let p = IllinoisParams::default();
        assert_eq!(p.beta(5.0, 100.0), 0.125);
        assert_eq!(p.beta(90.0, 100.0), 0.5);
        let mid = p.beta(45.0, 100.0);
        assert!((mid - (0.125 + 0.375 * 35.0 / 70.0)).abs() < 1e-12);
    }

    #[test]
    fn loss_uses_current_beta() {
        let mut c = Illinois::new(100.0, IllinoisParams::default());
        c.beta = 0.125;
        let d = c.on_loss(LossKind::TripleDupAck, 0);
        assert!((d.cwnd - 87.5).abs() < 1e-12);
    }
}
