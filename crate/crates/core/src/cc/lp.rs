use super::{clamp_cwnd, reno_increase, AckInfo, CongestionControl, CwndDecision, LossKind, Phase, MIN_SSTHRESH};
use crate::{Error, Micros, Result};
use alloc::format;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct LpParams {
    /// EWMA gain of the smoothed one-way delay.
    pub ewma_gain: f64,
    /// Position of the threshold between the smallest and largest OWD seen.
    pub threshold_fraction: f64,
    /// Length of the inference window in smoothed RTTs.
    pub inference_rtts: f64,
}

impl Default for LpParams {
    fn default() -> Self {
        Self {
            ewma_gain: 0.125,
            threshold_fraction: 0.15,
            inference_rtts: 1.0,
        }
    }
}

impl LpParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.ewma_gain > 0.0
            && self.ewma_gain <= 1.0
            && (0.0..=1.0).contains(&self.threshold_fraction)
            && self.inference_rtts > 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid lp constants {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum LpIndication {
    /// Delay crossed the threshold outside an inference window: halve.
    First,
    /// Crossed again inside the inference window: drop to one packet.
    Second,
}

/// One-way-delay filters and the early-congestion detector. Delays in µs.
#[derive(Debug, Clone, PartialEq)]
pub struct LpState {
    pub params: LpParams,
    pub owd: f64,
    pub sowd: f64,
    pub owd_min: f64,
    pub owd_max: f64,
    /// End of the current inference window.
    pub inference_until: Option<Micros>,
    /// Whether the previous sample was already over the threshold.
    pub above: bool,
}

impl LpState {
    pub fn new(params: LpParams) -> Self {
        Self {
            params,
            owd: 0.0,
            sowd: 0.0,
            owd_min: f64::INFINITY,
            owd_max: 0.0,
            inference_until: None,
            above: false,
        }
    }

    /// Congestion threshold with the minimum scaled by `min_scale`.
    pub fn threshold(&self, min_scale: f64) -> f64 {
        let min = self.owd_min * min_scale;
        min + self.params.threshold_fraction * (self.owd_max - min)
    }

    pub fn in_inference(&self, now: Micros) -> bool {
        self.inference_until.is_some_and(|t| now < t)
    }

    /// Indication implied by the current filter state, without updating it.
    /// Only a fresh crossing counts: a delay that stays over the threshold
    /// signals once.
    pub fn classify(&self, now: Micros, min_scale: f64) -> Option<LpIndication> {
        if self.above || !(self.sowd > self.threshold(min_scale)) {
            return None;
        }
        if self.in_inference(now) {
            Some(LpIndication::Second)
        } else {
            Some(LpIndication::First)
        }
    }

    /// Feeds one OWD sample through the filters and runs the detector.
    pub fn early_congestion_check(
        &mut self,
        owd_sample: Micros,
        now: Micros,
        srtt: f64,
        min_scale: f64,
    ) -> Option<LpIndication> {
        let owd = owd_sample as f64;
        if self.owd_min.is_infinite() {
            self.sowd = owd;
        } else {
            self.sowd += self.params.ewma_gain * (owd - self.sowd);
        }
        self.owd = owd;
        self.owd_min = self.owd_min.min(owd);
        self.owd_max = self.owd_max.max(owd);
        let indication = self.classify(now, min_scale);
        self.above = self.sowd > self.threshold(min_scale);
        if indication.is_some() {
            let window = libm::ceil(srtt * self.params.inference_rtts) as Micros;
            self.inference_until = Some(now + window);
        }
        indication
    }
}

/// Reno with one-way-delay early backoff.
#[derive(Debug, Clone, PartialEq)]
pub struct Lp {
    pub cwnd: f64,
    pub ssthresh: f64,
    pub phase: Phase,
    pub state: LpState,
    srtt: Option<f64>,
}

impl Lp {
    pub fn new(initial_cwnd: f64, params: LpParams) -> Self {
        Self {
            cwnd: clamp_cwnd(initial_cwnd),
            ssthresh: f64::INFINITY,
            phase: Phase::SlowStart,
            state: LpState::new(params),
            srtt: None,
        }
    }

    fn growth_phase(&self) -> Phase {
        if self.cwnd < self.ssthresh {
            Phase::SlowStart
        } else {
            Phase::CongestionAvoidance
        }
    }
}

impl CongestionControl for Lp {
    fn on_ack(&mut self, ack: &AckInfo) -> CwndDecision {
        let rtt = ack.rtt_sample as f64;
        let srtt = match self.srtt {
            None => rtt,
            Some(s) => s + 0.125 * (rtt - s),
        };
        self.srtt = Some(srtt);

        let indication = self
            .state
            .early_congestion_check(ack.owd_sample, ack.now, srtt, ack.min_rtt_scale);
        match indication {
            Some(LpIndication::First) => {
                self.cwnd = clamp_cwnd(self.cwnd / 2.0);
                self.ssthresh = self.cwnd.max(MIN_SSTHRESH);
                self.phase = Phase::LpInference;
            }
            Some(LpIndication::Second) => {
                self.cwnd = 1.0;
                self.ssthresh = MIN_SSTHRESH;
                self.phase = Phase::LpInference;
            }
            None => match self.phase {
                Phase::FastRecovery => {}
                Phase::LpInference if self.state.in_inference(ack.now) => {}
                _ => {
                    reno_increase(&mut self.cwnd, self.ssthresh, ack.acked_packets());
                    self.phase = self.growth_phase();
                }
            },
        }
        CwndDecision {
            indication,
            ..self.decision()
        }
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
