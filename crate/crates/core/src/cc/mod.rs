//! Rule-based congestion controllers behind one interface.
//!
//! Windows are in packets and may be fractional; the sender uses the floor.
//! Every controller reads the same [`AckInfo`], so a perturbed min-RTT
//! estimate reaches all of them through `min_rtt_scale`.

mod bbr;
mod cubic;
mod fixed;
mod illinois;
mod lp;
mod reno;
mod vegas;

pub use bbr::{BbrLite, BbrParams, WindowedMax, WindowedMin};
pub use cubic::{cubic_k, cubic_window, Cubic, CubicParams};
pub use fixed::Fixed;
pub use illinois::{Illinois, IllinoisParams};
pub use lp::{Lp, LpIndication, LpParams, LpState};
pub use reno::Reno;
pub use vegas::{vegas_diff, Vegas, VegasParams};

use alloc::format;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use crate::learned::LearnedController;
use crate::netsim::Observation;
use crate::{Error, Micros, Result};

/// Smallest window any controller may set.
pub const MIN_CWND: f64 = 1.0;
/// Smallest slow-start threshold.
pub const MIN_SSTHRESH: f64 = 2.0;
/// Sender window ceiling, standing in for the receive window.
pub const MAX_CWND: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Algorithm {
    Reno,
    Cubic,
    Vegas,
    Illinois,
    Lp,
    BbrLite,
    Learned,
    /// Window pinned at a constant; a test oracle, not a real controller.
    Fixed,
}

impl Algorithm {
    pub const RULE_BASED: [Algorithm; 6] = [
        Algorithm::Reno,
        Algorithm::Cubic,
        Algorithm::Vegas,
        Algorithm::Illinois,
        Algorithm::Lp,
        Algorithm::BbrLite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Reno => "reno",
            Algorithm::Cubic => "cubic",
            Algorithm::Vegas => "vegas",
            Algorithm::Illinois => "illinois",
            Algorithm::Lp => "lp",
            Algorithm::BbrLite => "bbrlite",
            Algorithm::Learned => "learned",
            Algorithm::Fixed => "fixed",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "reno" => Algorithm::Reno,
            "cubic" => Algorithm::Cubic,
            "vegas" => Algorithm::Vegas,
            "illinois" => Algorithm::Illinois,
            "lp" => Algorithm::Lp,
            "bbrlite" => Algorithm::BbrLite,
            "learned" => Algorithm::Learned,
            "fixed" => Algorithm::Fixed,
            other => return Err(Error::Config(format!("unknown controller `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Phase {
    SlowStart,
    CongestionAvoidance,
    FastRecovery,
    LpInference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum LossKind {
    TripleDupAck,
    Timeout,
}

/// Per-ACK input shared by all controllers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AckInfo {
    pub now: Micros,
    pub rtt_sample: Micros,
    pub owd_sample: Micros,
    /// Newly acknowledged bytes.
    pub acked_bytes: u64,
    /// Bytes acknowledged while the acked packet was in flight.
    pub delivered_in_rtt: u64,
    pub packet_size: u32,
    /// Perceived over true minimum RTT; 1 unless an adversary intervenes.
    pub min_rtt_scale: f64,
}

impl AckInfo {
    /// A single-packet ACK with no perturbation.
    pub fn simple(now: Micros, rtt_sample: Micros, owd_sample: Micros, packet_size: u32) -> Self {
        Self {
            now,
            rtt_sample,
            owd_sample,
            acked_bytes: packet_size as u64,
            delivered_in_rtt: packet_size as u64,
            packet_size,
            min_rtt_scale: 1.0,
        }
    }

    pub(crate) fn acked_packets(&self) -> f64 {
        self.acked_bytes as f64 / self.packet_size as f64
    }
}

/// Controller output after an event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CwndDecision {
    pub cwnd: f64,
    /// Bytes per second; `None` means unpaced.
    pub pacing_rate: Option<f64>,
    /// Set when the event caused an early-congestion backoff.
    pub indication: Option<LpIndication>,
}

impl CwndDecision {
    pub fn window(cwnd: f64) -> Self {
        Self {
            cwnd,
            pacing_rate: None,
            indication: None,
        }
    }
}

pub trait CongestionControl {
    fn on_ack(&mut self, ack: &AckInfo) -> CwndDecision;
    fn on_loss(&mut self, kind: LossKind, now: Micros) -> CwndDecision;
    fn on_recovery_exit(&mut self, _now: Micros) -> CwndDecision {
        self.decision()
    }
    /// Called at every monitoring-interval boundary.
    fn on_interval(&mut self, _obs: &Observation) -> CwndDecision {
        self.decision()
    }
    fn cwnd(&self) -> f64;
    fn phase(&self) -> Phase;
    fn ssthresh(&self) -> f64;
    fn decision(&self) -> CwndDecision {
        CwndDecision::window(self.cwnd())
    }
}

pub(crate) fn clamp_cwnd(cwnd: f64) -> f64 {
    if cwnd.is_nan() {
        MIN_CWND
    } else {
        cwnd.clamp(MIN_CWND, MAX_CWND)
    }
}

/// Reno-style additive window growth shared by several controllers.
pub(crate) fn reno_increase(cwnd: &mut f64, ssthresh: f64, acked: f64) {
    if *cwnd < ssthresh {
        *cwnd += acked;
    } else {
        *cwnd += acked / *cwnd;
    }
}

/// Tunable constants for every rule-based controller.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct CcConfig {
    pub initial_cwnd: f64,
    pub cubic: CubicParams,
    pub vegas: VegasParams,
    pub illinois: IllinoisParams,
    pub lp: LpParams,
    pub bbrlite: BbrParams,
    /// Window of the `fixed` oracle controller.
    pub fixed_cwnd: f64,
}

impl Default for CcConfig {
    fn default() -> Self {
        Self {
            initial_cwnd: 10.0,
            cubic: CubicParams::default(),
            vegas: VegasParams::default(),
            illinois: IllinoisParams::default(),
            lp: LpParams::default(),
            bbrlite: BbrParams::default(),
            fixed_cwnd: 10.0,
        }
    }
}

impl CcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_cwnd >= MIN_CWND) {
            return Err(Error::Config(format!(
                "initial_cwnd must be >= 1, got {}",
                self.initial_cwnd
            )));
        }
        if !(self.fixed_cwnd >= MIN_CWND) {
            return Err(Error::Config(format!(
                "fixed_cwnd must be >= 1, got {}",
                self.fixed_cwnd
            )));
        }
        self.cubic.validate()?;
        self.vegas.validate()?;
        self.illinois.validate()?;
        self.lp.validate()?;
        self.bbrlite.validate()
    }

    /// Fresh rule-based controller. The learned controller needs a policy
    /// and is built with [`CcHandle::Learned`] directly.
    pub fn build(&self, algorithm: Algorithm) -> Result<CcHandle> {
        self.validate()?;
        let w = self.initial_cwnd;
        Ok(match algorithm {
            Algorithm::Reno => CcHandle::Reno(Reno::new(w)),
            Algorithm::Cubic => CcHandle::Cubic(Cubic::new(w, self.cubic)),
            Algorithm::Vegas => CcHandle::Vegas(Vegas::new(w, self.vegas)),
            Algorithm::Illinois => CcHandle::Illinois(Illinois::new(w, self.illinois)),
            Algorithm::Lp => CcHandle::Lp(Lp::new(w, self.lp)),
            Algorithm::BbrLite => CcHandle::BbrLite(BbrLite::new(w, self.bbrlite.clone())),
            Algorithm::Fixed => CcHandle::Fixed(Fixed::new(self.fixed_cwnd)),
            Algorithm::Learned => {
                return Err(Error::Config(String::from(
                    "the learned controller is built from a policy checkpoint",
                )))
            }
        })
    }
}

/// A controller instance owned by one episode.
#[derive(Debug, Clone)]
pub enum CcHandle {
    Reno(Reno),
    Cubic(Cubic),
    Vegas(Vegas),
    Illinois(Illinois),
    Lp(Lp),
    BbrLite(BbrLite),
    Learned(LearnedController),
    Fixed(Fixed),
}

macro_rules! dispatch {
    ($self:expr, $c:ident => $body:expr) => {
        match $self {
            CcHandle::Reno($c) => $body,
            CcHandle::Cubic($c) => $body,
            CcHandle::Vegas($c) => $body,
            CcHandle::Illinois($c) => $body,
            CcHandle::Lp($c) => $body,
            CcHandle::BbrLite($c) => $body,
            CcHandle::Learned($c) => $body,
            CcHandle::Fixed($c) => $body,
        }
    };
}

impl CcHandle {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            CcHandle::Reno(_) => Algorithm::Reno,
            CcHandle::Cubic(_) => Algorithm::Cubic,
            CcHandle::Vegas(_) => Algorithm::Vegas,
            CcHandle::Illinois(_) => Algorithm::Illinois,
            CcHandle::Lp(_) => Algorithm::Lp,
            CcHandle::BbrLite(_) => Algorithm::BbrLite,
            CcHandle::Learned(_) => Algorithm::Learned,
            CcHandle::Fixed(_) => Algorithm::Fixed,
        }
    }
}

impl CongestionControl for CcHandle {
    fn on_ack(&mut self, ack: &AckInfo) -> CwndDecision {
        dispatch!(self, c => c.on_ack(ack))
    }

    fn on_loss(&mut self, kind: LossKind, now: Micros) -> CwndDecision {
        dispatch!(self, c => c.on_loss(kind, now))
    }

    fn on_recovery_exit(&mut self, now: Micros) -> CwndDecision {
        dispatch!(self, c => c.on_recovery_exit(now))
    }

    fn on_interval(&mut self, obs: &Observation) -> CwndDecision {
        dispatch!(self, c => c.on_interval(obs))
    }

    fn cwnd(&self) -> f64 {
        dispatch!(self, c => c.cwnd())
    }

    fn phase(&self) -> Phase {
        dispatch!(self, c => c.phase())
    }

    fn ssthresh(&self) -> f64 {
        dispatch!(self, c => c.ssthresh())
    }

    fn decision(&self) -> CwndDecision {
        dispatch!(self, c => c.decision())
    }
}
