//! Adversarial stress testing for congestion controllers.
//!
//! The crate is `no_std` (it needs `alloc`) and contains everything that is
//! pure computation:
//!
//! - [`netsim`]: a deterministic, tick-driven model of one sender over a single
//!   bottleneck link with time-varying capacity and a drop-tail FIFO.
//! - [`cc`]: Reno, Cubic, Vegas, Illinois, TCP-LP and a simplified BBR behind
//!   one [`cc::CongestionControl`] interface.
//! - [`learned`]: a small parametric controller that rescales cwnd once per
//!   monitoring interval and is trained with a gradient-free optimizer.
//! - [`adversary`]: adversarial rewards, the min-RTT perturbation surface, the
//!   bandwidth-trace surface and adversary training.
//! - [`tracegen`]: smoothness-budgeted bandwidth trace generation.
//! - [`metrics`]: utilization, queuing delay and cwnd smoothness.
//! - [`advtrain`]: retraining the learned controller on a mixed trace pool.
//!
//! File formats, configuration and the command line live in the companion
//! `ccprobe` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod adversary;
pub mod advtrain;
pub mod cc;
mod error;
pub mod learned;
pub mod metrics;
pub mod netsim;
pub mod optim;
mod runner;
pub mod tracegen;

pub use error::{Error, Result};
pub use runner::{BatchRunner, Sequential};

/// Simulation time in microseconds.
pub type Micros = u64;

/// Microseconds per millisecond.
pub const MS: Micros = 1_000;

/// Microseconds per second.
pub const SEC: Micros = 1_000_000;

pub(crate) fn rng_from_seed(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a base seed with a stream index so that derived seeds do not collide
/// for nearby inputs (splitmix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
