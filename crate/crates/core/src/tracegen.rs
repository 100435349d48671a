//! Bandwidth traces under a smoothness budget.
//!
//! The smoothness of a sequence at index `t` over window `k` is the average
//! absolute first difference over the `k` steps ending at `t`:
//!
//! ```text
//! S_t = (1/k) * sum_{i=t-k+1..=t} |b_i - b_{i-1}|
//! ```
//!
//! For `[10, 20, 15, 15]`, `t = 3`, `k = 3` that is `(10 + 5 + 0) / 3 = 5`.
//! A trace is feasible when `S_t <= delta` for every `t >= k` and every value
//! lies in `[bw_min, bw_max]`. `delta` is in Mbps per trace interval.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::netsim::BandwidthTrace;
use crate::{rng_from_seed, Error, Micros, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SmoothnessBudget {
    pub delta: f64,
    pub window_k: usize,
    pub bw_min: f64,
    pub bw_max: f64,
}

impl Default for SmoothnessBudget {
    fn default() -> Self {
        Self {
            delta: 48.0,
            window_k: 1,
            bw_min: 1.0,
            bw_max: 96.0,
        }
    }
}

impl SmoothnessBudget {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.bw_min < self.bw_max && self.bw_min >= 0.0 && self.window_k >= 1) {
            return Err(Error::Config(format!(
                "budget needs delta > 0, 0 <= bw_min < bw_max, k >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Whether a whole sequence respects the budget and the range.
    pub fn is_feasible(&self, values: &[f64]) -> bool {
        let k = self.window_k;
        values.iter().all(|v| *v >= self.bw_min && *v <= self.bw_max)
            && (k..values.len()).all(|t| avg_abs_slope(values, t, k).is_ok_and(|s| s <= self.delta))
    }
}

/// Average absolute slope of the `k` steps ending at index `t`.
pub fn avg_abs_slope(values: &[f64], t: usize, k: usize) -> Result<f64> {
    if k == 0 || t < k || t >= values.len() {
        return Err(Error::Index { t, k });
    }
    let sum: f64 = (t + 1 - k..=t).map(|i| libm::fabs(values[i] - values[i - 1])).sum();
    Ok(sum / k as f64)
}

/// Feasible value nearest to `proposed` given the values so far.
///
/// The next step may move at most `k * delta` minus the absolute steps
/// already spent inside the window. The result is clamped to the range and,
/// if rounding pushed it over, pulled back toward the previous value.
pub fn project_next(history: &[f64], proposed: f64, budget: &SmoothnessBudget) -> f64 {
    let proposed = if proposed.is_nan() { budget.bw_min } else { proposed };
    let Some(&prev) = history.last() else {
        return proposed.clamp(budget.bw_min, budget.bw_max);
    };
    let k = budget.window_k;
    let n = history.len();
    let spent: f64 = (n.saturating_sub(k)..n)
        .skip(1)
        .map(|i| libm::fabs(history[i] - history[i - 1]))
        .sum();
    let slack = (k as f64 * budget.delta - spent).max(0.0);
    let mut v = proposed
        .clamp(prev - slack, prev + slack)
        .clamp(budget.bw_min, budget.bw_max);
    // Guard against floating-point overshoot of the window sum. Steps taken
    // before the window is full still count toward the first full window.
    let step_ok = |v: f64| (spent + libm::fabs(v - prev)) / k as f64 <= budget.delta;
    while !step_ok(v) && v != prev {
        let mid = prev + (v - prev) * (1.0 - 1e-12);
        v = if mid == v { prev } else { mid };
    }
    v
}

/// Random walk of uniform proposals in the range, each projected onto the budget.
pub fn gen_random_trace(len: usize, budget: &SmoothnessBudget, interval: Micros, seed: u64) -> Result<BandwidthTrace> {
    budget.validate()?;
    if len == 0 {
        return Err(Error::Config("trace length must be positive".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut values = Vec::with_capacity(len);
    for _ in 0..len {
        let proposal = rng.random_range(budget.bw_min..=budget.bw_max);
        let v = project_next(&values, proposal, budget);
        values.push(v);
    }
    BandwidthTrace::new(interval, values)
}

/// How unconstrained values are produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Unconstrained {
    /// Independent uniform draws.
    Uniform,
    /// Alternate between the range ends, starting at the bottom.
    Alternating,
    Constant(f64),
}

/// A trace in `[lo, hi]` with no smoothness projection.
pub fn gen_unconstrained(
    len: usize,
    lo: f64,
    hi: f64,
    mode: Unconstrained,
    interval: Micros,
    seed: u64,
) -> Result<BandwidthTrace> {
    if len == 0 || !(lo <= hi) {
        return Err(Error::Config(format!(
            "need len >= 1 and lo <= hi, got {len}, [{lo}, {hi}]"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let values = (0..len)
        .map(|i| match mode {
            Unconstrained::Uniform => rng.random_range(lo..=hi),
            Unconstrained::Alternating => {
                if i % 2 == 0 {
                    lo
                } else {
                    hi
                }
            }
            Unconstrained::Constant(v) => v.clamp(lo, hi),
        })
        .collect();
    BandwidthTrace::new(interval, values)
}

/// Triangle bursts: rise linearly from `trough` to `peak`, decline back, repeat.
pub fn gen_triangle_burst(
    len: usize,
    trough: f64,
    peak: f64,
    rise: usize,
    fall: usize,
    interval: Micros,
) -> Result<BandwidthTrace> {
    if len == 0 || rise == 0 || fall == 0 || !(trough >= 0.0 && trough <= peak) {
        return Err(Error::Config(format!(
            "invalid burst shape: len={len} trough={trough} peak={peak} rise={rise} fall={fall}"
        )));
    }
    let period = rise + fall;
    let values = (0..len)
        .map(|i| {
            let p = i % period;
            if p < rise {
                trough + (peak - trough) * (p + 1) as f64 / rise as f64
            } else {
                peak - (peak - trough) * (p + 1 - rise) as f64 / fall as f64
            }
        })
        .collect();
    BandwidthTrace::new(interval, values)
}
