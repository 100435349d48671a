use ccprobe_core::cc::{Algorithm, CcConfig, CcHandle, CongestionControl, Fixed};
use ccprobe_core::metrics::{delay_stats, utilization};
use ccprobe_core::netsim::{run_episode, BandwidthTrace, EpisodeLog, EventKind, SimConfig, TraceSource};
use ccprobe_core::tracegen::{gen_random_trace, SmoothnessBudget};
use ccprobe_core::{MS, SEC};
use proptest::prelude::*;

fn short_config(seconds: u64) -> SimConfig {
    SimConfig {
        episode_duration: seconds * SEC,
        record_events: true,
        ..SimConfig::default()
    }
}

fn run_fixed(config: &SimConfig, trace: &BandwidthTrace, cwnd: f64) -> EpisodeLog {
    let mut cc = CcHandle::Fixed(Fixed::new(cwnd));
    run_episode(config, TraceSource::Fixed(trace), &mut cc, None).unwrap()
}

#[test]
fn bdp_window_fills_pipe_without_queue() {
    let config = SimConfig {
        episode_duration: 10 * SEC,
        ..SimConfig::default()
    };
    let trace = BandwidthTrace::constant(48.0, config.trace_interval, config.trace_len());
    let bdp = config.bdp_packets(48.0);
    assert_eq!(bdp, 80.0);
    let log = run_fixed(&config, &trace, bdp);
    assert!(utilization(&log, &trace).unwrap() >= 0.99);
    let (mean, _) = delay_stats(&log, log.base_rtt).unwrap();
    assert!(mean < 1.0, "mean queuing delay {mean} ms");
    assert_eq!(log.counters.dropped, 0);
}

#[test]
fn triple_bdp_window_saturates_buffer() {
    let config = SimConfig {
        episode_duration: 10 * SEC,
        ..SimConfig::default()
    };
    let trace = BandwidthTrace::constant(48.0, config.trace_interval, config.trace_len());
    let log = run_fixed(&config, &trace, 3.0 * config.bdp_packets(48.0));
    assert!(log.counters.dropped > 0);
    // A full 2 x BDP buffer drains in two base RTTs.
    let base_ms = config.base_rtt() as f64 / MS as f64;
    let (mean, p95) = delay_stats(&log, log.base_rtt).unwrap();
    assert!((mean - 2.0 * base_ms).abs() < 0.1 * base_ms, "mean {mean}");
    assert!(p95 <= 2.0 * base_ms + 1.0);
}

#[test]
fn cwnd_of_one_on_fast_link() {
    let config = SimConfig {
        episode_duration: 10 * SEC,
        ..SimConfig::default()
    };
    let trace = BandwidthTrace::constant(96.0, config.trace_interval, config.trace_len());
    let log = run_fixed(&config, &trace, 1.0);
    // One 1500 B packet per 20 ms round trip is 0.6 Mbps.
    let u = utilization(&log, &trace).unwrap();
    assert!((u - 0.6 / 96.0).abs() < 1e-3, "utilization {u}");
}

#[test]
fn duration_mismatch_is_reported() {
    let config = short_config(2);
    let trace = BandwidthTrace::constant(10.0, config.trace_interval, config.trace_len());
    let log = run_fixed(&config, &trace, 10.0);
    let longer = BandwidthTrace::constant(10.0, config.trace_interval, config.trace_len() + 1);
    assert!(utilization(&log, &longer).is_err());
}

#[test]
fn misaligned_config_is_rejected() {
    let config = SimConfig {
        trace_interval: 150 * MS,
        monitor_interval: 100 * MS,
        ..SimConfig::default()
    };
    let trace = BandwidthTrace::constant(10.0, 150 * MS, 10);
    let mut cc = CcHandle::Fixed(Fixed::new(10.0));
    assert!(run_episode(&config, TraceSource::Fixed(&trace), &mut cc, None).is_err());
}

fn arb_algorithm() -> impl Strategy<Value = Algorithm> {
    prop::sample::select(vec![
        Algorithm::Reno,
        Algorithm::Cubic,
        Algorithm::Vegas,
        Algorithm::Illinois,
        Algorithm::Lp,
        Algorithm::BbrLite,
    ])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn episode_invariants(alg in arb_algorithm(), seed in any::<u64>()) {
        let config = SimConfig { rng_seed: seed, ..short_config(3) };
        let budget = SmoothnessBudget::default();
        let trace = gen_random_trace(config.trace_len(), &budget, config.trace_interval, seed).unwrap();
        let mut cc = CcConfig::default().build(alg).unwrap();
        let log = run_episode(&config, TraceSource::Fixed(&trace), &mut cc, None).unwrap();

        let c = log.counters;
        prop_assert_eq!(c.sent, c.delivered + c.dropped + c.queued);
        prop_assert!(c.unique_delivered <= c.delivered);

        let base = config.base_rtt();
        prop_assert!(log.rtt_samples.iter().all(|&r| r >= base));
        let mut last = 0;
        for e in &log.events {
            prop_assert!(e.time >= last);
            last = e.time;
            if e.kind == EventKind::AckReceived {
                let rtt = e.rtt_sample.unwrap();
                let owd = e.owd_sample.unwrap();
                prop_assert!(rtt >= base);
                // Equality holds exactly when the packet found an empty queue.
                prop_assert_eq!(rtt == base, owd == config.one_way_delay);
            }
        }

        // Deliveries never outrun the capacity integral by more than one packet.
        let ps = config.packet_size as f64;
        let mut delivered = 0.0;
        let mut capacity = 0.0;
        let mut next = 0;
        for e in log.events.iter().filter(|e| e.kind == EventKind::Delivered) {
            while next <= e.time {
                capacity += trace.capacity_at(next) * config.tick as f64 / 8.0;
                next += config.tick;
            }
            delivered += ps;
            prop_assert!(delivered <= capacity + ps);
        }

        let again = run_episode(&config, TraceSource::Fixed(&trace), &mut CcConfig::default().build(alg).unwrap(), None).unwrap();
        prop_assert!(log.series.iter().all(|p| p.cwnd >= 1.0));
        prop_assert_eq!(log, again);
        prop_assert!(cc.cwnd() >= 1.0 && cc.ssthresh() >= 2.0);
    }
}
