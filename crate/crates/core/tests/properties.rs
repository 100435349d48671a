use ccprobe_core::adversary::{delay_penalty, env_reward, DelayConstraint};
use ccprobe_core::cc::{cubic_k, cubic_window, AckInfo, CongestionControl, LpParams, LpState, Reno, WindowedMin};
use ccprobe_core::learned::{controller_reward, delay_factor, Feature, Policy, RewardParams, Topology};
use ccprobe_core::metrics::cwnd_smoothness;
use ccprobe_core::netsim::Observation;
use ccprobe_core::tracegen::{avg_abs_slope, gen_random_trace, project_next, SmoothnessBudget};
use ccprobe_core::{MS, SEC};
use proptest::prelude::*;

fn obs(t: f64, l: f64, rtt: f64, min: f64, u: f64) -> Observation {
    Observation {
        time: 0,
        rtt_ms: rtt,
        min_rtt_ms: min,
        throughput_mbps: t,
        loss_mbps: l,
        utilization: u,
        capacity_mbps: 0.0,
        cwnd: 1.0,
    }
}

fn arb_budget() -> impl Strategy<Value = SmoothnessBudget> {
    (1.0..100.0f64, 1usize..6, 0.0..50.0f64, 1.0..200.0f64).prop_map(|(delta, k, lo, span)| SmoothnessBudget {
        delta,
        window_k: k,
        bw_min: lo,
        bw_max: lo + span,
    })
}

proptest! {
    #[test]
    fn reward_is_bounded(
        b_max in 1.0..200.0f64,
        frac in 0.0..=1.0f64,
        loss_frac in 0.0..=1.0f64,
        lambda in 0.0..20.0f64,
        gamma in 1.0..3.0f64,
        min in 1.0..100.0f64,
        extra in 0.0..500.0f64,
    ) {
        let t = frac * b_max;
        // Keep lambda * L <= T so the lower bound applies.
        let l = if lambda > 0.0 { loss_frac * t / lambda } else { loss_frac * b_max };
        let p = RewardParams { lambda, gamma, b_max };
        let r = controller_reward(&obs(t, l, min + extra, min, 0.0), &p).unwrap();
        prop_assert!(r <= 1.0 + 1e-12);
        prop_assert!(r >= -1e-12);
    }

    #[test]
    fn delay_factor_is_monotone(min in 0.1..100.0f64, gamma in 1.0..3.0f64, a in 0.0..500.0f64, b in 0.0..500.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let d_lo = delay_factor(min + lo, min, gamma);
        let d_hi = delay_factor(min + hi, min, gamma);
        prop_assert!(d_hi > 0.0 && d_hi <= 1.0);
        prop_assert!(d_lo > 0.0 && d_lo <= 1.0);
        prop_assert!(d_hi <= d_lo);
    }

    #[test]
    fn action_never_exceeds_bound(
        params in prop::collection::vec(-1e6..1e6f64, 6),
        hidden in prop::collection::vec(-50.0..50.0f64, Topology::Hidden { width: 4 }.param_len(5)),
        t in 0.0..200.0f64,
        rtt in 0.0..1e4f64,
        min in 0.0..100.0f64,
        prev in -10.0..10.0f64,
    ) {
        let o = obs(t, 0.0, rtt, min, 0.0);
        let linear = Policy::linear_controller(96.0).with_params(params);
        let a = linear.action(&o, prev);
        prop_assert!(a.abs() <= 2.0);
        let deep = Policy::zeros(Feature::CONTROLLER.to_vec(), Topology::Hidden { width: 4 }, 2.0, 96.0).with_params(hidden);
        prop_assert!(deep.action(&o, prev).abs() <= 2.0);
    }

    #[test]
    fn env_reward_range(u in 0.0..=1.0f64, tau in 0.0..50.0f64, alpha in 0.01..5.0f64, hist in prop::collection::vec(0.0..100.0f64, 0..12)) {
        let c = DelayConstraint { tau, alpha, ..DelayConstraint::default() };
        let r = env_reward(&obs(1.0, 0.0, 21.0, 20.0, u), &hist, &c);
        prop_assert!(r <= 0.0 && r >= -1.0 - alpha);
    }

    #[test]
    fn penalty_vanishes_when_latest_delay_meets_tau(tau in 0.0..50.0f64, hist in prop::collection::vec(0.0..100.0f64, 1..12), bump in 0.0..10.0f64) {
        let c = DelayConstraint { tau, ..DelayConstraint::default() };
        let mut h = hist.clone();
        *h.last_mut().unwrap() = tau + bump;
        prop_assert_eq!(delay_penalty(&h, &c), 0.0);
    }

    #[test]
    fn log_smoothness_is_scale_free(cw in prop::collection::vec(1.0..1000.0f64, 3..40), k in 1usize..3, scale in 0.01..100.0f64) {
        prop_assume!(cw.len() > k);
        let s: Vec<(f64, f64)> = cw.iter().enumerate().map(|(i, &c)| (i as f64 * 0.1, c)).collect();
        let scaled: Vec<(f64, f64)> = s.iter().map(|&(t, c)| (t, c * scale)).collect();
        let (l1, g1) = cwnd_smoothness(&s, k).unwrap();
        let (l2, g2) = cwnd_smoothness(&scaled, k).unwrap();
        prop_assert!((g2 - g1).abs() <= 1e-9 * g1.max(1e-300) + 1e-12);
        prop_assert!((l2 - scale * l1).abs() <= 1e-9 * (scale * l1).max(1e-300) + 1e-12);
    }

    #[test]
    fn random_traces_respect_budget(budget in arb_budget(), len in 1usize..300, seed in any::<u64>()) {
        let t = gen_random_trace(len, &budget, 100 * MS, seed).unwrap();
        prop_assert!(t.in_range(budget.bw_min, budget.bw_max));
        for i in budget.window_k..t.len() {
            prop_assert!(avg_abs_slope(&t.values, i, budget.window_k).unwrap() <= budget.delta);
        }
    }

    #[test]
    fn projection_keeps_feasible_points(budget in arb_budget(), len in 1usize..60, seed in any::<u64>(), u in 0.0..=1.0f64) {
        let t = gen_random_trace(len, &budget, 100 * MS, seed).unwrap();
        let prev = *t.values.last().unwrap();
        // A step toward `u` that uses at most the unspent slack.
        let k = budget.window_k;
        let n = t.values.len();
        let spent: f64 = (n.saturating_sub(k) + 1..n).map(|i| (t.values[i] - t.values[i - 1]).abs()).sum();
        let slack = (k as f64 * budget.delta - spent).max(0.0) * 0.999;
        let target = budget.bw_min + u * (budget.bw_max - budget.bw_min);
        let proposed = prev + (target - prev).clamp(-slack, slack);
        // Exact up to the rounding guard, which only acts when slack is near zero.
        let projected = project_next(&t.values, proposed, &budget);
        prop_assert!((projected - proposed).abs() <= 1e-9 * proposed.abs().max(1.0));

        let mut extended = t.values.clone();
        extended.push(project_next(&t.values, proposed * 7.0 - 300.0, &budget));
        prop_assert!(budget.is_feasible(&extended));
    }

    #[test]
    fn cubic_curve_passes_through_w_max(w_max in 2.0..1e4f64, c in 0.1..2.0f64, beta in 0.1..0.95f64) {
        let k = cubic_k(w_max, c, beta);
        prop_assert!((cubic_window(k, w_max, c, beta) - w_max).abs() <= 1e-9 * w_max);
        prop_assert!((cubic_window(0.0, w_max, c, beta) - beta * w_max).abs() <= 1e-9 * w_max);
    }

    #[test]
    fn lp_owd_min_never_grows(samples in prop::collection::vec(1_000u64..200_000, 1..200)) {
        let mut lp = LpState::new(LpParams::default());
        let mut prev_min = f64::INFINITY;
        for (i, &s) in samples.iter().enumerate() {
            lp.early_congestion_check(s, i as u64 * MS, 20_000.0, 1.0);
            prop_assert!(lp.owd_min <= prev_min);
            prev_min = lp.owd_min;
        }
    }

    #[test]
    fn windowed_min_is_window_minimum(samples in prop::collection::vec(1.0..100.0f64, 1..50)) {
        let mut f = WindowedMin::default();
        for (i, &s) in samples.iter().enumerate() {
            f.update(i as u64 * MS, s, 10 * SEC);
        }
        let min = samples.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(f.get(), Some(min));
    }
}

#[test]
fn reno_avoidance_matches_harmonic_sum() {
    // Loss-free avoidance: w_{n+1} = w_n + 1 / w_n.
    let mut reno = Reno::new(10.0);
    reno.ssthresh = 10.0;
    let mut closed = 10.0f64;
    for n in 0..500u64 {
        reno.on_ack(&AckInfo::simple(n * MS, 20 * MS, 10 * MS, 1500));
        closed += 1.0 / closed;
        assert!((reno.cwnd() - closed).abs() < 1.0);
    }
    // Continuous limit: w^2 grows by about 2 per ACK.
    assert!((reno.cwnd().powi(2) - (100.0 + 2.0 * 500.0)).abs() < 10.0);
}
