use std::path::Path;
use std::process::{Command, Output};

use ccprobe::formats;
use ccprobe_core::netsim::BandwidthTrace;
use ccprobe_core::MS;
use proptest::prelude::*;
use tempfile::TempDir;

fn ccprobe(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccprobe"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn unconstrained_trace_needs_unchecked_and_fails_checks() {
    let dir = TempDir::new().unwrap();
    let out = ccprobe(dir.path(), &["gen-trace", "--kind", "alternating", "alt.trace"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("alt.trace").exists());

    let out = ccprobe(
        dir.path(),
        &["gen-trace", "--kind", "alternating", "--unchecked", "alt.trace"],
    );
    assert_eq!(out.status.code(), Some(1));
    let trace = formats::read_trace(&dir.path().join("alt.trace")).unwrap();
    assert_eq!(trace.values[..2], [1.0, 96.0]);
}

#[test]
fn random_trace_and_mahimahi_export() {
    let dir = TempDir::new().unwrap();
    let out = ccprobe(
        dir.path(),
        &[
            "gen-trace",
            "--kind",
            "constant",
            "--mbps",
            "12",
            "--len",
            "10",
            "c.trace",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = ccprobe(dir.path(), &["export", "--mahimahi", "c.trace", "c.mm"]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("c.mm")).unwrap();
    // 12 Mbps is one 1500-byte packet per ms for one second.
    let stamps: Vec<u64> = text.lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(stamps, (1..=1000).collect::<Vec<_>>());

    let out = ccprobe(
        dir.path(),
        &["gen-trace", "--kind", "random", "--trace-seed", "9", "r.trace"],
    );
    assert_eq!(out.status.code(), Some(0));
    let trace = formats::read_trace(&dir.path().join("r.trace")).unwrap();
    assert_eq!(trace.len(), 600);
    assert!(formats::max_slope(&trace.values, 1) <= 48.0);
}

#[test]
fn bad_config_exits_with_error() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "runz = 3\n").unwrap();
    let out = ccprobe(dir.path(), &["--config", "bad.toml", "baseline"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("runz"));
}

#[test]
fn transfer_rejects_a_single_trace() {
    let dir = TempDir::new().unwrap();
    ccprobe(dir.path(), &["gen-trace", "--kind", "constant", "c.trace"]);
    let out = ccprobe(dir.path(), &["transfer", "--trace", "c=c.trace"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn output_root_env_applies_to_relative_dirs() {
    let dir = TempDir::new().unwrap();
    std::fs::write(
        dir.path().join("cfg.toml"),
        "output_dir = \"run\"\nruns = 1\ncontrollers = [\"vegas\"]\n[traces]\nrandom_count = 1\n",
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ccprobe"))
        .current_dir(dir.path())
        .env("CCPROBE_OUTPUT_ROOT", dir.path().join("root"))
        .args(["--config", "cfg.toml", "baseline"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("root/run/baseline.csv")).unwrap();
    assert!(csv.starts_with("# config_sha256="));
    assert_eq!(formats::csv_body(&csv).lines().count(), 3);
}

proptest! {
    #[test]
    fn trace_text_round_trips(values in prop::collection::vec(0.0f64..200.0, 1..50), ms in 1u64..1000) {
        let trace = BandwidthTrace { values, interval: ms * MS };
        let back = formats::parse_trace(&formats::format_trace(&trace)).unwrap();
        prop_assert_eq!(back, trace);
    }

    #[test]
    fn mahimahi_delivers_the_trace_volume(values in prop::collection::vec(0.0f64..96.0, 1..20)) {
        let trace = BandwidthTrace { values, interval: 100 * MS };
        let stamps = formats::mahimahi_timestamps(&trace);
        let bytes: f64 = trace.values.iter().map(|v| v * 125.0 * 100.0).sum();
        prop_assert!((stamps.len() as f64 - bytes / 1500.0).abs() <= 1.0);
        prop_assert!(stamps.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(stamps.iter().all(|&s| s >= 1 && s <= 100 * trace.len() as u64));
    }
}
