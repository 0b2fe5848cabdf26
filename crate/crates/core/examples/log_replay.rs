//! Run a scenario with an event log, then replay the log and summarize the
//! phase sequence it recorded.
//!
//! ```bash
//! cargo run --example log_replay -- scenarios/stuck_upper.toml
//! ```

use std::path::PathBuf;

use cyclone::scenario::{run_scenario, RunOptions, Scenario};
use cyclone::telemetry::{replay, Message};

fn main() {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/nominal.toml")));
    let scenario = Scenario::load(&path).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");
    let opts = RunOptions {
        log_path: Some(log.clone()),
        ..Default::default()
    };
    let report = run_scenario(&scenario, &opts).unwrap().report;
    println!(
        "{}: {} cycles, passed={}",
        scenario.name, report.cycles_completed, report.passed
    );

    let r = replay(&log).unwrap();
    let frames: Vec<_> = r.frames().collect();
    println!("log: {} messages, {} frames", r.entries.len(), frames.len());
    for (m, _) in r.entries.iter().filter(|(m, _)| !matches!(m, Message::Frame(_))) {
        println!("  {}", m.to_line());
    }

    let mut last = None;
    for f in &frames {
        let key = (f.phase, f.alarms.clone());
        if last.as_ref() != Some(&key) {
            println!(
                "  t={:>6} ms seq={:>4} {:<9} upper={:?}/{:.2} lower={:?}/{:.2} alarms={:?}",
                f.t_ms, f.seq, f.phase, f.upper_cmd, f.upper_pos, f.lower_cmd, f.lower_pos, f.alarms
            );
            last = Some(key);
        }
    }
}
