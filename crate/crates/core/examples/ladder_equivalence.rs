//! Check the native sequencer against the shipped ladder program, scan by
//! scan, under ideal switches and under the plant simulator.
//!
//! ```bash
//! cargo run --release --example ladder_equivalence -- 100
//! ```

use cyclone::controller::ControllerConfig;
use cyclone::equivalence::{compare, SensorSource};
use cyclone::ladder::{parse_ladder, CYCLONE_LADDER};
use cyclone::plant::PlantConfig;

fn main() {
    let cycles: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(20);
    let program = parse_ladder(CYCLONE_LADDER).unwrap();
    for (label, source) in [
        ("ideal switches", SensorSource::Ideal),
        ("plant simulator", SensorSource::Plant(PlantConfig::default(), 9)),
    ] {
        let c = compare(&program, ControllerConfig::default(), source, cycles).unwrap();
        println!(
            "{label:<16} {} scans, {} cycles, {} mismatches",
            c.ticks,
            c.cycles,
            c.mismatches.len()
        );
        for m in c.mismatches.iter().take(5) {
            println!("  {m}");
        }
    }
}
