//! Closed-loop runs of controller and plant with injected faults.
//!
//! ```bash
//! cargo run --example plant_faults
//! ```

use cyclone::controller::{ControllerConfig, Gate, ManualCommand};
use cyclone::plant::{FaultKind, FaultSpec, LimitSwitch, PlantConfig};
use cyclone::twin::Twin;

fn run(label: &str, faults: &[FaultSpec], seconds: u64) {
    let mut twin = Twin::new(ControllerConfig::default(), PlantConfig::default(), 1).unwrap();
    for f in faults {
        twin.inject_fault(*f).unwrap();
    }
    twin.command(ManualCommand::Start);
    let mut peak_level: f64 = 0.0;
    for _ in 0..seconds * 20 {
        twin.step();
        peak_level = peak_level.max(twin.plant().level());
    }
    let c = twin.controller();
    println!("{label}");
    for f in faults {
        println!("  fault      {} from {} ms", f.kind, f.at_ms);
    }
    for a in twin.alarm_log() {
        println!("  alarm      {} at {} ms", a.code, a.t_ms);
    }
    let p = twin.plant().summary();
    println!(
        "  end        {} / {}  cycles={}  upper_pos={:.2} lower_pos={:.2} peak_level={:.2}",
        c.phase().kind,
        c.mode(),
        c.counters().cycles_completed,
        p.upper_pos,
        p.lower_pos,
        peak_level
    );
    println!("  violations {:?}\n", twin.violations());
}

fn main() {
    run("healthy plant, 48 s", &[], 48);
    run(
        "upper cylinder seizes open at 5 s",
        &[FaultSpec::new(5_000, FaultKind::StuckCylinder { gate: Gate::Upper })],
        30,
    );
    run(
        "lower cylinder at quarter speed",
        &[FaultSpec::new(
            0,
            FaultKind::SlowCylinder {
                gate: Gate::Lower,
                factor: 0.25,
            },
        )],
        48,
    );
    run(
        "upper closed-limit switch welded open at 21 s (mid DISCHARGE)",
        &[FaultSpec::new(
            21_000,
            FaultKind::LimitSwitchStuck {
                switch: LimitSwitch::UpperClosed,
                value: false,
            },
        )],
        30,
    );

    // Conflicting faults on one element are refused; identical ones are no-ops.
    let mut twin = Twin::new(ControllerConfig::default(), PlantConfig::default(), 1).unwrap();
    let stuck = FaultSpec::new(0, FaultKind::StuckCylinder { gate: Gate::Lower });
    println!("inject     {:?}", twin.inject_fault(stuck));
    println!("again      {:?}", twin.inject_fault(stuck));
    println!(
        "slow too   {:?}",
        twin.inject_fault(FaultSpec::new(
            0,
            FaultKind::SlowCylinder {
                gate: Gate::Lower,
                factor: 0.5
            }
        ))
    );
}
