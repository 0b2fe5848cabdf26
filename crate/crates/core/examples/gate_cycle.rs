//! Step the gate sequencer through two cycles with ideal limit switches and
//! print every change in the commanded gate positions.
//!
//! ```bash
//! cargo run --example gate_cycle
//! ```

use cyclone::controller::{Controller, ControllerConfig, ManualCommand, SensorImage};

fn main() {
    let config = ControllerConfig::default();
    let mut c = Controller::new(config).unwrap();
    c.request_manual(ManualCommand::Start);

    let dt = config.scan_dt_ms;
    let mut last = None;
    for k in 0..(2 * config.cycle_ms() / dt) {
        let t = k * dt;
        let phase = c.phase().kind;
        let cmd = c.step(&SensorImage::following(c.last_commands()));
        let now = (cmd.upper.position, cmd.lower.position);
        if last != Some(now) {
            println!(
                "t={:>6.2} s  {:<9}  upper {:<6?} lower {:<6?}  coils U[{}{}] L[{}{}]",
                t as f64 / 1000.0,
                phase,
                now.0,
                now.1,
                cmd.upper.solenoid_a as u8,
                cmd.upper.solenoid_b as u8,
                cmd.lower.solenoid_a as u8,
                cmd.lower.solenoid_b as u8,
            );
            last = Some(now);
        }
    }
    let n = c.counters();
    println!(
        "{} cycles, deferred openings: {}",
        n.cycles_completed, n.interlock_deferrals
    );

    // Over-temperature lands in SAFE_HOLD on the same scan.
    let hot = SensorImage {
        upper_temp: cyclone::controller::Temperature::Celsius(512.0),
        ..SensorImage::following(c.last_commands())
    };
    let cmd = c.step(&hot);
    println!(
        "hot reading -> phase {} alarms {:?} upper {:?}",
        c.phase().kind,
        c.alarms(),
        cmd.upper.position
    );
    println!("reset while hot: {:?}", c.request_manual(ManualCommand::ResetAlarms));
    c.step(&SensorImage::nominal());
    println!(
        "reset once cool: {:?} -> {} {}",
        c.request_manual(ManualCommand::ResetAlarms),
        c.mode(),
        c.phase().kind
    );
}
