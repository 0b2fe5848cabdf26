//! Shared randomized drivers for the integration tests and the acceptance run.
#![allow(dead_code)]

use cyclone::controller::{
    CommandOutcome, Controller, ControllerConfig, Gate, GateCommands, ManualCommand, Mode, PhaseKind, SensorImage,
    Temperature,
};
use cyclone::plant::{FaultKind, FaultSpec, LimitSwitch, PlantConfig};
use cyclone::twin::Twin;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_gate(rng: &mut impl Rng) -> Gate {
    if rng.random_bool(0.5) {
        Gate::Upper
    } else {
        Gate::Lower
    }
}

pub fn random_command(rng: &mut impl Rng) -> ManualCommand {
    match rng.random_range(0..8) {
        0 => ManualCommand::Open(random_gate(rng)),
        1 => ManualCommand::Close(random_gate(rng)),
        2 => ManualCommand::Start,
        3 => ManualCommand::Stop,
        4 => ManualCommand::ResetAlarms,
        5 => ManualCommand::SetMode(Mode::Auto),
        6 => ManualCommand::SetMode(Mode::Manual),
        _ => ManualCommand::SetMode(Mode::Halted),
    }
}

fn random_temp(rng: &mut impl Rng) -> Temperature {
    match rng.random_range(0..20) {
        0 => Temperature::Fault,
        1 => Temperature::Celsius(rng.random_range(380.0..1023.75)),
        _ => Temperature::Celsius(rng.random_range(20.0..120.0)),
    }
}

/// Mostly plausible images (switches following the last commands) with
/// every field occasionally randomized.
pub fn random_sensors(rng: &mut impl Rng, last: &GateCommands) -> SensorImage {
    let mut s = SensorImage::following(last);
    if rng.random_bool(0.3) {
        s.upper_closed_limit = rng.random_bool(0.5);
    }
    if rng.random_bool(0.3) {
        s.lower_closed_limit = rng.random_bool(0.5);
    }
    if rng.random_bool(0.1) {
        s.upper_temp = random_temp(rng);
    }
    if rng.random_bool(0.1) {
        s.lower_temp = random_temp(rng);
    }
    s.level_high = rng.random_bool(0.2);
    s.level_low = rng.random_bool(0.5);
    s
}

pub fn random_fault(rng: &mut impl Rng, at_ms: u64) -> FaultSpec {
    let kind = match rng.random_range(0..5) {
        0 => FaultKind::StuckCylinder { gate: random_gate(rng) },
        1 => FaultKind::SlowCylinder {
            gate: random_gate(rng),
            factor: rng.random_range(0.05..=1.0),
        },
        2 => FaultKind::LimitSwitchStuck {
            switch: if rng.random_bool(0.5) {
                LimitSwitch::UpperClosed
            } else {
                LimitSwitch::LowerClosed
            },
            value: rng.random_bool(0.5),
        },
        3 => FaultKind::LevelInterference {
            rate: rng.random_range(0.0..=1.0),
        },
        _ => FaultKind::ThermocoupleOpen {
            sensor: random_gate(rng),
        },
    };
    FaultSpec::new(at_ms, kind)
}

pub fn random_controller_config(rng: &mut impl Rng) -> ControllerConfig {
    let dt = [10, 20, 50, 100][rng.random_range(0..4)];
    ControllerConfig {
        fill_a_ms: rng.random_range(1..40) * dt,
        fill_b_ms: rng.random_range(1..40) * dt,
        dwell_ms: rng.random_range(1..40) * dt,
        discharge_ms: rng.random_range(1..40) * dt,
        temp_alarm_c: rng.random_range(100.0..600.0),
        level_automation_enabled: rng.random_bool(0.5),
        scan_dt_ms: dt,
        interlock_grace_ms: rng.random_range(0..3000),
    }
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct FuzzStats {
    pub steps: u64,
    pub commands: u64,
    pub accepted: u64,
    pub faults: u64,
    pub both_open: u64,
    pub dual_solenoid: u64,
    /// Steps that raised an alarm without landing in SAFE_HOLD.
    pub missed_hold: u64,
    /// Rejected commands that changed controller state.
    pub leaky_rejections: u64,
    /// Steps with every coil off that still moved a valve latch.
    pub latch_drift: u64,
}

impl FuzzStats {
    pub fn clean(&self) -> bool {
        self.both_open + self.dual_solenoid + self.missed_hold + self.leaky_rejections + self.latch_drift == 0
    }

    fn add(&mut self, o: FuzzStats) {
        self.steps += o.steps;
        self.commands += o.commands;
        self.accepted += o.accepted;
        self.faults += o.faults;
        self.both_open += o.both_open;
        self.dual_solenoid += o.dual_solenoid;
        self.missed_hold += o.missed_hold;
        self.leaky_rejections += o.leaky_rejections;
        self.latch_drift += o.latch_drift;
    }
}

fn command(c: &mut Controller, cmd: ManualCommand, stats: &mut FuzzStats) {
    let before = c.clone();
    stats.commands += 1;
    match c.request_manual(cmd) {
        CommandOutcome::Accepted => stats.accepted += 1,
        CommandOutcome::Rejected(_) => {
            if *c != before {
                stats.leaky_rejections += 1;
            }
        }
    }
}

fn check_step(before: &Controller, after: &Controller, cmd: &GateCommands, stats: &mut FuzzStats) {
    stats.steps += 1;
    if cmd.both_open() {
        stats.both_open += 1;
    }
    if cmd.solenoid_conflict() {
        stats.dual_solenoid += 1;
    }
    // every alarm is a hold condition
    let raised = after.alarms().difference(before.alarms()).next().is_some();
    if raised && after.phase().kind != PhaseKind::SafeHold {
        stats.missed_hold += 1;
    }
    let coils_off = [cmd.upper, cmd.lower].iter().all(|d| !d.solenoid_a && !d.solenoid_b);
    if coils_off && before.valves().upper.latched != after.valves().upper.latched
        || coils_off && before.valves().lower.latched != after.valves().lower.latched
    {
        stats.latch_drift += 1;
    }
}

/// Bare controller against adversarial sensor images and random operator
/// commands, under a random configuration.
pub fn fuzz_controller(seed: u64, steps: u64) -> FuzzStats {
    let mut rng = rng(seed);
    let mut stats = FuzzStats::default();
    let mut c = Controller::new(random_controller_config(&mut rng)).unwrap();
    for _ in 0..steps {
        if rng.random_bool(0.05) {
            command(&mut c, random_command(&mut rng), &mut stats);
        }
        let sensors = random_sensors(&mut rng, c.last_commands());
        let before = c.clone();
        let cmd = c.step(&sensors);
        check_step(&before, &c, &cmd, &mut stats);
    }
    stats
}

/// Controller closed over the plant, with faults injected at random times
/// and random operator commands.
pub fn fuzz_twin(seed: u64, steps: u64) -> FuzzStats {
    let mut rng = rng(seed);
    let mut stats = FuzzStats::default();
    let plant = PlantConfig {
        shield_installed: rng.random_bool(0.3),
        ..Default::default()
    };
    let mut ctrl = ControllerConfig {
        level_automation_enabled: rng.random_bool(0.5),
        ..Default::default()
    };
    ctrl.interlock_grace_ms = rng.random_range(0..3000);
    let mut twin = Twin::new(ctrl, plant, seed).unwrap();
    twin.command(ManualCommand::Start);
    for _ in 0..steps {
        if rng.random_bool(0.002) {
            let at = twin.time_ms() + rng.random_range(0..5000);
            if twin.inject_fault(random_fault(&mut rng, at)).is_ok() {
                stats.faults += 1;
            }
        }
        if rng.random_bool(0.02) {
            let before = twin.controller().clone();
            stats.commands += 1;
            match twin.command(random_command(&mut rng)) {
                CommandOutcome::Accepted => stats.accepted += 1,
                CommandOutcome::Rejected(_) if *twin.controller() != before => stats.leaky_rejections += 1,
                CommandOutcome::Rejected(_) => {}
            }
        }
        let before = twin.controller().clone();
        let rec = twin.step();
        check_step(&before, twin.controller(), &rec.commands, &mut stats);
    }
    let v = twin.violations();
    assert_eq!(v.commanded_both_open, stats.both_open);
    assert_eq!(v.dual_solenoid, stats.dual_solenoid);
    stats
}

/// `total` steps split across bare and closed-loop runs of `chunk` steps.
pub fn fuzz_mixed(seed: u64, total: u64, chunk: u64) -> FuzzStats {
    let mut stats = FuzzStats::default();
    let mut k = 0;
    while stats.steps < total {
        let n = chunk.min(total - stats.steps);
        let s = seed.wrapping_add(k);
        stats.add(if k % 2 == 0 {
            fuzz_controller(s, n)
        } else {
            fuzz_twin(s, n)
        });
        k += 1;
    }
    stats
}

/// Commanded timeline of `cycles` nominal AUTO cycles with ideal switches:
/// for each scan, whether each gate is commanded open.
pub fn nominal_timeline(config: ControllerConfig, cycles: u64) -> Vec<(bool, bool)> {
    let mut c = Controller::new(config).unwrap();
    c.request_manual(ManualCommand::Start);
    let steps = cycles * config.cycle_ms() / config.scan_dt_ms;
    (0..steps)
        .map(|_| {
            let cmd = c.step(&SensorImage::following(c.last_commands()));
            (cmd.upper.position.is_open(), cmd.lower.position.is_open())
        })
        .collect()
}

/// Start times, in scans, of each run of identical values.
pub fn edges<T: PartialEq + Copy>(xs: &[T]) -> Vec<(usize, T)> {
    let mut out = Vec::new();
    for (i, &x) in xs.iter().enumerate() {
        if out.last().is_none_or(|&(_, y)| y != x) {
            out.push((i, x));
        }
    }
    out
}
