//! Scan-for-scan comparison of the native sequencer against a ladder program.
//!
//! The native controller runs closed-loop first and its sensor images are
//! recorded. Those images become the ladder's input schedule, so both sides
//! see identical inputs on every scan, and the two output traces are
//! compared signal by signal.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::controller::{
    Controller, ControllerConfig, ControllerError, GateCommands, GateDrive, GatePosition, ManualCommand, PhaseKind,
    SensorImage,
};
use crate::ladder::{run_trace, InputAssignment, LadderProgram, TraceError, TraceTick, Value};
use crate::plant::{Plant, PlantConfig, PlantError};

/// Ladder variable names the comparison relies on.
pub mod io {
    pub const RUN: &str = "run";
    pub const UPPER_CLOSED_SW: &str = "upper_closed_sw";
    pub const LOWER_CLOSED_SW: &str = "lower_closed_sw";
    pub const UPPER_OPEN: &str = "upper_open";
    pub const LOWER_OPEN: &str = "lower_open";
    pub const UPPER_SOL_A: &str = "upper_sol_a";
    pub const UPPER_SOL_B: &str = "upper_sol_b";
    pub const LOWER_SOL_A: &str = "lower_sol_a";
    pub const LOWER_SOL_B: &str = "lower_sol_b";
}

const TIMERS: [(&str, PhaseKind); 4] = [
    ("t_fill_a", PhaseKind::FillA),
    ("t_fill_b", PhaseKind::FillB),
    ("t_dwell", PhaseKind::Dwell),
    ("t_discharge", PhaseKind::Discharge),
];

#[derive(Debug, Error)]
pub enum EquivalenceError {
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("level automation must be off: the ladder encodes the plain timed sequence")]
    AutomationEnabled,
    #[error("ladder timer {timer} preset {ladder} ms differs from controller preset {native} ms")]
    PresetMismatch { timer: String, ladder: i64, native: u64 },
    #[error("ladder program lacks timer {0}")]
    MissingTimer(String),
    #[error("native controller raised alarms at {0} ms; the ladder has no safe hold to match")]
    NativeAlarm(u64),
}

/// Where the recorded sensor images come from.
#[derive(Debug, Clone, Copy)]
pub enum SensorSource {
    /// Limit switches that follow the previous scan's commands exactly.
    Ideal,
    /// The plant simulator with the given config and seed.
    Plant(PlantConfig, u64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mismatch {
    pub tick: usize,
    pub t_ms: u64,
    pub signal: &'static str,
    pub native: bool,
    pub ladder: bool,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "tick {} (t={} ms): {} native={} ladder={}",
            self.tick, self.t_ms, self.signal, self.native, self.ladder
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub ticks: usize,
    pub cycles: u64,
    pub mismatches: Vec<Mismatch>,
}

impl Comparison {
    pub fn equivalent(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Native run from a start command, returning the sensor image and the
/// commands of every scan.
pub fn record_native(
    config: ControllerConfig,
    source: SensorSource,
    steps: usize,
) -> Result<(Vec<SensorImage>, Vec<GateCommands>, u64), EquivalenceError> {
    let mut controller = Controller::new(config)?;
    controller.request_manual(ManualCommand::Start);
    let mut plant = match source {
        SensorSource::Ideal => None,
        SensorSource::Plant(cfg, seed) => Some(Plant::new(cfg, seed)?),
    };
    let mut images = Vec::with_capacity(steps);
    let mut commands = Vec::with_capacity(steps);
    for k in 0..steps {
        let image = match plant.as_mut() {
            None => SensorImage::following(controller.last_commands()),
            Some(p) => p.read_sensors().image,
        };
        let cmd = controller.step(&image);
        if !controller.alarms().is_empty() {
            return Err(EquivalenceError::NativeAlarm(k as u64 * config.scan_dt_ms));
        }
        if let Some(p) = plant.as_mut() {
            p.sim_step(&cmd, config.scan_dt_ms);
        }
        images.push(image);
        commands.push(cmd);
    }
    Ok((images, commands, controller.counters().cycles_completed))
}

/// Input schedule that replays `images` one scan apart, with `run` held.
pub fn schedule_from_images(images: &[SensorImage], dt_ms: u64) -> Vec<InputAssignment> {
    let mut out = vec![InputAssignment::new(0, io::RUN, Value::Bool(true))];
    let mut last: Option<(bool, bool)> = None;
    for (k, s) in images.iter().enumerate() {
        let now = (s.upper_closed_limit, s.lower_closed_limit);
        let at = k as u64 * dt_ms;
        if last.map(|l| l.0) != Some(now.0) {
            out.push(InputAssignment::new(at, io::UPPER_CLOSED_SW, Value::Bool(now.0)));
        }
        if last.map(|l| l.1) != Some(now.1) {
            out.push(InputAssignment::new(at, io::LOWER_CLOSED_SW, Value::Bool(now.1)));
        }
        last = Some(now);
    }
    out
}

fn tick_commands(tick: &TraceTick) -> GateCommands {
    let bit = |name: &str| tick.outputs.get(name).and_then(|v| v.as_bool()).unwrap_or(false);
    let drive = |open: &str, a: &str, b: &str| GateDrive {
        position: if bit(open) {
            GatePosition::Open
        } else {
            GatePosition::Closed
        },
        solenoid_a: bit(a),
        solenoid_b: bit(b),
    };
    GateCommands {
        upper: drive(io::UPPER_OPEN, io::UPPER_SOL_A, io::UPPER_SOL_B),
        lower: drive(io::LOWER_OPEN, io::LOWER_SOL_A, io::LOWER_SOL_B),
    }
}

fn check_presets(program: &LadderProgram, config: &ControllerConfig) -> Result<(), EquivalenceError> {
    for (timer, phase) in TIMERS {
        let native = config.preset(phase).unwrap_or(0);
        let ladder = *program
            .timer_presets
            .get(timer)
            .ok_or_else(|| EquivalenceError::MissingTimer(timer.to_owned()))?;
        if ladder < 0 || ladder as u64 != native {
            return Err(EquivalenceError::PresetMismatch {
                timer: timer.to_owned(),
                ladder,
                native,
            });
        }
    }
    Ok(())
}

/// Run both implementations for `cycles` nominal cycles and diff every scan.
pub fn compare(
    program: &LadderProgram,
    config: ControllerConfig,
    source: SensorSource,
    cycles: u64,
) -> Result<Comparison, EquivalenceError> {
    if config.level_automation_enabled {
        return Err(EquivalenceError::AutomationEnabled);
    }
    check_presets(program, &config)?;
    let dt = config.scan_dt_ms;
    let steps = (cycles * config.cycle_ms() / dt) as usize;
    let (images, native, native_cycles) = record_native(config, source, steps)?;
    let trace = run_trace(program, &schedule_from_images(&images, dt), steps as u64 * dt, dt)?;

    let mut mismatches = Vec::new();
    for (k, (n, tick)) in native.iter().zip(&trace.ticks).enumerate() {
        let l = tick_commands(tick);
        let pairs = [
            (io::UPPER_OPEN, n.upper.position.is_open(), l.upper.position.is_open()),
            (io::LOWER_OPEN, n.lower.position.is_open(), l.lower.position.is_open()),
            (io::UPPER_SOL_A, n.upper.solenoid_a, l.upper.solenoid_a),
            (io::UPPER_SOL_B, n.upper.solenoid_b, l.upper.solenoid_b),
            (io::LOWER_SOL_A, n.lower.solenoid_a, l.lower.solenoid_a),
            (io::LOWER_SOL_B, n.lower.solenoid_b, l.lower.solenoid_b),
        ];
        for (signal, native, ladder) in pairs {
            if native != ladder {
                mismatches.push(Mismatch {
                    tick: k,
                    t_ms: k as u64 * dt,
                    signal,
                    native,
                    ladder,
                });
            }
        }
    }
    Ok(Comparison {
        ticks: steps,
        cycles: native_cycles,
        mismatches,
    })
}
