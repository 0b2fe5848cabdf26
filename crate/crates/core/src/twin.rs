//! Controller and plant wired together in a closed loop.
//!
//! Each step reads the plant's sensors, scans the controller once, checks
//! the safety invariants on what came out, then advances the plant by one
//! scan period under those commands. The scenario runner and the telemetry
//! session both drive this loop.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::codec::ThermoFrame;
use crate::controller::{
    AlarmCode, CommandOutcome, Controller, ControllerConfig, ControllerError, GateCommands, GatePair, ManualCommand,
};
use crate::plant::{FaultSpec, Plant, PlantConfig, PlantError};
use crate::telemetry::wire::{Clock, Frame};

#[derive(Debug, thiserror::Error)]
pub enum TwinError {
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Plant(#[from] PlantError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AlarmEvent {
    pub t_ms: u64,
    pub code: AlarmCode,
}

/// Safety invariant breaches seen so far. All three must stay zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Violations {
    /// Steps whose commands asked for both gates open.
    pub commanded_both_open: u64,
    /// Steps that energized both coils of one valve.
    pub dual_solenoid: u64,
    /// Steps after which both gates were physically more than half open.
    pub physical_overlap: u64,
}

impl Violations {
    pub fn total(&self) -> u64 {
        self.commanded_both_open + self.dual_solenoid + self.physical_overlap
    }
}

/// An operator command issued by a script at a fixed simulation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduledCommand {
    pub at_ms: u64,
    pub cmd: ManualCommand,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Time the sensors were read and the scan ran.
    pub t_ms: u64,
    pub commands: GateCommands,
    pub new_alarms: Vec<AlarmCode>,
}

#[derive(Debug, Clone)]
pub struct Twin {
    controller: Controller,
    plant: Plant,
    frames: GatePair<ThermoFrame>,
    violations: Violations,
    alarm_log: Vec<AlarmEvent>,
}

impl Twin {
    pub fn new(controller: ControllerConfig, plant: PlantConfig, seed: u64) -> Result<Self, TwinError> {
        Ok(Twin {
            controller: Controller::new(controller)?,
            plant: Plant::new(plant, seed)?,
            frames: GatePair::default(),
            violations: Violations::default(),
            alarm_log: Vec::new(),
        })
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn plant(&self) -> &Plant {
        &self.plant
    }

    pub fn plant_mut(&mut self) -> &mut Plant {
        &mut self.plant
    }

    pub fn time_ms(&self) -> u64 {
        self.plant.time_ms()
    }

    pub fn violations(&self) -> Violations {
        self.violations
    }

    pub fn alarm_log(&self) -> &[AlarmEvent] {
        &self.alarm_log
    }

    /// Raw thermocouple words behind the most recent sensor image.
    pub fn thermo_frames(&self) -> GatePair<ThermoFrame> {
        self.frames
    }

    pub fn inject_fault(&mut self, fault: FaultSpec) -> Result<(), PlantError> {
        self.plant.inject_fault(fault)
    }

    pub fn command(&mut self, cmd: ManualCommand) -> CommandOutcome {
        self.controller.request_manual(cmd)
    }

    pub fn step(&mut self) -> StepRecord {
        let t_ms = self.plant.time_ms();
        let reading = self.plant.read_sensors();
        self.frames = reading.frames;

        let before: BTreeSet<AlarmCode> = self.controller.alarms().clone();
        let commands = self.controller.step(&reading.image);
        if commands.both_open() {
            self.violations.commanded_both_open += 1;
        }
        if commands.solenoid_conflict() {
            self.violations.dual_solenoid += 1;
        }

        self.plant.sim_step(&commands, self.controller.config().scan_dt_ms);
        let pos = self.plant.positions();
        if pos.upper > 0.5 && pos.lower > 0.5 {
            self.violations.physical_overlap += 1;
        }

        let new_alarms: Vec<AlarmCode> = self.controller.alarms().difference(&before).copied().collect();
        self.alarm_log
            .extend(new_alarms.iter().map(|&code| AlarmEvent { t_ms, code }));
        StepRecord {
            t_ms,
            commands,
            new_alarms,
        }
    }

    /// Snapshot of what the controller last saw and commanded, and where
    /// the gates physically are now.
    pub fn frame(&self, seq: u64, clock: Clock, t_ms: u64) -> Frame {
        let c = &self.controller;
        let s = c.last_sensors();
        let cmd = c.last_commands();
        let pos = self.plant.positions();
        Frame {
            seq,
            t_ms,
            clock,
            phase: c.phase().kind,
            mode: c.mode(),
            upper_cmd: cmd.upper.position,
            lower_cmd: cmd.lower.position,
            upper_pos: pos.upper,
            lower_pos: pos.lower,
            upper_closed_sw: s.upper_closed_limit,
            lower_closed_sw: s.lower_closed_limit,
            upper_temp_c: s.upper_temp,
            lower_temp_c: s.lower_temp,
            level_high: s.level_high,
            level_low: s.level_low,
            alarms: c.alarms().iter().copied().collect(),
        }
    }
}
