//! Declarative scenario files and the headless runner.
//!
//! A scenario is a TOML document: plant and controller overrides, a fault
//! schedule, scripted operator commands, a duration, a seed, and optional
//! expectations that decide whether the run passed. See
//! `scenarios/nominal.toml` for a commented example.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::controller::{AlarmCode, CommandOutcome, ControllerConfig, ManualCommand, Mode, PhaseKind};
use crate::plant::{FaultSpec, PlantConfig, PlantSummary};
use crate::telemetry::log::EventLog;
use crate::telemetry::wire::{envelope_for, parse_request, Clock, CommandEnvelope, Message, Request};
use crate::twin::{AlarmEvent, ScheduledCommand, Twin, TwinError, Violations};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported scenario version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Twin(#[from] TwinError),
    #[error("cannot write event log: {0}")]
    Log(std::io::Error),
}

/// Parse "120s", "250ms", "2m", or a bare number of milliseconds.
pub fn parse_duration_ms(text: &str) -> Result<u64, String> {
    let t = text.trim();
    let split = t.find(|c: char| !c.is_ascii_digit() && c != '.').unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let value: f64 = num.parse().map_err(|_| format!("bad duration {text:?}"))?;
    let scale = match unit.trim() {
        "" | "ms" => 1.0,
        "s" => 1000.0,
        "m" | "min" => 60_000.0,
        other => return Err(format!("unknown duration unit {other:?} in {text:?}")),
    };
    let ms = value * scale;
    if !ms.is_finite() || ms < 0.0 || ms.fract() != 0.0 {
        return Err(format!("duration {text:?} is not a whole number of milliseconds"));
    }
    Ok(ms as u64)
}

fn duration_field<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Ms(u64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Ms(ms) => Ok(ms),
        Raw::Text(t) => parse_duration_ms(&t).map_err(serde::de::Error::custom),
    }
}

fn default_duration() -> u64 {
    120_000
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedCommand {
    pub at_ms: u64,
    pub name: String,
    #[serde(default)]
    pub arg: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Expectations {
    pub min_cycles: Option<u64>,
    pub max_cycles: Option<u64>,
    pub alarms_expected: Vec<AlarmCode>,
    pub alarms_forbidden: Vec<AlarmCode>,
    pub final_phase: Option<PhaseKind>,
    pub final_mode: Option<Mode>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(
        rename = "duration",
        default = "default_duration",
        deserialize_with = "duration_field"
    )]
    pub duration_ms: u64,
    /// Issue `start` at t=0.
    #[serde(default = "yes")]
    pub autostart: bool,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub plant: PlantConfig,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    #[serde(default)]
    pub commands: Vec<ScriptedCommand>,
    #[serde(default)]
    pub expect: Expectations,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text)?;
        if s.version != FORMAT_VERSION {
            return Err(ScenarioError::Version(s.version));
        }
        s.script()?;
        for f in &s.faults {
            f.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Scripted commands in time order, with `start` first when autostarting.
    pub fn script(&self) -> Result<Vec<ScheduledCommand>, ScenarioError> {
        let mut out = Vec::new();
        if self.autostart {
            out.push(ScheduledCommand {
                at_ms: 0,
                cmd: ManualCommand::Start,
            });
        }
        for c in &self.commands {
            let mut env = CommandEnvelope::new("", c.name.clone());
            env.arg = c.arg.clone().map(serde_json::Value::String);
            match parse_request(&env) {
                Ok(Request::Manual(cmd)) => out.push(ScheduledCommand { at_ms: c.at_ms, cmd }),
                Ok(_) => {
                    return Err(ScenarioError::Invalid(format!(
                        "{} is a connection command, not allowed in a script",
                        c.name
                    )))
                }
                Err(e) => return Err(ScenarioError::Invalid(e)),
            }
        }
        out.sort_by_key(|c| c.at_ms);
        Ok(out)
    }

    /// Closed-loop twin with this scenario's configs and faults installed.
    pub fn build_twin(&self, seed: u64, controller: ControllerConfig) -> Result<Twin, ScenarioError> {
        let mut twin = Twin::new(controller, self.plant, seed)?;
        for f in &self.faults {
            twin.inject_fault(*f)
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        }
        Ok(twin)
    }
}

/// Command-line level overrides of a scenario.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub duration_ms: Option<u64>,
    pub dt_ms: Option<u64>,
    pub snapshot_hz: Option<f64>,
    pub log_path: Option<std::path::PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommandRecord {
    pub at_ms: u64,
    pub name: &'static str,
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub check: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalState {
    pub phase: PhaseKind,
    pub mode: Mode,
    pub active_alarms: Vec<AlarmCode>,
    pub plant: PlantSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub duration_ms: u64,
    pub scan_dt_ms: u64,
    pub cycles_completed: u64,
    pub alarms: Vec<AlarmEvent>,
    pub violations: Violations,
    pub violation_count: u64,
    pub early_fill_truncations: u64,
    pub discharge_extensions: u64,
    pub interlock_deferrals: u64,
    pub commands: Vec<CommandRecord>,
    pub frames_logged: u64,
    #[serde(rename = "final")]
    pub final_state: FinalState,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl RunReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("reports always serialize")
    }
}

/// Apply one scripted command and describe it as a wire exchange.
pub(crate) fn apply_scripted(twin: &mut Twin, sc: ScheduledCommand, n: u64) -> (CommandOutcome, [Message; 2]) {
    let env = envelope_for(format!("script-{n}"), sc.cmd);
    let outcome = twin.command(sc.cmd);
    let reply = match outcome {
        CommandOutcome::Accepted => Message::ack(&env.id),
        CommandOutcome::Rejected(r) => Message::nack(&env.id, r.to_string()),
    };
    (outcome, [Message::Cmd(env), reply])
}

fn evaluate(expect: &Expectations, twin: &Twin, report_cycles: u64) -> Vec<Check> {
    let raised: BTreeSet<AlarmCode> = twin.alarm_log().iter().map(|e| e.code).collect();
    let c = twin.controller();
    let mut checks = vec![Check {
        check: "no safety invariant violations".into(),
        passed: twin.violations().total() == 0,
    }];
    if let Some(n) = expect.min_cycles {
        checks.push(Check {
            check: format!("at least {n} cycles"),
            passed: report_cycles >= n,
        });
    }
    if let Some(n) = expect.max_cycles {
        checks.push(Check {
            check: format!("at most {n} cycles"),
            passed: report_cycles <= n,
        });
    }
    for code in &expect.alarms_expected {
        checks.push(Check {
            check: format!("{code} raised"),
            passed: raised.contains(code),
        });
    }
    for code in &expect.alarms_forbidden {
        checks.push(Check {
            check: format!("{code} not raised"),
            passed: !raised.contains(code),
        });
    }
    if let Some(p) = expect.final_phase {
        checks.push(Check {
            check: format!("final phase {p}"),
            passed: c.phase().kind == p,
        });
    }
    if let Some(m) = expect.final_mode {
        checks.push(Check {
            check: format!("final mode {m}"),
            passed: c.mode() == m,
        });
    }
    checks
}

pub struct RunOutcome {
    pub report: RunReport,
    pub twin: Twin,
}

/// Run a scenario headlessly on the simulation clock.
pub fn run_scenario(scenario: &Scenario, opts: &RunOptions) -> Result<RunOutcome, ScenarioError> {
    let seed = opts.seed.unwrap_or(scenario.seed);
    let duration_ms = opts.duration_ms.unwrap_or(scenario.duration_ms);
    let mut controller = scenario.controller;
    if let Some(dt) = opts.dt_ms {
        controller.scan_dt_ms = dt;
    }
    let snapshot_hz = opts.snapshot_hz.unwrap_or(10.0);
    if !(snapshot_hz.is_finite() && snapshot_hz > 0.0) {
        return Err(ScenarioError::Invalid("snapshot rate must be > 0".into()));
    }
    let mut twin = scenario.build_twin(seed, controller)?;
    let dt = twin.controller().config().scan_dt_ms;
    let script = scenario.script()?;
    let mut log = match &opts.log_path {
        Some(p) => Some(EventLog::open(p).map_err(ScenarioError::Log)?),
        None => None,
    };
    let write = |log: &mut Option<EventLog>, m: &Message| -> Result<(), ScenarioError> {
        match log {
            Some(l) => l.append(m).map_err(ScenarioError::Log),
            None => Ok(()),
        }
    };

    let period_ms = 1000.0 / snapshot_hz;
    let mut next_frame_ms = 0.0;
    let mut seq = 0u64;
    let mut commands = Vec::new();
    let mut pending = script.into_iter().peekable();
    let steps = duration_ms.div_ceil(dt);

    for _ in 0..steps {
        while let Some(sc) = pending.next_if(|c| c.at_ms <= twin.time_ms()) {
            let (outcome, msgs) = apply_scripted(&mut twin, sc, commands.len() as u64);
            for m in &msgs {
                write(&mut log, m)?;
            }
            commands.push(CommandRecord {
                at_ms: sc.at_ms,
                name: sc.cmd.name(),
                accepted: outcome.is_accepted(),
                reason: match outcome {
                    CommandOutcome::Rejected(r) => Some(r.to_string()),
                    CommandOutcome::Accepted => None,
                },
            });
        }
        if log.is_some() && twin.time_ms() as f64 >= next_frame_ms {
            write(&mut log, &Message::Frame(twin.frame(seq, Clock::Sim, twin.time_ms())))?;
            seq += 1;
            while next_frame_ms <= twin.time_ms() as f64 {
                next_frame_ms += period_ms;
            }
        }
        twin.step();
    }
    if log.is_some() {
        write(&mut log, &Message::Frame(twin.frame(seq, Clock::Sim, twin.time_ms())))?;
        seq += 1;
    }

    let c = twin.controller();
    let counters = c.counters();
    let checks = evaluate(&scenario.expect, &twin, counters.cycles_completed);
    let report = RunReport {
        scenario: scenario.name.clone(),
        seed,
        duration_ms: twin.time_ms(),
        scan_dt_ms: dt,
        cycles_completed: counters.cycles_completed,
        alarms: twin.alarm_log().to_vec(),
        violations: twin.violations(),
        violation_count: twin.violations().total(),
        early_fill_truncations: counters.early_fill_truncations,
        discharge_extensions: counters.discharge_extensions,
        interlock_deferrals: counters.interlock_deferrals,
        commands,
        frames_logged: seq,
        final_state: FinalState {
            phase: c.phase().kind,
            mode: c.mode(),
            active_alarms: c.alarms().iter().copied().collect(),
            plant: twin.plant().summary(),
        },
        passed: checks.iter().all(|c| c.passed),
        checks,
    };
    Ok(RunOutcome { report, twin })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn durations() {
        assert_eq!(parse_duration_ms("120s"), Ok(120_000));
        assert_eq!(parse_duration_ms("250ms"), Ok(250));
        assert_eq!(parse_duration_ms("2m"), Ok(120_000));
        assert_eq!(parse_duration_ms("1.5s"), Ok(1500));
        assert_eq!(parse_duration_ms("75"), Ok(75));
        assert!(parse_duration_ms("fast").is_err());
        assert!(parse_duration_ms("10h").is_err());
        assert!(parse_duration_ms("0.5ms").is_err());
    }

    #[test]
    fn minimal_scenario_defaults() {
        let s = Scenario::from_toml("version = 1").unwrap();
        assert_eq!(s.duration_ms, 120_000);
        assert!(s.autostart);
        assert_eq!(s.controller, ControllerConfig::default());
        assert_eq!(s.script().unwrap().len(), 1);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(
            Scenario::from_toml("version = 2"),
            Err(ScenarioError::Version(2))
        ));
        assert!(matches!(
            Scenario::from_toml("version = 1\nspeed = 3"),
            Err(ScenarioError::Parse(_))
        ));
        let bad_cmd = "version = 1\n[[commands]]\nat_ms = 0\nname = \"acquire_token\"";
        assert!(matches!(Scenario::from_toml(bad_cmd), Err(ScenarioError::Invalid(_))));
        let bad_fault = "version = 1\n[[faults]]\nkind = \"level_interference\"\nrate = 1.5";
        assert!(matches!(Scenario::from_toml(bad_fault), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn nominal_two_minutes() {
        let s = Scenario::from_toml("version = 1\nduration = \"120s\"\n[expect]\nmin_cycles = 5").unwrap();
        let out = run_scenario(&s, &RunOptions::default()).unwrap();
        assert_eq!(out.report.cycles_completed, 5);
        assert_eq!(out.report.violation_count, 0);
        assert!(out.report.passed);
    }

    #[test]
    fn scripted_manual_jog() {
        let s = Scenario::from_toml(
            r#"
            version = 1
            duration = "3s"
            autostart = false
            [[commands]]
            at_ms = 0
            name = "set_mode"
            arg = "MANUAL"
            [[commands]]
            at_ms = 1000
            name = "open_upper"
            [[commands]]
            at_ms = 2000
            name = "open_lower"
            "#,
        )
        .unwrap();
        let out = run_scenario(&s, &RunOptions::default()).unwrap();
        let r = &out.report.commands;
        assert!(r[0].accepted && r[1].accepted);
        assert_eq!(r[2].reason.as_deref(), Some("interlock"));
        assert!(out.twin.plant().position(crate::controller::Gate::Upper) > 0.99);
    }
}
