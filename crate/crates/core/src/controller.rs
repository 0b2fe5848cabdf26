//! Native gate sequencer.
//!
//! The controller is a deterministic state machine stepped once per scan.
//! It owns the commanded valve state; it never sees the plant except
//! through a [`SensorImage`], and it only acts through [`GateCommands`].

use std::collections::BTreeSet;
use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gate {
    Upper,
    Lower,
}

impl Gate {
    pub const BOTH: [Gate; 2] = [Gate::Upper, Gate::Lower];

    pub fn other(self) -> Gate {
        match self {
            Gate::Upper => Gate::Lower,
            Gate::Lower => Gate::Upper,
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gate::Upper => "upper",
            Gate::Lower => "lower",
        })
    }
}

/// One value per gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GatePair<T> {
    pub upper: T,
    pub lower: T,
}

impl<T: Copy> GatePair<T> {
    pub fn splat(v: T) -> Self {
        GatePair { upper: v, lower: v }
    }
}

impl<T> Index<Gate> for GatePair<T> {
    type Output = T;
    fn index(&self, gate: Gate) -> &T {
        match gate {
            Gate::Upper => &self.upper,
            Gate::Lower => &self.lower,
        }
    }
}

impl<T> IndexMut<Gate> for GatePair<T> {
    fn index_mut(&mut self, gate: Gate) -> &mut T {
        match gate {
            Gate::Upper => &mut self.upper,
            Gate::Lower => &mut self.lower,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PhaseKind {
    FillA,
    FillB,
    Dwell,
    Discharge,
    SafeHold,
}

impl PhaseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PhaseKind::FillA => "FILL_A",
            PhaseKind::FillB => "FILL_B",
            PhaseKind::Dwell => "DWELL",
            PhaseKind::Discharge => "DISCHARGE",
            PhaseKind::SafeHold => "SAFE_HOLD",
        }
    }

    /// Commanded gate positions for a running phase.
    pub fn gate_table(self) -> GatePair<GatePosition> {
        use GatePosition::*;
        match self {
            PhaseKind::FillA | PhaseKind::FillB => GatePair {
                upper: Open,
                lower: Closed,
            },
            PhaseKind::Discharge => GatePair {
                upper: Closed,
                lower: Open,
            },
            PhaseKind::Dwell | PhaseKind::SafeHold => GatePair::splat(Closed),
        }
    }
}

impl fmt::Display for PhaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    pub kind: PhaseKind,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Auto,
    Manual,
    Halted,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Auto => "AUTO",
            Mode::Manual => "MANUAL",
            Mode::Halted => "HALTED",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "AUTO" => Some(Mode::Auto),
            "MANUAL" => Some(Mode::Manual),
            "HALTED" => Some(Mode::Halted),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GatePosition {
    Open,
    Closed,
}

impl GatePosition {
    pub fn is_open(self) -> bool {
        self == GatePosition::Open
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ValvePath {
    OpenPath,
    ClosePath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AlarmCode {
    InterlockBlock,
    TempAlarm,
    SensorFault,
    LevelStuck,
    /// High and low level switches both asserted at once.
    LevelImplausible,
}

impl AlarmCode {
    pub fn as_str(self) -> &'static str {
        match self {
            AlarmCode::InterlockBlock => "INTERLOCK_BLOCK",
            AlarmCode::TempAlarm => "TEMP_ALARM",
            AlarmCode::SensorFault => "SENSOR_FAULT",
            AlarmCode::LevelStuck => "LEVEL_STUCK",
            AlarmCode::LevelImplausible => "LEVEL_IMPLAUSIBLE",
        }
    }

    pub fn is_level_related(self) -> bool {
        matches!(self, AlarmCode::LevelStuck | AlarmCode::LevelImplausible)
    }
}

impl fmt::Display for AlarmCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

/// A thermocouple channel as the controller sees it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Temperature {
    Celsius(f64),
    Fault,
}

impl Serialize for Temperature {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Temperature::Celsius(c) => s.serialize_f64(*c),
            Temperature::Fault => s.serialize_str("FAULT"),
        }
    }
}

impl<'de> Deserialize<'de> for Temperature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(c) => Ok(Temperature::Celsius(c)),
            Raw::Text(t) if t == "FAULT" => Ok(Temperature::Fault),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "expected number or \"FAULT\", got {t:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorImage {
    pub upper_closed_limit: bool,
    pub lower_closed_limit: bool,
    pub upper_temp: Temperature,
    pub lower_temp: Temperature,
    pub level_high: bool,
    pub level_low: bool,
}

impl SensorImage {
    /// Both gates confirmed closed, cool, hopper empty.
    pub fn nominal() -> Self {
        SensorImage {
            upper_closed_limit: true,
            lower_closed_limit: true,
            upper_temp: Temperature::Celsius(25.0),
            lower_temp: Temperature::Celsius(25.0),
            level_high: false,
            level_low: true,
        }
    }

    pub fn closed_limit(&self, gate: Gate) -> bool {
        match gate {
            Gate::Upper => self.upper_closed_limit,
            Gate::Lower => self.lower_closed_limit,
        }
    }

    /// Ideal limit switches that follow the previous scan's commands exactly.
    pub fn following(commands: &GateCommands) -> Self {
        SensorImage {
            upper_closed_limit: !commands.upper.position.is_open(),
            lower_closed_limit: !commands.lower.position.is_open(),
            ..SensorImage::nominal()
        }
    }
}

/// Drive signals for one valve plus the gate position they command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateDrive {
    pub position: GatePosition,
    pub solenoid_a: bool,
    pub solenoid_b: bool,
}

impl Default for GateDrive {
    fn default() -> Self {
        GateDrive {
            position: GatePosition::Closed,
            solenoid_a: false,
            solenoid_b: false,
        }
    }
}

pub type GateCommands = GatePair<GateDrive>;

impl GateCommands {
    pub fn both_open(&self) -> bool {
        self.upper.position.is_open() && self.lower.position.is_open()
    }

    /// True if either valve has both of its solenoids energized.
    pub fn solenoid_conflict(&self) -> bool {
        Gate::BOTH.iter().any(|&g| self[g].solenoid_a && self[g].solenoid_b)
    }

    pub fn positions(&self) -> GatePair<GatePosition> {
        GatePair {
            upper: self.upper.position,
            lower: self.lower.position,
        }
    }
}

/// A two-coil latching valve. Solenoid A selects the open path, B the close path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Valve {
    pub solenoid_a: bool,
    pub solenoid_b: bool,
    pub latched: ValvePath,
}

impl Default for Valve {
    fn default() -> Self {
        Valve {
            solenoid_a: false,
            solenoid_b: false,
            latched: ValvePath::ClosePath,
        }
    }
}

impl Valve {
    /// Apply one drive; the latch moves only toward an energized coil.
    pub fn apply(&mut self, solenoid_a: bool, solenoid_b: bool) {
        self.solenoid_a = solenoid_a;
        self.solenoid_b = solenoid_b;
        match (solenoid_a, solenoid_b) {
            (true, false) => self.latched = ValvePath::OpenPath,
            (false, true) => self.latched = ValvePath::ClosePath,
            _ => {}
        }
    }
}

pub type ValveState = GatePair<Valve>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub fill_a_ms: u64,
    pub fill_b_ms: u64,
    pub dwell_ms: u64,
    pub discharge_ms: u64,
    pub temp_alarm_c: f64,
    pub level_automation_enabled: bool,
    pub scan_dt_ms: u64,
    /// How long an opening may wait for the other gate to confirm closed
    /// after it was commanded closed, before the wait becomes an interlock block.
    pub interlock_grace_ms: u64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            fill_a_ms: 8000,
            fill_b_ms: 4000,
            dwell_ms: 8000,
            discharge_ms: 4000,
            temp_alarm_c: 400.0,
            level_automation_enabled: false,
            scan_dt_ms: 50,
            interlock_grace_ms: 2000,
        }
    }
}

impl ControllerConfig {
    pub fn preset(&self, phase: PhaseKind) -> Option<u64> {
        match phase {
            PhaseKind::FillA => Some(self.fill_a_ms),
            PhaseKind::FillB => Some(self.fill_b_ms),
            PhaseKind::Dwell => Some(self.dwell_ms),
            PhaseKind::Discharge => Some(self.discharge_ms),
            PhaseKind::SafeHold => None,
        }
    }

    pub fn cycle_ms(&self) -> u64 {
        self.fill_a_ms + self.fill_b_ms + self.dwell_ms + self.discharge_ms
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        let bad = |m: &str| Err(ControllerError::InvalidConfig(m.to_owned()));
        if [self.fill_a_ms, self.fill_b_ms, self.dwell_ms, self.discharge_ms].contains(&0) {
            return bad("phase presets must be > 0 ms");
        }
        if !(self.temp_alarm_c.is_finite() && self.temp_alarm_c > 0.0) {
            return bad("temp_alarm_c must be a positive number");
        }
        if self.scan_dt_ms == 0 {
            return bad("scan_dt_ms must be > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error("invalid controller config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum InterlockViolation {
    BothOpen,
    /// The upper gate may not open: lower not confirmed closed.
    LowerNotClosed,
    /// The lower gate may not open: upper not confirmed closed.
    UpperNotClosed,
}

impl InterlockViolation {
    fn blocking_gate(self) -> Option<Gate> {
        match self {
            InterlockViolation::BothOpen => None,
            InterlockViolation::LowerNotClosed => Some(Gate::Lower),
            InterlockViolation::UpperNotClosed => Some(Gate::Upper),
        }
    }
}

impl fmt::Display for InterlockViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InterlockViolation::BothOpen => "both gates requested open",
            InterlockViolation::LowerNotClosed => "lower gate not confirmed closed",
            InterlockViolation::UpperNotClosed => "upper gate not confirmed closed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interlock {
    Allow,
    Deny(InterlockViolation),
}

/// The mutual-exclusion rule. A gate may open only while the other gate's
/// closed-limit switch is made, and never together with the other gate.
pub fn check_interlock(sensors: &SensorImage, desired: &GatePair<GatePosition>) -> Interlock {
    let upper = desired.upper.is_open();
    let lower = desired.lower.is_open();
    if upper && lower {
        Interlock::Deny(InterlockViolation::BothOpen)
    } else if upper && !sensors.lower_closed_limit {
        Interlock::Deny(InterlockViolation::LowerNotClosed)
    } else if lower && !sensors.upper_closed_limit {
        Interlock::Deny(InterlockViolation::UpperNotClosed)
    } else {
        Interlock::Allow
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ManualCommand {
    Open(Gate),
    Close(Gate),
    Start,
    Stop,
    ResetAlarms,
    SetMode(Mode),
}

impl ManualCommand {
    pub fn name(self) -> &'static str {
        match self {
            ManualCommand::Open(Gate::Upper) => "open_upper",
            ManualCommand::Open(Gate::Lower) => "open_lower",
            ManualCommand::Close(Gate::Upper) => "close_upper",
            ManualCommand::Close(Gate::Lower) => "close_lower",
            ManualCommand::Start => "start",
            ManualCommand::Stop => "stop",
            ManualCommand::ResetAlarms => "reset_alarms",
            ManualCommand::SetMode(_) => "set_mode",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    WrongMode,
    SafeHold,
    Interlock(InterlockViolation),
    ConditionActive(AlarmCode),
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::WrongMode => f.write_str("wrong mode"),
            Rejection::SafeHold => f.write_str("safe hold"),
            Rejection::Interlock(_) => f.write_str("interlock"),
            Rejection::ConditionActive(code) => write!(f, "condition active: {code}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandOutcome {
    Accepted,
    Rejected(Rejection),
}

impl CommandOutcome {
    pub fn is_accepted(self) -> bool {
        self == CommandOutcome::Accepted
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Counters {
    pub cycles_completed: u64,
    pub early_fill_truncations: u64,
    pub discharge_extensions: u64,
    pub interlock_deferrals: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    config: ControllerConfig,
    phase: Phase,
    mode: Mode,
    valves: ValveState,
    alarms: BTreeSet<AlarmCode>,
    manual: GatePair<GatePosition>,
    last_sensors: SensorImage,
    last_commands: GateCommands,
    closed_for_ms: GatePair<u64>,
    discharge_extended: bool,
    time_ms: u64,
    counters: Counters,
}

enum Gating {
    Allow,
    Defer(Gate),
    Deny,
}

impl Controller {
    /// Power-on state: halted, both gates latched closed, coils off, no alarms.
    pub fn new(config: ControllerConfig) -> Result<Self, ControllerError> {
        config.validate()?;
        Ok(Controller {
            config,
            phase: Phase {
                kind: PhaseKind::FillA,
                elapsed_ms: 0,
            },
            mode: Mode::Halted,
            valves: ValveState::default(),
            alarms: BTreeSet::new(),
            manual: GatePair::splat(GatePosition::Closed),
            last_sensors: SensorImage::nominal(),
            last_commands: GateCommands::default(),
            closed_for_ms: GatePair::splat(u64::MAX / 2),
            discharge_extended: false,
            time_ms: 0,
            counters: Counters::default(),
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn valves(&self) -> &ValveState {
        &self.valves
    }

    pub fn alarms(&self) -> &BTreeSet<AlarmCode> {
        &self.alarms
    }

    pub fn last_commands(&self) -> &GateCommands {
        &self.last_commands
    }

    pub fn last_sensors(&self) -> &SensorImage {
        &self.last_sensors
    }

    pub fn time_ms(&self) -> u64 {
        self.time_ms
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    /// Advance one scan of `config.scan_dt_ms`.
    pub fn step(&mut self, sensors: &SensorImage) -> GateCommands {
        let dt = self.config.scan_dt_ms;
        self.time_ms += dt;
        self.last_sensors = *sensors;

        let mut guard_alarms = Vec::new();
        for temp in [sensors.upper_temp, sensors.lower_temp] {
            match temp {
                Temperature::Fault => guard_alarms.push(AlarmCode::SensorFault),
                // NaN fails the comparison and alarms too
                Temperature::Celsius(c) if !(c <= self.config.temp_alarm_c) => guard_alarms.push(AlarmCode::TempAlarm),
                Temperature::Celsius(_) => {}
            }
        }
        for code in guard_alarms {
            self.enter_safe_hold(code);
        }

        let mut desired = if self.phase.kind == PhaseKind::SafeHold {
            GatePair::splat(GatePosition::Closed)
        } else {
            match self.mode {
                Mode::Halted => GatePair::splat(GatePosition::Closed),
                Mode::Manual => self.manual,
                Mode::Auto => {
                    self.level_automation(sensors);
                    self.phase.kind.gate_table()
                }
            }
        };

        match self.gate_interlock(sensors, &desired) {
            Gating::Allow => {}
            Gating::Defer(gate) => {
                desired[gate] = GatePosition::Closed;
                self.counters.interlock_deferrals += 1;
            }
            Gating::Deny => {
                self.enter_safe_hold(AlarmCode::InterlockBlock);
                desired = GatePair::splat(GatePosition::Closed);
            }
        }

        if self.mode == Mode::Auto && self.phase.kind != PhaseKind::SafeHold {
            self.advance(sensors);
            if self.phase.kind == PhaseKind::SafeHold {
                desired = GatePair::splat(GatePosition::Closed);
            }
        }

        let commands = self.drive(desired);
        for gate in Gate::BOTH {
            self.closed_for_ms[gate] = match (commands[gate].position, self.last_commands[gate].position) {
                (GatePosition::Closed, GatePosition::Closed) => self.closed_for_ms[gate].saturating_add(dt),
                _ => 0,
            };
        }
        self.last_commands = commands;
        commands
    }

    fn gate_interlock(&self, sensors: &SensorImage, desired: &GatePair<GatePosition>) -> Gating {
        let violation = match check_interlock(sensors, desired) {
            Interlock::Allow => return Gating::Allow,
            Interlock::Deny(v) => v,
        };
        let Some(blocking) = violation.blocking_gate() else {
            return Gating::Deny;
        };
        // The blocking gate may simply still be travelling after our own close command.
        let since_close = if self.last_commands[blocking].position.is_open() {
            0
        } else {
            self.closed_for_ms[blocking].saturating_add(self.config.scan_dt_ms)
        };
        if desired[blocking] == GatePosition::Closed && since_close < self.config.interlock_grace_ms {
            Gating::Defer(blocking.other())
        } else {
            Gating::Deny
        }
    }

    fn level_automation(&mut self, sensors: &SensorImage) {
        if !self.config.level_automation_enabled {
            return;
        }
        if sensors.level_high && sensors.level_low {
            self.enter_safe_hold(AlarmCode::LevelImplausible);
            return;
        }
        if sensors.level_high && matches!(self.phase.kind, PhaseKind::FillA | PhaseKind::FillB) {
            self.phase = Phase {
                kind: PhaseKind::Dwell,
                elapsed_ms: 0,
            };
            self.counters.early_fill_truncations += 1;
        }
    }

    fn advance(&mut self, sensors: &SensorImage) {
        let Some(preset) = self.config.preset(self.phase.kind) else {
            return;
        };
        self.phase.elapsed_ms = (self.phase.elapsed_ms + self.config.scan_dt_ms).min(preset);
        let expired = self.phase.elapsed_ms >= preset;
        let automation = self.config.level_automation_enabled;

        if self.phase.kind == PhaseKind::Discharge && self.discharge_extended {
            if sensors.level_low {
                self.wrap();
            } else if expired {
                self.enter_safe_hold(AlarmCode::LevelStuck);
            }
            return;
        }
        if !expired {
            return;
        }
        let next = match self.phase.kind {
            PhaseKind::FillA => PhaseKind::FillB,
            PhaseKind::FillB => PhaseKind::Dwell,
            PhaseKind::Dwell => PhaseKind::Discharge,
            PhaseKind::Discharge if automation && !sensors.level_low => {
                self.discharge_extended = true;
                self.counters.discharge_extensions += 1;
                self.phase.elapsed_ms = 0;
                return;
            }
            PhaseKind::Discharge => {
                self.wrap();
                return;
            }
            PhaseKind::SafeHold => return,
        };
        self.phase = Phase {
            kind: next,
            elapsed_ms: 0,
        };
    }

    fn wrap(&mut self) {
        self.phase = Phase {
            kind: PhaseKind::FillA,
            elapsed_ms: 0,
        };
        self.discharge_extended = false;
        self.counters.cycles_completed += 1;
    }

    fn enter_safe_hold(&mut self, code: AlarmCode) {
        self.alarms.insert(code);
        self.phase = Phase {
            kind: PhaseKind::SafeHold,
            elapsed_ms: 0,
        };
        self.discharge_extended = false;
        self.manual = GatePair::splat(GatePosition::Closed);
    }

    /// Turn desired positions into coil drive. Running modes hold the
    /// selected coil energized; when halted a valve already in position is
    /// left with both coils off, since the latch keeps it there.
    fn drive(&mut self, desired: GatePair<GatePosition>) -> GateCommands {
        let hold_only = self.mode == Mode::Halted && self.phase.kind != PhaseKind::SafeHold;
        let mut out = GateCommands::default();
        for gate in Gate::BOTH {
            let open = desired[gate].is_open();
            let target = if open {
                ValvePath::OpenPath
            } else {
                ValvePath::ClosePath
            };
            let valve = &mut self.valves[gate];
            let energize = !hold_only || valve.latched != target;
            let (a, b) = match (energize, open) {
                (false, _) => (false, false),
                (true, true) => (true, false),
                (true, false) => (false, true),
            };
            valve.apply(a, b);
            out[gate] = GateDrive {
                position: match valve.latched {
                    ValvePath::OpenPath => GatePosition::Open,
                    ValvePath::ClosePath => GatePosition::Closed,
                },
                solenoid_a: a,
                solenoid_b: b,
            };
        }
        out
    }

    /// Operator request, applied between scans.
    pub fn request_manual(&mut self, cmd: ManualCommand) -> CommandOutcome {
        use CommandOutcome::*;
        match cmd {
            ManualCommand::Start | ManualCommand::SetMode(Mode::Auto) => {
                if self.mode != Mode::Auto {
                    self.mode = Mode::Auto;
                    if self.phase.kind != PhaseKind::SafeHold {
                        self.phase = Phase {
                            kind: PhaseKind::FillA,
                            elapsed_ms: 0,
                        };
                        self.discharge_extended = false;
                    }
                }
                self.manual = GatePair::splat(GatePosition::Closed);
                Accepted
            }
            ManualCommand::Stop | ManualCommand::SetMode(Mode::Halted) => {
                self.mode = Mode::Halted;
                self.manual = GatePair::splat(GatePosition::Closed);
                Accepted
            }
            ManualCommand::SetMode(Mode::Manual) => {
                if self.mode != Mode::Manual {
                    self.mode = Mode::Manual;
                    self.manual = GatePair::splat(GatePosition::Closed);
                }
                Accepted
            }
            ManualCommand::ResetAlarms => {
                if let Some(code) = self.alarms.iter().copied().find(|&c| self.condition_active(c)) {
                    return Rejected(Rejection::ConditionActive(code));
                }
                self.alarms.clear();
                if self.phase.kind == PhaseKind::SafeHold {
                    self.phase = Phase {
                        kind: PhaseKind::FillA,
                        elapsed_ms: 0,
                    };
                    self.mode = Mode::Halted;
                    self.manual = GatePair::splat(GatePosition::Closed);
                }
                Accepted
            }
            ManualCommand::Open(gate) | ManualCommand::Close(gate) => {
                if self.mode != Mode::Manual {
                    return Rejected(Rejection::WrongMode);
                }
                if self.phase.kind == PhaseKind::SafeHold {
                    return Rejected(Rejection::SafeHold);
                }
                let mut desired = self.manual;
                if let ManualCommand::Open(_) = cmd {
                    desired[gate] = GatePosition::Open;
                    if let Interlock::Deny(v) = check_interlock(&self.last_sensors, &desired) {
                        return Rejected(Rejection::Interlock(v));
                    }
                } else {
                    desired[gate] = GatePosition::Closed;
                }
                self.manual = desired;
                Accepted
            }
        }
    }

    fn condition_active(&self, code: AlarmCode) -> bool {
        let s = &self.last_sensors;
        let temps = [s.upper_temp, s.lower_temp];
        match code {
            AlarmCode::TempAlarm => temps
                .iter()
                .any(|t| matches!(t, Temperature::Celsius(c) if !(*c <= self.config.temp_alarm_c))),
            AlarmCode::SensorFault => temps.contains(&Temperature::Fault),
            AlarmCode::InterlockBlock => !(s.upper_closed_limit && s.lower_closed_limit),
            AlarmCode::LevelStuck => !s.level_low,
            AlarmCode::LevelImplausible => s.level_high && s.level_low,
        }
    }
}
