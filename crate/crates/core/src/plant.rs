//! Digital twin of the machine's physical side.
//!
//! Pneumatic gates with finite travel, closed-limit switches with
//! hysteresis, a hopper that fills and drains through the gates, a
//! first-order heating model, and two thermocouples read through the
//! frame codec once per second. Every parameter is invented; none is a
//! calibrated claim about real hardware.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{decode_max6675, encode_max6675, ThermoFrame, ThermoReading, MAX_CELSIUS};
use crate::controller::{Gate, GateCommands, GatePair, SensorImage, Temperature, Valve, ValvePath};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    /// Full stroke time of a healthy cylinder.
    pub travel_ms: u64,
    /// Hopper fraction gained per second while the upper gate is open.
    pub fill_rate: f64,
    /// Hopper fraction lost per second while the lower gate is open.
    pub discharge_rate: f64,
    pub initial_level: f64,
    pub ambient_temp_c: f64,
    /// Steady-state rise above ambient while material flows past a sensor.
    pub flow_heating_c: f64,
    pub thermal_tau_ms: f64,
    pub switch_make_below: f64,
    pub switch_release_at: f64,
    pub level_high_above: f64,
    pub level_low_below: f64,
    pub thermo_sample_ms: u64,
    /// Protective plate over the level sensors; cancels interference.
    pub shield_installed: bool,
}

impl Default for PlantConfig {
    fn default() -> Self {
        PlantConfig {
            travel_ms: 500,
            fill_rate: 0.05,
            discharge_rate: 0.2,
            initial_level: 0.0,
            ambient_temp_c: 25.0,
            flow_heating_c: 20.0,
            thermal_tau_ms: 20_000.0,
            switch_make_below: 0.02,
            switch_release_at: 0.05,
            level_high_above: 0.8,
            level_low_below: 0.1,
            thermo_sample_ms: 1000,
            shield_installed: false,
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<(), PlantError> {
        let bad = |m: &str| Err(PlantError::InvalidConfig(m.to_owned()));
        let finite = [
            self.fill_rate,
            self.discharge_rate,
            self.initial_level,
            self.ambient_temp_c,
            self.flow_heating_c,
            self.thermal_tau_ms,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("parameters must be finite");
        }
        if self.travel_ms == 0 || self.thermo_sample_ms == 0 {
            return bad("travel_ms and thermo_sample_ms must be > 0");
        }
        if self.fill_rate < 0.0 || self.discharge_rate < 0.0 || self.flow_heating_c < 0.0 {
            return bad("rates and heating must be >= 0");
        }
        if self.thermal_tau_ms <= 0.0 {
            return bad("thermal_tau_ms must be > 0");
        }
        if !(0.0..=1.0).contains(&self.initial_level) {
            return bad("initial_level must be in [0, 1]");
        }
        if !(0.0 < self.switch_make_below
            && self.switch_make_below <= self.switch_release_at
            && self.switch_release_at < 1.0)
        {
            return bad("switch band must satisfy 0 < make <= release < 1");
        }
        if !(self.level_low_below < self.level_high_above) {
            return bad("level_low_below must be below level_high_above");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitSwitch {
    UpperClosed,
    LowerClosed,
}

impl LimitSwitch {
    pub fn gate(self) -> Gate {
        match self {
            LimitSwitch::UpperClosed => Gate::Upper,
            LimitSwitch::LowerClosed => Gate::Lower,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultKind {
    StuckCylinder { gate: Gate },
    SlowCylinder { gate: Gate, factor: f64 },
    LimitSwitchStuck { switch: LimitSwitch, value: bool },
    LevelInterference { rate: f64 },
    ThermocoupleOpen { sensor: Gate },
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultKind::StuckCylinder { gate } => write!(f, "STUCK_CYLINDER({gate})"),
            FaultKind::SlowCylinder { gate, factor } => write!(f, "SLOW_CYLINDER({gate}, {factor})"),
            FaultKind::LimitSwitchStuck { switch, value } => {
                write!(f, "LIMIT_SWITCH_STUCK({}_closed, {value})", switch.gate())
            }
            FaultKind::LevelInterference { rate } => write!(f, "LEVEL_INTERFERENCE({rate})"),
            FaultKind::ThermocoupleOpen { sensor } => write!(f, "THERMOCOUPLE_OPEN({sensor})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Element {
    Cylinder(Gate),
    Switch(LimitSwitch),
    LevelSensors,
    Thermocouple(Gate),
}

impl FaultKind {
    fn element(&self) -> Element {
        match *self {
            FaultKind::StuckCylinder { gate } | FaultKind::SlowCylinder { gate, .. } => Element::Cylinder(gate),
            FaultKind::LimitSwitchStuck { switch, .. } => Element::Switch(switch),
            FaultKind::LevelInterference { .. } => Element::LevelSensors,
            FaultKind::ThermocoupleOpen { sensor } => Element::Thermocouple(sensor),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    #[serde(default)]
    pub at_ms: u64,
    #[serde(flatten)]
    pub kind: FaultKind,
}

impl FaultSpec {
    pub fn new(at_ms: u64, kind: FaultKind) -> Self {
        FaultSpec { at_ms, kind }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        match self.kind {
            FaultKind::SlowCylinder { factor, .. } if !(factor > 0.0 && factor <= 1.0) => {
                Err(PlantError::InvalidFault(format!("slow factor {factor} not in (0, 1]")))
            }
            FaultKind::LevelInterference { rate } if !(0.0..=1.0).contains(&rate) => Err(PlantError::InvalidFault(
                format!("interference rate {rate} not in [0, 1]"),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantError {
    #[error("invalid plant config: {0}")]
    InvalidConfig(String),
    #[error("invalid fault: {0}")]
    InvalidFault(String),
    #[error("fault {new} conflicts with {existing} on the same element")]
    ConflictingFault { existing: String, new: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CylinderHealth {
    Ok,
    Stuck,
    Slow,
}

/// Sensor image plus the raw thermocouple words it was decoded from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorReading {
    pub image: SensorImage,
    pub frames: GatePair<ThermoFrame>,
}

/// Physical summary used by reports and telemetry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantSummary {
    pub t_ms: u64,
    pub upper_pos: f64,
    pub lower_pos: f64,
    pub hopper_level: f64,
    pub upper_temp_c: f64,
    pub lower_temp_c: f64,
    pub upper_cylinder: CylinderHealth,
    pub lower_cylinder: CylinderHealth,
}

#[derive(Debug, Clone)]
pub struct Plant {
    config: PlantConfig,
    time_ms: u64,
    position: GatePair<f64>,
    valves: GatePair<Valve>,
    switch_made: GatePair<bool>,
    level: f64,
    temp_c: GatePair<f64>,
    faults: Vec<FaultSpec>,
    frames: GatePair<ThermoFrame>,
    next_sample_ms: u64,
    seed: u64,
    rng: ChaCha8Rng,
}

impl Plant {
    pub fn new(config: PlantConfig, seed: u64) -> Result<Self, PlantError> {
        config.validate()?;
        Ok(Plant {
            config,
            time_ms: 0,
            position: GatePair::splat(0.0),
            valves: GatePair::default(),
            switch_made: GatePair::splat(true),
            level: config.initial_level,
            temp_c: GatePair::splat(config.ambient_temp_c),
            faults: Vec::new(),
            frames: GatePair::splat(ThermoFrame::default()),
            next_sample_ms: 0,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn config(&self) -> &PlantConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn time_ms(&self) -> u64 {
        self.time_ms
    }

    pub fn position(&self, gate: Gate) -> f64 {
        self.position[gate]
    }

    pub fn positions(&self) -> GatePair<f64> {
        self.position
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn temperature(&self, gate: Gate) -> f64 {
        self.temp_c[gate]
    }

    /// Force a zone temperature, for scripted scenarios.
    pub fn set_temperature(&mut self, gate: Gate, celsius: f64) {
        if celsius.is_finite() {
            self.temp_c[gate] = celsius;
        }
    }

    pub fn set_level(&mut self, level: f64) {
        if level.is_finite() {
            self.level = level.clamp(0.0, 1.0);
        }
    }

    pub fn faults(&self) -> &[FaultSpec] {
        &self.faults
    }

    pub fn inject_fault(&mut self, fault: FaultSpec) -> Result<(), PlantError> {
        fault.validate()?;
        if let Some(existing) = self.faults.iter().find(|f| f.kind.element() == fault.kind.element()) {
            if *existing == fault {
                return Ok(());
            }
            return Err(PlantError::ConflictingFault {
                existing: format!("{} @ {} ms", existing.kind, existing.at_ms),
                new: format!("{} @ {} ms", fault.kind, fault.at_ms),
            });
        }
        self.faults.push(fault);
        Ok(())
    }

    fn active(&self) -> impl Iterator<Item = &FaultKind> {
        let now = self.time_ms;
        self.faults.iter().filter(move |f| f.at_ms <= now).map(|f| &f.kind)
    }

    pub fn cylinder_health(&self, gate: Gate) -> CylinderHealth {
        for f in self.active() {
            match *f {
                FaultKind::StuckCylinder { gate: g } if g == gate => return CylinderHealth::Stuck,
                FaultKind::SlowCylinder { gate: g, .. } if g == gate => return CylinderHealth::Slow,
                _ => {}
            }
        }
        CylinderHealth::Ok
    }

    fn speed_factor(&self, gate: Gate) -> f64 {
        for f in self.active() {
            match *f {
                FaultKind::StuckCylinder { gate: g } if g == gate => return 0.0,
                FaultKind::SlowCylinder { gate: g, factor } if g == gate => return factor,
                _ => {}
            }
        }
        1.0
    }

    fn interference_rate(&self) -> f64 {
        if self.config.shield_installed {
            return 0.0;
        }
        self.active()
            .find_map(|f| match *f {
                FaultKind::LevelInterference { rate } => Some(rate),
                _ => None,
            })
            .unwrap_or(0.0)
    }

    /// Advance physics by `dt_ms` under the given drive.
    pub fn sim_step(&mut self, commands: &GateCommands, dt_ms: u64) {
        if dt_ms == 0 {
            return;
        }
        let dt = dt_ms as f64;
        let cfg = self.config;
        for gate in Gate::BOTH {
            self.valves[gate].apply(commands[gate].solenoid_a, commands[gate].solenoid_b);
            let target = match self.valves[gate].latched {
                ValvePath::OpenPath => 1.0,
                ValvePath::ClosePath => 0.0,
            };
            let max_move = dt / cfg.travel_ms as f64 * self.speed_factor(gate);
            let pos = self.position[gate];
            let moved = pos + (target - pos).clamp(-max_move, max_move);
            self.position[gate] = moved.clamp(0.0, 1.0);

            let p = self.position[gate];
            if p < cfg.switch_make_below {
                self.switch_made[gate] = true;
            } else if p >= cfg.switch_release_at {
                self.switch_made[gate] = false;
            }
        }

        let secs = dt / 1000.0;
        let filling = self.position.upper > 0.9;
        let draining = self.position.lower > 0.9;
        if filling {
            self.level += cfg.fill_rate * secs;
        }
        if draining {
            self.level -= cfg.discharge_rate * secs;
        }
        self.level = self.level.clamp(0.0, 1.0);

        // Each zone relaxes toward ambient, plus friction heating while material moves past it.
        let alpha = 1.0 - (-dt / cfg.thermal_tau_ms).exp();
        for (gate, flowing) in [(Gate::Upper, filling), (Gate::Lower, draining && self.level > 0.0)] {
            let target = cfg.ambient_temp_c + if flowing { cfg.flow_heating_c } else { 0.0 };
            let t = &mut self.temp_c[gate];
            *t += (target - *t) * alpha;
        }

        self.time_ms += dt_ms;
    }

    fn thermocouple_open(&self, gate: Gate) -> bool {
        self.active()
            .any(|f| matches!(*f, FaultKind::ThermocoupleOpen { sensor } if sensor == gate))
    }

    fn sample_thermocouples(&mut self) {
        for gate in Gate::BOTH {
            let open = self.thermocouple_open(gate);
            let t = self.temp_c[gate].clamp(0.0, MAX_CELSIUS);
            self.frames[gate] = encode_max6675(if open { 0.0 } else { t }, open).expect("clamped into codec range");
        }
    }

    /// Read every sensor at the current plant time.
    ///
    /// Thermocouples are sampled on their own cadence and hold the last
    /// frame in between; temperatures reach the controller only through
    /// the frame decoder.
    pub fn read_sensors(&mut self) -> SensorReading {
        if self.time_ms >= self.next_sample_ms {
            self.sample_thermocouples();
            while self.next_sample_ms <= self.time_ms {
                self.next_sample_ms += self.config.thermo_sample_ms;
            }
        }

        let mut closed = self.switch_made;
        for f in self.active() {
            if let FaultKind::LimitSwitchStuck { switch, value } = *f {
                closed[switch.gate()] = value;
            }
        }

        let mut level_high = self.level > self.config.level_high_above;
        let mut level_low = self.level < self.config.level_low_below;
        let rate = self.interference_rate();
        if rate > 0.0 {
            level_high ^= self.rng.random_bool(rate);
            level_low ^= self.rng.random_bool(rate);
        }

        let temp = |frame: ThermoFrame| match decode_max6675(frame.raw()) {
            Ok(ThermoReading::Celsius(c)) => Temperature::Celsius(c),
            _ => Temperature::Fault,
        };
        SensorReading {
            image: SensorImage {
                upper_closed_limit: closed.upper,
                lower_closed_limit: closed.lower,
                upper_temp: temp(self.frames.upper),
                lower_temp: temp(self.frames.lower),
                level_high,
                level_low,
            },
            frames: self.frames,
        }
    }

    pub fn summary(&self) -> PlantSummary {
        PlantSummary {
            t_ms: self.time_ms,
            upper_pos: self.position.upper,
            lower_pos: self.position.lower,
            hopper_level: self.level,
            upper_temp_c: self.temp_c.upper,
            lower_temp_c: self.temp_c.lower,
            upper_cylinder: self.cylinder_health(Gate::Upper),
            lower_cylinder: self.cylinder_health(Gate::Lower),
        }
    }
}
