use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ContactKind, Element, LadderProgram, Target, VarKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Real(f64),
}

impl Value {
    pub fn kind(self) -> VarKind {
        match self {
            Value::Bool(_) => VarKind::Bool,
            Value::Real(_) => VarKind::Real,
        }
    }

    pub fn as_bool(self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(b),
            Value::Real(_) => None,
        }
    }

    /// Bitwise identity, so NaN payloads and signed zeros count as different.
    pub fn bit_eq(self, other: Value) -> bool {
        match (self, other) {
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Real(a), Value::Real(b)) => a.to_bits() == b.to_bits(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TimerState {
    pub elapsed_ms: u64,
    pub done: bool,
}

/// Process image of one program: latched inputs, committed outputs and
/// timer accumulators.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScanImage {
    pub inputs: BTreeMap<String, Value>,
    pub outputs: BTreeMap<String, Value>,
    pub timers: BTreeMap<String, TimerState>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScanError {
    #[error("scan period must be > 0 ms")]
    ZeroDt,
    #[error("image does not match program variable table: {0}")]
    MismatchedImage(String),
}

fn zero(kind: VarKind) -> Value {
    match kind {
        VarKind::Real => Value::Real(0.0),
        _ => Value::Bool(false),
    }
}

impl ScanImage {
    /// Power-on image: every BOOL false, every REAL 0.0, timers cleared.
    pub fn for_program(program: &LadderProgram) -> Self {
        let mut image = ScanImage::default();
        for name in program.input_names() {
            image.inputs.insert(name.to_owned(), zero(program.variables[name]));
        }
        for name in program.output_names() {
            let kind = program.kind_of(name).unwrap_or(VarKind::Bool);
            image.outputs.insert(name.to_owned(), zero(kind));
        }
        for name in program.timer_presets.keys() {
            image.timers.insert(name.clone(), TimerState::default());
        }
        image
    }

    pub fn set_input(&mut self, name: &str, value: Value) -> bool {
        match self.inputs.get_mut(name) {
            Some(slot) if slot.kind() == value.kind() => {
                *slot = value;
                true
            }
            _ => false,
        }
    }

    pub fn output(&self, name: &str) -> Option<Value> {
        self.outputs.get(name).copied()
    }

    fn check_against(&self, program: &LadderProgram) -> Result<(), ScanError> {
        let inputs = program.input_names();
        let outputs = program.output_names();
        let same_keys = |map: &BTreeMap<String, Value>, names: &[&str]| {
            map.len() == names.len() && map.keys().zip(names).all(|(a, b)| a == b)
        };
        if !same_keys(&self.inputs, &inputs) {
            return Err(ScanError::MismatchedImage("input set differs".into()));
        }
        if !same_keys(&self.outputs, &outputs) {
            return Err(ScanError::MismatchedImage("output set differs".into()));
        }
        for (name, value) in self.inputs.iter().chain(self.outputs.iter()) {
            if program.kind_of(name) != Some(value.kind()) {
                return Err(ScanError::MismatchedImage(format!(
                    "{name} holds {}, declared {:?}",
                    value.kind(),
                    program.kind_of(name)
                )));
            }
        }
        if self.timers.len() != program.timer_presets.len()
            || !self.timers.keys().all(|k| program.timer_presets.contains_key(k))
        {
            return Err(ScanError::MismatchedImage("timer set differs".into()));
        }
        Ok(())
    }
}

struct Eval<'a> {
    program: &'a LadderProgram,
    image: ScanImage,
    dt_ms: u64,
}

impl Eval<'_> {
    fn read_bool(&self, name: &str) -> bool {
        if let Some(t) = self.image.timers.get(name) {
            return t.done;
        }
        self.image
            .outputs
            .get(name)
            .or_else(|| self.image.inputs.get(name))
            .and_then(|v| v.as_bool())
            .unwrap_or(false)
    }

    fn read_real(&self, name: &str) -> f64 {
        match self.image.outputs.get(name).or_else(|| self.image.inputs.get(name)) {
            Some(Value::Real(r)) => *r,
            _ => 0.0,
        }
    }

    // No short-circuiting: every timer on the rung must see its input each scan.
    fn series(&mut self, elements: &[Element], mut power: bool) -> bool {
        for el in elements {
            power = self.element(el, power);
        }
        power
    }

    fn element(&mut self, el: &Element, power: bool) -> bool {
        match el {
            Element::Contact { kind, var } => {
                let v = self.read_bool(var);
                power
                    && match kind {
                        ContactKind::NormallyOpen => v,
                        ContactKind::NormallyClosed => !v,
                    }
            }
            Element::Compare { var, op, constant } => power && op.apply(self.read_real(var), *constant),
            Element::Ton { timer } => {
                let preset = self.program.timer_presets.get(timer).copied().unwrap_or(1).max(1) as u64;
                let state = self.image.timers.entry(timer.clone()).or_default();
                if power {
                    state.elapsed_ms = state.elapsed_ms.saturating_add(self.dt_ms).min(preset);
                    state.done = state.elapsed_ms >= preset;
                } else {
                    *state = TimerState::default();
                }
                state.done
            }
            Element::Parallel(branches) => {
                let mut any = false;
                for branch in branches {
                    any |= self.series(branch, power);
                }
                any
            }
        }
    }
}

/// Execute one scan: rungs top to bottom against the latched inputs. A coil
/// written by one rung is visible to the rungs below it in the same scan.
pub fn scan(program: &LadderProgram, image: &ScanImage, dt_ms: u64) -> Result<ScanImage, ScanError> {
    if dt_ms == 0 {
        return Err(ScanError::ZeroDt);
    }
    image.check_against(program)?;
    let mut eval = Eval {
        program,
        image: image.clone(),
        dt_ms,
    };
    for rung in &program.rungs {
        let power = eval.series(&rung.elements, true);
        let slot = eval
            .image
            .outputs
            .entry(rung.target.var().to_owned())
            .or_insert(Value::Bool(false));
        match &rung.target {
            Target::Coil(_) => *slot = Value::Bool(power),
            Target::Set(_) if power => *slot = Value::Bool(true),
            Target::Reset(_) if power => *slot = Value::Bool(false),
            _ => {}
        }
    }
    Ok(eval.image)
}
