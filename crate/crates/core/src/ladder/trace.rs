use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{scan, LadderProgram, ScanError, ScanImage, Value};

/// Drive input `name` to `value` from time `at_ms` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputAssignment {
    pub at_ms: u64,
    pub name: String,
    pub value: Value,
}

impl InputAssignment {
    pub fn new(at_ms: u64, name: &str, value: Value) -> Self {
        InputAssignment {
            at_ms,
            name: name.to_owned(),
            value,
        }
    }
}

/// Output image committed at the end of one scan, stamped with the commit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceTick {
    pub t_ms: u64,
    pub outputs: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IoTrace {
    pub dt_ms: u64,
    pub ticks: Vec<TraceTick>,
}

impl IoTrace {
    /// One output's values across the whole trace.
    pub fn column(&self, name: &str) -> Vec<Option<Value>> {
        self.ticks.iter().map(|t| t.outputs.get(name).copied()).collect()
    }

    pub fn bit_eq(&self, other: &IoTrace) -> bool {
        self.dt_ms == other.dt_ms
            && self.ticks.len() == other.ticks.len()
            && self.ticks.iter().zip(&other.ticks).all(|(a, b)| {
                a.t_ms == b.t_ms
                    && a.outputs.len() == b.outputs.len()
                    && a.outputs
                        .iter()
                        .zip(&b.outputs)
                        .all(|((ka, va), (kb, vb))| ka == kb && va.bit_eq(*vb))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("scan period must be > 0 ms")]
    ZeroDt,
    #[error("duration {duration_ms} ms is not a multiple of dt {dt_ms} ms")]
    DurationNotMultiple { duration_ms: u64, dt_ms: u64 },
    #[error("schedule references unknown variable {0}")]
    UnknownVariable(String),
    #[error("schedule drives {0}, which is written by a rung and is not an input")]
    NotAnInput(String),
    #[error("schedule assigns a {expected} variable {name} the wrong type")]
    TypeMismatch { name: String, expected: String },
    #[error("conflicting assignments to {name} at {at_ms} ms")]
    ConflictingAssignment { name: String, at_ms: u64 },
    #[error(transparent)]
    Scan(#[from] ScanError),
}

/// Run a program from power-on for `duration_ms`, scanning every `dt_ms`.
///
/// Scan `k` starts at `k * dt_ms` and latches every assignment with
/// `at_ms <= k * dt_ms` that an earlier scan has not already latched. When
/// one scan latches several assignments to the same input, the latest
/// `at_ms` wins; equal times with different values are rejected. Tick `k`
/// of the trace holds the outputs committed by scan `k`, stamped
/// `(k + 1) * dt_ms`.
pub fn run_trace(
    program: &LadderProgram,
    schedule: &[InputAssignment],
    duration_ms: u64,
    dt_ms: u64,
) -> Result<IoTrace, TraceError> {
    if dt_ms == 0 {
        return Err(TraceError::ZeroDt);
    }
    if !duration_ms.is_multiple_of(dt_ms) {
        return Err(TraceError::DurationNotMultiple { duration_ms, dt_ms });
    }

    let inputs = program.input_names();
    for a in schedule {
        let Some(kind) = program.kind_of(&a.name) else {
            return Err(TraceError::UnknownVariable(a.name.clone()));
        };
        if inputs.binary_search(&a.name.as_str()).is_err() {
            return Err(TraceError::NotAnInput(a.name.clone()));
        }
        if kind != a.value.kind() {
            return Err(TraceError::TypeMismatch {
                name: a.name.clone(),
                expected: kind.to_string(),
            });
        }
    }

    let mut ordered: Vec<&InputAssignment> = schedule.iter().collect();
    ordered.sort_by_key(|a| a.at_ms);

    let ticks = duration_ms / dt_ms;
    let mut image = ScanImage::for_program(program);
    let mut trace = IoTrace {
        dt_ms,
        ticks: Vec::with_capacity(ticks as usize),
    };
    let mut next = 0usize;

    for k in 0..ticks {
        let start = k * dt_ms;
        let mut latched: BTreeMap<&str, (u64, Value)> = BTreeMap::new();
        while next < ordered.len() && ordered[next].at_ms <= start {
            let a = ordered[next];
            match latched.get(a.name.as_str()) {
                Some(&(t, v)) if t == a.at_ms && !v.bit_eq(a.value) => {
                    return Err(TraceError::ConflictingAssignment {
                        name: a.name.clone(),
                        at_ms: a.at_ms,
                    })
                }
                _ => {
                    latched.insert(&a.name, (a.at_ms, a.value));
                }
            }
            next += 1;
        }
        for (name, (_, value)) in latched {
            image.set_input(name, value);
        }
        image = scan(program, &image, dt_ms)?;
        trace.ticks.push(TraceTick {
            t_ms: start + dt_ms,
            outputs: image.outputs.clone(),
        });
    }
    Ok(trace)
}
