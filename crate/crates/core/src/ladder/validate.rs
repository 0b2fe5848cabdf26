use std::collections::BTreeMap;

use super::{Diagnostic, DiagnosticKind, Diagnostics, Element, LadderProgram, Span, Target, VarKind};

#[derive(Default)]
struct Writers {
    coil: Option<usize>,
    latch: Option<usize>,
}

/// Check every program invariant. An empty result means the program is
/// safe to scan.
///
/// A variable may be driven either by exactly one `COIL` rung or by any
/// number of `SET`/`RESET` rungs, never both.
pub fn validate(program: &LadderProgram) -> Diagnostics {
    let mut out = Vec::new();

    for (name, kind) in &program.variables {
        if *kind != VarKind::Timer {
            continue;
        }
        let span = program.decl_spans.get(name).copied().unwrap_or_default();
        match program.timer_presets.get(name) {
            Some(&preset) if preset <= 0 => out.push(Diagnostic {
                kind: DiagnosticKind::NonPositivePreset,
                span,
                rung: None,
                message: format!("timer {name} preset must be > 0 ms, got {preset}"),
            }),
            Some(_) => {}
            None => out.push(Diagnostic {
                kind: DiagnosticKind::MissingPreset,
                span,
                rung: None,
                message: format!("timer {name} has no preset"),
            }),
        }
    }
    for name in program.timer_presets.keys() {
        if program.kind_of(name) != Some(VarKind::Timer) {
            out.push(Diagnostic {
                kind: DiagnosticKind::MissingPreset,
                span: Span::default(),
                rung: None,
                message: format!("preset given for {name}, which is not a declared timer"),
            });
        }
    }

    let mut writers: BTreeMap<&str, Writers> = BTreeMap::new();
    let mut timer_users: BTreeMap<&str, usize> = BTreeMap::new();

    for (index, rung) in program.rungs.iter().enumerate() {
        let mut ctx = RungCheck {
            program,
            index,
            span: rung.span,
            out: &mut out,
            timer_users: &mut timer_users,
        };
        ctx.series(&rung.elements);

        let var = rung.target.var();
        match program.kind_of(var) {
            None => ctx.push(DiagnosticKind::UnknownIdentifier, format!("unknown identifier {var}")),
            Some(VarKind::Bool) => {}
            Some(kind) => ctx.push(
                DiagnosticKind::TypeMismatch,
                format!("output target {var} is {kind}, expected BOOL"),
            ),
        }

        let entry = writers.entry(var).or_default();
        let conflict = match rung.target {
            Target::Coil(_) => {
                let prior = entry.coil.or(entry.latch);
                entry.coil.get_or_insert(index);
                prior
            }
            Target::Set(_) | Target::Reset(_) => {
                entry.latch.get_or_insert(index);
                entry.coil
            }
        };
        if let Some(prior) = conflict {
            out.push(Diagnostic {
                kind: DiagnosticKind::DuplicateCoilWrite,
                span: rung.span,
                rung: Some(index),
                message: format!("duplicate coil write to {var} (first written by rung {prior})"),
            });
        }
    }

    Diagnostics(out)
}

struct RungCheck<'p, 'm> {
    program: &'p LadderProgram,
    index: usize,
    span: Span,
    out: &'m mut Vec<Diagnostic>,
    timer_users: &'m mut BTreeMap<&'p str, usize>,
}

impl<'p> RungCheck<'p, '_> {
    fn push(&mut self, kind: DiagnosticKind, message: String) {
        self.out.push(Diagnostic {
            kind,
            span: self.span,
            rung: Some(self.index),
            message,
        });
    }

    fn lookup(&mut self, var: &str) -> Option<VarKind> {
        let kind = self.program.kind_of(var);
        if kind.is_none() {
            self.push(DiagnosticKind::UnknownIdentifier, format!("unknown identifier {var}"));
        }
        kind
    }

    fn series(&mut self, elements: &'p [Element]) {
        for el in elements {
            self.element(el);
        }
    }

    fn element(&mut self, el: &'p Element) {
        match el {
            Element::Contact { var, .. } => {
                if let Some(VarKind::Real) = self.lookup(var) {
                    self.push(
                        DiagnosticKind::TypeMismatch,
                        format!("contact on REAL variable {var}; use CMP"),
                    );
                }
            }
            Element::Compare { var, constant, .. } => {
                match self.lookup(var) {
                    Some(VarKind::Real) | None => {}
                    Some(kind) => self.push(
                        DiagnosticKind::TypeMismatch,
                        format!("comparator on {kind} variable {var}, expected REAL"),
                    ),
                }
                if !constant.is_finite() {
                    self.push(
                        DiagnosticKind::NonFiniteConstant,
                        format!("comparator constant {constant} is not finite"),
                    );
                }
            }
            Element::Ton { timer } => {
                match self.lookup(timer) {
                    Some(VarKind::Timer) | None => {}
                    Some(kind) => self.push(
                        DiagnosticKind::TypeMismatch,
                        format!("TON on {kind} variable {timer}, expected TIMER"),
                    ),
                }
                if let Some(&prior) = self.timer_users.get(timer.as_str()) {
                    self.push(
                        DiagnosticKind::DuplicateTimerUse,
                        format!("timer {timer} already driven by rung {prior}"),
                    );
                } else {
                    self.timer_users.insert(timer, self.index);
                }
            }
            Element::Parallel(branches) => {
                for branch in branches {
                    self.series(branch);
                }
            }
        }
    }
}
