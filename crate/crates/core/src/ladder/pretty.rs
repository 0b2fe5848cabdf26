use std::fmt;

use super::{ContactKind, Element, LadderProgram, Target, VarKind};

fn write_series(f: &mut fmt::Formatter<'_>, elements: &[Element]) -> fmt::Result {
    for (i, el) in elements.iter().enumerate() {
        if i > 0 {
            f.write_str(" ")?;
        }
        match el {
            Element::Contact { kind, var } => {
                let k = match kind {
                    ContactKind::NormallyOpen => "NO",
                    ContactKind::NormallyClosed => "NC",
                };
                write!(f, "[{k} {var}]")?;
            }
            // `{:?}` prints the shortest text that parses back to the same f64.
            Element::Compare { var, op, constant } => write!(f, "[CMP {var} {} {constant:?}]", op.symbol())?,
            Element::Ton { timer } => write!(f, "[TON {timer}]")?,
            Element::Parallel(branches) => {
                f.write_str("OR(")?;
                for (j, branch) in branches.iter().enumerate() {
                    if j > 0 {
                        f.write_str(", ")?;
                    }
                    write_series(f, branch)?;
                }
                f.write_str(")")?;
            }
        }
    }
    Ok(())
}

/// Canonical source form. Reparsing it yields the same program, minus spans.
impl fmt::Display for LadderProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, kind) in &self.variables {
            match kind {
                VarKind::Timer => {
                    let preset = self.timer_presets.get(name).copied().unwrap_or(0);
                    writeln!(f, "TIMER {name} PRESET {preset};")?;
                }
                other => writeln!(f, "VAR {name} : {other};")?,
            }
        }
        if !self.variables.is_empty() && !self.rungs.is_empty() {
            writeln!(f)?;
        }
        for rung in &self.rungs {
            f.write_str("RUNG : ")?;
            write_series(f, &rung.elements)?;
            match &rung.target {
                Target::Coil(v) => writeln!(f, " => COIL {v};")?,
                Target::Set(v) => writeln!(f, " => SET {v};")?,
                Target::Reset(v) => writeln!(f, " => RESET {v};")?,
            }
        }
        Ok(())
    }
}
