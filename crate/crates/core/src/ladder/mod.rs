//! A small ladder-logic language with IEC-style scan semantics.
//!
//! Programs are written in a keyword form rather than ASCII art:
//!
//! ```text
//! VAR start : BOOL;
//! VAR temp  : REAL;
//! VAR lamp  : BOOL;
//! TIMER t1 PRESET 8000;
//!
//! RUNG : [NO start] [CMP temp < 400.0] [TON t1] => COIL lamp;
//! RUNG : OR([NO lamp], [NC start]) => RESET lamp;
//! ```
//!
//! See `docs/ladder-grammar.md` in the repository for the full grammar.
//! Elements in a rung are in series (AND); `OR(a, b, ...)` places
//! branches in parallel. A contact on a `TIMER` name reads its done bit.

mod parser;
mod pretty;
mod scan;
mod trace;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

pub use parser::parse_ladder;
pub use scan::{scan, ScanError, ScanImage, TimerState, Value};
pub use trace::{run_trace, InputAssignment, IoTrace, TraceError, TraceTick};
pub use validate::validate;

/// The Cyclone gate sequence shipped with the crate.
pub const CYCLONE_LADDER: &str = include_str!("../../assets/cyclone.lad");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarKind {
    Bool,
    Real,
    Timer,
}

impl fmt::Display for VarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VarKind::Bool => "BOOL",
            VarKind::Real => "REAL",
            VarKind::Timer => "TIMER",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactKind {
    NormallyOpen,
    NormallyClosed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn apply(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Element {
    Contact {
        kind: ContactKind,
        var: String,
    },
    Compare {
        var: String,
        op: CmpOp,
        constant: f64,
    },
    /// On-delay timer; its output is the timer's done bit.
    Ton {
        timer: String,
    },
    /// Parallel branches, each a series of elements.
    Parallel(Vec<Vec<Element>>),
}

impl Element {
    pub fn no(var: &str) -> Self {
        Element::Contact {
            kind: ContactKind::NormallyOpen,
            var: var.to_owned(),
        }
    }

    pub fn nc(var: &str) -> Self {
        Element::Contact {
            kind: ContactKind::NormallyClosed,
            var: var.to_owned(),
        }
    }

    pub fn ton(timer: &str) -> Self {
        Element::Ton {
            timer: timer.to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Coil(String),
    Set(String),
    Reset(String),
}

impl Target {
    pub fn var(&self) -> &str {
        match self {
            Target::Coil(v) | Target::Set(v) | Target::Reset(v) => v,
        }
    }
}

/// 1-based source position. `Span::default()` marks a node built in code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, PartialOrd, Ord)]
pub struct Span {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rung {
    pub elements: Vec<Element>,
    pub target: Target,
    pub span: Span,
}

impl Rung {
    pub fn new(elements: Vec<Element>, target: Target) -> Self {
        Rung {
            elements,
            target,
            span: Span::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LadderProgram {
    pub variables: BTreeMap<String, VarKind>,
    pub timer_presets: BTreeMap<String, i64>,
    pub rungs: Vec<Rung>,
    pub decl_spans: BTreeMap<String, Span>,
}

impl LadderProgram {
    pub fn declare(&mut self, name: &str, kind: VarKind) -> &mut Self {
        self.variables.insert(name.to_owned(), kind);
        self
    }

    pub fn declare_timer(&mut self, name: &str, preset_ms: i64) -> &mut Self {
        self.variables.insert(name.to_owned(), VarKind::Timer);
        self.timer_presets.insert(name.to_owned(), preset_ms);
        self
    }

    pub fn push_rung(&mut self, elements: Vec<Element>, target: Target) -> &mut Self {
        self.rungs.push(Rung::new(elements, target));
        self
    }

    /// Copy with all source positions cleared, for structural comparison.
    pub fn without_spans(&self) -> LadderProgram {
        let mut out = self.clone();
        out.decl_spans.clear();
        for rung in &mut out.rungs {
            rung.span = Span::default();
        }
        out
    }

    /// Variables written by at least one rung.
    pub fn output_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.rungs.iter().map(|r| r.target.var()).collect();
        names.sort_unstable();
        names.dedup();
        names
    }

    /// BOOL and REAL variables no rung writes; these are latched from outside.
    pub fn input_names(&self) -> Vec<&str> {
        let outputs = self.output_names();
        self.variables
            .iter()
            .filter(|(name, kind)| **kind != VarKind::Timer && outputs.binary_search(&name.as_str()).is_err())
            .map(|(name, _)| name.as_str())
            .collect()
    }

    pub fn kind_of(&self, name: &str) -> Option<VarKind> {
        self.variables.get(name).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    Syntax,
    UnknownIdentifier,
    TypeMismatch,
    DuplicateDeclaration,
    DuplicateCoilWrite,
    DuplicateTimerUse,
    NonPositivePreset,
    NonFiniteConstant,
    MissingPreset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub span: Span,
    /// Zero-based index of the offending rung, when there is one.
    pub rung: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ", self.span)?;
        if let Some(rung) = self.rung {
            write!(f, "rung {rung}: ")?;
        }
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics(pub Vec<Diagnostic>);

impl Diagnostics {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Diagnostic> {
        self.0.iter()
    }
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Diagnostics {}
