//! Soft-PLC runtime and digital twin for a two-gate catalyst cyclone.
//!
//! [`controller`] is the native gate sequencer, [`ladder`] interprets the
//! same sequence written as a ladder program, and [`equivalence`] diffs the
//! two. [`plant`] simulates the machine they drive, [`twin`] closes the loop,
//! [`scenario`] runs scripted experiments and [`telemetry`] serves them live.

// Negated float comparisons are deliberate: they make NaN fail a check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod codec;
pub mod controller;
pub mod equivalence;
pub mod ladder;
pub mod plant;
pub mod scenario;
pub mod telemetry;
pub mod twin;
