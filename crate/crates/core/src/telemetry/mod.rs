//! Remote monitoring and command endpoint.
//!
//! Viewers connect over TCP (one JSON message per line) or WebSocket (one
//! message per text frame). Every viewer receives the same frame stream;
//! only the client holding the control token may change machine state.

pub mod log;
pub mod server;
pub mod wire;

pub use log::{replay, EventLog, Replay, ReplayError};
pub use server::{serve, Pace, ServeError, Service, ServiceConfig, SessionOutcome, ShutdownHandle};
pub use wire::{Clock, CommandEnvelope, Frame, Message, Reply, Request};
