//! Newline-delimited JSON messages shared by the TCP stream, the WebSocket
//! gateway and the event log.

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::controller::{AlarmCode, Gate, GatePosition, ManualCommand, Mode, PhaseKind, Temperature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Clock {
    Sim,
    Wall,
}

/// Self-contained snapshot of controller and plant.
///
/// `phase` is the phase after the last scan while `upper_cmd`/`lower_cmd`
/// are what that scan commanded, so at a transition the phase leads the
/// commands by one scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub seq: u64,
    pub t_ms: u64,
    pub clock: Clock,
    pub phase: PhaseKind,
    pub mode: Mode,
    pub upper_cmd: GatePosition,
    pub lower_cmd: GatePosition,
    pub upper_pos: f64,
    pub lower_pos: f64,
    pub upper_closed_sw: bool,
    pub lower_closed_sw: bool,
    pub upper_temp_c: Temperature,
    pub lower_temp_c: Temperature,
    pub level_high: bool,
    pub level_low: bool,
    pub alarms: Vec<AlarmCode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandEnvelope {
    pub id: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arg: Option<Json>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub issued_t: Option<u64>,
}

impl CommandEnvelope {
    pub fn new(id: impl Into<String>, name: impl Into<String>) -> Self {
        CommandEnvelope {
            id: id.into(),
            name: name.into(),
            arg: None,
            issued_t: None,
        }
    }

    pub fn with_arg(mut self, arg: Json) -> Self {
        self.arg = Some(arg);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reply {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Message {
    Frame(Frame),
    Cmd(CommandEnvelope),
    Ack(Reply),
    Nack(Reply),
}

impl Message {
    pub fn ack(id: &str) -> Self {
        Message::Ack(Reply {
            id: id.to_owned(),
            reason: None,
        })
    }

    pub fn nack(id: &str, reason: impl Into<String>) -> Self {
        Message::Nack(Reply {
            id: id.to_owned(),
            reason: Some(reason.into()),
        })
    }

    /// One line of text, without the trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("wire messages always serialize")
    }
}

/// What a command envelope asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Request {
    Manual(ManualCommand),
    AcquireToken,
    ReleaseToken,
}

impl Request {
    /// Whether this request needs the control token.
    pub fn needs_token(self) -> bool {
        matches!(self, Request::Manual(_))
    }
}

pub fn parse_request(env: &CommandEnvelope) -> Result<Request, String> {
    let manual = |c| Ok(Request::Manual(c));
    match env.name.as_str() {
        "start" => manual(ManualCommand::Start),
        "stop" => manual(ManualCommand::Stop),
        "reset_alarms" => manual(ManualCommand::ResetAlarms),
        "open_upper" => manual(ManualCommand::Open(Gate::Upper)),
        "close_upper" => manual(ManualCommand::Close(Gate::Upper)),
        "open_lower" => manual(ManualCommand::Open(Gate::Lower)),
        "close_lower" => manual(ManualCommand::Close(Gate::Lower)),
        "acquire_token" => Ok(Request::AcquireToken),
        "release_token" => Ok(Request::ReleaseToken),
        "set_mode" => match env.arg.as_ref().and_then(Json::as_str).and_then(Mode::parse) {
            Some(mode) => manual(ManualCommand::SetMode(mode)),
            None => Err("set_mode needs arg AUTO, MANUAL or HALTED".into()),
        },
        other => Err(format!("unknown command {other:?}")),
    }
}

/// Canonical command name and argument for a manual command.
pub fn envelope_for(id: impl Into<String>, cmd: ManualCommand) -> CommandEnvelope {
    let env = CommandEnvelope::new(id, cmd.name());
    match cmd {
        ManualCommand::SetMode(mode) => env.with_arg(Json::String(mode.as_str().into())),
        _ => env,
    }
}

/// Parse one inbound line. On failure returns the envelope id when one
/// could be recovered, so the nack can still carry it.
pub fn parse_inbound(line: &str) -> Result<CommandEnvelope, (String, String)> {
    let value: Json = serde_json::from_str(line).map_err(|e| (String::new(), format!("malformed: {e}")))?;
    let id = value.get("id").and_then(Json::as_str).unwrap_or_default().to_owned();
    match serde_json::from_value::<Message>(value) {
        Ok(Message::Cmd(env)) => Ok(env),
        Ok(_) => Err((id, "malformed: only cmd messages are accepted".into())),
        Err(e) => Err((id, format!("malformed: {e}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame() -> Frame {
        Frame {
            seq: 3,
            t_ms: 300,
            clock: Clock::Sim,
            phase: PhaseKind::FillA,
            mode: Mode::Auto,
            upper_cmd: GatePosition::Open,
            lower_cmd: GatePosition::Closed,
            upper_pos: 0.1 + 0.2,
            lower_pos: 0.0,
            upper_closed_sw: false,
            lower_closed_sw: true,
            upper_temp_c: Temperature::Celsius(25.0),
            lower_temp_c: Temperature::Fault,
            level_high: false,
            level_low: true,
            alarms: vec![AlarmCode::SensorFault],
        }
    }

    #[test]
    fn frame_field_names() {
        let line = Message::Frame(frame()).to_line();
        let v: Json = serde_json::from_str(&line).unwrap();
        assert_eq!(v["type"], "frame");
        assert_eq!(v["phase"], "FILL_A");
        assert_eq!(v["upper_cmd"], "OPEN");
        assert_eq!(v["lower_temp_c"], "FAULT");
        assert_eq!(v["alarms"][0], "SENSOR_FAULT");
        assert_eq!(v["clock"], "sim");
    }

    #[test]
    fn frames_round_trip_exactly() {
        let m = Message::Frame(frame());
        let back: Message = serde_json::from_str(&m.to_line()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_line(), m.to_line());
    }

    #[test]
    fn replies() {
        assert_eq!(Message::ack("7").to_line(), r#"{"type":"ack","id":"7"}"#);
        assert_eq!(
            Message::nack("8", "interlock").to_line(),
            r#"{"type":"nack","id":"8","reason":"interlock"}"#
        );
    }

    #[test]
    fn inbound_parsing() {
        let env = parse_inbound(r#"{"type":"cmd","id":"a","name":"set_mode","arg":"MANUAL"}"#).unwrap();
        assert_eq!(
            parse_request(&env),
            Ok(Request::Manual(ManualCommand::SetMode(Mode::Manual)))
        );
        let env = parse_inbound(r#"{"type":"cmd","id":"b","name":"set_mode","arg":"FAST"}"#).unwrap();
        assert!(parse_request(&env).is_err());
        let env = parse_inbound(r#"{"type":"cmd","id":"c","name":"fly"}"#).unwrap();
        assert!(parse_request(&env).is_err());
        assert_eq!(parse_inbound("{nope").unwrap_err().0, "");
        assert_eq!(parse_inbound(r#"{"type":"ack","id":"z"}"#).unwrap_err().0, "z");
        assert_eq!(parse_inbound(r#"{"type":"cmd","id":"q"}"#).unwrap_err().0, "q");
    }

    #[test]
    fn envelope_names_parse_back() {
        let all = [
            ManualCommand::Start,
            ManualCommand::Stop,
            ManualCommand::ResetAlarms,
            ManualCommand::Open(Gate::Upper),
            ManualCommand::Close(Gate::Upper),
            ManualCommand::Open(Gate::Lower),
            ManualCommand::Close(Gate::Lower),
            ManualCommand::SetMode(Mode::Auto),
            ManualCommand::SetMode(Mode::Manual),
            ManualCommand::SetMode(Mode::Halted),
        ];
        for cmd in all {
            assert_eq!(parse_request(&envelope_for("x", cmd)), Ok(Request::Manual(cmd)));
        }
    }
}
