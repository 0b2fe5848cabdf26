//! Append-only event log: one wire message per line.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use super::wire::{Frame, Message};

pub struct EventLog {
    out: BufWriter<File>,
}

impl EventLog {
    /// Open for appending, creating the file if needed.
    pub fn open(path: &Path) -> io::Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(EventLog {
            out: BufWriter::new(file),
        })
    }

    /// Write one line and flush it, so a crash can tear at most the last line.
    pub fn append_line(&mut self, line: &str) -> io::Result<()> {
        self.out.write_all(line.as_bytes())?;
        self.out.write_all(b"\n")?;
        self.out.flush()
    }

    pub fn append(&mut self, msg: &Message) -> io::Result<()> {
        self.append_line(&msg.to_line())
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("cannot read log: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt log line {line}: {message}")]
    Corrupt { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Replay {
    /// Every message in log order, with the exact line it was read from.
    pub entries: Vec<(Message, String)>,
    /// A final line without newline that failed to parse was dropped.
    pub torn_tail: bool,
}

impl Replay {
    pub fn frames(&self) -> impl Iterator<Item = &Frame> {
        self.entries.iter().filter_map(|(m, _)| match m {
            Message::Frame(f) => Some(f),
            _ => None,
        })
    }

    /// Frame lines exactly as they were written.
    pub fn frame_lines(&self) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(|(m, _)| matches!(m, Message::Frame(_)))
            .map(|(_, l)| l.as_str())
    }
}

pub fn parse_log(bytes: &[u8]) -> Result<Replay, ReplayError> {
    let mut replay = Replay::default();
    let ends_clean = bytes.is_empty() || bytes.ends_with(b"\n");
    let mut lines: Vec<&[u8]> = bytes.split(|&b| b == b'\n').collect();
    if ends_clean {
        // split leaves an empty piece after the final newline
        lines.pop();
    }
    let last = lines.len();
    for (i, raw) in lines.into_iter().enumerate() {
        let lineno = i + 1;
        let torn_candidate = lineno == last && !ends_clean;
        let parsed = std::str::from_utf8(raw).map_err(|e| e.to_string()).and_then(|text| {
            let text = text.strip_suffix('\r').unwrap_or(text);
            if text.trim().is_empty() {
                return Ok(None);
            }
            serde_json::from_str::<Message>(text)
                .map(|m| Some((m, text.to_owned())))
                .map_err(|e| e.to_string())
        });
        match parsed {
            Ok(Some(entry)) => replay.entries.push(entry),
            Ok(None) => {}
            Err(_) if torn_candidate => {
                tracing::warn!(line = lineno, "dropping torn final log line");
                replay.torn_tail = true;
            }
            Err(message) => return Err(ReplayError::Corrupt { line: lineno, message }),
        }
    }
    Ok(replay)
}

pub fn replay(path: &Path) -> Result<Replay, ReplayError> {
    parse_log(&std::fs::read(path)?)
}
