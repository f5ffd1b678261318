//! Wire protocol between the session host and its clients.
//!
//! Messages are JSON objects tagged by `type`. Over plain TCP each message
//! is one frame: a 4-byte big-endian length followed by that many bytes of
//! UTF-8 JSON. Over WebSocket each text message carries one JSON document
//! and no length prefix.

use std::io::{self, Read, Write};

use cotrain_core::engine::Tick;
use cotrain_core::{HumanoidId, RoleName};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::SessionEvent;
use crate::session::{AllowedAction, Command, Snapshot};

/// Largest accepted frame body.
pub const MAX_FRAME: usize = 16 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    /// First message of every connection. `name` becomes the participant
    /// id; observers watch without acting.
    Join {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        token: Option<String>,
        name: String,
        #[serde(default)]
        observer: bool,
    },
    ClaimRole {
        role: RoleName,
    },
    /// Ends the lobby and casts the session.
    Start,
    Command {
        request: u64,
        /// Number of events the client has seen.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seen_seq: Option<u64>,
        #[serde(flatten)]
        command: Command,
    },
    Snapshot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleSlot {
    pub role: RoleName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holder: Option<HumanoidId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Welcome {
        participant: HumanoidId,
        observer: bool,
        /// Canonical scenario text.
        scenario: String,
        roles: Vec<RoleSlot>,
    },
    RoleClaimed {
        participant: HumanoidId,
        role: RoleName,
    },
    RoleTaken {
        role: RoleName,
        holder: HumanoidId,
    },
    Started {
        snapshot: Box<Snapshot>,
    },
    Event {
        event: SessionEvent,
    },
    Accepted {
        request: u64,
    },
    Rejected {
        request: u64,
        reason: String,
        snapshot: Box<Snapshot>,
    },
    Allowed {
        request: u64,
        seq: u64,
        actions: Vec<AllowedAction>,
    },
    Snapshot {
        snapshot: Box<Snapshot>,
    },
    Error {
        message: String,
    },
    Finished {
        final_hash: String,
        tick: Tick,
        completed: bool,
    },
}

#[derive(Debug, Error)]
pub enum FrameError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("frame of {0} bytes exceeds the limit")]
    TooLarge(usize),
    #[error("frame is not a valid message: {0}")]
    Json(#[from] serde_json::Error),
}

/// Length-prefixed bytes of one message.
pub fn encode_frame<T: Serialize>(message: &T) -> Result<Vec<u8>, FrameError> {
    let body = serde_json::to_vec(message)?;
    if body.len() > MAX_FRAME {
        return Err(FrameError::TooLarge(body.len()));
    }
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn write_frame<W: Write, T: Serialize>(writer: &mut W, message: &T) -> Result<(), FrameError> {
    writer.write_all(&encode_frame(message)?)?;
    writer.flush()?;
    Ok(())
}

/// Reads one frame. Returns `None` on a clean end of stream before a new
/// frame starts.
pub fn read_frame<R: Read, T: DeserializeOwned>(reader: &mut R) -> Result<Option<T>, FrameError> {
    let mut len = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        match reader.read(&mut len[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(io::Error::from(io::ErrorKind::UnexpectedEof).into()),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(FrameError::TooLarge(len));
    }
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body)?;
    Ok(Some(serde_json::from_slice(&body)?))
}
