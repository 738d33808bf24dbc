//! Messages exchanged with the cockpit over `/session`. Each WebSocket
//! text message carries one JSON object tagged by `type`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use teleassist::affordance::AffordanceSnapshot;
use teleassist::scenesim::SceneDescription;
use teleassist::session::{FrameView, InputState, SessionConfig};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Hello { version: u32 },
    InputState { seq: u64, input: InputState },
    SelectItem { seq: u64, id: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadMessage,
    VersionMismatch,
    /// Another cockpit already holds the session.
    Busy,
    /// A client sequence number did not increase.
    OutOfOrder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    SessionInit {
        seq: u64,
        version: u32,
        scene: SceneDescription,
        config: SessionConfig,
    },
    Frame {
        seq: u64,
        frame: FrameView,
        /// Present only when the revision differs from the last one sent
        /// on this connection.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        snapshot: Option<Arc<AffordanceSnapshot>>,
    },
    Error {
        seq: u64,
        code: ErrorCode,
        detail: String,
    },
}

impl ServerMessage {
    pub fn seq(&self) -> u64 {
        match self {
            ServerMessage::SessionInit { seq, .. }
            | ServerMessage::Frame { seq, .. }
            | ServerMessage::Error { seq, .. } => *seq,
        }
    }
}
