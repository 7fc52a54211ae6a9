//! Wire messages between a session host and its clients.
//!
//! Each message is one JSON object (one WebSocket text frame) tagged by
//! `type`. Numbers are written in shortest round-trip form, so decoding
//! reproduces every value exactly.

use serde::{Deserialize, Serialize};

use super::session::{Command, Snapshot};
use crate::error::{Error, Result};
use crate::haptic::LoopStats;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    /// First message in each direction.
    Hello {
        version: u32,
        agent: String,
    },
    /// `at_tick` defers the command to the start of that tick; without it
    /// the command applies at the next tick boundary.
    Command {
        id: u64,
        command: Command,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        at_tick: Option<u64>,
    },
    CommandAck {
        id: u64,
        tick: u64,
    },
    CommandErr {
        id: u64,
        message: String,
    },
    Snapshot {
        snapshot: Box<Snapshot>,
    },
    Stats {
        stats: LoopStats,
    },
}

impl Message {
    pub fn hello(agent: impl Into<String>) -> Self {
        Message::Hello {
            version: PROTOCOL_VERSION,
            agent: agent.into(),
        }
    }
}

pub fn encode(message: &Message) -> String {
    serde_json::to_string(message).expect("messages serialize")
}

pub fn decode(text: &str) -> Result<Message> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        line: Some(e.line()),
        message: e.to_string(),
    })
}
