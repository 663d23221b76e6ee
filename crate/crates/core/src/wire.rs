//! Line-delimited JSON protocol between the navigation engine and its
//! master / mini-screen displays.
//!
//! Every message is a single JSON object with a `type` discriminator,
//! written on one line and terminated by LF. Unknown extra fields are
//! ignored on decode.

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec3;
use crate::reslice::{Overlay, SliceKind};
use crate::session::{Display, Representation, Status};

pub const PROTOCOL_VERSION: u32 = 1;

const KNOWN_TYPES: [&str; 11] = [
    "hello", "welcome", "frame", "state", "rotate", "zoom", "mark", "declare", "pose", "error", "ping",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Master,
    Mini,
}

impl From<Role> for Display {
    fn from(r: Role) -> Display {
        match r {
            Role::Master => Display::Master,
            Role::Mini => Display::Mini,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub display: Display,
    pub representation: Representation,
    pub kind: SliceKind,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub mirror: bool,
    pub theta_deg: f64,
    pub width_px: usize,
    pub height_px: usize,
    pub spacing_mm: f64,
    pub pixels_b64: String,
    #[serde(default)]
    pub overlay: Overlay,
}

impl Frame {
    pub fn encode_pixels(pixels: &[u8]) -> String {
        base64::engine::general_purpose::STANDARD.encode(pixels)
    }

    pub fn pixels(&self) -> Result<Vec<u8>, WireError> {
        base64::engine::general_purpose::STANDARD
            .decode(&self.pixels_b64)
            .map_err(|e| WireError::Invalid(format!("pixels_b64: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub status: Status,
    pub clock_s: f64,
    pub mode: String,
    #[serde(default)]
    pub marked: bool,
    #[serde(default)]
    pub theta_deg: f64,
    #[serde(default = "one")]
    pub zoom: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_mm: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Hello {
        role: Role,
        proto: u32,
    },
    Welcome {
        session_id: String,
    },
    Frame(Frame),
    State(SessionState),
    Rotate {
        theta_deg: f64,
    },
    Zoom {
        factor: f64,
    },
    Mark,
    Declare,
    /// Manual tool pose from the master UI (image space).
    Pose {
        tip: Vec3,
        axis: Vec3,
    },
    Error {
        code: String,
        detail: String,
    },
    /// Keep-alive; ignored by the server.
    Ping,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WireError {
    #[error("malformed message at byte {offset}: {detail}")]
    Malformed { offset: usize, detail: String },
    #[error("unknown message type `{0}`")]
    UnknownType(String),
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("invalid message: {0}")]
    Invalid(String),
}

impl WireError {
    pub fn code(&self) -> &'static str {
        match self {
            WireError::Malformed { .. } => "malformed",
            WireError::UnknownType(_) => "unknown_type",
            WireError::MissingField(_) => "missing_field",
            WireError::Invalid(_) => "invalid",
        }
    }

    /// The error reply sent back to the peer.
    pub fn to_message(&self) -> Message {
        Message::Error {
            code: self.code().to_owned(),
            detail: self.to_string(),
        }
    }
}

/// One UTF-8 JSON object followed by a single LF.
pub fn encode(m: &Message) -> Vec<u8> {
    let mut out = serde_json::to_vec(m).expect("messages always serialize");
    out.push(b'\n');
    out
}

/// Decodes one message; a trailing LF (or CRLF) is optional.
pub fn decode(line: &[u8]) -> Result<Message, WireError> {
    let line = line.strip_suffix(b"\n").unwrap_or(line);
    let line = line.strip_suffix(b"\r").unwrap_or(line);
    let text = std::str::from_utf8(line).map_err(|e| WireError::Malformed {
        offset: e.valid_up_to(),
        detail: "invalid UTF-8".into(),
    })?;
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| WireError::Malformed {
        offset: byte_offset(text, e.line(), e.column()),
        detail: e.to_string(),
    })?;
    let ty = match value.get("type") {
        Some(serde_json::Value::String(s)) => s.clone(),
        Some(_) => return Err(WireError::Invalid("`type` must be a string".into())),
        None if value.is_object() => return Err(WireError::MissingField("type".into())),
        None => return Err(WireError::Invalid("message must be a JSON object".into())),
    };
    if !KNOWN_TYPES.contains(&ty.as_str()) {
        return Err(WireError::UnknownType(ty));
    }
    let msg: Message = serde_json::from_value(value).map_err(|e| {
        let s = e.to_string();
        match s.strip_prefix("missing field `").and_then(|r| r.split('`').next()) {
            Some(name) => WireError::MissingField(name.to_owned()),
            None => WireError::Invalid(s),
        }
    })?;
    if let Message::Frame(f) = &msg {
        let n = f.pixels()?.len();
        if n != f.width_px * f.height_px {
            return Err(WireError::Invalid(format!(
                "frame carries {n} pixels for {}×{}",
                f.width_px, f.height_px
            )));
        }
    }
    Ok(msg)
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let start: usize = text.split('\n').take(line.saturating_sub(1)).map(|l| l.len() + 1).sum();
    (start + column.saturating_sub(1)).min(text.len())
}
