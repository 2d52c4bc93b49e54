//! JSON frames exchanged with a human client. Every frame is an object tagged by `type`.

use onecommon::world::{Dot, WorldView};
use serde::{Deserialize, Serialize};

pub const PROTOCOL_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientFrame {
    Join,
    Message { text: String },
    Select { dot_id: u32 },
}

/// One dot of the human's view, in view-normalized units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DotView {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub size: f64,
    pub shade: f64,
}

impl From<&Dot> for DotView {
    fn from(d: &Dot) -> Self {
        DotView { id: d.id, x: d.x, y: d.y, size: d.size, shade: d.shade }
    }
}

pub fn view_frame(view: &WorldView) -> Vec<DotView> {
    view.dots.iter().map(DotView::from).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selections {
    pub human: Option<u32>,
    pub agent: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerFrame {
    Context { schema_version: u32, session_id: String, view: Vec<DotView> },
    YourTurn { must_select: bool },
    PartnerMessage { text: String },
    PartnerSelected,
    GameOver {
        success: bool,
        both_selections: Selections,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        aborted: Option<String>,
    },
    Error { reason: String },
}

impl ServerFrame {
    pub fn error(reason: impl Into<String>) -> Self {
        ServerFrame::Error { reason: reason.into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server frames always serialize")
    }
}

/// Parse a client frame; the error text is what goes back in an `error` frame.
pub fn parse_client(text: &str) -> Result<ClientFrame, String> {
    serde_json::from_str(text).map_err(|e| format!("malformed frame: {e}"))
}
