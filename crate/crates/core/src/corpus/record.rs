use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spans::{validate_spans, Span};
use crate::structcrf::{ReferentMask, ReferentSequence};
use crate::world::{GameContext, Player, WorldView};

pub const CORPUS_SCHEMA_VERSION: u32 = 1;

/// A referring expression: token span plus the board ids it denotes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub start: usize,
    pub end: usize,
    pub dots: Vec<u32>,
}

impl Annotation {
    pub fn span(&self) -> Span {
        Span::new(self.start, self.end)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Message {
        tokens: Vec<String>,
        /// `None` when the message carries no annotation at all.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        annotations: Option<Vec<Annotation>>,
    },
    Select {
        dot: u32,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub speaker: Player,
    #[serde(flatten)]
    pub action: Action,
}

impl Event {
    pub fn message(speaker: Player, tokens: Vec<String>, annotations: Vec<Annotation>) -> Self {
        Event { speaker, action: Action::Message { tokens, annotations: Some(annotations) } }
    }

    pub fn select(speaker: Player, dot: u32) -> Self {
        Event { speaker, action: Action::Select { dot } }
    }

    pub fn is_select(&self) -> bool {
        matches!(self.action, Action::Select { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DialogueRecord {
    pub schema_version: u32,
    pub id: String,
    pub context: GameContext,
    pub events: Vec<Event>,
    /// Selected board ids, `[a, b]`.
    pub outcomes: [u32; 2],
    pub success: bool,
}

impl DialogueRecord {
    /// Assemble a record from its events, filling outcomes and success.
    pub fn from_events(id: String, context: GameContext, events: Vec<Event>) -> Result<Self> {
        let mut outcomes = [None, None];
        for e in &events {
            if let Action::Select { dot } = e.action {
                outcomes[e.speaker.index()] = Some(dot);
            }
        }
        let (Some(a), Some(b)) = (outcomes[0], outcomes[1]) else {
            return Err(Error::InvalidRecord(format!("dialogue {id} lacks a selection from both players")));
        };
        let rec = DialogueRecord { schema_version: CORPUS_SCHEMA_VERSION, id, context, events, outcomes: [a, b], success: a == b };
        rec.validate()?;
        Ok(rec)
    }

    pub fn selection(&self, player: Player) -> u32 {
        self.outcomes[player.index()]
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CORPUS_SCHEMA_VERSION {
            return Err(Error::InvalidRecord(format!("unsupported schema_version {}", self.schema_version)));
        }
        self.context.validate()?;
        let mut selected = [None, None];
        for (i, e) in self.events.iter().enumerate() {
            let who = e.speaker.index();
            if selected[who].is_some() {
                return Err(Error::InvalidRecord(format!("event {i}: player {:?} acts after selecting", e.speaker)));
            }
            let view = self.context.view(e.speaker);
            match &e.action {
                Action::Select { dot } => {
                    if view.index_of(*dot).is_none() {
                        return Err(Error::InvalidRecord(format!("event {i}: selected dot {dot} is not in the selector's view")));
                    }
                    selected[who] = Some(*dot);
                }
                Action::Message { tokens, annotations } => {
                    if tokens.is_empty() {
                        return Err(Error::InvalidRecord(format!("event {i}: empty message")));
                    }
                    if let Some(anns) = annotations {
                        let spans: Vec<Span> = anns.iter().map(Annotation::span).collect();
                        validate_spans(&spans, tokens.len()).map_err(|err| Error::InvalidRecord(format!("event {i}: {err}")))?;
                        for a in anns {
                            if let Some(bad) = a.dots.iter().find(|&&d| view.index_of(d).is_none()) {
                                return Err(Error::InvalidRecord(format!("event {i}: annotation references dot {bad} outside the speaker's view")));
                            }
                        }
                    }
                }
            }
        }
        if selected[0] != Some(self.outcomes[0]) || selected[1] != Some(self.outcomes[1]) {
            return Err(Error::InvalidRecord("outcomes disagree with select events (exactly one select per player required)".into()));
        }
        if self.success != (self.outcomes[0] == self.outcomes[1]) {
            return Err(Error::InvalidRecord("success flag disagrees with outcomes".into()));
        }
        Ok(())
    }

    pub fn messages(&self) -> impl Iterator<Item = (usize, &Event)> {
        self.events.iter().enumerate().filter(|(_, e)| !e.is_select())
    }
}

/// Referent masks of a message's annotations as seen from `view`.
pub fn masks_in(view: &WorldView, annotations: &[Annotation]) -> ReferentSequence {
    ReferentSequence::new(annotations.iter().map(|a| ReferentMask::new(view.mask_of(&a.dots))).collect())
}

/// Annotated spans of message event `turn`; errors if the event is not an annotated message.
pub fn gold_spans(record: &DialogueRecord, turn: usize) -> Result<Vec<Span>> {
    match record.events.get(turn).map(|e| &e.action) {
        Some(Action::Message { annotations: Some(a), .. }) => Ok(a.iter().map(Annotation::span).collect()),
        Some(Action::Message { annotations: None, .. }) => Err(Error::MissingAnnotation(format!("{} event {turn}", record.id))),
        Some(Action::Select { .. }) => Err(Error::InvalidArgument(format!("{} event {turn} is a selection", record.id))),
        None => Err(Error::InvalidArgument(format!("{} has no event {turn}", record.id))),
    }
}
