//! Supervision: dialogue records, a synthetic annotated-dialogue generator, ingestion of
//! released OneCommon data, and cross-validation splits.

pub mod grammar;
pub mod io;
pub mod upstream;
pub mod record;
pub mod splits;
pub mod synth;

pub use io::{load_external, read_records, write_records};
pub use record::{gold_spans, masks_in, Action, Annotation, DialogueRecord, Event, CORPUS_SCHEMA_VERSION};
pub use splits::{make_splits, CorpusSplit};
pub use synth::{synth_corpus, synth_dialogue, synth_for_contexts, GrammarConfig};

use crate::encoders::Vocab;

/// Vocabulary over every message of `records`.
pub fn build_vocab(records: &[DialogueRecord]) -> Vocab {
    Vocab::build(records.iter().flat_map(|r| {
        r.events.iter().filter_map(|e| match &e.action {
            Action::Message { tokens, .. } => Some(tokens.as_slice()),
            Action::Select { .. } => None,
        })
    }))
}
