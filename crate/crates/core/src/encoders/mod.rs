//! Context encodings: relational dot features, Reader/Writer dialogue history, and pooled
//! referring-expression features.

pub mod dots;
pub mod history;
pub mod vocab;

pub use dots::{DotEncoder, DOT_FEATURES};
pub use history::{DialogueState, EncodedUtterance, History, HistoryEncoder, Speaker};
pub use vocab::{tokenize, Vocab};
