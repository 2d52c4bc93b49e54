//! The turn pipeline: resolve partner references, set the confirmation variable, update
//! referent memory, plan mentions, generate an utterance, and select a dot.

pub mod config;
pub mod model;
pub mod ops;
pub mod state;
pub mod turn;

pub use config::{Ablation, ModelConfig};
pub use model::{Model, Network};
pub use state::{confirmation_of, memory_features, AgentState, Confirmation, MentionPlan};
pub use turn::{
    absorb, act, generate_utterance, listen, observe, predict_mentions, resolve_references, select_choice, select_now, take_turn, AgentAction, Decoding, Generator,
    Observation, Policy, TurnOutput, Utterance,
};
