//! Evaluation: corpus metrics on annotated dialogues and self-play games.

pub mod game;
pub mod metrics;
pub mod selfplay;

pub use game::{starter_for, Game, TURN_CAP};
pub use metrics::{eval_corpus, predict_corpus, predict_perspective, CorpusMetrics, MentionCase, MetricCounts, PerspectivePredictions, ResolutionCase};
pub use selfplay::{
    append_transcript, game_seed, play_game, random_success_rate, read_transcripts, run_selfplay, write_transcripts, GameAgent, ModelAgent, OracleAgent, RandomSelector,
    SelfPlayReport, StratumStats, Transcript, TRANSCRIPT_SCHEMA_VERSION,
};
