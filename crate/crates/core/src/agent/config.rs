use serde::{Deserialize, Serialize};

use crate::structcrf::CrfDims;

/// Layer sizes for every module of the agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub word_dim: usize,
    pub reader_dim: usize,
    pub writer_dim: usize,
    pub dot_hidden: usize,
    pub dot_dim: usize,
    pub memory_dim: usize,
    pub mention_dim: usize,
    pub confirmation_dim: usize,
    pub phi_hidden: usize,
    pub phi_layers: usize,
    pub phi_dropout: f64,
    pub pair_hidden: usize,
    pub pair_dropout: f64,
    pub count_dim: usize,
    pub referent_dim: usize,
    pub attention_dim: usize,
    pub selector_hidden: usize,
    pub tagger_embed: usize,
    pub tagger_hidden: usize,
    /// Longest mention plan.
    pub max_mentions: usize,
    /// Longest generated utterance, terminal token included.
    pub max_tokens: usize,
}

impl ModelConfig {
    /// 512-wide recurrent units, 64-wide memory.
    pub fn large() -> Self {
        ModelConfig {
            word_dim: 256,
            reader_dim: 512,
            writer_dim: 512,
            dot_hidden: 256,
            dot_dim: 256,
            memory_dim: 64,
            mention_dim: 512,
            confirmation_dim: 512,
            phi_hidden: 256,
            phi_layers: 2,
            phi_dropout: 0.5,
            pair_hidden: 64,
            pair_dropout: 0.2,
            count_dim: 40,
            referent_dim: 256,
            attention_dim: 256,
            selector_hidden: 256,
            tagger_embed: 128,
            tagger_hidden: 128,
            max_mentions: 5,
            max_tokens: 40,
        }
    }

    /// Single-core sizes used for synthetic-corpus experiments.
    pub fn desk() -> Self {
        ModelConfig {
            word_dim: 32,
            reader_dim: 48,
            writer_dim: 64,
            dot_hidden: 32,
            dot_dim: 32,
            memory_dim: 32,
            mention_dim: 48,
            confirmation_dim: 16,
            phi_hidden: 64,
            phi_layers: 2,
            phi_dropout: 0.1,
            pair_hidden: 32,
            pair_dropout: 0.0,
            count_dim: 40,
            referent_dim: 32,
            attention_dim: 32,
            selector_hidden: 64,
            tagger_embed: 24,
            tagger_hidden: 24,
            max_mentions: 5,
            max_tokens: 40,
        }
    }

    /// Smallest sizes that exercise every code path; for gradient checks.
    pub fn tiny() -> Self {
        ModelConfig {
            word_dim: 3,
            reader_dim: 3,
            writer_dim: 4,
            dot_hidden: 3,
            dot_dim: 3,
            memory_dim: 2,
            mention_dim: 3,
            confirmation_dim: 2,
            phi_hidden: 3,
            phi_layers: 2,
            phi_dropout: 0.0,
            pair_hidden: 3,
            pair_dropout: 0.0,
            count_dim: 2,
            referent_dim: 2,
            attention_dim: 3,
            selector_hidden: 3,
            tagger_embed: 2,
            tagger_hidden: 2,
            max_mentions: 5,
            max_tokens: 40,
        }
    }

    pub(crate) fn crf_dims(&self, text_dim: usize) -> CrfDims {
        CrfDims {
            dot_dim: self.dot_dim,
            memory_dim: self.memory_dim,
            text_dim,
            phi_hidden: self.phi_hidden,
            phi_layers: self.phi_layers,
            phi_dropout: self.phi_dropout,
            pair_hidden: self.pair_hidden,
            pair_dropout: self.pair_dropout,
            count_dim: self.count_dim,
        }
    }
}

/// Ablations: `disable_memory` zeroes every memory input; `disable_structure` additionally
/// drops the configuration and transition potentials.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    pub disable_memory: bool,
    pub disable_structure: bool,
}

impl Ablation {
    pub const FULL: Ablation = Ablation { disable_memory: false, disable_structure: false };
    pub const NO_MEMORY: Ablation = Ablation { disable_memory: true, disable_structure: false };
    pub const NO_STRUCTURE: Ablation = Ablation { disable_memory: true, disable_structure: true };

    pub fn uses_memory(self) -> bool {
        !self.disable_memory && !self.disable_structure
    }

    pub fn structured(self) -> bool {
        !self.disable_structure
    }
}
