use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Ablation, ModelConfig};
use crate::encoders::{DotEncoder, HistoryEncoder, Vocab};
use crate::error::{Error, Result};
use crate::neural::params::{read_json, write_json};
use crate::neural::{Attention, BiLstm, Embedding, GruCell, Linear, Mlp, ParamCheckpoint, ParamStore};
use crate::spans::SpanTagger;
use crate::structcrf::CrfScorer;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;
/// Values of the confirmation variable.
pub const CONFIRMATION_VALUES: usize = 3;
/// Memory features per dot: max/mean of joint-MAP activity, max/mean of marginal-MAP activity.
pub const MEMORY_FEATURES: usize = 4;

/// `x^k = GRU(x^{k-1}, [H, c, m])` with a logistic halting head.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MentionDecoder {
    pub cell: GruCell,
    pub confirmation: Embedding,
    pub halt: Linear,
}

/// Attentional GRU decoder conditioned on referents and the confirmation variable.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UtteranceDecoder {
    pub referents: BiLstm,
    pub referent_gate: GruCell,
    pub confirmation: Embedding,
    pub confirmation_gate: GruCell,
    pub cell: GruCell,
    pub dot_attention: Attention,
    pub referent_attention: Attention,
    pub output: Linear,
}

/// Every submodule; parameter values live in the owning [`Model`]'s store.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Network {
    pub dots: DotEncoder,
    pub history: HistoryEncoder,
    pub tagger: SpanTagger,
    /// Resolution of referring expressions, shared by own and partner utterances.
    pub resolver: CrfScorer,
    pub memory: GruCell,
    pub mentions: MentionDecoder,
    /// Independent copy of the CRF for mention selection.
    pub mention_crf: CrfScorer,
    /// Per-dot choice score over `[M(d), reader summary, w(d)]`.
    pub selector: Mlp,
    pub decoder: UtteranceDecoder,
}

impl Network {
    fn new(store: &mut ParamStore, c: &ModelConfig, vocab: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let history = HistoryEncoder::new(store, "history", vocab, c.word_dim, c.reader_dim, c.writer_dim, rng)?;
        let feature = history.feature_dim();
        let y = 2 * c.referent_dim;
        Ok(Network {
            dots: DotEncoder::new(store, "dots", c.dot_hidden, c.dot_dim, rng)?,
            tagger: SpanTagger::new(store, "tagger", vocab, c.tagger_embed, c.tagger_hidden, rng)?,
            resolver: CrfScorer::new(store, "resolver", c.crf_dims(feature), rng)?,
            memory: GruCell::new(store, "memory", MEMORY_FEATURES, c.memory_dim, rng)?,
            mentions: MentionDecoder {
                cell: GruCell::new(store, "mentions.cell", c.writer_dim + c.confirmation_dim + c.memory_dim, c.mention_dim, rng)?,
                confirmation: Embedding::new(store, "mentions.confirmation", CONFIRMATION_VALUES, c.confirmation_dim, rng)?,
                halt: Linear::new(store, "mentions.halt", c.mention_dim, 1, rng)?,
            },
            mention_crf: CrfScorer::new(store, "mention_crf", c.crf_dims(c.mention_dim), rng)?,
            selector: Mlp::new(store, "selector", c.memory_dim + feature + c.dot_dim, c.selector_hidden, 1, 1, 0.0, rng)?,
            decoder: UtteranceDecoder {
                referents: BiLstm::new(store, "decoder.referents", c.dot_dim, c.referent_dim, rng)?,
                referent_gate: GruCell::new(store, "decoder.referent_gate", y, c.writer_dim, rng)?,
                confirmation: Embedding::new(store, "decoder.confirmation", CONFIRMATION_VALUES, c.confirmation_dim, rng)?,
                confirmation_gate: GruCell::new(store, "decoder.confirmation_gate", c.confirmation_dim, c.writer_dim, rng)?,
                cell: GruCell::new(store, "decoder.cell", c.word_dim, c.writer_dim, rng)?,
                dot_attention: Attention::new(store, "decoder.dot_attention", c.dot_dim, c.writer_dim, c.attention_dim, rng)?,
                referent_attention: Attention::new(store, "decoder.referent_attention", y, c.writer_dim, c.attention_dim, rng)?,
                output: Linear::new(store, "decoder.output", c.writer_dim + c.dot_dim + y, vocab, rng)?,
            },
            history,
        })
    }
}

/// A complete agent: configuration, vocabulary, parameters and module layout.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub ablation: Ablation,
    pub params: ParamStore,
    pub net: Network,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    schema_version: u32,
    config: ModelConfig,
    vocab: Vocab,
    ablation: Ablation,
    params: ParamCheckpoint,
}

impl Model {
    pub fn new(config: ModelConfig, vocab: Vocab, ablation: Ablation, seed: u64) -> Result<Self> {
        if config.max_mentions == 0 || config.max_tokens == 0 {
            return Err(Error::InvalidArgument("max_mentions and max_tokens must be positive".into()));
        }
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Network::new(&mut params, &config, vocab.len(), &mut rng)?;
        Ok(Model { config, vocab, ablation, params, net })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ckpt = Checkpoint {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            ablation: self.ablation,
            params: self.params.to_checkpoint(),
        };
        write_json(path, &ckpt)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt: Checkpoint = read_json(path)?;
        if ckpt.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::Checkpoint(format!("unsupported schema_version {}", ckpt.schema_version)));
        }
        let mut model = Model::new(ckpt.config, ckpt.vocab, ckpt.ablation, 0)?;
        model.params.load_checkpoint(&ckpt.params)?;
        Ok(model)
    }
}
