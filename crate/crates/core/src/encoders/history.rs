//! Word-level dialogue history: a unidirectional Writer carried across turns and a
//! bidirectional Reader re-run over each utterance, plus span pooling for referring
//! expressions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{THEM, YOU};
use crate::error::{Error, Result};
use crate::neural::{BiGru, Embedding, Graph, GruCell, ParamId, ParamStore, Tensor, Var};
use crate::spans::Span;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HistoryEncoder {
    pub embed: Embedding,
    pub reader: BiGru,
    pub writer: GruCell,
    /// `1 × 3` logits over {span start, span end, utterance end}.
    pub pool: ParamId,
}

/// Graph-level history.
#[derive(Clone, Copy, Debug)]
pub struct History {
    /// `1 × writer_dim`.
    pub writer: Var,
    /// `1 × reader_dim`, carried into the next utterance's forward pass.
    pub reader_forward: Var,
    /// `1 × 2·reader_dim`, summary of the latest utterance.
    pub reader_summary: Var,
}

/// Reader encodings of one utterance. Row 0 is the speaker prefix token.
#[derive(Clone, Debug)]
pub struct EncodedUtterance {
    pub positions: Vec<Var>,
}

impl EncodedUtterance {
    /// Number of utterance tokens (prefix excluded).
    pub fn len(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Plain-value history carried between turns at inference time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DialogueState {
    pub writer: Tensor,
    pub reader_forward: Tensor,
    pub reader_summary: Tensor,
}

impl DialogueState {
    pub fn to_graph(&self, g: &mut Graph) -> History {
        History {
            writer: g.constant(self.writer.clone()),
            reader_forward: g.constant(self.reader_forward.clone()),
            reader_summary: g.constant(self.reader_summary.clone()),
        }
    }

    pub fn from_graph(g: &Graph, h: &History) -> Self {
        DialogueState {
            writer: g.value(h.writer).clone(),
            reader_forward: g.value(h.reader_forward).clone(),
            reader_summary: g.value(h.reader_summary).clone(),
        }
    }
}

/// Which side produced an utterance, relative to the encoding agent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Speaker {
    Own,
    Partner,
}

impl Speaker {
    pub fn prefix(self) -> usize {
        match self {
            Speaker::Own => YOU,
            Speaker::Partner => THEM,
        }
    }
}

impl HistoryEncoder {
    pub fn new(store: &mut ParamStore, name: &str, vocab: usize, embed_dim: usize, reader_dim: usize, writer_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(HistoryEncoder {
            embed: Embedding::new(store, &format!("{name}.embed"), vocab, embed_dim, rng)?,
            reader: BiGru::new(store, &format!("{name}.reader"), embed_dim, reader_dim, rng)?,
            writer: GruCell::new(store, &format!("{name}.writer"), embed_dim, writer_dim, rng)?,
            pool: store.add_zeros(format!("{name}.pool"), 1, 3)?,
        })
    }

    pub fn reader_dim(&self) -> usize {
        self.reader.forward.hidden_dim
    }

    /// Width of pooled span features and of the reader summary.
    pub fn feature_dim(&self) -> usize {
        self.reader.output_dim()
    }

    pub fn writer_dim(&self) -> usize {
        self.writer.hidden_dim
    }

    pub fn initial(&self, g: &mut Graph) -> History {
        History {
            writer: g.constant(Tensor::zeros(1, self.writer_dim())),
            reader_forward: g.constant(Tensor::zeros(1, self.reader_dim())),
            reader_summary: g.constant(Tensor::zeros(1, self.feature_dim())),
        }
    }

    pub fn initial_state(&self) -> DialogueState {
        DialogueState {
            writer: Tensor::zeros(1, self.writer_dim()),
            reader_forward: Tensor::zeros(1, self.reader_dim()),
            reader_summary: Tensor::zeros(1, self.feature_dim()),
        }
    }

    /// Advance the Writer over `prefix + tokens`.
    pub fn write(&self, g: &mut Graph, writer: Var, speaker: Speaker, tokens: &[usize]) -> Result<Var> {
        let ids: Vec<usize> = std::iter::once(speaker.prefix()).chain(tokens.iter().copied()).collect();
        let emb = self.embed.lookup(g, &ids);
        let proj = self.writer.project_input(g, emb)?;
        let mut h = writer;
        for i in 0..ids.len() {
            let gi = g.row(proj, i);
            h = self.writer.step_projected(g, h, gi)?;
        }
        Ok(h)
    }

    /// Read `prefix + tokens` bidirectionally.
    pub fn read(&self, g: &mut Graph, reader_forward: Var, speaker: Speaker, tokens: &[usize]) -> Result<(EncodedUtterance, Var, Var)> {
        let ids: Vec<usize> = std::iter::once(speaker.prefix()).chain(tokens.iter().copied()).collect();
        let emb = self.embed.lookup(g, &ids);
        let inputs: Vec<Var> = (0..ids.len()).map(|i| g.row(emb, i)).collect();
        let out = self.reader.encode_from(g, reader_forward, &inputs)?;
        let last = *out.forward.last().unwrap();
        Ok((EncodedUtterance { positions: out.positions }, last, out.summary))
    }

    /// Observe an utterance: update Writer and Reader. Empty `tokens` leaves the history unchanged.
    pub fn advance(&self, g: &mut Graph, h: &History, speaker: Speaker, tokens: &[usize]) -> Result<(History, Option<EncodedUtterance>)> {
        if tokens.is_empty() {
            return Ok((*h, None));
        }
        let writer = self.write(g, h.writer, speaker, tokens)?;
        let (enc, fwd, summary) = self.read(g, h.reader_forward, speaker, tokens)?;
        Ok((History { writer, reader_forward: fwd, reader_summary: summary }, Some(enc)))
    }

    /// `z = Σ_j softmax(pool)_j · enc[pos_j]` over span start, span end, utterance end.
    pub fn pool(&self, g: &mut Graph, enc: &EncodedUtterance, span: Span) -> Result<Var> {
        let n = enc.len();
        if span.start >= span.end || span.end > n {
            return Err(Error::SpanOutOfBounds { start: span.start, end: span.end, len: n });
        }
        // +1 skips the speaker prefix row.
        let rows = [enc.positions[span.start + 1], enc.positions[span.end], enc.positions[n]];
        let stacked = g.concat_rows(&rows);
        let logits = g.param(self.pool);
        let weights = g.softmax(logits);
        Ok(g.matmul(weights, stacked))
    }
}
