//! Referring-expression detection: a BiLSTM-CRF tagger with BIO tags.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{BiLstm, Embedding, Graph, Linear, ParamId, ParamStore, Tensor, Var};
use crate::structcrf::{Chain, ChainLogPartition};

/// Token interval `[start, end)` within one utterance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// Spans must be nonempty, in bounds, sorted and non-overlapping.
pub fn validate_spans(spans: &[Span], len: usize) -> Result<()> {
    let mut prev_end = 0;
    for s in spans {
        if s.start >= s.end || s.end > len {
            return Err(Error::SpanOutOfBounds { start: s.start, end: s.end, len });
        }
        if s.start < prev_end {
            return Err(Error::InvalidRecord(format!("span {}..{} overlaps or is out of order", s.start, s.end)));
        }
        prev_end = s.end;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tag {
    B,
    I,
    O,
}

impl Tag {
    pub fn index(self) -> usize {
        match self {
            Tag::B => 0,
            Tag::I => 1,
            Tag::O => 2,
        }
    }

    pub fn from_index(i: usize) -> Tag {
        [Tag::B, Tag::I, Tag::O][i]
    }
}

pub fn spans_to_tags(spans: &[Span], len: usize) -> Vec<Tag> {
    let mut tags = vec![Tag::O; len];
    for s in spans {
        tags[s.start] = Tag::B;
        for t in &mut tags[s.start + 1..s.end] {
            *t = Tag::I;
        }
    }
    tags
}

/// Any `I` without an open span is treated as `B`, so every tag sequence yields valid spans.
pub fn tags_to_spans(tags: &[Tag]) -> Vec<Span> {
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &t) in tags.iter().enumerate() {
        match t {
            Tag::B => {
                if let Some(s) = open.take() {
                    out.push(Span::new(s, i));
                }
                open = Some(i);
            }
            Tag::I => {
                if open.is_none() {
                    open = Some(i);
                }
            }
            Tag::O => {
                if let Some(s) = open.take() {
                    out.push(Span::new(s, i));
                }
            }
        }
    }
    if let Some(s) = open {
        out.push(Span::new(s, tags.len()));
    }
    out
}

const TAGS: usize = 3;

/// Hard constraints: no `I` at the start, no `O → I`.
fn start_mask() -> Tensor {
    Tensor::from_vec(1, TAGS, vec![0.0, f64::NEG_INFINITY, 0.0])
}

fn transition_mask() -> Tensor {
    let mut t = Tensor::zeros(TAGS, TAGS);
    t.set(Tag::O.index(), Tag::I.index(), f64::NEG_INFINITY);
    t
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpanTagger {
    pub embed: Embedding,
    pub lstm: BiLstm,
    pub emit: Linear,
    pub transitions: ParamId,
}

impl SpanTagger {
    pub fn new(store: &mut ParamStore, name: &str, vocab: usize, embed_dim: usize, hidden: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(SpanTagger {
            embed: Embedding::new(store, &format!("{name}.embed"), vocab, embed_dim, rng)?,
            lstm: BiLstm::new(store, &format!("{name}.lstm"), embed_dim, hidden, rng)?,
            emit: Linear::new(store, &format!("{name}.emit"), 2 * hidden, TAGS, rng)?,
            transitions: store.add_zeros(format!("{name}.transitions"), TAGS, TAGS)?,
        })
    }

    /// Node (`1 × 3` per token) and edge (`3 × 3`) score variables with constraints applied.
    fn potentials(&self, g: &mut Graph, tokens: &[usize]) -> Result<(Vec<Var>, Vec<Var>)> {
        let emb = self.embed.lookup(g, tokens);
        let inputs: Vec<Var> = (0..tokens.len()).map(|i| g.row(emb, i)).collect();
        let out = self.lstm.encode(g, &inputs)?;
        let stacked = g.concat_rows(&out.positions);
        let emissions = self.emit.forward(g, stacked);
        let mut nodes: Vec<Var> = (0..tokens.len()).map(|i| g.row(emissions, i)).collect();
        let sm = g.constant(start_mask());
        nodes[0] = g.add(nodes[0], sm);
        let tm = g.constant(transition_mask());
        let trans = g.param(self.transitions);
        let trans = g.add(trans, tm);
        Ok((nodes, vec![trans; tokens.len() - 1]))
    }

    pub fn detect(&self, store: &ParamStore, tokens: &[usize]) -> Result<Vec<Span>> {
        if tokens.is_empty() {
            return Ok(Vec::new());
        }
        let mut g = Graph::new(store);
        let (nodes, edges) = self.potentials(&mut g, tokens)?;
        let nodes: Vec<Vec<f64>> = nodes.iter().map(|&v| g.value(v).data().to_vec()).collect();
        let edges: Vec<Vec<f64>> = edges.iter().map(|&v| g.value(v).data().to_vec()).collect();
        let (_, best) = Chain::new(&nodes, &edges).viterbi();
        let tags: Vec<Tag> = best.into_iter().map(Tag::from_index).collect();
        Ok(tags_to_spans(&tags))
    }

    /// Negative log-likelihood of the gold spans.
    pub fn nll(&self, g: &mut Graph, tokens: &[usize], gold: &[Span]) -> Result<Var> {
        if tokens.is_empty() {
            return Err(Error::EmptySequence("SpanTagger::nll"));
        }
        validate_spans(gold, tokens.len())?;
        let tags = spans_to_tags(gold, tokens.len());
        let (nodes, edges) = self.potentials(g, tokens)?;
        let nv: Vec<Vec<f64>> = nodes.iter().map(|&v| g.value(v).data().to_vec()).collect();
        let ev: Vec<Vec<f64>> = edges.iter().map(|&v| g.value(v).data().to_vec()).collect();
        let log_z = ChainLogPartition::value(&nv, &ev);
        let inputs: Vec<Var> = nodes.iter().chain(&edges).copied().collect();
        let log_z = g.custom(&inputs, Tensor::scalar(log_z), Box::new(ChainLogPartition { positions: nodes.len() }));
        let mut score = g.pick(nodes[0], tags[0].index());
        for k in 1..tags.len() {
            let n = g.pick(nodes[k], tags[k].index());
            let e = g.pick(edges[k - 1], tags[k - 1].index() * TAGS + tags[k].index());
            score = g.add(score, n);
            score = g.add(score, e);
        }
        Ok(g.sub(log_z, score))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_and_spans_round_trip() {
        let spans = vec![Span::new(0, 2), Span::new(3, 4), Span::new(5, 8)];
        let tags = spans_to_tags(&spans, 9);
        assert_eq!(tags_to_spans(&tags), spans);
    }

    #[test]
    fn adjacent_spans_survive_round_trip() {
        let spans = vec![Span::new(1, 3), Span::new(3, 5)];
        assert_eq!(tags_to_spans(&spans_to_tags(&spans, 5)), spans);
    }

    #[test]
    fn stray_inside_tag_opens_a_span() {
        assert_eq!(tags_to_spans(&[Tag::O, Tag::I, Tag::I, Tag::O]), vec![Span::new(1, 3)]);
    }

    #[test]
    fn span_validation() {
        assert!(validate_spans(&[Span::new(0, 2), Span::new(2, 3)], 3).is_ok());
        assert!(validate_spans(&[Span::new(0, 4)], 3).is_err());
        assert!(validate_spans(&[Span::new(1, 3), Span::new(2, 3)], 3).is_err());
    }
}
