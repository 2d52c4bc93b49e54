//! Graph-level pieces of the turn pipeline, shared by training and inference.

use super::model::Model;
use super::state::Confirmation;
use crate::encoders::EncodedUtterance;
use crate::error::Result;
use crate::neural::{Graph, Tensor, Var};
use crate::spans::Span;
use crate::structcrf::mask::tables;
use crate::structcrf::{CrfPotentials, ReferentSequence};
use crate::world::{raw_features, WorldView, VIEW_SIZE};

/// Decoder state after the gated initial updates, plus attention memories.
#[derive(Clone, Copy, Debug)]
pub struct DecoderInit {
    pub hidden: Var,
    dots: Var,
    dot_keys: Var,
    referents: Option<(Var, Var)>,
}

/// Mention decoder outputs: inputs `x^k` and halting probabilities `h_k`.
#[derive(Clone, Debug, Default)]
pub struct MentionSteps {
    pub xs: Vec<Var>,
    pub halts: Vec<Var>,
}

impl Model {
    /// `w(d)` for the 7 dots of `view`, `7 × dot_dim`.
    pub fn encode_view(&self, g: &mut Graph, view: &WorldView) -> Result<Var> {
        let f = g.constant(raw_features(view));
        self.net.dots.encode(g, f)
    }

    pub fn zero_memory(&self) -> Tensor {
        Tensor::zeros(VIEW_SIZE, self.config.memory_dim)
    }

    /// Resolution potentials for `spans` of an encoded utterance.
    pub fn resolution_potentials(&self, g: &mut Graph, dots: Var, memory: Var, enc: &EncodedUtterance, spans: &[Span]) -> Result<CrfPotentials> {
        let zs = spans.iter().map(|&s| self.net.history.pool(g, enc, s)).collect::<Result<Vec<_>>>()?;
        self.net.resolver.potentials(g, dots, memory, &zs, self.ablation.structured())
    }

    /// One GRU step per dot on the `7 × 4` memory features. Identity when memory is ablated.
    pub fn update_memory(&self, g: &mut Graph, memory: Var, features: Tensor) -> Result<Var> {
        if !self.ablation.uses_memory() {
            return Ok(memory);
        }
        let x = g.constant(features);
        self.net.memory.step(g, memory, x)
    }

    /// Projected decoder input `[H, c, m]`, reused at every mention step.
    pub fn mention_input(&self, g: &mut Graph, writer: Var, confirmation: Confirmation, memory: Var) -> Result<Var> {
        let c = self.net.mentions.confirmation.lookup(g, &[confirmation.index()]);
        let m = g.mean_rows(memory);
        let x = g.concat_cols(&[writer, c, m]);
        self.net.mentions.cell.project_input(g, x)
    }

    /// Advance the mention decoder `steps` times from a zero state.
    pub fn mention_steps(&self, g: &mut Graph, input: Var, steps: usize) -> Result<MentionSteps> {
        let mut out = MentionSteps::default();
        let mut x = g.constant(Tensor::zeros(1, self.config.mention_dim));
        for _ in 0..steps {
            x = self.mention_step(g, x, input, &mut out)?;
        }
        Ok(out)
    }

    pub(crate) fn mention_step(&self, g: &mut Graph, prev: Var, input: Var, out: &mut MentionSteps) -> Result<Var> {
        let x = self.net.mentions.cell.step_projected(g, prev, input)?;
        let h = self.net.mentions.halt.forward(g, x);
        let h = g.sigmoid(h);
        out.xs.push(x);
        out.halts.push(h);
        Ok(x)
    }

    pub fn mention_potentials(&self, g: &mut Graph, dots: Var, memory: Var, xs: &[Var]) -> Result<CrfPotentials> {
        self.net.mention_crf.potentials(g, dots, memory, xs, self.ablation.structured())
    }

    /// Gated initial state: writer state, updated with the referent summary, then with the
    /// confirmation embedding.
    pub fn decoder_init(&self, g: &mut Graph, dots: Var, writer: Var, referents: &ReferentSequence, confirmation: Confirmation) -> Result<DecoderInit> {
        let d = &self.net.decoder;
        let (summary, referents) = if referents.is_empty() {
            (g.constant(Tensor::zeros(1, 2 * self.config.referent_dim)), None)
        } else {
            let mean = g.constant(tables().mean.clone());
            let sel = g.rows(mean, &referents.indices());
            let pooled = g.matmul(sel, dots);
            let inputs: Vec<Var> = (0..referents.len()).map(|k| g.row(pooled, k)).collect();
            let out = d.referents.encode(g, &inputs)?;
            let ys = g.concat_rows(&out.positions);
            let keys = d.referent_attention.project_keys(g, ys)?;
            (out.summary, Some((ys, keys)))
        };
        let h = d.referent_gate.step(g, writer, summary)?;
        let c = d.confirmation.lookup(g, &[confirmation.index()]);
        let hidden = d.confirmation_gate.step(g, h, c)?;
        let dot_keys = d.dot_attention.project_keys(g, dots)?;
        Ok(DecoderInit { hidden, dots, dot_keys, referents })
    }

    /// Decoder hidden state after reading `token`.
    pub fn decoder_step(&self, g: &mut Graph, hidden: Var, token: usize) -> Result<Var> {
        let e = self.net.history.embed.lookup(g, &[token]);
        self.net.decoder.cell.step(g, hidden, e)
    }

    /// Vocabulary logits for each row of `hidden` (`n × writer_dim → n × vocab`).
    pub fn decoder_logits(&self, g: &mut Graph, init: &DecoderInit, hidden: Var) -> Var {
        let d = &self.net.decoder;
        let n = g.shape(hidden).0;
        let (_, cw) = d.dot_attention.attend_many(g, init.dot_keys, hidden, init.dots);
        let cy = match init.referents {
            Some((ys, keys)) => d.referent_attention.attend_many(g, keys, hidden, ys).1,
            None => g.constant(Tensor::zeros(n, 2 * self.config.referent_dim)),
        };
        let x = g.concat_cols(&[hidden, cw, cy]);
        d.output.forward(g, x)
    }

    /// Teacher-forced `-log P_U(targets)` reading `<YOU>` then `targets[..n-1]`.
    pub fn utterance_nll(&self, g: &mut Graph, init: &DecoderInit, targets: &[usize]) -> Result<Var> {
        let mut h = init.hidden;
        let mut hs = Vec::with_capacity(targets.len());
        let mut prev = crate::encoders::vocab::YOU;
        for &t in targets {
            h = self.decoder_step(g, h, prev)?;
            hs.push(h);
            prev = t;
        }
        let hs = g.concat_rows(&hs);
        let logits = self.decoder_logits(g, init, hs);
        let lp = g.log_softmax(logits);
        let v = self.vocab.len();
        let mut total: Option<Var> = None;
        for (i, &t) in targets.iter().enumerate() {
            let p = g.pick(lp, i * v + t);
            total = Some(match total {
                Some(s) => g.add(s, p),
                None => p,
            });
        }
        let total = total.ok_or(crate::error::Error::EmptySequence("utterance_nll"))?;
        Ok(g.scale(total, -1.0))
    }

    /// Choice log-probabilities over the 7 dots, `1 × 7`.
    pub fn selection_log_probs(&self, g: &mut Graph, dots: Var, memory: Var, reader_summary: Var) -> Result<Var> {
        let s = g.rows(reader_summary, &[0; VIEW_SIZE]);
        let x = g.concat_cols(&[memory, s, dots]);
        let scores = self.net.selector.forward(g, x)?;
        let scores = g.transpose(scores);
        Ok(g.log_softmax(scores))
    }
}
