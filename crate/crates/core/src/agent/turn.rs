//! Inference-time turn pipeline: observe the partner, plan mentions, speak or select.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::Model;
use super::ops::DecoderInit;
use super::state::{confirmation_of, memory_features, AgentState, Confirmation, MentionPlan};
use crate::encoders::vocab::{EOS, SELECT, YOU};
use crate::encoders::{DialogueState, Speaker};
use crate::error::{Error, Result};
use crate::neural::tensor::softmax;
use crate::neural::{Graph, Var};
use crate::pragmatics::{generate_pragmatic, PragConfig};
use crate::spans::Span;
use crate::structcrf::{map_and_kbest, CrfResult, PotentialSet, ReferentSequence, ScoredSequence};

/// How the agent turns a mention plan into words.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Policy {
    Greedy,
    Sample { temperature: f64 },
    Pragmatic(PragConfig),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Decoding {
    Greedy,
    Sample { temperature: f64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentAction {
    Message(Vec<String>),
    /// Board id of the chosen dot.
    Select(u32),
}

/// What the agent made of an incoming utterance.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Observation {
    pub spans: Vec<Span>,
    pub resolution: Option<CrfResult>,
    pub confirmation: Confirmation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TurnOutput {
    pub action: AgentAction,
    pub state: AgentState,
    pub observation: Option<Observation>,
    pub plan: MentionPlan,
    /// Referents the utterance was generated for.
    pub referents: ReferentSequence,
}

/// A decoded utterance. `tokens` excludes the terminal token.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub tokens: Vec<usize>,
    /// `EOS`, `SELECT`, or `None` when the length cap was hit.
    pub terminal: Option<usize>,
    /// `log P_U` at temperature 1.
    pub log_prob: f64,
}

impl Utterance {
    pub fn is_select(&self) -> bool {
        self.terminal == Some(SELECT)
    }

    /// Decoder targets: tokens followed by the terminal.
    pub fn targets(&self) -> Vec<usize> {
        self.tokens.iter().copied().chain(self.terminal).collect()
    }
}

fn is_select_tokens(tokens: &[usize]) -> bool {
    tokens.contains(&SELECT)
}

/// Step (1)–(3): detect and resolve partner references, set the confirmation, update
/// memory, and advance the dialogue history.
pub fn observe(model: &Model, state: &AgentState, incoming: &[String]) -> Result<(AgentState, Observation)> {
    let ids = model.vocab.encode(incoming);
    let spans = if is_select_tokens(&ids) { Vec::new() } else { model.net.tagger.detect(&model.params, &ids)? };
    let mut g = Graph::new(&model.params);
    let h = state.dialogue.to_graph(&mut g);
    let (h, enc) = model.net.history.advance(&mut g, &h, Speaker::Partner, &ids)?;
    let mut next = state.clone();
    next.dialogue = DialogueState::from_graph(&g, &h);
    let mut obs = Observation { spans: spans.clone(), ..Default::default() };
    if let (Some(enc), false) = (enc, spans.is_empty()) {
        let dots = model.encode_view(&mut g, &state.view)?;
        let memory = g.constant(state.memory.clone());
        let p = model.resolution_potentials(&mut g, dots, memory, &enc, &spans)?;
        let result = map_and_kbest(&PotentialSet::from_graph(&g, &p), 1)?;
        let features = memory_features(result.map_sequence.masks(), &result.marginal_argmax());
        let m = model.update_memory(&mut g, memory, features)?;
        next.memory = g.value(m).clone();
        obs.confirmation = confirmation_of(&result.map_sequence);
        obs.resolution = Some(result);
    }
    next.confirmation = obs.confirmation;
    Ok((next, obs))
}

/// Resolve `spans` of `tokens` spoken by `speaker` against the current state, without
/// changing it.
pub fn resolve_references(model: &Model, state: &AgentState, speaker: Speaker, tokens: &[usize], spans: &[Span]) -> Result<Option<(CrfResult, PotentialSet)>> {
    if spans.is_empty() || tokens.is_empty() {
        return Ok(None);
    }
    let mut g = Graph::new(&model.params);
    let h = state.dialogue.to_graph(&mut g);
    let (_, enc) = model.net.history.advance(&mut g, &h, speaker, tokens)?;
    let enc = enc.expect("nonempty tokens");
    let dots = model.encode_view(&mut g, &state.view)?;
    let memory = g.constant(state.memory.clone());
    let p = model.resolution_potentials(&mut g, dots, memory, &enc, spans)?;
    let set = PotentialSet::from_graph(&g, &p);
    Ok(Some((map_and_kbest(&set, 1)?, set)))
}

/// The agent's own listener on a candidate utterance: detected spans and, when there are
/// any, the resolution potentials.
pub struct Listening {
    pub spans: Vec<Span>,
    pub resolution: Option<(CrfResult, PotentialSet)>,
}

impl Listening {
    /// `log P_R(r | u)`; `-inf` when the detected span count differs from `|r|`.
    pub fn log_prob(&self, referents: &ReferentSequence) -> f64 {
        match &self.resolution {
            Some((res, set)) if set.len() == referents.len() => set.score(&referents.indices()).map_or(f64::NEG_INFINITY, |s| s - res.log_partition),
            None if referents.is_empty() => 0.0,
            _ => f64::NEG_INFINITY,
        }
    }

    pub fn map_sequence(&self) -> ReferentSequence {
        self.resolution.as_ref().map(|(r, _)| r.map_sequence.clone()).unwrap_or_default()
    }
}

pub fn listen(model: &Model, state: &AgentState, tokens: &[usize]) -> Result<Listening> {
    let spans = if is_select_tokens(tokens) { Vec::new() } else { model.net.tagger.detect(&model.params, tokens)? };
    let resolution = resolve_references(model, state, Speaker::Own, tokens, &spans)?;
    Ok(Listening { spans, resolution })
}

/// Step (4): roll the mention decoder until it halts, then decode the top `n` referent
/// sequences under the mention CRF.
pub fn predict_mentions(model: &Model, state: &AgentState, n: usize) -> Result<MentionPlan> {
    let mut g = Graph::new(&model.params);
    let h = state.dialogue.to_graph(&mut g);
    let memory = g.constant(state.memory.clone());
    let input = model.mention_input(&mut g, h.writer, state.confirmation, memory)?;
    let mut steps = Default::default();
    let mut x = g.constant(crate::neural::Tensor::zeros(1, model.config.mention_dim));
    let mut halt_log = 0.0;
    let mut xs: Vec<Var> = Vec::new();
    let mut halts = Vec::new();
    for _ in 0..model.config.max_mentions {
        x = model.mention_step(&mut g, x, input, &mut steps)?;
        let p = g.value(*steps.halts.last().unwrap()).item();
        halts.push(p);
        if p > 0.5 {
            halt_log += p.ln();
            break;
        }
        halt_log += (1.0 - p).ln();
        xs.push(x);
    }
    if xs.is_empty() {
        let empty = ReferentSequence::default();
        return Ok(MentionPlan { referents: empty.clone(), kbest: vec![ScoredSequence { score: 0.0, sequence: empty }], log_probs: vec![halt_log], halts });
    }
    let dots = model.encode_view(&mut g, &state.view)?;
    let p = model.mention_potentials(&mut g, dots, memory, &xs)?;
    let result = map_and_kbest(&PotentialSet::from_graph(&g, &p), n.max(1))?;
    let log_probs = result.kbest.iter().map(|s| s.score - result.log_partition + halt_log).collect();
    Ok(MentionPlan { referents: result.map_sequence.clone(), kbest: result.kbest, log_probs, halts })
}

/// Decoder bound to one (state, referents, confirmation) triple; draws any number of
/// utterances from the same initial state.
pub struct Generator<'m> {
    model: &'m Model,
    g: Graph<'m>,
    init: DecoderInit,
}

impl<'m> Generator<'m> {
    pub fn new(model: &'m Model, state: &AgentState, referents: &ReferentSequence, confirmation: Confirmation) -> Result<Self> {
        let mut g = Graph::new(&model.params);
        let h = state.dialogue.to_graph(&mut g);
        let dots = model.encode_view(&mut g, &state.view)?;
        let init = model.decoder_init(&mut g, dots, h.writer, referents, confirmation)?;
        Ok(Generator { model, g, init })
    }

    pub fn generate(&mut self, decoding: Decoding, rng: &mut impl Rng) -> Result<Utterance> {
        let g = &mut self.g;
        let mut h = self.init.hidden;
        let mut prev = YOU;
        let mut tokens = Vec::new();
        let mut log_prob = 0.0;
        for _ in 0..self.model.config.max_tokens {
            h = self.model.decoder_step(g, h, prev)?;
            let logits = self.model.decoder_logits(g, &self.init, h);
            let row = g.value(logits).data();
            let next = match decoding {
                Decoding::Greedy => crate::neural::tensor::argmax(row),
                Decoding::Sample { temperature } => {
                    let scaled: Vec<f64> = row.iter().map(|v| v / temperature).collect();
                    sample_index(&softmax(&scaled), rng)
                }
            };
            log_prob += row[next] - crate::neural::tensor::log_sum_exp(row);
            if next == EOS || next == SELECT {
                return Ok(Utterance { tokens, terminal: Some(next), log_prob });
            }
            tokens.push(next);
            prev = next;
        }
        Ok(Utterance { tokens, terminal: None, log_prob })
    }

    /// Teacher-forced `log P_U` of `targets` (terminal included when present).
    pub fn score(&mut self, targets: &[usize]) -> Result<f64> {
        if targets.is_empty() {
            return Ok(0.0);
        }
        let nll = self.model.utterance_nll(&mut self.g, &self.init, targets)?;
        Ok(-self.g.value(nll).item())
    }
}

fn sample_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

pub fn generate_utterance(model: &Model, state: &AgentState, referents: &ReferentSequence, confirmation: Confirmation, decoding: Decoding, rng: &mut impl Rng) -> Result<Utterance> {
    Generator::new(model, state, referents, confirmation)?.generate(decoding, rng)
}

/// `log P_S` over the 7 dots.
pub fn selection_log_probs(model: &Model, state: &AgentState) -> Result<Vec<f64>> {
    let mut g = Graph::new(&model.params);
    let h = state.dialogue.to_graph(&mut g);
    let dots = model.encode_view(&mut g, &state.view)?;
    let memory = g.constant(state.memory.clone());
    let lp = model.selection_log_probs(&mut g, dots, memory, h.reader_summary)?;
    Ok(g.value(lp).data().to_vec())
}

/// View index of the most probable choice (lowest index on ties).
pub fn select_choice(model: &Model, state: &AgentState) -> Result<usize> {
    Ok(crate::neural::tensor::argmax(&selection_log_probs(model, state)?))
}

fn advance_own(model: &Model, state: &mut AgentState, tokens: &[usize]) -> Result<()> {
    let mut g = Graph::new(&model.params);
    let h = state.dialogue.to_graph(&mut g);
    let (h, _) = model.net.history.advance(&mut g, &h, Speaker::Own, tokens)?;
    state.dialogue = DialogueState::from_graph(&g, &h);
    Ok(())
}

/// Teacher-forced update: read `tokens` from `speaker` and write the given referents into
/// memory, as in training.
pub fn absorb(model: &Model, state: &AgentState, speaker: Speaker, tokens: &[usize], referents: &ReferentSequence) -> Result<AgentState> {
    let mut g = Graph::new(&model.params);
    let h = state.dialogue.to_graph(&mut g);
    let (h, _) = model.net.history.advance(&mut g, &h, speaker, tokens)?;
    let mut next = state.clone();
    next.dialogue = DialogueState::from_graph(&g, &h);
    if !referents.is_empty() {
        let memory = g.constant(state.memory.clone());
        let m = model.update_memory(&mut g, memory, memory_features(referents.masks(), referents.masks()))?;
        next.memory = g.value(m).clone();
    }
    next.confirmation = match speaker {
        Speaker::Own => Confirmation::NA,
        Speaker::Partner => confirmation_of(referents),
    };
    if speaker == Speaker::Own {
        next.turn += 1;
        next.has_selected |= tokens == [SELECT];
    }
    Ok(next)
}

/// Select now: choose a dot, record the selection in the history, and stop messaging.
pub fn select_now(model: &Model, state: &AgentState) -> Result<(u32, AgentState)> {
    if state.has_selected {
        return Err(Error::Protocol("agent already selected".into()));
    }
    let idx = select_choice(model, state)?;
    let mut next = state.clone();
    advance_own(model, &mut next, &[SELECT])?;
    next.has_selected = true;
    next.turn += 1;
    Ok((state.view.dots[idx].id, next))
}

/// Steps (4)–(5) on an already-observed state.
pub fn act(model: &Model, state: &AgentState, policy: &Policy, rng: &mut impl Rng) -> Result<TurnOutput> {
    if state.has_selected {
        return Err(Error::Protocol("take_turn after selection".into()));
    }
    let n = match policy {
        Policy::Pragmatic(cfg) => cfg.n_r,
        _ => 1,
    };
    let plan = predict_mentions(model, state, n)?;
    let (referents, utterance) = match policy {
        Policy::Greedy => (plan.referents.clone(), generate_utterance(model, state, &plan.referents, state.confirmation, Decoding::Greedy, rng)?),
        Policy::Sample { temperature } => {
            (plan.referents.clone(), generate_utterance(model, state, &plan.referents, state.confirmation, Decoding::Sample { temperature: *temperature }, rng)?)
        }
        Policy::Pragmatic(cfg) => {
            let out = generate_pragmatic(model, state, &plan, cfg, rng)?;
            (out.referents, out.utterance)
        }
    };
    if utterance.is_select() || is_select_tokens(&utterance.tokens) {
        let (dot, next) = select_now(model, state)?;
        return Ok(TurnOutput { action: AgentAction::Select(dot), state: next, observation: None, plan, referents: ReferentSequence::default() });
    }
    let mut next = state.clone();
    if !referents.is_empty() {
        let mut g = Graph::new(&model.params);
        let memory = g.constant(state.memory.clone());
        let features = memory_features(referents.masks(), referents.masks());
        let m = model.update_memory(&mut g, memory, features)?;
        next.memory = g.value(m).clone();
    }
    let tokens = if utterance.tokens.is_empty() { vec![EOS] } else { utterance.tokens.clone() };
    advance_own(model, &mut next, &tokens)?;
    next.confirmation = Confirmation::NA;
    next.turn += 1;
    let words = model.vocab.decode(&tokens);
    Ok(TurnOutput { action: AgentAction::Message(words), state: next, observation: None, plan, referents })
}

/// One full turn. `incoming` is the partner's latest utterance (`["<SELECT>"]` for a
/// partner selection), or `None` when the agent opens or speaks again.
pub fn take_turn(model: &Model, state: &AgentState, incoming: Option<&[String]>, policy: &Policy, rng: &mut impl Rng) -> Result<TurnOutput> {
    if state.has_selected {
        return Err(Error::Protocol("take_turn after selection".into()));
    }
    let (observed, obs) = match incoming {
        Some(tokens) => {
            let (s, o) = observe(model, state, tokens)?;
            (s, Some(o))
        }
        None => {
            let mut s = state.clone();
            s.confirmation = Confirmation::NA;
            (s, None)
        }
    };
    let mut out = act(model, &observed, policy, rng)?;
    out.observation = obs;
    Ok(out)
}
