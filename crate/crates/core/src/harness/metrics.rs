//! Static evaluation on annotated dialogues: reference resolution, next mentions, choice.

use serde::{Deserialize, Serialize};

use crate::agent::{absorb, predict_mentions, resolve_references, select_choice, AgentState, Model};
use crate::corpus::{masks_in, Action, DialogueRecord};
use crate::encoders::vocab::SELECT;
use crate::encoders::Speaker;
use crate::error::{Error, Result};
use crate::spans::Span;
use crate::structcrf::ReferentSequence;
use crate::world::{Player, VIEW_SIZE};

/// Gold and predicted referents for one annotated message.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolutionCase {
    pub event: usize,
    /// Whether the perspective player spoke the message.
    pub own: bool,
    pub gold: ReferentSequence,
    pub predicted: ReferentSequence,
}

/// Gold and predicted mention plan before one of the perspective player's messages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MentionCase {
    pub event: usize,
    pub gold: ReferentSequence,
    pub predicted: ReferentSequence,
}

/// Raw predictions of one record from one player's perspective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerspectivePredictions {
    pub record: String,
    pub player: Player,
    pub resolutions: Vec<ResolutionCase>,
    pub mentions: Vec<MentionCase>,
    /// `(gold, predicted)` view indices of the final choice.
    pub choice: Option<(usize, usize)>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricCounts {
    pub records: usize,
    pub perspectives: usize,
    /// Referring expressions in the perspective player's own messages.
    pub own_expressions: usize,
    pub partner_expressions: usize,
    pub mention_turns: usize,
    pub choices: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusMetrics {
    pub choice_accuracy: f64,
    pub ref_resolution_dot_accuracy: f64,
    pub ref_resolution_exact_match: f64,
    pub partner_ref_accuracy: f64,
    pub partner_ref_exact: f64,
    pub next_mention_exact: f64,
    pub counts: MetricCounts,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Default)]
struct BitTally {
    bits: usize,
    exact: usize,
    expressions: usize,
}

impl BitTally {
    fn add(&mut self, gold: &ReferentSequence, predicted: &ReferentSequence) {
        for (k, g) in gold.masks().iter().enumerate() {
            let p = predicted.masks().get(k).map_or(0, |m| m.bits());
            let wrong = (g.bits() ^ p).count_ones() as usize;
            self.bits += VIEW_SIZE - wrong;
            self.exact += usize::from(wrong == 0);
            self.expressions += 1;
        }
    }
}

impl CorpusMetrics {
    /// Aggregate per-expression and per-turn results. Dot accuracy counts the 7 activity
    /// bits of every gold expression; a missing predicted position counts as empty.
    pub fn from_predictions(preds: &[PerspectivePredictions]) -> Self {
        let (mut own, mut partner) = (BitTally::default(), BitTally::default());
        let (mut mention_hits, mut mention_turns, mut choice_hits, mut choices) = (0, 0, 0, 0);
        let mut records: Vec<&str> = Vec::new();
        for p in preds {
            if !records.contains(&p.record.as_str()) {
                records.push(&p.record);
            }
            for r in &p.resolutions {
                let tally = if r.own { &mut own } else { &mut partner };
                tally.add(&r.gold, &r.predicted);
            }
            for m in &p.mentions {
                mention_turns += 1;
                mention_hits += usize::from(m.gold == m.predicted);
            }
            if let Some((gold, predicted)) = p.choice {
                choices += 1;
                choice_hits += usize::from(gold == predicted);
            }
        }
        CorpusMetrics {
            choice_accuracy: ratio(choice_hits, choices),
            ref_resolution_dot_accuracy: ratio(own.bits, own.expressions * VIEW_SIZE),
            ref_resolution_exact_match: ratio(own.exact, own.expressions),
            partner_ref_accuracy: ratio(partner.bits, partner.expressions * VIEW_SIZE),
            partner_ref_exact: ratio(partner.exact, partner.expressions),
            next_mention_exact: ratio(mention_hits, mention_turns),
            counts: MetricCounts {
                records: records.len(),
                perspectives: preds.len(),
                own_expressions: own.expressions,
                partner_expressions: partner.expressions,
                mention_turns,
                choices,
            },
        }
    }
}

/// Teacher-forced predictions for `player`: gold spans, gold history and gold referents in
/// memory; MAP resolution, greedy mention plans, argmax choice.
pub fn predict_perspective(model: &Model, record: &DialogueRecord, player: Player) -> Result<PerspectivePredictions> {
    let view = record.context.view(player);
    let mut state = AgentState::new(model, view.clone());
    let mut out = PerspectivePredictions { record: record.id.clone(), player, resolutions: vec![], mentions: vec![], choice: None };
    for (i, event) in record.events.iter().enumerate() {
        let own = event.speaker == player;
        let speaker = if own { Speaker::Own } else { Speaker::Partner };
        let (ids, gold) = match &event.action {
            Action::Select { dot } => {
                if own {
                    let gold = view.index_of(*dot).ok_or_else(|| Error::InvalidRecord(format!("{}: selection outside view", record.id)))?;
                    out.choice = Some((gold, select_choice(model, &state)?));
                }
                (vec![SELECT], ReferentSequence::default())
            }
            Action::Message { tokens, annotations } => {
                let anns = annotations.as_deref().ok_or_else(|| Error::MissingAnnotation(format!("{} event {i}", record.id)))?;
                let ids = model.vocab.encode(tokens);
                let gold = masks_in(view, anns);
                if own {
                    let plan = predict_mentions(model, &state, 1)?;
                    out.mentions.push(MentionCase { event: i, gold: gold.clone(), predicted: plan.referents });
                }
                let spans: Vec<Span> = anns.iter().map(|a| a.span()).collect();
                if let Some((res, _)) = resolve_references(model, &state, speaker, &ids, &spans)? {
                    out.resolutions.push(ResolutionCase { event: i, own, gold: gold.clone(), predicted: res.map_sequence });
                }
                (ids, gold)
            }
        };
        state = absorb(model, &state, speaker, &ids, &gold)?;
    }
    Ok(out)
}

/// Both perspectives of every record.
pub fn predict_corpus(model: &Model, records: &[DialogueRecord]) -> Result<Vec<PerspectivePredictions>> {
    let mut out = Vec::with_capacity(2 * records.len());
    for r in records {
        for p in [Player::A, Player::B] {
            out.push(predict_perspective(model, r, p)?);
        }
    }
    Ok(out)
}

pub fn eval_corpus(model: &Model, records: &[DialogueRecord]) -> Result<CorpusMetrics> {
    Ok(CorpusMetrics::from_predictions(&predict_corpus(model, records)?))
}
