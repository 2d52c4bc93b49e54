//! Scripted oracle players exchanging template utterances with exact referent annotations.
//!
//! Policy: the opener proposes its most salient uniquely-describable dot, optionally
//! anchored by a relation to another dot or group. The partner confirms when every
//! mentioned referent is at least partly in its view ("yes", agreeing on the target) and
//! otherwise denies and counter-proposes. After agreement the proposer selects, then the
//! other player.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grammar::{centroid, definite_phrase, groups, relation, single_phrase, uniquely_described};
use super::record::{Annotation, DialogueRecord, Event};
use crate::error::Result;
use crate::world::{sample_context, Dot, GameContext, Player};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrammarConfig {
    /// Probability that a proposal carries a relational anchor.
    pub relation_prob: f64,
    /// Probability that an anchor is a group when one exists.
    pub plural_prob: f64,
    /// Probability of the referent-free acknowledgment "yes let's pick it ."
    pub implicit_ack_prob: f64,
    /// Messages before both players are forced to select.
    pub max_messages: usize,
}

impl Default for GrammarConfig {
    fn default() -> Self {
        GrammarConfig { relation_prob: 0.75, plural_prob: 0.3, implicit_ack_prob: 0.3, max_messages: 18 }
    }
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

struct Proposal {
    proposer: Player,
    target: u32,
    mentions: Vec<Vec<u32>>,
}

/// Salience order for proposals: uniquely describable dots first, then larger+darker.
fn proposal_order(dots: &[Dot]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dots.len()).collect();
    idx.sort_by(|&a, &b| {
        let ua = uniquely_described(dots, a);
        let ub = uniquely_described(dots, b);
        ub.cmp(&ua).then((dots[b].size + dots[b].shade).total_cmp(&(dots[a].size + dots[a].shade)))
    });
    idx
}

/// "i have <target> [<relation> <anchor>] ." with annotations offset by `offset`.
fn propose(dots: &[Dot], target: usize, cfg: &GrammarConfig, rng: &mut ChaCha8Rng, offset: usize) -> (Vec<String>, Vec<Annotation>, Vec<Vec<u32>>) {
    let mut tokens = words("i have");
    let t = &dots[target];
    let start = tokens.len();
    tokens.extend(single_phrase(t));
    let mut anns = vec![Annotation { start: offset + start, end: offset + tokens.len(), dots: vec![t.id] }];
    if rng.random::<f64>() < cfg.relation_prob {
        let gs = groups(dots, target);
        let (phrase, members): (Vec<String>, Vec<usize>) = if !gs.is_empty() && rng.random::<f64>() < cfg.plural_prob {
            let g = &gs[rng.random_range(0..gs.len())];
            (g.phrase(), g.members.clone())
        } else {
            let nearest = (0..dots.len()).filter(|&i| i != target).min_by(|&a, &b| t.distance(&dots[a]).total_cmp(&t.distance(&dots[b]))).unwrap();
            (single_phrase(&dots[nearest]), vec![nearest])
        };
        let anchor: Vec<&Dot> = members.iter().map(|&i| &dots[i]).collect();
        let (ax, ay) = centroid(&anchor);
        tokens.extend(relation(t, ax, ay).words().iter().map(|s| s.to_string()));
        let start = tokens.len();
        tokens.extend(phrase);
        anns.push(Annotation { start: offset + start, end: offset + tokens.len(), dots: members.iter().map(|&i| dots[i].id).collect() });
    }
    tokens.push(".".into());
    let mentions = anns.iter().map(|a| a.dots.clone()).collect();
    (tokens, anns, mentions)
}

pub fn synth_dialogue(context: &GameContext, seed: u64, cfg: &GrammarConfig) -> Result<DialogueRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = if rng.random::<bool>() { Player::A } else { Player::B };
    let mut events = Vec::new();
    let mut proposed: [BTreeSet<u32>; 2] = [BTreeSet::new(), BTreeSet::new()];
    let mut pending: Option<Proposal> = None;
    let mut agreed: Option<(Player, u32)> = None;
    let mut selected = [false, false];
    let mut speaker = first;
    let mut messages = 0;

    let next_proposal = |who: Player, proposed: &[BTreeSet<u32>; 2]| -> usize {
        let dots = &context.view(who).dots;
        let order = proposal_order(dots);
        order.iter().copied().find(|&i| !proposed[who.index()].contains(&dots[i].id)).unwrap_or(order[0])
    };

    while !(selected[0] && selected[1]) {
        let me = speaker.index();
        if selected[me] {
            speaker = speaker.other();
            continue;
        }
        let view = context.view(speaker);
        if let Some((_, target)) = agreed {
            events.push(Event::select(speaker, target));
            selected[me] = true;
        } else if messages >= cfg.max_messages {
            // Out of time: fall back to the last dot this player proposed, or its most salient.
            let dot = proposed[me].iter().next_back().copied().unwrap_or(view.dots[proposal_order(&view.dots)[0]].id);
            events.push(Event::select(speaker, dot));
            selected[me] = true;
        } else if let Some(p) = pending.take().filter(|p| p.proposer != speaker) {
            let visible = p.mentions.iter().all(|m| view.mask_of(m) != 0);
            if visible {
                let (tokens, anns) = if rng.random::<f64>() < cfg.implicit_ack_prob {
                    (words("yes let's pick it ."), vec![])
                } else {
                    let idx = view.index_of(p.target).expect("visible target");
                    let mut tokens = words("yes . let's pick");
                    let start = tokens.len();
                    tokens.extend(definite_phrase(&view.dots[idx]));
                    let ann = Annotation { start, end: tokens.len(), dots: vec![p.target] };
                    tokens.push(".".into());
                    (tokens, vec![ann])
                };
                events.push(Event::message(speaker, tokens, anns));
                agreed = Some((p.proposer, p.target));
                messages += 1;
            } else {
                let mut tokens = words("no i do not see it .");
                let target = next_proposal(speaker, &proposed);
                let (more, anns, mentions) = propose(&view.dots, target, cfg, &mut rng, tokens.len());
                tokens.extend(more);
                proposed[me].insert(view.dots[target].id);
                pending = Some(Proposal { proposer: speaker, target: view.dots[target].id, mentions });
                events.push(Event::message(speaker, tokens, anns));
                messages += 1;
            }
        } else {
            let target = next_proposal(speaker, &proposed);
            let (tokens, anns, mentions) = propose(&view.dots, target, cfg, &mut rng, 0);
            proposed[me].insert(view.dots[target].id);
            pending = Some(Proposal { proposer: speaker, target: view.dots[target].id, mentions });
            events.push(Event::message(speaker, tokens, anns));
            messages += 1;
        }
        // After agreement the proposer selects first.
        speaker = match agreed {
            Some((proposer, _)) if !selected[proposer.index()] => proposer,
            _ => speaker.other(),
        };
    }
    DialogueRecord::from_events(format!("synth-{seed}"), context.clone(), events)
}

/// `n` dialogues over fresh contexts with shared counts cycling 4, 5, 6.
pub fn synth_corpus(n: usize, seed: u64, cfg: &GrammarConfig) -> Result<Vec<DialogueRecord>> {
    (0..n)
        .map(|i| {
            let s = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
            let ctx = sample_context(s, 4 + i % 3)?;
            synth_dialogue(&ctx, s, cfg)
        })
        .collect()
}

/// Dialogues over the given contexts, one per context.
pub fn synth_for_contexts(contexts: &[GameContext], seed: u64, cfg: &GrammarConfig) -> Result<Vec<DialogueRecord>> {
    contexts.iter().enumerate().map(|(i, c)| synth_dialogue(c, seed.wrapping_mul(1_000_003).wrapping_add(i as u64), cfg)).collect()
}
