//! Pragmatic generation: rerank (referents, utterance) candidates by a weighted geometric
//! mean of mention, speaker and listener probabilities, with an early-stopping search over
//! the top mention plans.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::turn::{listen, Decoding, Generator, Utterance};
use crate::agent::{AgentState, MentionPlan, Model};
use crate::error::{Error, Result};
use crate::structcrf::ReferentSequence;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PragConfig {
    pub w_m: f64,
    pub w_s: f64,
    pub w_l: f64,
    /// Early-stopping threshold on the best score so far.
    pub tau: f64,
    /// Referent candidates considered.
    pub n_r: usize,
    /// Utterances sampled per referent candidate.
    pub n_u: usize,
    pub temperature: f64,
}

impl Default for PragConfig {
    fn default() -> Self {
        PragConfig { w_m: 0.0, w_s: 1e-3, w_l: 1.0 - 1e-3, tau: 0.8, n_r: 20, n_u: 100, temperature: 0.25 }
    }
}

impl PragConfig {
    pub fn validate(&self) -> Result<()> {
        if [self.w_m, self.w_s, self.w_l].iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("pragmatic weights must be nonnegative".into()));
        }
        if self.n_r == 0 || self.n_u == 0 || !(self.temperature > 0.0) {
            return Err(Error::InvalidArgument("n_r, n_u and temperature must be positive".into()));
        }
        Ok(())
    }
}

fn weighted(w: f64, log_p: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w * log_p
    }
}

/// `L = exp(w_M log P_M + w_S log P_U + w_L log P_R)`; a missing listener term is omitted.
/// Zero-weight terms contribute nothing even when their probability is zero.
pub fn score_l(log_pm: f64, log_pu: f64, log_pr: Option<f64>, cfg: &PragConfig) -> f64 {
    let s = weighted(cfg.w_m, log_pm) + weighted(cfg.w_s, log_pu) + log_pr.map_or(0.0, |l| weighted(cfg.w_l, l));
    if s.is_nan() {
        0.0
    } else {
        s.exp()
    }
}

/// One scored (referents, utterance) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub referents: ReferentSequence,
    pub utterance: Utterance,
    pub log_pm: f64,
    pub log_pu: f64,
    /// `None` for referent-free plans.
    pub log_pr: Option<f64>,
    pub score: f64,
}

impl Candidate {
    pub fn rescore(&self, cfg: &PragConfig) -> f64 {
        score_l(self.log_pm, self.log_pu, self.log_pr, cfg)
    }
}

/// Sample `n_u` utterances for `referents`, score each distinct one, and return the best
/// together with every scored candidate in sampling order.
pub fn realize(model: &Model, state: &AgentState, referents: &ReferentSequence, log_pm: f64, cfg: &PragConfig, rng: &mut impl Rng) -> Result<(Candidate, Vec<Candidate>)> {
    cfg.validate()?;
    let mut generator = Generator::new(model, state, referents, state.confirmation)?;
    let mut seen = HashSet::new();
    let mut scored: Vec<Candidate> = Vec::new();
    for _ in 0..cfg.n_u {
        let u = generator.generate(Decoding::Sample { temperature: cfg.temperature }, rng)?;
        if !seen.insert(u.targets()) {
            continue;
        }
        let log_pr = if referents.is_empty() { None } else { Some(listen(model, state, &u.tokens)?.log_prob(referents)) };
        let log_pu = u.log_prob;
        let score = score_l(log_pm, log_pu, log_pr, cfg);
        scored.push(Candidate { referents: referents.clone(), utterance: u, log_pm, log_pu, log_pr, score });
    }
    let mut best = 0;
    for (i, c) in scored.iter().enumerate() {
        if c.score > scored[best].score {
            best = i;
        }
    }
    Ok((scored[best].clone(), scored))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PragOutput {
    pub referents: ReferentSequence,
    pub utterance: Utterance,
    pub score: f64,
    /// Referent candidates passed to `realize`.
    pub referent_candidates: usize,
    /// Every candidate scored during the search.
    pub evaluations: Vec<Candidate>,
}

/// Early-stopping search over the plan's top referent sequences.
pub fn generate_pragmatic(model: &Model, state: &AgentState, plan: &MentionPlan, cfg: &PragConfig, rng: &mut impl Rng) -> Result<PragOutput> {
    cfg.validate()?;
    let mut best: Option<Candidate> = None;
    let mut evaluations = Vec::new();
    let mut referent_candidates = 0;
    for (scored, &log_pm) in plan.kbest.iter().zip(&plan.log_probs).take(cfg.n_r) {
        let (cand, all) = realize(model, state, &scored.sequence, log_pm, cfg, rng)?;
        referent_candidates += 1;
        evaluations.extend(all);
        if best.as_ref().is_none_or(|b| cand.score > b.score) {
            best = Some(cand);
        }
        if best.as_ref().is_some_and(|b| b.score >= cfg.tau) {
            break;
        }
    }
    let best = best.ok_or(Error::EmptySequence("generate_pragmatic"))?;
    Ok(PragOutput { referents: best.referents, utterance: best.utterance, score: best.score, referent_candidates, evaluations })
}
