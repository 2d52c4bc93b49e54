use serde::{Deserialize, Serialize};

use super::chain::{Chain, ChainLogPartition};
use super::mask::{ReferentMask, ReferentSequence, NUM_MASKS};
use super::potentials::{CrfPotentials, PotentialSet};
use crate::error::{Error, Result};
use crate::neural::{Graph, Tensor, Var};
use crate::world::VIEW_SIZE;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredSequence {
    pub score: f64,
    pub sequence: ReferentSequence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrfResult {
    pub log_partition: f64,
    pub map_sequence: ReferentSequence,
    pub kbest: Vec<ScoredSequence>,
    /// `K × 7`: probability that dot `d` is active at position `k`.
    pub dot_marginals: Vec<[f64; VIEW_SIZE]>,
    /// `K × 128`: probability of each mask at position `k`.
    pub mask_marginals: Vec<Vec<f64>>,
}

impl CrfResult {
    /// Per-position argmax of the dot marginals (threshold 0.5).
    pub fn marginal_argmax(&self) -> Vec<ReferentMask> {
        self.dot_marginals
            .iter()
            .map(|row| ReferentMask::from_dots(&(0..VIEW_SIZE).filter(|&d| row[d] > 0.5).collect::<Vec<_>>()))
            .collect()
    }
}

pub fn map_and_kbest(p: &PotentialSet, k: usize) -> Result<CrfResult> {
    if p.is_empty() {
        return Err(Error::EmptySequence("map_and_kbest"));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let chain = Chain::new(&p.nodes, &p.edges);
    let kbest: Vec<ScoredSequence> =
        chain.kbest(k).into_iter().map(|(score, seq)| ScoredSequence { score, sequence: ReferentSequence::from_indices(&seq) }).collect();
    let (mask_marginals, _) = chain.marginals();
    Ok(CrfResult {
        log_partition: chain.log_partition(),
        map_sequence: kbest[0].sequence.clone(),
        kbest,
        dot_marginals: mask_marginals.iter().map(|m| dot_marginals(m)).collect(),
        mask_marginals,
    })
}

pub fn dot_marginals(mask_probs: &[f64]) -> [f64; VIEW_SIZE] {
    let mut out = [0.0; VIEW_SIZE];
    for (m, &p) in mask_probs.iter().enumerate() {
        for (d, o) in out.iter_mut().enumerate() {
            if m >> d & 1 == 1 {
                *o += p;
            }
        }
    }
    out
}

/// Differentiable `log Z` of graph potentials.
pub fn log_partition_var(g: &mut Graph, p: &CrfPotentials) -> Var {
    let nodes: Vec<Vec<f64>> = p.nodes.iter().map(|&v| g.value(v).data().to_vec()).collect();
    let edges: Vec<Vec<f64>> = p.edges.iter().map(|&v| g.value(v).data().to_vec()).collect();
    let value = ChainLogPartition::value(&nodes, &edges);
    let inputs: Vec<Var> = p.nodes.iter().chain(&p.edges).copied().collect();
    g.custom(&inputs, Tensor::scalar(value), Box::new(ChainLogPartition { positions: p.nodes.len() }))
}

/// Differentiable score of a fixed sequence.
pub fn sequence_score_var(g: &mut Graph, p: &CrfPotentials, seq: &ReferentSequence) -> Result<Var> {
    if seq.len() != p.nodes.len() {
        return Err(Error::LengthMismatch { expected: p.nodes.len(), got: seq.len() });
    }
    let idx = seq.indices();
    let mut terms = Vec::with_capacity(2 * idx.len());
    for (k, &m) in idx.iter().enumerate() {
        terms.push(g.pick(p.nodes[k], m));
    }
    for k in 0..idx.len().saturating_sub(1) {
        terms.push(g.pick(p.edges[k], idx[k] * NUM_MASKS + idx[k + 1]));
    }
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = g.add(total, t);
    }
    Ok(total)
}

/// `log Z - score(gold)`.
pub fn sequence_nll(g: &mut Graph, p: &CrfPotentials, gold: &ReferentSequence) -> Result<Var> {
    if p.nodes.is_empty() {
        return Err(Error::EmptySequence("sequence_nll"));
    }
    let score = sequence_score_var(g, p, gold)?;
    let log_z = log_partition_var(g, p);
    Ok(g.sub(log_z, score))
}
