use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::record::DialogueRecord;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct CorpusSplit {
    pub fold: usize,
    pub train: Vec<DialogueRecord>,
    pub validation: Vec<DialogueRecord>,
    pub test: Vec<DialogueRecord>,
}

/// Context-disjoint folds, stratified by shared-dot count. Fold `f` tests on group `f`,
/// validates on group `f + 1`, and trains on the rest.
pub fn make_splits(records: &[DialogueRecord], folds: usize, seed: u64) -> Result<Vec<CorpusSplit>> {
    if folds < 2 {
        return Err(Error::InvalidArgument("need at least 2 folds".into()));
    }
    // Records over the same context stay together.
    let mut by_context: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_context.entry(r.context.to_json_line()).or_default().push(i);
    }
    if by_context.len() < folds {
        return Err(Error::InvalidArgument(format!("{} contexts cannot fill {folds} folds", by_context.len())));
    }
    let mut strata: BTreeMap<usize, Vec<Vec<usize>>> = BTreeMap::new();
    for group in by_context.into_values() {
        strata.entry(records[group[0]].context.shared_count()).or_default().push(group);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment: Vec<Vec<usize>> = vec![Vec::new(); folds];
    let mut next = 0;
    for groups in strata.values_mut() {
        groups.shuffle(&mut rng);
        for g in groups.iter() {
            assignment[next % folds].extend(g);
            next += 1;
        }
    }
    for a in &mut assignment {
        a.sort_unstable();
    }
    let take = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    Ok((0..folds)
        .map(|f| {
            let v = (f + 1) % folds;
            let train: Vec<usize> = (0..folds).filter(|&g| g != f && g != v).flat_map(|g| assignment[g].iter().copied()).collect();
            CorpusSplit { fold: f, train: take(&train), validation: take(&assignment[v]), test: take(&assignment[f]) }
        })
        .collect())
}
