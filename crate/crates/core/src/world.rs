//! Game contexts: a board of dots and two overlapping circular player views.
//!
//! Board coordinates place view A's circle at the origin with unit radius; view B's
//! circle is offset by a random vector. A dot's view coordinates are its board
//! coordinates translated by the view centre and divided by the view radius, so the
//! same dot has identical size and shade, and positions differing only by the
//! centre offset, in the two views.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::Tensor;

pub const VIEW_SIZE: usize = 7;
pub const MIN_DOT_DISTANCE: f64 = 0.08;
pub const GENERATION_BUDGET: usize = 10_000;
pub const CONTEXT_SCHEMA_VERSION: u32 = 1;
/// Range of the distance between the two view centres, in view radii.
const CENTER_OFFSET: (f64, f64) = (0.5, 0.9);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Player {
    A,
    B,
}

impl Player {
    pub fn other(self) -> Player {
        match self {
            Player::A => Player::B,
            Player::B => Player::A,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Player::A => 0,
            Player::B => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dot {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub size: f64,
    pub shade: f64,
}

impl Dot {
    pub fn attributes(&self) -> [f64; 4] {
        [self.x, self.y, self.size, self.shade]
    }

    pub fn distance(&self, other: &Dot) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldView {
    pub owner: Player,
    pub dots: Vec<Dot>,
}

impl WorldView {
    /// Project board dots `ids` (in that order) into the view centred at `center`.
    pub fn project(owner: Player, board: &[Dot], ids: &[u32], center: [f64; 2], radius: f64) -> Result<Self> {
        let dots = ids
            .iter()
            .map(|&id| {
                let d = board.iter().find(|d| d.id == id).ok_or_else(|| Error::InvalidRecord(format!("view references unknown dot id {id}")))?;
                Ok(Dot { id, x: (d.x - center[0]) / radius, y: (d.y - center[1]) / radius, size: d.size, shade: d.shade })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(WorldView { owner, dots })
    }

    pub fn ids(&self) -> Vec<u32> {
        self.dots.iter().map(|d| d.id).collect()
    }

    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.dots.iter().position(|d| d.id == id)
    }

    /// 7-bit mask of the given board ids that are visible in this view.
    pub fn mask_of(&self, ids: &[u32]) -> u8 {
        ids.iter().filter_map(|&id| self.index_of(id)).fold(0u8, |m, i| m | (1 << i))
    }

    pub fn ids_of_mask(&self, mask: u8) -> Vec<u32> {
        (0..self.dots.len()).filter(|i| mask >> i & 1 == 1).map(|i| self.dots[i].id).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dots.len() != VIEW_SIZE {
            return Err(Error::InvalidRecord(format!("view has {} dots, expected {VIEW_SIZE}", self.dots.len())));
        }
        for (i, d) in self.dots.iter().enumerate() {
            if !d.attributes().iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidRecord(format!("dot {} has non-finite attributes", d.id)));
            }
            if d.x * d.x + d.y * d.y > 1.0 + 1e-9 {
                return Err(Error::InvalidRecord(format!("dot {} lies outside the view circle", d.id)));
            }
            for e in &self.dots[i + 1..] {
                if d.id == e.id {
                    return Err(Error::InvalidRecord(format!("dot {} appears twice in a view", d.id)));
                }
            }
        }
        Ok(())
    }

    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, d) in self.dots.iter().enumerate() {
            for e in &self.dots[i + 1..] {
                best = best.min(d.distance(e));
            }
        }
        best
    }
}

/// Row `i` is `(x, y, size, shade)` of dot `i` in view order.
pub fn raw_features(view: &WorldView) -> Tensor {
    let data = view.dots.iter().flat_map(|d| d.attributes()).collect();
    Tensor::from_vec(view.dots.len(), 4, data)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ContextRecord", into = "ContextRecord")]
pub struct GameContext {
    pub board: Vec<Dot>,
    pub view_a: WorldView,
    pub view_b: WorldView,
    pub shared_ids: BTreeSet<u32>,
    pub center_a: [f64; 2],
    pub center_b: [f64; 2],
    pub radius: f64,
}

impl GameContext {
    pub fn from_parts(board: Vec<Dot>, ids_a: &[u32], ids_b: &[u32], center_a: [f64; 2], center_b: [f64; 2], radius: f64) -> Result<Self> {
        let view_a = WorldView::project(Player::A, &board, ids_a, center_a, radius)?;
        let view_b = WorldView::project(Player::B, &board, ids_b, center_b, radius)?;
        let a: BTreeSet<u32> = ids_a.iter().copied().collect();
        let shared_ids = ids_b.iter().copied().filter(|id| a.contains(id)).collect();
        let ctx = GameContext { board, view_a, view_b, shared_ids, center_a, center_b, radius };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn view(&self, player: Player) -> &WorldView {
        match player {
            Player::A => &self.view_a,
            Player::B => &self.view_b,
        }
    }

    pub fn shared_count(&self) -> usize {
        self.shared_ids.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.view_a.validate()?;
        self.view_b.validate()?;
        if !(4..=6).contains(&self.shared_ids.len()) {
            return Err(Error::InvalidRecord(format!("{} shared dots, expected 4..=6", self.shared_ids.len())));
        }
        let a: BTreeSet<u32> = self.view_a.ids().into_iter().collect();
        let b: BTreeSet<u32> = self.view_b.ids().into_iter().collect();
        if a.intersection(&b).copied().collect::<BTreeSet<_>>() != self.shared_ids {
            return Err(Error::InvalidRecord("shared_ids differs from the view intersection".into()));
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("context serialisation is infallible")
    }
}

/// On-disk form of a [`GameContext`] (one JSON object per line).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContextRecord {
    pub schema_version: u32,
    pub board: Vec<Dot>,
    pub view_a: Vec<u32>,
    pub view_b: Vec<u32>,
    pub view_a_center: [f64; 2],
    pub view_b_center: [f64; 2],
    pub view_radius: f64,
}

impl TryFrom<ContextRecord> for GameContext {
    type Error = Error;

    fn try_from(r: ContextRecord) -> Result<Self> {
        if r.schema_version != CONTEXT_SCHEMA_VERSION {
            return Err(Error::InvalidRecord(format!("unsupported context schema_version {}", r.schema_version)));
        }
        GameContext::from_parts(r.board, &r.view_a, &r.view_b, r.view_a_center, r.view_b_center, r.view_radius)
    }
}

impl From<GameContext> for ContextRecord {
    fn from(c: GameContext) -> Self {
        ContextRecord {
            schema_version: CONTEXT_SCHEMA_VERSION,
            view_a: c.view_a.ids(),
            view_b: c.view_b.ids(),
            board: c.board,
            view_a_center: c.center_a,
            view_b_center: c.center_b,
            view_radius: c.radius,
        }
    }
}

/// Sample a context with exactly `shared_count` dots visible to both players.
pub fn sample_context(seed: u64, shared_count: usize) -> Result<GameContext> {
    if !(4..=6).contains(&shared_count) {
        return Err(Error::InvalidArgument(format!("shared_count must be 4, 5 or 6 (got {shared_count})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = 1.0;
    let center_a = [0.0, 0.0];
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let offset = rng.random_range(CENTER_OFFSET.0..CENTER_OFFSET.1) * radius;
    let center_b = [offset * angle.cos(), offset * angle.sin()];

    let in_circle = |p: [f64; 2], c: [f64; 2]| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) <= radius * radius;
    let exclusive = VIEW_SIZE - shared_count;
    // (count, in A, in B)
    let regions = [(shared_count, true, true), (exclusive, true, false), (exclusive, false, true)];

    let mut attempts = 0;
    let mut positions: Vec<([f64; 2], bool, bool)> = Vec::with_capacity(2 * VIEW_SIZE);
    for (count, want_a, want_b) in regions {
        let mut placed = 0;
        while placed < count {
            attempts += 1;
            if attempts > GENERATION_BUDGET {
                return Err(Error::GenerationBudget { attempts: GENERATION_BUDGET, shared: shared_count });
            }
            // Uniform point in the bounding box of the region's host circle.
            let host = if want_a { center_a } else { center_b };
            let p = [host[0] + rng.random_range(-radius..radius), host[1] + rng.random_range(-radius..radius)];
            if in_circle(p, center_a) != want_a || in_circle(p, center_b) != want_b {
                continue;
            }
            let min_dist = MIN_DOT_DISTANCE * radius;
            if positions.iter().any(|(q, _, _)| (p[0] - q[0]).hypot(p[1] - q[1]) < min_dist) {
                continue;
            }
            positions.push((p, want_a, want_b));
            placed += 1;
        }
    }
    let board: Vec<Dot> = positions
        .iter()
        .enumerate()
        .map(|(i, (p, _, _))| Dot { id: i as u32, x: p[0], y: p[1], size: rng.random_range(-1.0..1.0), shade: rng.random_range(-1.0..1.0) })
        .collect();
    let mut ids_a: Vec<u32> = positions.iter().enumerate().filter(|(_, (_, a, _))| *a).map(|(i, _)| i as u32).collect();
    let mut ids_b: Vec<u32> = positions.iter().enumerate().filter(|(_, (_, _, b))| *b).map(|(i, _)| i as u32).collect();
    ids_a.shuffle(&mut rng);
    ids_b.shuffle(&mut rng);
    GameContext::from_parts(board, &ids_a, &ids_b, center_a, center_b, radius)
}

pub fn write_contexts(path: &Path, contexts: &[GameContext]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for c in contexts {
        writeln!(w, "{}", c.to_json_line()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_contexts(path: &Path) -> Result<Vec<GameContext>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ctx: GameContext = serde_json::from_str(&line)
            .map_err(|e| Error::Record { path: path.display().to_string(), line: i + 1, message: e.to_string() })?;
        out.push(ctx);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sampled_context_has_requested_overlap() {
        let ctx = sample_context(1, 4).unwrap();
        assert_eq!(ctx.view_a.dots.len(), 7);
        assert_eq!(ctx.view_b.dots.len(), 7);
        assert_eq!(ctx.shared_count(), 4);
        assert_eq!(ctx.board.len(), 10);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let a = sample_context(1, 4).unwrap().to_json_line();
        let b = sample_context(1, 4).unwrap().to_json_line();
        assert_eq!(a, b);
        assert_ne!(a, sample_context(2, 4).unwrap().to_json_line());
    }

    #[test]
    fn rejects_invalid_shared_count() {
        assert!(matches!(sample_context(0, 3), Err(Error::InvalidArgument(_))));
        assert!(matches!(sample_context(0, 7), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn monte_carlo_audit_of_generator() {
        let mut shade_sum = 0.0;
        let mut n = 0usize;
        for seed in 0..1000 {
            let ctx = sample_context(seed, 5).unwrap();
            for view in [&ctx.view_a, &ctx.view_b] {
                assert!(view.min_pairwise_distance() >= MIN_DOT_DISTANCE);
            }
            for d in &ctx.board {
                shade_sum += d.shade;
                n += 1;
            }
        }
        assert!((shade_sum / n as f64).abs() < 0.1);
    }

    #[test]
    fn raw_features_fixpoint_and_permutation() {
        let centre = WorldView { owner: Player::A, dots: vec![Dot { id: 0, x: 0.0, y: 0.0, size: 0.0, shade: 0.0 }] };
        assert_eq!(raw_features(&centre).data(), &[0.0; 4]);

        let ctx = sample_context(9, 6).unwrap();
        let mut permuted = ctx.view_a.clone();
        permuted.dots.reverse();
        let f = raw_features(&ctx.view_a);
        let p = raw_features(&permuted);
        for i in 0..7 {
            assert_eq!(f.row_slice(i), p.row_slice(6 - i));
        }
    }

    #[test]
    fn features_survive_serialisation() {
        let ctx = sample_context(11, 5).unwrap();
        let back: GameContext = serde_json::from_str(&ctx.to_json_line()).unwrap();
        assert_eq!(raw_features(&back.view_b), raw_features(&ctx.view_b));
        assert_eq!(back, ctx);
    }

    #[test]
    fn wrong_schema_version_rejected() {
        let line = sample_context(3, 4).unwrap().to_json_line().replace("\"schema_version\":1", "\"schema_version\":99");
        assert!(serde_json::from_str::<GameContext>(&line).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn invariants_hold_for_fuzzed_seeds(seed in any::<u64>(), shared in 4usize..=6) {
            let ctx = sample_context(seed, shared).unwrap();
            prop_assert_eq!(ctx.shared_count(), shared);
            prop_assert!(ctx.validate().is_ok());
            // Re-projection consistency: shared dots differ only by the centre offset.
            for &id in &ctx.shared_ids {
                let a = ctx.view_a.dots[ctx.view_a.index_of(id).unwrap()];
                let b = ctx.view_b.dots[ctx.view_b.index_of(id).unwrap()];
                let dx = (a.x - b.x) * ctx.radius - (ctx.center_b[0] - ctx.center_a[0]);
                let dy = (a.y - b.y) * ctx.radius - (ctx.center_b[1] - ctx.center_a[1]);
                prop_assert!(dx.abs() < 1e-12 && dy.abs() < 1e-12);
                prop_assert_eq!(a.size, b.size);
                prop_assert_eq!(a.shade, b.shade);
            }
        }
    }
}
