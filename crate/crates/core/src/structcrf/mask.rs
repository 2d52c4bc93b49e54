use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::neural::Tensor;
use crate::world::VIEW_SIZE;

/// Number of referent masks over a 7-dot view.
pub const NUM_MASKS: usize = 1 << VIEW_SIZE;
/// Unordered dot pairs `(i, j)`, `i < j`.
pub const NUM_PAIRS: usize = VIEW_SIZE * (VIEW_SIZE - 1) / 2;
/// Largest group for which the centroid transition term is evaluated.
pub const MAX_CENTROID_GROUP: u32 = 3;

/// Subset of the 7 dots in a view; bit `i` is dot `i` in view order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReferentMask(u8);

impl ReferentMask {
    pub const EMPTY: ReferentMask = ReferentMask(0);

    pub fn new(bits: u8) -> Self {
        assert!((bits as usize) < NUM_MASKS, "mask {bits} exceeds 7 bits");
        ReferentMask(bits)
    }

    pub fn from_dots(dots: &[usize]) -> Self {
        ReferentMask::new(dots.iter().fold(0u8, |m, &d| m | (1 << d)))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn contains(self, dot: usize) -> bool {
        self.0 >> dot & 1 == 1
    }

    pub fn count(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn dots(self) -> impl Iterator<Item = usize> {
        (0..VIEW_SIZE).filter(move |&d| self.contains(d))
    }
}

impl fmt::Display for ReferentMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dots: Vec<String> = self.dots().map(|d| d.to_string()).collect();
        write!(f, "{{{}}}", dots.join(","))
    }
}

/// One mask per referring expression.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReferentSequence(pub Vec<ReferentMask>);

impl ReferentSequence {
    pub fn new(masks: Vec<ReferentMask>) -> Self {
        ReferentSequence(masks)
    }

    pub fn from_indices(indices: &[usize]) -> Self {
        ReferentSequence(indices.iter().map(|&i| ReferentMask::new(i as u8)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn masks(&self) -> &[ReferentMask] {
        &self.0
    }

    pub fn indices(&self) -> Vec<usize> {
        self.0.iter().map(|m| m.index()).collect()
    }
}

/// Unordered pairs in row-major order: (0,1), (0,2), …, (5,6).
pub fn pairs() -> &'static [(usize, usize)] {
    static PAIRS: OnceLock<Vec<(usize, usize)>> = OnceLock::new();
    PAIRS.get_or_init(|| (0..VIEW_SIZE).flat_map(|i| (i + 1..VIEW_SIZE).map(move |j| (i, j))).collect())
}

/// Masks with at most [`MAX_CENTROID_GROUP`] active dots, ascending.
pub fn small_masks() -> &'static [usize] {
    static SMALL: OnceLock<Vec<usize>> = OnceLock::new();
    SMALL.get_or_init(|| (0..NUM_MASKS).filter(|&m| (m as u32).count_ones() <= MAX_CENTROID_GROUP).collect())
}

/// Constant design matrices shared by every potential computation.
pub struct MaskTables {
    /// `128 × 7`, entry `r(i)`.
    pub active: Tensor,
    /// `7 × 128`, transpose of `active`.
    pub active_t: Tensor,
    /// `128 × 7`, entry `1 - r(i)`.
    pub inactive: Tensor,
    /// `7 × 128`.
    pub inactive_t: Tensor,
    /// `128 × 21`, entry `r(i) r(j)`.
    pub pair_both: Tensor,
    /// `128 × 21`, entry `(1 - r(i)) (1 - r(j))`.
    pub pair_neither: Tensor,
    /// `128 × 7`, entry `r(i) / |r|` (zero row for the empty mask).
    pub mean: Tensor,
    /// Active-dot count per mask.
    pub counts: Vec<usize>,
    /// `|small| × 7` mean matrix restricted to [`small_masks`].
    pub small_mean: Tensor,
    /// Flat indices `a * 128 + b` for all pairs of small masks, in `outer_diff` order.
    pub small_pair_index: Vec<usize>,
}

pub fn tables() -> &'static MaskTables {
    static TABLES: OnceLock<MaskTables> = OnceLock::new();
    TABLES.get_or_init(build_tables)
}

fn build_tables() -> MaskTables {
    let n = VIEW_SIZE;
    let mut active = Tensor::zeros(NUM_MASKS, n);
    let mut mean = Tensor::zeros(NUM_MASKS, n);
    let mut pair_both = Tensor::zeros(NUM_MASKS, NUM_PAIRS);
    let mut pair_neither = Tensor::zeros(NUM_MASKS, NUM_PAIRS);
    let mut counts = Vec::with_capacity(NUM_MASKS);
    for m in 0..NUM_MASKS {
        let mask = ReferentMask::new(m as u8);
        let c = mask.count() as usize;
        counts.push(c);
        for d in 0..n {
            if mask.contains(d) {
                active.set(m, d, 1.0);
                mean.set(m, d, 1.0 / c as f64);
            }
        }
        for (p, &(i, j)) in pairs().iter().enumerate() {
            let (a, b) = (mask.contains(i), mask.contains(j));
            pair_both.set(m, p, (a && b) as u8 as f64);
            pair_neither.set(m, p, (!a && !b) as u8 as f64);
        }
    }
    let inactive = active.map(|x| 1.0 - x);
    let small = small_masks();
    let mut small_mean = Tensor::zeros(small.len(), n);
    for (r, &m) in small.iter().enumerate() {
        for d in 0..n {
            small_mean.set(r, d, mean.get(m, d));
        }
    }
    let small_pair_index = small.iter().flat_map(|&a| small.iter().map(move |&b| a * NUM_MASKS + b)).collect();
    MaskTables {
        active_t: active.transpose(),
        inactive_t: inactive.transpose(),
        active,
        inactive,
        pair_both,
        pair_neither,
        mean,
        counts,
        small_mean,
        small_pair_index,
    }
}
