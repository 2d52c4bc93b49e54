//! Template language for synthetic dialogues: attribute adjectives by fixed-width bins and
//! spatial relations computed from view coordinates (y grows upwards).

use crate::world::Dot;

pub const SIZES: [&str; 4] = ["tiny", "small", "medium", "large"];
pub const SHADES: [&str; 5] = ["lightest", "light", "grey", "dark", "black"];
/// Below this centre distance two dots are "next to" each other.
pub const NEAR_DISTANCE: f64 = 0.25;

fn bin(value: f64, bins: usize) -> usize {
    let b = ((value + 1.0) / 2.0 * bins as f64).floor();
    (b.max(0.0) as usize).min(bins - 1)
}

pub fn size_bin(d: &Dot) -> usize {
    bin(d.size, SIZES.len())
}

pub fn shade_bin(d: &Dot) -> usize {
    bin(d.shade, SHADES.len())
}

pub fn size_word(d: &Dot) -> &'static str {
    SIZES[size_bin(d)]
}

pub fn shade_word(d: &Dot) -> &'static str {
    SHADES[shade_bin(d)]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    NextTo,
    LeftOf,
    RightOf,
    Above,
    Below,
}

impl Relation {
    pub fn words(self) -> &'static [&'static str] {
        match self {
            Relation::NextTo => &["next", "to"],
            Relation::LeftOf => &["left", "of"],
            Relation::RightOf => &["right", "of"],
            Relation::Above => &["above"],
            Relation::Below => &["below"],
        }
    }

    pub const ALL: [Relation; 5] = [Relation::NextTo, Relation::LeftOf, Relation::RightOf, Relation::Above, Relation::Below];
}

/// Where `target` lies relative to the point `(ax, ay)`.
pub fn relation(target: &Dot, ax: f64, ay: f64) -> Relation {
    let (dx, dy) = (target.x - ax, target.y - ay);
    if dx.hypot(dy) < NEAR_DISTANCE {
        Relation::NextTo
    } else if dx.abs() >= dy.abs() {
        if dx < 0.0 {
            Relation::LeftOf
        } else {
            Relation::RightOf
        }
    } else if dy < 0.0 {
        Relation::Below
    } else {
        Relation::Above
    }
}

pub fn centroid(dots: &[&Dot]) -> (f64, f64) {
    let n = dots.len() as f64;
    (dots.iter().map(|d| d.x).sum::<f64>() / n, dots.iter().map(|d| d.y).sum::<f64>() / n)
}

/// "a <size> <shade> dot"
pub fn single_phrase(d: &Dot) -> Vec<String> {
    ["a", size_word(d), shade_word(d), "dot"].iter().map(|s| s.to_string()).collect()
}

/// "the <size> <shade> one"
pub fn definite_phrase(d: &Dot) -> Vec<String> {
    ["the", size_word(d), shade_word(d), "one"].iter().map(|s| s.to_string()).collect()
}

/// A group sharing one attribute bin, described as "two/three <adjective> dots".
#[derive(Clone, Debug, PartialEq)]
pub struct Group {
    pub members: Vec<usize>,
    pub adjective: &'static str,
}

impl Group {
    pub fn phrase(&self) -> Vec<String> {
        let count = if self.members.len() == 2 { "two" } else { "three" };
        [count, self.adjective, "dots"].iter().map(|s| s.to_string()).collect()
    }
}

/// All groups of 2–3 dots (excluding `exclude`) that are exactly the dots of `dots` in one
/// size bin or one shade bin.
pub fn groups(dots: &[Dot], exclude: usize) -> Vec<Group> {
    let mut out = Vec::new();
    for (bins, words, key) in [(SIZES.len(), &SIZES[..], size_bin as fn(&Dot) -> usize), (SHADES.len(), &SHADES[..], shade_bin)] {
        for b in 0..bins {
            let members: Vec<usize> = (0..dots.len()).filter(|&i| i != exclude && key(&dots[i]) == b).collect();
            if (2..=3).contains(&members.len()) {
                out.push(Group { members, adjective: words[b] });
            }
        }
    }
    out
}

/// True if no other dot in `dots` shares both bins with `dots[i]`.
pub fn uniquely_described(dots: &[Dot], i: usize) -> bool {
    let key = (size_bin(&dots[i]), shade_bin(&dots[i]));
    dots.iter().enumerate().all(|(j, d)| j == i || (size_bin(d), shade_bin(d)) != key)
}
