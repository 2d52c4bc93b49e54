//! Neural potentials over referent masks, evaluated for all 128 masks at once.
//!
//! Node score for mask `r` at position `k`: `f(r) + R(r) + A(r)` where `f` sums per-dot
//! potentials, `R` sums a 3-way pair term over the 21 unordered dot pairs, and `A` scores
//! the active group (mean features + count embedding). Transition score between positions:
//! `S + B`, with `S` over the 49 ordered cross pairs and `B` on centroid differences of
//! groups of at most 3 dots.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mask::{pairs, tables, NUM_MASKS, NUM_PAIRS};
use crate::error::{Error, Result};
use crate::neural::{Embedding, Graph, Mlp, ParamStore, Tensor, Var};
use crate::world::VIEW_SIZE;

/// Largest active-dot count plus one (counts 0..=7).
const COUNT_VALUES: usize = VIEW_SIZE + 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrfDims {
    pub dot_dim: usize,
    pub memory_dim: usize,
    pub text_dim: usize,
    pub phi_hidden: usize,
    pub phi_layers: usize,
    pub phi_dropout: f64,
    pub pair_hidden: usize,
    pub pair_dropout: f64,
    pub count_dim: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CrfScorer {
    pub dims: CrfDims,
    pub phi: Mlp,
    pub psi: Mlp,
    pub group: Mlp,
    pub count: Embedding,
    pub omega: Mlp,
    pub centroid: Mlp,
}

/// Graph-level potentials for one referent sequence.
#[derive(Clone, Debug)]
pub struct CrfPotentials {
    /// `7 × 1` dot potentials per position.
    pub phi: Vec<Var>,
    /// `128 × 1` node scores per position.
    pub nodes: Vec<Var>,
    /// `128 × 128` transition scores, `[from, to]`.
    pub edges: Vec<Var>,
    pub structured: bool,
}

impl CrfScorer {
    pub fn new(store: &mut ParamStore, name: &str, dims: CrfDims, rng: &mut impl Rng) -> Result<Self> {
        if dims.phi_layers == 0 {
            return Err(Error::InvalidArgument("dot potential needs at least one hidden layer".into()));
        }
        let d = &dims;
        let phi = Mlp::new(store, &format!("{name}.phi"), d.memory_dim + d.text_dim + d.dot_dim, d.phi_hidden, d.phi_layers, 1, d.phi_dropout, rng)?;
        let psi = Mlp::new(store, &format!("{name}.psi"), d.dot_dim + d.text_dim, d.pair_hidden, 1, 3, d.pair_dropout, rng)?;
        let group = Mlp::new(store, &format!("{name}.group"), d.dot_dim + d.count_dim + d.text_dim, d.pair_hidden, 1, 1, d.pair_dropout, rng)?;
        let count = Embedding::new(store, &format!("{name}.count"), COUNT_VALUES, d.count_dim, rng)?;
        let omega = Mlp::new(store, &format!("{name}.omega"), d.dot_dim + d.text_dim, d.pair_hidden, 1, 3, d.pair_dropout, rng)?;
        let centroid = Mlp::new(store, &format!("{name}.centroid"), d.dot_dim + d.text_dim, d.pair_hidden, 1, 1, d.pair_dropout, rng)?;
        Ok(CrfScorer { dims, phi, psi, group, count, omega, centroid })
    }

    /// Potentials for a sequence of `zs.len()` referents. `dots` is `7 × dot_dim`,
    /// `memory` is `7 × memory_dim`, each `z` is `1 × text_dim`.
    pub fn potentials(&self, g: &mut Graph, dots: Var, memory: Var, zs: &[Var], structured: bool) -> Result<CrfPotentials> {
        if zs.is_empty() {
            return Err(Error::EmptySequence("CrfScorer::potentials"));
        }
        self.check(g, dots, memory, zs)?;
        let t = tables();
        let active = g.constant(t.active.clone());
        let mut phi = Vec::with_capacity(zs.len());
        let mut nodes = Vec::with_capacity(zs.len());
        for &z in zs {
            let p = self.dot_potentials(g, dots, memory, z)?;
            let f = g.matmul(active, p);
            let node = if structured {
                let c = self.configuration(g, dots, z)?;
                g.add(f, c)
            } else {
                f
            };
            phi.push(p);
            nodes.push(node);
        }
        let mut edges = Vec::with_capacity(zs.len() - 1);
        for w in zs.windows(2) {
            let e = if structured { self.transition(g, dots, w[0], w[1])? } else { g.constant(Tensor::zeros(NUM_MASKS, NUM_MASKS)) };
            edges.push(e);
        }
        Ok(CrfPotentials { phi, nodes, edges, structured })
    }

    fn check(&self, g: &Graph, dots: Var, memory: Var, zs: &[Var]) -> Result<()> {
        let d = &self.dims;
        let expect = |v: Var, rows: usize, cols: usize, what: &str| {
            if g.shape(v) != (rows, cols) {
                Err(Error::Shape(format!("{what}: expected {rows}x{cols}, got {:?}", g.shape(v))))
            } else {
                Ok(())
            }
        };
        expect(dots, VIEW_SIZE, d.dot_dim, "dot encodings")?;
        expect(memory, VIEW_SIZE, d.memory_dim, "memory")?;
        for &z in zs {
            expect(z, 1, d.text_dim, "text feature")?;
        }
        Ok(())
    }

    /// `φ(d, z) = MLP_φ([M(d), z, w(d)])`, `7 × 1`.
    pub fn dot_potentials(&self, g: &mut Graph, dots: Var, memory: Var, z: Var) -> Result<Var> {
        let zb = g.rows(z, &[0; VIEW_SIZE]);
        let x = g.concat_cols(&[memory, zb, dots]);
        self.phi.forward(g, x)
    }

    /// `R(r, z) + A(r, z)` for all masks, `128 × 1`.
    pub fn configuration(&self, g: &mut Graph, dots: Var, z: Var) -> Result<Var> {
        let t = tables();
        let pair_rows: Vec<usize> = pairs().iter().map(|&(i, j)| i * VIEW_SIZE + j).collect();
        let all = g.outer_diff(dots, dots);
        let diff = g.rows(all, &pair_rows);
        let zb = g.rows(z, &[0; NUM_PAIRS]);
        let x = g.concat_cols(&[diff, zb]);
        let p = self.psi.forward(g, x)?;
        let both = g.constant(t.pair_both.clone());
        let neither = g.constant(t.pair_neither.clone());
        let pair_term = three_way(g, p, both, neither);

        let first = &self.group.hidden[0];
        let dd = self.dims.dot_dim;
        let wp = first.forward_partial(g, dots, 0);
        let mean = g.constant(t.mean.clone());
        let mean_p = g.matmul(mean, wp);
        let counts: Vec<usize> = (0..COUNT_VALUES).collect();
        let ce = self.count.lookup(g, &counts);
        let cp = first.forward_partial(g, ce, dd);
        let cp = g.rows(cp, &t.counts);
        let zp = first.forward_partial(g, z, dd + self.dims.count_dim);
        let zp = add_bias(g, first, zp);
        let pre = g.add(mean_p, cp);
        let pre = g.add_broadcast(pre, zp);
        let group_term = self.group.forward_from_first_preactivation(g, pre);
        Ok(g.add(pair_term, group_term))
    }

    /// `S + B` for all mask pairs, `128 × 128`.
    pub fn transition(&self, g: &mut Graph, dots: Var, z_from: Var, z_to: Var) -> Result<Var> {
        let t = tables();
        let zd = g.sub(z_from, z_to);
        let diff = g.outer_diff(dots, dots);
        let zb = g.rows(zd, &[0; VIEW_SIZE * VIEW_SIZE]);
        let x = g.concat_cols(&[diff, zb]);
        let q = self.omega.forward(g, x)?;
        let q0 = g.slice_cols(q, 0, 1);
        let q1 = g.slice_cols(q, 1, 2);
        let q2 = g.slice_cols(q, 2, 3);
        let d0 = g.sub(q0, q2);
        let d0 = g.reshape(d0, VIEW_SIZE, VIEW_SIZE);
        let d1 = g.sub(q1, q2);
        let d1 = g.reshape(d1, VIEW_SIZE, VIEW_SIZE);
        let base = g.sum(q2);
        let (a, at) = (g.constant(t.active.clone()), g.constant(t.active_t.clone()));
        let (n, nt) = (g.constant(t.inactive.clone()), g.constant(t.inactive_t.clone()));
        let s0 = g.matmul(a, d0);
        let s0 = g.matmul(s0, at);
        let s1 = g.matmul(n, d1);
        let s1 = g.matmul(s1, nt);
        let s = g.add(s0, s1);
        let s = g.add_broadcast(s, base);

        let first = &self.centroid.hidden[0];
        let wp = first.forward_partial(g, dots, 0);
        let small = g.constant(t.small_mean.clone());
        let cs = g.matmul(small, wp);
        let od = g.outer_diff(cs, cs);
        let zp = first.forward_partial(g, zd, self.dims.dot_dim);
        let zp = add_bias(g, first, zp);
        let pre = g.add_broadcast(od, zp);
        let b = self.centroid.forward_from_first_preactivation(g, pre);
        let b = g.scatter(b, &t.small_pair_index, NUM_MASKS, NUM_MASKS);
        Ok(g.add(s, b))
    }
}

/// `Σ p2 + both·(p0 - p2) + neither·(p1 - p2)` for a `pairs × 3` score matrix.
fn three_way(g: &mut Graph, p: Var, both: Var, neither: Var) -> Var {
    let p0 = g.slice_cols(p, 0, 1);
    let p1 = g.slice_cols(p, 1, 2);
    let p2 = g.slice_cols(p, 2, 3);
    let d0 = g.sub(p0, p2);
    let d1 = g.sub(p1, p2);
    let base = g.sum(p2);
    let a = g.matmul(both, d0);
    let b = g.matmul(neither, d1);
    let s = g.add(a, b);
    g.add_broadcast(s, base)
}

fn add_bias(g: &mut Graph, layer: &crate::neural::Linear, x: Var) -> Var {
    match layer.bias {
        Some(b) => {
            let b = g.param(b);
            g.add(x, b)
        }
        None => x,
    }
}

/// Plain-number potentials for one referent sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSet {
    /// Per-dot potentials, `K × 7`.
    pub phi: Vec<[f64; VIEW_SIZE]>,
    /// `K × 128`, `f + ψ`.
    pub nodes: Vec<Vec<f64>>,
    /// `(K - 1) × (128 · 128)`, row-major `[from * 128 + to]`.
    pub edges: Vec<Vec<f64>>,
    pub structured: bool,
}

impl PotentialSet {
    pub fn from_graph(g: &Graph, p: &CrfPotentials) -> Self {
        let phi = p
            .phi
            .iter()
            .map(|&v| {
                let mut a = [0.0; VIEW_SIZE];
                a.copy_from_slice(g.value(v).data());
                a
            })
            .collect();
        PotentialSet {
            phi,
            nodes: p.nodes.iter().map(|&v| g.value(v).data().to_vec()).collect(),
            edges: p.edges.iter().map(|&v| g.value(v).data().to_vec()).collect(),
            structured: p.structured,
        }
    }

    /// Uniform zero potentials.
    pub fn zeros(k: usize) -> Self {
        PotentialSet {
            phi: vec![[0.0; VIEW_SIZE]; k],
            nodes: vec![vec![0.0; NUM_MASKS]; k],
            edges: vec![vec![0.0; NUM_MASKS * NUM_MASKS]; k.saturating_sub(1)],
            structured: true,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.nodes.iter().all(|r| r.len() == NUM_MASKS && r.iter().all(|v| v.is_finite()))
            && self.edges.len() == self.nodes.len().saturating_sub(1)
            && self.edges.iter().all(|r| r.len() == NUM_MASKS * NUM_MASKS && r.iter().all(|v| v.is_finite()))
            && self.phi.len() == self.nodes.len();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("potential set has wrong shape or non-finite entries".into()))
        }
    }

    pub fn score(&self, seq: &[usize]) -> Result<f64> {
        if seq.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), got: seq.len() });
        }
        Ok(super::chain::Chain::new(&self.nodes, &self.edges).score(seq))
    }

    pub fn log_prob(&self, seq: &[usize]) -> Result<f64> {
        Ok(self.score(seq)? - log_partition(self)?)
    }
}

pub fn log_partition(p: &PotentialSet) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::EmptySequence("log_partition"));
    }
    Ok(super::chain::Chain::new(&p.nodes, &p.edges).log_partition())
}

/// Drop the configuration and transition terms, leaving independent per-dot potentials.
pub fn unstructured_mode(p: &PotentialSet) -> PotentialSet {
    let t = tables();
    let nodes = p
        .phi
        .iter()
        .map(|phi| (0..NUM_MASKS).map(|m| t.active.row_slice(m).iter().zip(phi).map(|(a, f)| a * f).sum()).collect())
        .collect();
    PotentialSet {
        phi: p.phi.clone(),
        nodes,
        edges: vec![vec![0.0; NUM_MASKS * NUM_MASKS]; p.len().saturating_sub(1)],
        structured: false,
    }
}
