//! Exact inference for a linear chain over `S` states: forward/backward in log space,
//! marginals, and k-best decoding.
//!
//! `nodes[k][s]` scores state `s` at position `k`; `edges[k][a * S + b]` scores the
//! transition from `a` at position `k` to `b` at position `k + 1`. Entries may be
//! `-inf` to forbid a state or transition.

use std::cmp::Ordering;

use crate::neural::tensor::log_sum_exp;
use crate::neural::{CustomOp, Tensor};

pub struct Chain<'a> {
    pub nodes: &'a [Vec<f64>],
    pub edges: &'a [Vec<f64>],
    pub states: usize,
}

impl<'a> Chain<'a> {
    pub fn new(nodes: &'a [Vec<f64>], edges: &'a [Vec<f64>]) -> Self {
        assert!(!nodes.is_empty(), "chain needs at least one position");
        let states = nodes[0].len();
        assert_eq!(edges.len(), nodes.len() - 1, "need one edge table per adjacent pair");
        debug_assert!(edges.iter().all(|e| e.len() == states * states));
        Chain { nodes, edges, states }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn score(&self, seq: &[usize]) -> f64 {
        assert_eq!(seq.len(), self.len());
        let mut s: f64 = seq.iter().enumerate().map(|(k, &x)| self.nodes[k][x]).sum();
        for k in 0..seq.len().saturating_sub(1) {
            s += self.edges[k][seq[k] * self.states + seq[k + 1]];
        }
        s
    }

    /// `alpha[k][s]`: log-sum of all prefixes ending in `s` at `k` (node `k` included).
    pub fn forward(&self) -> Vec<Vec<f64>> {
        let n = self.states;
        let mut alpha = vec![self.nodes[0].clone()];
        let mut buf = vec![0.0; n];
        for k in 1..self.len() {
            let prev = &alpha[k - 1];
            let edge = &self.edges[k - 1];
            let mut cur = vec![0.0; n];
            for b in 0..n {
                for a in 0..n {
                    buf[a] = prev[a] + edge[a * n + b];
                }
                cur[b] = log_sum_exp(&buf) + self.nodes[k][b];
            }
            alpha.push(cur);
        }
        alpha
    }

    /// `beta[k][s]`: log-sum of all suffixes after position `k` given `s` at `k` (node `k` excluded).
    pub fn backward(&self) -> Vec<Vec<f64>> {
        let n = self.states;
        let len = self.len();
        let mut beta = vec![vec![0.0; n]; len];
        let mut buf = vec![0.0; n];
        for k in (0..len - 1).rev() {
            let edge = &self.edges[k];
            for a in 0..n {
                for b in 0..n {
                    buf[b] = edge[a * n + b] + self.nodes[k + 1][b] + beta[k + 1][b];
                }
                beta[k][a] = log_sum_exp(&buf);
            }
        }
        beta
    }

    pub fn log_partition(&self) -> f64 {
        log_sum_exp(self.forward().last().unwrap())
    }

    /// Per-position state marginals and per-edge pair marginals.
    pub fn marginals(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n = self.states;
        let alpha = self.forward();
        let beta = self.backward();
        let log_z = log_sum_exp(alpha.last().unwrap());
        let nodes = (0..self.len())
            .map(|k| (0..n).map(|s| safe_exp(alpha[k][s] + beta[k][s] - log_z)).collect())
            .collect();
        let edges = (0..self.len() - 1)
            .map(|k| {
                let mut m = vec![0.0; n * n];
                for a in 0..n {
                    for b in 0..n {
                        m[a * n + b] = safe_exp(alpha[k][a] + self.edges[k][a * n + b] + self.nodes[k + 1][b] + beta[k + 1][b] - log_z);
                    }
                }
                m
            })
            .collect();
        (nodes, edges)
    }

    /// The `k` highest-scoring sequences, best first. Equal scores are ordered by
    /// ascending lexicographic comparison of the state sequences (position 0 first).
    /// Returns every feasible sequence when fewer than `k` exist.
    pub fn kbest(&self, k: usize) -> Vec<(f64, Vec<usize>)> {
        assert!(k >= 1);
        let n = self.states;
        // lists[s] holds the best partial sequences ending in state s, ordered.
        let mut lists: Vec<Vec<(f64, Vec<usize>)>> =
            (0..n).map(|s| if self.nodes[0][s] == f64::NEG_INFINITY { vec![] } else { vec![(self.nodes[0][s], vec![s])] }).collect();
        for pos in 1..self.len() {
            let edge = &self.edges[pos - 1];
            let mut next = Vec::with_capacity(n);
            for b in 0..n {
                let node = self.nodes[pos][b];
                if node == f64::NEG_INFINITY {
                    next.push(vec![]);
                    continue;
                }
                // (score, prev state, rank within prev list)
                let mut cands: Vec<(f64, usize, usize)> = Vec::new();
                for (a, list) in lists.iter().enumerate() {
                    let e = edge[a * n + b];
                    if e == f64::NEG_INFINITY {
                        continue;
                    }
                    for (r, (s, _)) in list.iter().enumerate() {
                        cands.push((s + e + node, a, r));
                    }
                }
                let cmp = |x: &(f64, usize, usize), y: &(f64, usize, usize)| {
                    y.0.partial_cmp(&x.0).unwrap_or(Ordering::Equal).then_with(|| lists[x.1][x.2].1.cmp(&lists[y.1][y.2].1))
                };
                if cands.len() > k {
                    cands.select_nth_unstable_by(k - 1, cmp);
                    cands.truncate(k);
                }
                cands.sort_by(cmp);
                next.push(
                    cands
                        .into_iter()
                        .map(|(s, a, r)| {
                            let mut seq = lists[a][r].1.clone();
                            seq.push(b);
                            (s, seq)
                        })
                        .collect(),
                );
            }
            lists = next;
        }
        let mut all: Vec<(f64, Vec<usize>)> = lists.into_iter().flatten().collect();
        all.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(Ordering::Equal).then_with(|| x.1.cmp(&y.1)));
        all.truncate(k);
        all
    }

    pub fn viterbi(&self) -> (f64, Vec<usize>) {
        self.kbest(1).remove(0)
    }
}

fn safe_exp(x: f64) -> f64 {
    if x == f64::NEG_INFINITY || x.is_nan() {
        0.0
    } else {
        x.exp()
    }
}

/// Differentiable log-partition. Inputs are the `K` node tables followed by the `K - 1`
/// edge tables; each input's gradient is the corresponding marginal.
pub struct ChainLogPartition {
    pub positions: usize,
}

impl ChainLogPartition {
    pub fn value(nodes: &[Vec<f64>], edges: &[Vec<f64>]) -> f64 {
        Chain::new(nodes, edges).log_partition()
    }
}

impl CustomOp for ChainLogPartition {
    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad_out: &Tensor) -> Vec<Tensor> {
        let k = self.positions;
        let nodes: Vec<Vec<f64>> = inputs[..k].iter().map(|t| t.data().to_vec()).collect();
        let edges: Vec<Vec<f64>> = inputs[k..].iter().map(|t| t.data().to_vec()).collect();
        let (node_m, edge_m) = Chain::new(&nodes, &edges).marginals();
        let g = grad_out.item();
        let mut out = Vec::with_capacity(inputs.len());
        for (t, m) in inputs[..k].iter().zip(node_m) {
            out.push(Tensor::from_vec(t.rows(), t.cols(), m.into_iter().map(|p| p * g).collect()));
        }
        for (t, m) in inputs[k..].iter().zip(edge_m) {
            out.push(Tensor::from_vec(t.rows(), t.cols(), m.into_iter().map(|p| p * g).collect()));
        }
        out
    }
}
