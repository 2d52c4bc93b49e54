use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, input_dim: usize, output_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        let weight = store.add_xavier(format!("{name}.weight"), input_dim, output_dim, rng)?;
        let bias = Some(store.add_zeros(format!("{name}.bias"), 1, output_dim)?);
        Ok(Linear { weight, bias, input_dim, output_dim })
    }

    pub fn without_bias(store: &mut ParamStore, name: &str, input_dim: usize, output_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        let weight = store.add_xavier(format!("{name}.weight"), input_dim, output_dim, rng)?;
        Ok(Linear { weight, bias: None, input_dim, output_dim })
    }

    /// `x (n × in) → n × out`.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.weight);
        let y = g.matmul(x, w);
        match self.bias {
            Some(b) => {
                let b = g.param(b);
                g.add_broadcast(y, b)
            }
            None => y,
        }
    }

    /// Rows `start..end` of the weight matrix, i.e. the part that multiplies a slice of the input.
    /// Used to split a layer over concatenated inputs without materialising the concatenation.
    pub fn forward_partial(&self, g: &mut Graph, x: Var, start: usize) -> Var {
        let w = g.param(self.weight);
        let width = g.shape(x).1;
        let rows: Vec<usize> = (start..start + width).collect();
        let part = g.rows(w, &rows);
        g.matmul(x, part)
    }
}

/// Multilayer perceptron: `layers` hidden ReLU layers of width `hidden`, dropout after each
/// hidden activation, and a linear output head.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Mlp {
    pub hidden: Vec<Linear>,
    pub head: Linear,
    pub dropout: f64,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        layers: usize,
        output_dim: usize,
        dropout: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut hidden = Vec::with_capacity(layers);
        let mut dim = input_dim;
        for i in 0..layers {
            hidden.push(Linear::new(store, &format!("{name}.hidden{i}"), dim, hidden_dim, rng)?);
            dim = hidden_dim;
        }
        let head = Linear::new(store, &format!("{name}.head"), dim, output_dim, rng)?;
        Ok(Mlp { hidden, head, dropout })
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.first().map_or(self.head.input_dim, |l| l.input_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.head.output_dim
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let (_, cols) = g.shape(x);
        if cols != self.input_dim() {
            return Err(Error::Shape(format!("mlp expects input width {}, got {cols}", self.input_dim())));
        }
        let mut h = x;
        for layer in &self.hidden {
            h = layer.forward(g, h);
            h = g.relu(h);
            h = g.dropout(h, self.dropout);
        }
        Ok(self.head.forward(g, h))
    }

    /// Forward pass where the first layer's pre-activation is supplied by the caller
    /// (e.g. assembled from separately projected input blocks).
    pub fn forward_from_first_preactivation(&self, g: &mut Graph, pre: Var) -> Var {
        let mut h = g.relu(pre);
        h = g.dropout(h, self.dropout);
        for layer in self.hidden.iter().skip(1) {
            h = layer.forward(g, h);
            h = g.relu(h);
            h = g.dropout(h, self.dropout);
        }
        self.head.forward(g, h)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Embedding {
    pub table: ParamId,
    pub dim: usize,
}

impl Embedding {
    pub fn new(store: &mut ParamStore, name: &str, count: usize, dim: usize, rng: &mut impl Rng) -> Result<Self> {
        let table = store.add_uniform(format!("{name}.table"), count, dim, 0.1, rng)?;
        Ok(Embedding { table, dim })
    }

    pub fn lookup(&self, g: &mut Graph, ids: &[usize]) -> Var {
        let t = g.param(self.table);
        g.rows(t, ids)
    }
}

/// Gated recurrent unit. The update gate interpolates towards the candidate:
/// `h' = (1 - z) ⊙ h + z ⊙ n`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GruCell {
    pub input_proj: Linear,
    pub hidden_proj: Linear,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl GruCell {
    pub fn new(store: &mut ParamStore, name: &str, input_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        let input_proj = Linear::new(store, &format!("{name}.ih"), input_dim, 3 * hidden_dim, rng)?;
        let hidden_proj = Linear::new(store, &format!("{name}.hh"), hidden_dim, 3 * hidden_dim, rng)?;
        Ok(GruCell { input_proj, hidden_proj, input_dim, hidden_dim })
    }

    pub fn step(&self, g: &mut Graph, hidden: Var, input: Var) -> Result<Var> {
        let gi = self.project_input(g, input)?;
        self.step_projected(g, hidden, gi)
    }

    /// Input projection for [`GruCell::step_projected`]; lets callers hoist it out of loops.
    pub fn project_input(&self, g: &mut Graph, input: Var) -> Result<Var> {
        if g.shape(input).1 != self.input_dim {
            return Err(Error::Shape(format!("gru expects input width {}, got {}", self.input_dim, g.shape(input).1)));
        }
        Ok(self.input_proj.forward(g, input))
    }

    pub fn step_projected(&self, g: &mut Graph, hidden: Var, gi: Var) -> Result<Var> {
        let h = self.hidden_dim;
        if g.shape(hidden).1 != h {
            return Err(Error::Shape(format!("gru expects hidden width {h}, got {}", g.shape(hidden).1)));
        }
        let gh = self.hidden_proj.forward(g, hidden);
        let (i_r, i_z, i_n) = (g.slice_cols(gi, 0, h), g.slice_cols(gi, h, 2 * h), g.slice_cols(gi, 2 * h, 3 * h));
        let (h_r, h_z, h_n) = (g.slice_cols(gh, 0, h), g.slice_cols(gh, h, 2 * h), g.slice_cols(gh, 2 * h, 3 * h));
        let r = g.add(i_r, h_r);
        let r = g.sigmoid(r);
        let z = g.add(i_z, h_z);
        let z = g.sigmoid(z);
        let rn = g.mul(r, h_n);
        let n = g.add(i_n, rn);
        let n = g.tanh(n);
        let keep = g.one_minus(z);
        let old = g.mul(keep, hidden);
        let new = g.mul(z, n);
        Ok(g.add(old, new))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LstmCell {
    pub input_proj: Linear,
    pub hidden_proj: Linear,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl LstmCell {
    pub fn new(store: &mut ParamStore, name: &str, input_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        let input_proj = Linear::new(store, &format!("{name}.ih"), input_dim, 4 * hidden_dim, rng)?;
        let hidden_proj = Linear::new(store, &format!("{name}.hh"), hidden_dim, 4 * hidden_dim, rng)?;
        Ok(LstmCell { input_proj, hidden_proj, input_dim, hidden_dim })
    }

    /// One step; returns `(hidden, cell)`.
    pub fn step(&self, g: &mut Graph, hidden: Var, cell: Var, input: Var) -> Result<(Var, Var)> {
        if g.shape(input).1 != self.input_dim {
            return Err(Error::Shape(format!("lstm expects input width {}, got {}", self.input_dim, g.shape(input).1)));
        }
        let h = self.hidden_dim;
        let gi = self.input_proj.forward(g, input);
        let gh = self.hidden_proj.forward(g, hidden);
        let gates = g.add(gi, gh);
        let i = g.slice_cols(gates, 0, h);
        let i = g.sigmoid(i);
        let f = g.slice_cols(gates, h, 2 * h);
        let f = g.sigmoid(f);
        let c_new = g.slice_cols(gates, 2 * h, 3 * h);
        let c_new = g.tanh(c_new);
        let o = g.slice_cols(gates, 3 * h, 4 * h);
        let o = g.sigmoid(o);
        let kept = g.mul(f, cell);
        let written = g.mul(i, c_new);
        let c = g.add(kept, written);
        let tc = g.tanh(c);
        Ok((g.mul(o, tc), c))
    }
}

/// Output of a bidirectional pass.
pub struct BiOutput {
    /// `[forward_i, backward_i]` per position.
    pub positions: Vec<Var>,
    pub forward: Vec<Var>,
    pub backward: Vec<Var>,
    /// `[last forward state, first backward state]`.
    pub summary: Var,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BiLstm {
    pub forward: LstmCell,
    pub backward: LstmCell,
}

impl BiLstm {
    pub fn new(store: &mut ParamStore, name: &str, input_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(BiLstm {
            forward: LstmCell::new(store, &format!("{name}.fwd"), input_dim, hidden_dim, rng)?,
            backward: LstmCell::new(store, &format!("{name}.bwd"), input_dim, hidden_dim, rng)?,
        })
    }

    pub fn output_dim(&self) -> usize {
        2 * self.forward.hidden_dim
    }

    pub fn encode(&self, g: &mut Graph, inputs: &[Var]) -> Result<BiOutput> {
        if inputs.is_empty() {
            return Err(Error::EmptySequence("bilstm_encode"));
        }
        let h = self.forward.hidden_dim;
        let zero = g.constant(super::tensor::Tensor::zeros(1, h));
        let (mut hf, mut cf) = (zero, zero);
        let mut forward = Vec::with_capacity(inputs.len());
        for &x in inputs {
            (hf, cf) = self.forward.step(g, hf, cf, x)?;
            forward.push(hf);
        }
        let (mut hb, mut cb) = (zero, zero);
        let mut backward = vec![zero; inputs.len()];
        for (i, &x) in inputs.iter().enumerate().rev() {
            (hb, cb) = self.backward.step(g, hb, cb, x)?;
            backward[i] = hb;
        }
        let positions = forward.iter().zip(&backward).map(|(&f, &b)| g.concat_cols(&[f, b])).collect();
        let summary = g.concat_cols(&[*forward.last().unwrap(), backward[0]]);
        Ok(BiOutput { positions, forward, backward, summary })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BiGru {
    pub forward: GruCell,
    pub backward: GruCell,
}

impl BiGru {
    pub fn new(store: &mut ParamStore, name: &str, input_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(BiGru {
            forward: GruCell::new(store, &format!("{name}.fwd"), input_dim, hidden_dim, rng)?,
            backward: GruCell::new(store, &format!("{name}.bwd"), input_dim, hidden_dim, rng)?,
        })
    }

    pub fn output_dim(&self) -> usize {
        2 * self.forward.hidden_dim
    }

    /// Bidirectional pass with an explicit initial forward state (the backward pass starts at zero).
    pub fn encode_from(&self, g: &mut Graph, initial_forward: Var, inputs: &[Var]) -> Result<BiOutput> {
        if inputs.is_empty() {
            return Err(Error::EmptySequence("bigru_encode"));
        }
        let zero = g.constant(super::tensor::Tensor::zeros(1, self.backward.hidden_dim));
        let mut hf = initial_forward;
        let mut forward = Vec::with_capacity(inputs.len());
        for &x in inputs {
            hf = self.forward.step(g, hf, x)?;
            forward.push(hf);
        }
        let mut hb = zero;
        let mut backward = vec![zero; inputs.len()];
        for (i, &x) in inputs.iter().enumerate().rev() {
            hb = self.backward.step(g, hb, x)?;
            backward[i] = hb;
        }
        let positions = forward.iter().zip(&backward).map(|(&f, &b)| g.concat_cols(&[f, b])).collect();
        let summary = g.concat_cols(&[*forward.last().unwrap(), backward[0]]);
        Ok(BiOutput { positions, forward, backward, summary })
    }
}

/// Additive (single hidden layer) attention: `score_i = v · tanh(W_k k_i + W_q q + b)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Attention {
    pub key_proj: Linear,
    pub query_proj: Linear,
    pub scorer: ParamId,
}

impl Attention {
    pub fn new(store: &mut ParamStore, name: &str, key_dim: usize, query_dim: usize, attn_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Attention {
            key_proj: Linear::without_bias(store, &format!("{name}.key"), key_dim, attn_dim, rng)?,
            query_proj: Linear::new(store, &format!("{name}.query"), query_dim, attn_dim, rng)?,
            scorer: store.add_xavier(format!("{name}.v"), attn_dim, 1, rng)?,
        })
    }

    /// Key projection, reusable across queries against the same keys.
    pub fn project_keys(&self, g: &mut Graph, keys: Var) -> Result<Var> {
        if g.shape(keys).0 == 0 {
            return Err(Error::EmptySequence("attention keys"));
        }
        Ok(self.key_proj.forward(g, keys))
    }

    /// Returns `(weights: 1 × n, context: 1 × value_dim)`.
    pub fn attend(&self, g: &mut Graph, projected_keys: Var, query: Var, values: Var) -> (Var, Var) {
        let q = self.query_proj.forward(g, query);
        let pre = g.add_broadcast(projected_keys, q);
        let act = g.tanh(pre);
        let v = g.param(self.scorer);
        let scores = g.matmul(act, v);
        let scores = g.transpose(scores);
        let weights = g.softmax(scores);
        let context = g.matmul(weights, values);
        (weights, context)
    }

    /// Several queries (`n × query_dim`) at once; returns `(n × m weights, n × value_dim)`.
    pub fn attend_many(&self, g: &mut Graph, projected_keys: Var, queries: Var, values: Var) -> (Var, Var) {
        let n = g.shape(queries).0;
        let m = g.shape(projected_keys).0;
        let q = self.query_proj.forward(g, queries);
        let neg = g.scale(projected_keys, -1.0);
        let pre = g.outer_diff(q, neg);
        let act = g.tanh(pre);
        let v = g.param(self.scorer);
        let scores = g.matmul(act, v);
        let scores = g.reshape(scores, n, m);
        let weights = g.softmax(scores);
        let context = g.matmul(weights, values);
        (weights, context)
    }

    pub fn apply(&self, g: &mut Graph, query: Var, keys: Var, values: Var) -> Result<(Var, Var)> {
        let pk = self.project_keys(g, keys)?;
        Ok(self.attend(g, pk, query, values))
    }
}
