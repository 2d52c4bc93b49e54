//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation applied to its variables. Calling
//! [`Graph::backward`] walks the tape in reverse and accumulates gradients
//! into parameter buffers. Graphs are cheap, single-use and borrow the
//! parameter store immutably, so many graphs may evaluate the same
//! parameters concurrently.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::{log_sum_exp, matmul_into, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// An operation whose backward rule is supplied by the caller. The forward value is
/// computed by the caller and handed to [`Graph::custom`].
pub trait CustomOp: Send + Sync {
    /// Gradient with respect to each input, in input order.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad_out: &Tensor) -> Vec<Tensor>;
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddBroadcast(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    Rows(Var, Vec<usize>),
    Reshape(Var),
    Transpose(Var),
    SumAll(Var),
    SumRows(Var),
    LogSoftmaxRows(Var),
    SoftmaxRows(Var),
    Pick(Var, usize),
    Dropout(Var, Vec<f64>),
    OuterDiff(Var, Var),
    Scatter(Var, Vec<usize>),
    Custom(Vec<Var>, Box<dyn CustomOp>),
}

struct Node {
    value: Tensor,
    op: Op,
    /// Whether any parameter or differentiable input flows into this node.
    grad: bool,
}

impl Op {
    fn for_each_input(&self, mut f: impl FnMut(Var)) {
        match self {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) | Op::Add(a, b) | Op::AddBroadcast(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::OuterDiff(a, b) => {
                f(*a);
                f(*b);
            }
            Op::Affine(a, _)
            | Op::Relu(a)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::SliceCols(a, _)
            | Op::Rows(a, _)
            | Op::Reshape(a)
            | Op::Transpose(a)
            | Op::SumAll(a)
            | Op::SumRows(a)
            | Op::LogSoftmaxRows(a)
            | Op::SoftmaxRows(a)
            | Op::Pick(a, _)
            | Op::Dropout(a, _)
            | Op::Scatter(a, _) => f(*a),
            Op::ConcatCols(parts) | Op::ConcatRows(parts) | Op::Custom(parts, _) => parts.iter().copied().for_each(f),
        }
    }
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
    dropout: bool,
    rng: ChaCha8Rng,
}

impl<'p> Graph<'p> {
    /// Deterministic graph: dropout disabled.
    pub fn new(params: &'p ParamStore) -> Self {
        Graph { params, nodes: Vec::new(), param_vars: vec![None; params.len()], dropout: false, rng: ChaCha8Rng::seed_from_u64(0) }
    }

    /// Training graph: dropout active, masks drawn from `seed`.
    pub fn training(params: &'p ParamStore, seed: u64) -> Self {
        Graph { dropout: true, rng: ChaCha8Rng::seed_from_u64(seed), ..Graph::new(params) }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn dropout_enabled(&self) -> bool {
        self.dropout
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let mut grad = matches!(op, Op::Param(_));
        op.for_each_input(|v| grad |= self.nodes[v.0].grad);
        self.nodes.push(Node { value, op, grad });
        Var(self.nodes.len() - 1)
    }

    #[inline]
    fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].grad
    }

    #[inline]
    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if self.needs_grad(v) {
            accumulate(grads, v, g);
        }
    }

    #[inline]
    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    #[inline]
    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// A leaf whose gradient is tracked (see [`Graph::backward_with_vars`]).
    pub fn input(&mut self, t: Tensor) -> Var {
        let v = self.push(t, Op::Leaf);
        self.nodes[v.0].grad = true;
        v
    }

    pub fn scalar(&mut self, x: f64) -> Var {
        self.constant(Tensor::scalar(x))
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.index()] {
            return v;
        }
        let v = self.push(self.params.get(id).clone(), Op::Param(id));
        self.param_vars[id.index()] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "add shape mismatch");
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let value = Tensor::from_vec(x.rows(), x.cols(), data);
        self.push(value, Op::Add(a, b))
    }

    /// `a + b` where `b` is a `1 × cols(a)` row or a `1 × 1` scalar, broadcast over `a`.
    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        let mut value = x.clone();
        if y.len() == 1 {
            let s = y.item();
            value.data_mut().iter_mut().for_each(|v| *v += s);
        } else {
            assert_eq!((1, x.cols()), y.shape(), "broadcast shape mismatch");
            let cols = x.cols();
            for row in value.data_mut().chunks_mut(cols) {
                for (v, b) in row.iter_mut().zip(y.data()) {
                    *v += b;
                }
            }
        }
        self.push(value, Op::AddBroadcast(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "sub shape mismatch");
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p - q).collect();
        let value = Tensor::from_vec(x.rows(), x.cols(), data);
        self.push(value, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "mul shape mismatch");
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let value = Tensor::from_vec(x.rows(), x.cols(), data);
        self.push(value, Op::Mul(a, b))
    }

    /// `scale * a + shift`, elementwise.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let value = self.value(a).map(|x| scale * x + shift);
        self.push(value, Op::Affine(a, scale))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.affine(a, s, 0.0)
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        self.affine(a, -1.0, 1.0)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        self.push(value, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::ln);
        self.push(value, Op::Log(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut value = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.rows(), rows, "concat_cols row mismatch");
            for r in 0..rows {
                value.data_mut()[r * cols + offset..r * cols + offset + t.cols()].copy_from_slice(t.row_slice(r));
            }
            offset += t.cols();
        }
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols(), cols, "concat_rows column mismatch");
            data.extend_from_slice(t.data());
        }
        let rows = data.len() / cols.max(1);
        self.push(Tensor::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let t = self.value(a);
        assert!(start < end && end <= t.cols(), "slice_cols out of range");
        let width = end - start;
        let mut data = Vec::with_capacity(t.rows() * width);
        for r in 0..t.rows() {
            data.extend_from_slice(&t.row_slice(r)[start..end]);
        }
        let value = Tensor::from_vec(t.rows(), width, data);
        self.push(value, Op::SliceCols(a, start))
    }

    /// Gather rows (repetition allowed).
    pub fn rows(&mut self, a: Var, indices: &[usize]) -> Var {
        let t = self.value(a);
        let mut data = Vec::with_capacity(indices.len() * t.cols());
        for &i in indices {
            data.extend_from_slice(t.row_slice(i));
        }
        let value = Tensor::from_vec(indices.len(), t.cols(), data);
        self.push(value, Op::Rows(a, indices.to_vec()))
    }

    pub fn row(&mut self, a: Var, index: usize) -> Var {
        self.rows(a, &[index])
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let value = self.value(a).clone().reshaped(rows, cols);
        self.push(value, Op::Reshape(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(value, Op::SumAll(a))
    }

    /// Column sums: `n × c → 1 × c`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut out = vec![0.0; t.cols()];
        for r in 0..t.rows() {
            for (o, v) in out.iter_mut().zip(t.row_slice(r)) {
                *o += v;
            }
        }
        self.push(Tensor::row(out), Op::SumRows(a))
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let n = self.value(a).rows();
        let s = self.sum_rows(a);
        self.scale(s, 1.0 / n as f64)
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut value = t.clone();
        for row in value.data_mut().chunks_mut(t.cols()) {
            let lse = log_sum_exp(row);
            row.iter_mut().for_each(|v| *v -= lse);
        }
        self.push(value, Op::LogSoftmaxRows(a))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut value = t.clone();
        for row in value.data_mut().chunks_mut(t.cols()) {
            let lse = log_sum_exp(row);
            row.iter_mut().for_each(|v| *v = (*v - lse).exp());
        }
        self.push(value, Op::SoftmaxRows(a))
    }

    /// Single element (flat index) as a `1 × 1` variable.
    pub fn pick(&mut self, a: Var, flat_index: usize) -> Var {
        let value = Tensor::scalar(self.value(a).data()[flat_index]);
        self.push(value, Op::Pick(a, flat_index))
    }

    /// Inverted dropout; identity when the graph is not in training mode or `rate == 0`.
    pub fn dropout(&mut self, a: Var, rate: f64) -> Var {
        if !self.dropout || rate <= 0.0 {
            return a;
        }
        let keep = 1.0 - rate;
        let n = self.value(a).len();
        let mask: Vec<f64> = (0..n).map(|_| if self.rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
        let t = self.value(a);
        let data = t.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let value = Tensor::from_vec(t.rows(), t.cols(), data);
        self.push(value, Op::Dropout(a, mask))
    }

    /// All pairwise row differences: row `i * m + j` of the result is `a[i] - b[j]`.
    pub fn outer_diff(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.cols(), y.cols(), "outer_diff column mismatch");
        let (n, m, c) = (x.rows(), y.rows(), x.cols());
        let mut data = Vec::with_capacity(n * m * c);
        for i in 0..n {
            let xi = x.row_slice(i);
            for j in 0..m {
                data.extend(xi.iter().zip(y.row_slice(j)).map(|(p, q)| p - q));
            }
        }
        self.push(Tensor::from_vec(n * m, c, data), Op::OuterDiff(a, b))
    }

    /// Place the elements of `a` at flat positions `indices` of a zero `rows × cols` tensor.
    pub fn scatter(&mut self, a: Var, indices: &[usize], rows: usize, cols: usize) -> Var {
        let t = self.value(a);
        assert_eq!(t.len(), indices.len(), "scatter index count mismatch");
        let mut value = Tensor::zeros(rows, cols);
        for (&i, &v) in indices.iter().zip(t.data()) {
            value.data_mut()[i] = v;
        }
        self.push(value, Op::Scatter(a, indices.to_vec()))
    }

    pub fn custom(&mut self, inputs: &[Var], value: Tensor, op: Box<dyn CustomOp>) -> Var {
        self.push(value, Op::Custom(inputs.to_vec(), op))
    }

    /// Gradients of the scalar `loss` with respect to all parameters it depends on.
    pub fn backward(&self, loss: Var) -> Gradients {
        self.run_backward(loss, false).0
    }

    /// Parameter gradients plus the gradient of every graph variable (indexed by [`Var::index`]).
    pub fn backward_with_vars(&self, loss: Var) -> (Gradients, Vec<Option<Tensor>>) {
        self.run_backward(loss, true)
    }

    fn run_backward(&self, loss: Var, keep_vars: bool) -> (Gradients, Vec<Option<Tensor>>) {
        assert_eq!(self.value(loss).len(), 1, "backward requires a scalar loss");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut param_grads = Gradients::new(self.params.len());

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let kept = keep_vars.then(|| g.clone());
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => param_grads.accumulate(*id, &g),
                Op::MatMul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let (n, k, m) = (x.rows(), x.cols(), y.cols());
                    if self.needs_grad(*a) {
                        let mut ga = Tensor::zeros(n, k);
                        for i in 0..n {
                            let g_row = g.row_slice(i);
                            for p in 0..k {
                                let y_row = y.row_slice(p);
                                ga.data_mut()[i * k + p] = g_row.iter().zip(y_row).map(|(u, v)| u * v).sum();
                            }
                        }
                        self.accumulate(&mut grads, *a, ga);
                    }
                    if self.needs_grad(*b) {
                        let mut gb = Tensor::zeros(k, m);
                        matmul_into(x.transpose().data(), g.data(), gb.data_mut(), k, n, m);
                        self.accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, *a, g.clone());
                    self.accumulate(&mut grads, *b, g);
                }
                Op::AddBroadcast(a, b) => {
                    let y = self.value(*b);
                    let gb = if y.len() == 1 {
                        Tensor::scalar(g.sum())
                    } else {
                        let mut s = vec![0.0; g.cols()];
                        for r in 0..g.rows() {
                            for (o, v) in s.iter_mut().zip(g.row_slice(r)) {
                                *o += v;
                            }
                        }
                        Tensor::row(s)
                    };
                    self.accumulate(&mut grads, *b, gb);
                    self.accumulate(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut grads, *b, g.map(|x| -x));
                    self.accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let ga = zip_map(&g, y, |u, v| u * v);
                    let gb = zip_map(&g, x, |u, v| u * v);
                    self.accumulate(&mut grads, *a, ga);
                    self.accumulate(&mut grads, *b, gb);
                }
                Op::Affine(a, s) => self.accumulate(&mut grads, *a, g.map(|x| x * s)),
                Op::Relu(a) => {
                    let ga = zip_map(&g, self.value(*a), |u, x| if x > 0.0 { u } else { 0.0 });
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::Tanh(a) => self.accumulate(&mut grads, *a, zip_map(&g, &node.value, |u, y| u * (1.0 - y * y))),
                Op::Sigmoid(a) => self.accumulate(&mut grads, *a, zip_map(&g, &node.value, |u, y| u * y * (1.0 - y))),
                Op::Exp(a) => self.accumulate(&mut grads, *a, zip_map(&g, &node.value, |u, y| u * y)),
                Op::Log(a) => self.accumulate(&mut grads, *a, zip_map(&g, self.value(*a), |u, x| u / x)),
                Op::ConcatCols(parts) => {
                    let cols = g.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let mut gp = Tensor::zeros(g.rows(), w);
                        for r in 0..g.rows() {
                            gp.data_mut()[r * w..(r + 1) * w].copy_from_slice(&g.data()[r * cols + offset..r * cols + offset + w]);
                        }
                        self.accumulate(&mut grads, p, gp);
                        offset += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (r, c) = self.shape(p);
                        let gp = Tensor::from_vec(r, c, g.data()[offset..offset + r * c].to_vec());
                        self.accumulate(&mut grads, p, gp);
                        offset += r * c;
                    }
                }
                Op::SliceCols(a, start) => {
                    let (rows, cols) = self.shape(*a);
                    let w = g.cols();
                    let mut ga = Tensor::zeros(rows, cols);
                    for r in 0..rows {
                        ga.data_mut()[r * cols + start..r * cols + start + w].copy_from_slice(g.row_slice(r));
                    }
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::Rows(a, indices) => {
                    let (rows, cols) = self.shape(*a);
                    let mut ga = Tensor::zeros(rows, cols);
                    for (k, &i) in indices.iter().enumerate() {
                        for (o, v) in ga.data_mut()[i * cols..(i + 1) * cols].iter_mut().zip(g.row_slice(k)) {
                            *o += v;
                        }
                    }
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::Reshape(a) => {
                    let (r, c) = self.shape(*a);
                    self.accumulate(&mut grads, *a, g.reshaped(r, c));
                }
                Op::Transpose(a) => self.accumulate(&mut grads, *a, g.transpose()),
                Op::SumAll(a) => {
                    let (r, c) = self.shape(*a);
                    self.accumulate(&mut grads, *a, Tensor::filled(r, c, g.item()));
                }
                Op::SumRows(a) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Tensor::zeros(r, c);
                    for row in ga.data_mut().chunks_mut(c) {
                        row.copy_from_slice(g.data());
                    }
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::LogSoftmaxRows(a) => {
                    let y = &node.value;
                    let c = y.cols();
                    let mut ga = g.clone();
                    for (row_g, row_y) in ga.data_mut().chunks_mut(c).zip(y.data().chunks(c)) {
                        let total: f64 = row_g.iter().sum();
                        for (u, ly) in row_g.iter_mut().zip(row_y) {
                            *u -= ly.exp() * total;
                        }
                    }
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let c = y.cols();
                    let mut ga = g.clone();
                    for (row_g, row_y) in ga.data_mut().chunks_mut(c).zip(y.data().chunks(c)) {
                        let dot: f64 = row_g.iter().zip(row_y).map(|(u, p)| u * p).sum();
                        for (u, p) in row_g.iter_mut().zip(row_y) {
                            *u = p * (*u - dot);
                        }
                    }
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::Pick(a, i) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Tensor::zeros(r, c);
                    ga.data_mut()[*i] = g.item();
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::Dropout(a, mask) => {
                    let data = g.data().iter().zip(mask).map(|(u, m)| u * m).collect();
                    self.accumulate(&mut grads, *a, Tensor::from_vec(g.rows(), g.cols(), data));
                }
                Op::OuterDiff(a, b) => {
                    let (n, c) = self.shape(*a);
                    let m = self.value(*b).rows();
                    let mut ga = Tensor::zeros(n, c);
                    let mut gb = Tensor::zeros(m, c);
                    for i in 0..n {
                        for j in 0..m {
                            let gr = g.row_slice(i * m + j);
                            for (k, &u) in gr.iter().enumerate() {
                                ga.data_mut()[i * c + k] += u;
                                gb.data_mut()[j * c + k] -= u;
                            }
                        }
                    }
                    self.accumulate(&mut grads, *a, ga);
                    self.accumulate(&mut grads, *b, gb);
                }
                Op::Scatter(a, indices) => {
                    let (r, c) = self.shape(*a);
                    let data = indices.iter().map(|&i| g.data()[i]).collect();
                    self.accumulate(&mut grads, *a, Tensor::from_vec(r, c, data));
                }
                Op::Custom(inputs, op) => {
                    let values: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
                    let input_grads = op.backward(&values, &node.value, &g);
                    debug_assert_eq!(input_grads.len(), inputs.len());
                    for (&v, gv) in inputs.iter().zip(input_grads) {
                        self.accumulate(&mut grads, v, gv);
                    }
                }
            }
            grads[idx] = kept;
        }
        (param_grads, grads)
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(t) => t.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
