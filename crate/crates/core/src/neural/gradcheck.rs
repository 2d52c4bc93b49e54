//! Central finite-difference checks of tape gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `(parameter name, flat index, analytic, numeric)` of the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_rel_error < tolerance
    }
}

/// `|a - n| / max(|a|, |n|, floor)`. Entries smaller than the floor are effectively
/// compared in absolute terms, where finite-difference round-off dominates.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    const FLOOR: f64 = 1e-3;
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Compare analytic parameter gradients of `loss` with central differences.
///
/// `build` must construct the scalar loss deterministically on the graph it is given.
/// At most `per_param` randomly chosen entries of each parameter are perturbed.
pub fn check_params<F>(store: &mut ParamStore, only: Option<&[ParamId]>, per_param: usize, eps: f64, seed: u64, build: F) -> GradCheckReport
where
    F: for<'a> Fn(&mut Graph<'a>) -> Var,
{
    let analytic = {
        let mut g = Graph::new(store);
        let loss = build(&mut g);
        g.backward(loss)
    };
    let ids: Vec<ParamId> = match only {
        Some(ids) => ids.to_vec(),
        None => store.ids().collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport { checked: 0, max_rel_error: 0.0, worst: None };
    for id in ids {
        let n = store.get(id).len();
        let picks = sample(&mut rng, n, per_param.min(n)).into_vec();
        for i in picks {
            let a = analytic.get(id).map_or(0.0, |g| g.data()[i]);
            let orig = store.get(id).data()[i];
            store.get_mut(id).data_mut()[i] = orig + eps;
            let plus = eval(store, &build);
            store.get_mut(id).data_mut()[i] = orig - eps;
            let minus = eval(store, &build);
            store.get_mut(id).data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((store.name(id).to_string(), i, a, numeric));
            }
        }
    }
    report
}

fn eval<F>(store: &ParamStore, build: &F) -> f64
where
    F: for<'a> Fn(&mut Graph<'a>) -> Var,
{
    let mut g = Graph::new(store);
    let loss = build(&mut g);
    g.value(loss).item()
}

type Case = (&'static str, fn(&mut Graph, &[Var], &mut Ctx) -> Var);

/// Shapes and fixed constants drawn per case.
pub struct Ctx {
    pub rng: ChaCha8Rng,
    pub n: usize,
    pub m: usize,
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect())
}

/// Weighted sum with a fixed random weight, so every output entry matters.
fn project(g: &mut Graph, x: Var, rng: &mut ChaCha8Rng) -> Var {
    let (r, c) = g.shape(x);
    let w = g.constant(uniform(rng, r, c, -1.0, 1.0));
    let y = g.mul(x, w);
    g.sum(y)
}

const CASES: &[Case] = &[
    ("matmul", |g, p, c| {
        let b = g.transpose(p[1]);
        let y = g.matmul(p[0], b);
        project(g, y, &mut c.rng)
    }),
    ("add", |g, p, c| {
        let y = g.add(p[0], p[1]);
        project(g, y, &mut c.rng)
    }),
    ("add_broadcast_row", |g, p, c| {
        let r = g.row(p[1], 0);
        let y = g.add_broadcast(p[0], r);
        project(g, y, &mut c.rng)
    }),
    ("add_broadcast_scalar", |g, p, c| {
        let s = g.pick(p[1], 0);
        let y = g.add_broadcast(p[0], s);
        project(g, y, &mut c.rng)
    }),
    ("sub", |g, p, c| {
        let y = g.sub(p[0], p[1]);
        project(g, y, &mut c.rng)
    }),
    ("mul", |g, p, c| {
        let y = g.mul(p[0], p[1]);
        project(g, y, &mut c.rng)
    }),
    ("affine", |g, p, c| {
        let y = g.affine(p[0], -1.7, 0.3);
        project(g, y, &mut c.rng)
    }),
    ("scale", |g, p, c| {
        let y = g.scale(p[0], 2.5);
        project(g, y, &mut c.rng)
    }),
    ("one_minus", |g, p, c| {
        let y = g.one_minus(p[0]);
        project(g, y, &mut c.rng)
    }),
    ("relu", |g, p, c| {
        let y = g.relu(p[0]);
        project(g, y, &mut c.rng)
    }),
    ("tanh", |g, p, c| {
        let y = g.tanh(p[0]);
        project(g, y, &mut c.rng)
    }),
    ("sigmoid", |g, p, c| {
        let y = g.sigmoid(p[0]);
        project(g, y, &mut c.rng)
    }),
    ("exp", |g, p, c| {
        let y = g.exp(p[0]);
        project(g, y, &mut c.rng)
    }),
    ("log", |g, p, c| {
        let s = g.sigmoid(p[0]);
        let y = g.log(s);
        project(g, y, &mut c.rng)
    }),
    ("concat_cols", |g, p, c| {
        let y = g.concat_cols(&[p[0], p[1], p[0]]);
        project(g, y, &mut c.rng)
    }),
    ("concat_rows", |g, p, c| {
        let y = g.concat_rows(&[p[1], p[0]]);
        project(g, y, &mut c.rng)
    }),
    ("slice_cols", |g, p, c| {
        let m = c.m;
        let y = g.slice_cols(p[0], m / 2, m);
        project(g, y, &mut c.rng)
    }),
    ("rows", |g, p, c| {
        let idx: Vec<usize> = (0..5).map(|_| c.rng.random_range(0..c.n)).collect();
        let y = g.rows(p[0], &idx);
        project(g, y, &mut c.rng)
    }),
    ("reshape", |g, p, c| {
        let y = g.reshape(p[0], c.m, c.n);
        project(g, y, &mut c.rng)
    }),
    ("transpose", |g, p, c| {
        let y = g.transpose(p[0]);
        project(g, y, &mut c.rng)
    }),
    ("sum", |g, p, _| {
        let s = g.sum(p[0]);
        g.mul(s, s)
    }),
    ("sum_rows", |g, p, c| {
        let y = g.sum_rows(p[0]);
        project(g, y, &mut c.rng)
    }),
    ("mean_rows", |g, p, c| {
        let y = g.mean_rows(p[0]);
        project(g, y, &mut c.rng)
    }),
    ("log_softmax", |g, p, c| {
        let y = g.log_softmax(p[0]);
        project(g, y, &mut c.rng)
    }),
    ("softmax", |g, p, c| {
        let y = g.softmax(p[0]);
        project(g, y, &mut c.rng)
    }),
    ("pick", |g, p, c| {
        let i = c.rng.random_range(0..c.n * c.m);
        let y = g.pick(p[0], i);
        let z = g.tanh(y);
        project(g, z, &mut c.rng)
    }),
    ("outer_diff", |g, p, c| {
        let y = g.outer_diff(p[0], p[1]);
        let y = g.tanh(y);
        project(g, y, &mut c.rng)
    }),
    ("scatter", |g, p, c| {
        let (n, m) = (c.n, c.m);
        let mut slots: Vec<usize> = (0..2 * n * m).collect();
        rand::seq::SliceRandom::shuffle(slots.as_mut_slice(), &mut c.rng);
        slots.truncate(n * m);
        let y = g.scatter(p[0], &slots, 2 * n, m);
        project(g, y, &mut c.rng)
    }),
];

/// Gradient checks of every tape op, with random micro shapes and values drawn from `seed`.
/// Each case gets two `n × m` parameters.
pub fn op_suite(seed: u64, per_param: usize) -> Vec<(&'static str, GradCheckReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CASES
        .iter()
        .map(|&(name, build)| {
            let (n, m) = (rng.random_range(1..5), rng.random_range(2..5));
            let mut store = ParamStore::new();
            let a = store.add("a", uniform(&mut rng, n, m, -1.5, 1.5)).expect("fresh store");
            let b = store.add("b", uniform(&mut rng, n, m, -1.5, 1.5)).expect("fresh store");
            let case_seed: u64 = rng.random();
            let report = check_params(&mut store, None, per_param, 1e-6, case_seed, |g| {
                let mut ctx = Ctx { rng: ChaCha8Rng::seed_from_u64(case_seed), n, m };
                let p = [g.param(a), g.param(b)];
                build(g, &p, &mut ctx)
            });
            (name, report)
        })
        .collect()
}

/// Gradient checks of the recurrent, attention, embedding and MLP layers on micro shapes.
pub fn layer_suite(seed: u64, per_param: usize) -> Vec<(&'static str, GradCheckReport)> {
    use super::layers::*;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let (d_in, d_h, len) = (rng.random_range(2..4), rng.random_range(2..4), rng.random_range(2..4));
    let xs: Vec<Tensor> = (0..len).map(|_| uniform(&mut rng, 1, d_in, -1.0, 1.0)).collect();
    let w = uniform(&mut rng, 1, 2 * d_h, -1.0, 1.0);

    let mut store = ParamStore::new();
    let gru = GruCell::new(&mut store, "gru", d_in, d_h, &mut rng).expect("fresh store");
    out.push((
        "gru",
        check_params(&mut store, None, per_param, 1e-6, seed, |g| {
            let mut h = g.constant(Tensor::zeros(1, d_h));
            for x in &xs {
                let x = g.constant(x.clone());
                h = gru.step(g, h, x).expect("shapes");
            }
            let y = g.tanh(h);
            g.sum(y)
        }),
    ));

    let mut store = ParamStore::new();
    let lstm = BiLstm::new(&mut store, "bilstm", d_in, d_h, &mut rng).expect("fresh store");
    out.push((
        "bilstm",
        check_params(&mut store, None, per_param, 1e-6, seed, |g| {
            let inputs: Vec<Var> = xs.iter().map(|x| g.constant(x.clone())).collect();
            let o = lstm.encode(g, &inputs).expect("shapes");
            let wv = g.constant(w.clone());
            let y = g.mul(o.summary, wv);
            let mut total = g.sum(y);
            for p in o.positions {
                let s = g.sum(p);
                total = g.add(total, s);
            }
            total
        }),
    ));

    let mut store = ParamStore::new();
    let bigru = BiGru::new(&mut store, "bigru", d_in, d_h, &mut rng).expect("fresh store");
    out.push((
        "bigru",
        check_params(&mut store, None, per_param, 1e-6, seed, |g| {
            let inputs: Vec<Var> = xs.iter().map(|x| g.constant(x.clone())).collect();
            let h0 = g.constant(Tensor::filled(1, d_h, 0.1));
            let o = bigru.encode_from(g, h0, &inputs).expect("shapes");
            let wv = g.constant(w.clone());
            let y = g.mul(o.summary, wv);
            g.sum(y)
        }),
    ));

    let mut store = ParamStore::new();
    let attn = Attention::new(&mut store, "attention", d_in, d_h, 3, &mut rng).expect("fresh store");
    let queries = uniform(&mut rng, 2, d_h, -1.0, 1.0);
    let keys = uniform(&mut rng, len + 1, d_in, -1.0, 1.0);
    out.push((
        "attention",
        check_params(&mut store, None, per_param, 1e-6, seed, |g| {
            let k = g.constant(keys.clone());
            let pk = attn.project_keys(g, k).expect("shapes");
            let q = g.constant(queries.clone());
            let (wts, ctx) = attn.attend_many(g, pk, q, k);
            let q0 = g.row(q, 1);
            let (_, ctx1) = attn.attend(g, pk, q0, k);
            let a = g.sum(ctx);
            let b = g.sum(ctx1);
            let c = g.pick(wts, 1);
            let s = g.add(a, b);
            g.add(s, c)
        }),
    ));

    let mut store = ParamStore::new();
    let emb = Embedding::new(&mut store, "embedding", 5, d_h, &mut rng).expect("fresh store");
    let mlp = Mlp::new(&mut store, "mlp", d_h, 4, 2, 2, 0.0, &mut rng).expect("fresh store");
    out.push((
        "embedding_mlp",
        check_params(&mut store, None, per_param, 1e-6, seed, |g| {
            let e = emb.lookup(g, &[3, 0, 3]);
            let y = mlp.forward(g, e).expect("shapes");
            let l = g.log_softmax(y);
            g.pick(l, 1)
        }),
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_correct_gradients_of_elementwise_ops() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::from_vec(2, 3, vec![0.3, -0.2, 0.5, 1.1, -0.7, 0.25])).unwrap();
        let b = store.add("b", Tensor::from_vec(3, 2, vec![0.1, 0.4, -0.3, 0.2, 0.6, -0.5])).unwrap();
        let report = check_params(&mut store, None, 6, 1e-6, 1, |g| {
            let (a, b) = (g.param(a), g.param(b));
            let m = g.matmul(a, b);
            let t = g.tanh(m);
            let s = g.sigmoid(t);
            let l = g.log_softmax(s);
            let e = g.exp(l);
            let w = g.mul(e, l);
            g.sum(w)
        });
        assert!(report.passes(1e-6), "{report:?}");
    }
}
