use onecommon::neural::gradcheck::check_params;
use onecommon::neural::tensor::log_sum_exp;
use onecommon::neural::{Graph, ParamStore, Tensor};
use onecommon::structcrf::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DOT: usize = 4;
const MEM: usize = 3;
const TXT: usize = 5;

fn dims() -> CrfDims {
    CrfDims {
        dot_dim: DOT,
        memory_dim: MEM,
        text_dim: TXT,
        phi_hidden: 6,
        phi_layers: 2,
        phi_dropout: 0.0,
        pair_hidden: 5,
        pair_dropout: 0.0,
        count_dim: 40,
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Tensor {
    Tensor::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-scale..scale)).collect())
}

struct Fixture {
    store: ParamStore,
    scorer: CrfScorer,
    dots: Tensor,
    memory: Tensor,
    zs: Vec<Tensor>,
}

fn fixture(seed: u64, k: usize) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let scorer = CrfScorer::new(&mut store, "crf", dims(), &mut rng).unwrap();
    // Larger weights than Xavier so structured terms matter.
    for id in store.ids().collect::<Vec<_>>() {
        store.get_mut(id).data_mut().iter_mut().for_each(|v| *v = *v * 2.0 + rng.random_range(-0.2..0.2));
    }
    let dots = rand_tensor(&mut rng, 7, DOT, 1.0);
    let memory = rand_tensor(&mut rng, 7, MEM, 1.0);
    let zs = (0..k).map(|_| rand_tensor(&mut rng, 1, TXT, 1.0)).collect();
    Fixture { store, scorer, dots, memory, zs }
}

fn potential_set(f: &Fixture, structured: bool) -> PotentialSet {
    let mut g = Graph::new(&f.store);
    let dots = g.constant(f.dots.clone());
    let mem = g.constant(f.memory.clone());
    let zs: Vec<_> = f.zs.iter().map(|z| g.constant(z.clone())).collect();
    let p = f.scorer.potentials(&mut g, dots, mem, &zs, structured).unwrap();
    PotentialSet::from_graph(&g, &p)
}

fn mlp_row(store: &ParamStore, mlp: &onecommon::neural::Mlp, x: Vec<f64>) -> Vec<f64> {
    let mut g = Graph::new(store);
    let n = x.len();
    let v = g.constant(Tensor::from_vec(1, n, x));
    let y = mlp.forward(&mut g, v).unwrap();
    g.value(y).data().to_vec()
}

fn mean_of(dots: &Tensor, mask: usize) -> Vec<f64> {
    let active: Vec<usize> = (0..7).filter(|d| mask >> d & 1 == 1).collect();
    let mut m = vec![0.0; dots.cols()];
    for &d in &active {
        for (o, v) in m.iter_mut().zip(dots.row_slice(d)) {
            *o += v / active.len() as f64;
        }
    }
    m
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn cat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

fn naive_node(f: &Fixture, z: &Tensor, mask: usize) -> f64 {
    let s = &f.scorer;
    let on = |d: usize| mask >> d & 1 == 1;
    let mut total = 0.0;
    for d in 0..7 {
        if on(d) {
            total += mlp_row(&f.store, &s.phi, cat(&[f.memory.row_slice(d), z.data(), f.dots.row_slice(d)]))[0];
        }
    }
    for i in 0..7 {
        for j in i + 1..7 {
            let p = mlp_row(&f.store, &s.psi, cat(&[&sub(f.dots.row_slice(i), f.dots.row_slice(j)), z.data()]));
            total += match (on(i), on(j)) {
                (true, true) => p[0],
                (false, false) => p[1],
                _ => p[2],
            };
        }
    }
    let count = f.store.get(s.count.table).row_slice((mask as u32).count_ones() as usize).to_vec();
    total += mlp_row(&f.store, &s.group, cat(&[&mean_of(&f.dots, mask), &count, z.data()]))[0];
    total
}

fn naive_edge(f: &Fixture, z0: &Tensor, z1: &Tensor, a: usize, b: usize) -> f64 {
    let s = &f.scorer;
    let zd = sub(z0.data(), z1.data());
    let mut total = 0.0;
    for i in 0..7 {
        for j in 0..7 {
            let q = mlp_row(&f.store, &s.omega, cat(&[&sub(f.dots.row_slice(i), f.dots.row_slice(j)), &zd]));
            total += match (a >> i & 1 == 1, b >> j & 1 == 1) {
                (true, true) => q[0],
                (false, false) => q[1],
                _ => q[2],
            };
        }
    }
    if (a as u32).count_ones() <= 3 && (b as u32).count_ones() <= 3 {
        total += mlp_row(&f.store, &s.centroid, cat(&[&sub(&mean_of(&f.dots, a), &mean_of(&f.dots, b)), &zd]))[0];
    }
    total
}

#[test]
fn node_potentials_match_per_pair_loop() {
    let f = fixture(1, 2);
    let p = potential_set(&f, true);
    for k in 0..2 {
        for m in 0..128 {
            let naive = naive_node(&f, &f.zs[k], m);
            assert!((p.nodes[k][m] - naive).abs() < 1e-9, "k={k} m={m}: {} vs {naive}", p.nodes[k][m]);
        }
    }
}

#[test]
fn edge_potentials_match_double_loop() {
    let f = fixture(2, 2);
    let p = potential_set(&f, true);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut picks: Vec<(usize, usize)> = vec![(0, 0), (127, 127), (0b1111, 1), (3, 0b1111000), (0b111, 0b111000)];
    picks.extend((0..40).map(|_| (rng.random_range(0..128), rng.random_range(0..128))));
    for (a, b) in picks {
        let naive = naive_edge(&f, &f.zs[0], &f.zs[1], a, b);
        assert!((p.edges[0][a * 128 + b] - naive).abs() < 1e-9, "({a},{b})");
    }
}

#[test]
fn centroid_term_vanishes_for_large_groups() {
    let mut f = fixture(3, 2);
    let before = potential_set(&f, true);
    let bias = f.scorer.centroid.head.bias.unwrap();
    f.store.get_mut(bias).data_mut()[0] += 1.5;
    let after = potential_set(&f, true);
    for (a, b) in [(0b1111usize, 1usize), (1, 0b11110), (0b1111111, 0), (0b11111, 0b11111)] {
        assert_eq!(before.edges[0][a * 128 + b], after.edges[0][a * 128 + b]);
    }
    for (a, b) in [(0usize, 0usize), (0b111, 0b1), (0b1, 0b1110000)] {
        assert!((after.edges[0][a * 128 + b] - before.edges[0][a * 128 + b] - 1.5).abs() < 1e-9);
    }
}

fn enumerate(p: &PotentialSet) -> Vec<(Vec<usize>, f64)> {
    let k = p.len();
    let total = 128usize.pow(k as u32);
    (0..total)
        .map(|mut code| {
            let mut seq = vec![0; k];
            for pos in (0..k).rev() {
                seq[pos] = code % 128;
                code /= 128;
            }
            let s = p.score(&seq).unwrap();
            (seq, s)
        })
        .collect()
}

#[test]
fn inference_matches_enumeration() {
    for (seed, k) in [(10, 1), (11, 2), (12, 2)] {
        let f = fixture(seed, k);
        let p = potential_set(&f, true);
        let all = enumerate(&p);
        let scores: Vec<f64> = all.iter().map(|(_, s)| *s).collect();
        let log_z = log_sum_exp(&scores);
        assert!((log_partition(&p).unwrap() - log_z).abs() < 1e-6);

        let res = map_and_kbest(&p, 25).unwrap();
        let mut sorted = all.clone();
        sorted.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        for (r, s) in res.kbest.iter().enumerate() {
            assert_eq!(s.sequence.indices(), sorted[r].0);
            assert!((s.score - sorted[r].1).abs() < 1e-9);
        }
        assert_eq!(res.map_sequence, res.kbest[0].sequence);

        for pos in 0..k {
            for d in 0..7 {
                let brute: f64 = all.iter().filter(|(q, _)| q[pos] >> d & 1 == 1).map(|(_, s)| (s - log_z).exp()).sum();
                assert!((res.dot_marginals[pos][d] - brute).abs() < 1e-6);
            }
            let total: f64 = res.mask_marginals[pos].iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn three_position_partition_matches_enumeration() {
    let f = fixture(13, 3);
    let p = potential_set(&f, true);
    let all = enumerate(&p);
    let scores: Vec<f64> = all.iter().map(|(_, s)| *s).collect();
    assert!((log_partition(&p).unwrap() - log_sum_exp(&scores)).abs() < 1e-6);
}

#[test]
fn uniform_potentials() {
    let p = PotentialSet::zeros(2);
    assert!((log_partition(&p).unwrap() - 16384f64.ln()).abs() < 1e-12);
    let one = PotentialSet::zeros(1);
    let r = map_and_kbest(&one, 3).unwrap();
    let masks: Vec<usize> = r.kbest.iter().map(|s| s.sequence.indices()[0]).collect();
    assert_eq!(masks, vec![0, 1, 2]);
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let pots = CrfPotentials {
        phi: vec![],
        nodes: (0..3).map(|_| g.constant(Tensor::zeros(128, 1))).collect(),
        edges: (0..2).map(|_| g.constant(Tensor::zeros(128, 128))).collect(),
        structured: true,
    };
    let nll = sequence_nll(&mut g, &pots, &ReferentSequence::from_indices(&[5, 0, 127])).unwrap();
    assert!((g.value(nll).item() - 3.0 * 128f64.ln()).abs() < 1e-9);
}

#[test]
fn node_shift_moves_log_partition_by_constant() {
    let f = fixture(14, 2);
    let mut p = potential_set(&f, true);
    let before = log_partition(&p).unwrap();
    p.nodes[1].iter_mut().for_each(|v| *v += 3.25);
    assert!((log_partition(&p).unwrap() - before - 3.25).abs() < 1e-9);
}

#[test]
fn near_deterministic_gold_has_tiny_nll() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let gold = [17usize, 99];
    let nodes = gold
        .iter()
        .map(|&m| {
            let mut t = Tensor::zeros(128, 1);
            t.set(m, 0, 20.0);
            g.constant(t)
        })
        .collect();
    let mut e = Tensor::zeros(128, 128);
    e.set(gold[0], gold[1], 20.0);
    let pots = CrfPotentials { phi: vec![], nodes, edges: vec![g.constant(e)], structured: true };
    let nll = sequence_nll(&mut g, &pots, &ReferentSequence::from_indices(&gold)).unwrap();
    let v = g.value(nll).item();
    assert!((0.0..1e-6).contains(&v), "{v}");
}

#[test]
fn nll_gradient_is_marginal_minus_gold() {
    let f = fixture(15, 2);
    let p = potential_set(&f, true);
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let nodes: Vec<_> = p.nodes.iter().map(|n| g.input(Tensor::from_vec(128, 1, n.clone()))).collect();
    let edges: Vec<_> = p.edges.iter().map(|e| g.input(Tensor::from_vec(128, 128, e.clone()))).collect();
    let pots = CrfPotentials { phi: vec![], nodes: nodes.clone(), edges, structured: true };
    let gold = ReferentSequence::from_indices(&[6, 40]);
    let nll = sequence_nll(&mut g, &pots, &gold).unwrap();
    let (_, vars) = g.backward_with_vars(nll);
    let res = map_and_kbest(&p, 1).unwrap();
    for k in 0..2 {
        let grad = vars[nodes[k].index()].as_ref().unwrap();
        for m in 0..128 {
            let expected = res.mask_marginals[k][m] - (m == gold.indices()[k]) as u8 as f64;
            assert!((grad.data()[m] - expected).abs() < 1e-9);
            if m % 16 == 0 {
                // central difference on the node entry
                let eps = 1e-5;
                let mut q = p.clone();
                q.nodes[k][m] += eps;
                let plus = -q.log_prob(&gold.indices()).unwrap();
                q.nodes[k][m] -= 2.0 * eps;
                let minus = -q.log_prob(&gold.indices()).unwrap();
                assert!(((plus - minus) / (2.0 * eps) - expected).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn nll_gradients_pass_finite_differences_through_all_potential_networks() {
    let f = fixture(16, 3);
    let Fixture { mut store, scorer, dots, memory, zs } = f;
    let gold = ReferentSequence::from_indices(&[3, 0, 0b1010100]);
    let report = check_params(&mut store, None, 6, 1e-5, 4, |g| {
        let d = g.constant(dots.clone());
        let m = g.constant(memory.clone());
        let z: Vec<_> = zs.iter().map(|z| g.constant(z.clone())).collect();
        let p = scorer.potentials(g, d, m, &z, true).unwrap();
        sequence_nll(g, &p, &gold).unwrap()
    });
    assert!(report.passes(1e-4), "{report:?}");
}

#[test]
fn unstructured_mode_factorizes_per_dot() {
    let f = fixture(17, 2);
    let full = potential_set(&f, true);
    let p = unstructured_mode(&full);
    assert_eq!(p, potential_set(&f, false));
    let closed: f64 = p.phi.iter().flat_map(|row| row.iter()).map(|&v| (1.0 + v.exp()).ln()).sum();
    assert!((log_partition(&p).unwrap() - closed).abs() < 1e-9);

    let seq = [0b0110011usize, 0b1000001];
    let bern: f64 = (0..2)
        .map(|k| {
            (0..7)
                .map(|d| {
                    let pr = 1.0 / (1.0 + (-p.phi[k][d]).exp());
                    if seq[k] >> d & 1 == 1 { pr.ln() } else { (1.0 - pr).ln() }
                })
                .sum::<f64>()
        })
        .sum();
    assert!((p.log_prob(&seq).unwrap() - bern).abs() < 1e-9);

    let map = map_and_kbest(&p, 1).unwrap().map_sequence;
    for k in 0..2 {
        let thresholded = (0..7).filter(|&d| p.phi[k][d] > 0.0).fold(0usize, |m, d| m | 1 << d);
        assert_eq!(map.indices()[k], thresholded);
    }
}

#[test]
fn decoding_is_deterministic() {
    let f = fixture(18, 2);
    let p = potential_set(&f, true);
    let a = map_and_kbest(&p, 10).unwrap();
    let b = map_and_kbest(&p, 10).unwrap();
    assert_eq!(a, b);
    assert!(a.kbest.windows(2).all(|w| w[0].score >= w[1].score));
}

#[test]
fn length_mismatch_is_rejected() {
    let p = PotentialSet::zeros(2);
    assert!(p.score(&[1]).is_err());
    assert!(log_partition(&PotentialSet::zeros(0)).is_err());
}
