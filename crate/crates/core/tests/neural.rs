use onecommon::neural::gradcheck::{layer_suite, op_suite};
use onecommon::neural::*;
use proptest::prelude::*;

#[test]
fn every_op_passes_gradient_checks() {
    for seed in 0..5 {
        for (name, report) in op_suite(seed, 8) {
            assert!(report.passes(1e-4), "{name} (seed {seed}): {report:?}");
        }
    }
}

#[test]
fn layers_pass_gradient_checks() {
    for seed in 0..3 {
        for (name, report) in layer_suite(seed, 6) {
            assert!(report.passes(1e-4), "{name} (seed {seed}): {report:?}");
        }
    }
}

#[test]
fn constants_receive_no_gradient_but_inputs_do() {
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0])).unwrap();
    let mut g = Graph::new(&store);
    let c = g.constant(Tensor::from_vec(1, 2, vec![0.5, -1.0]));
    let x = g.input(Tensor::from_vec(1, 2, vec![2.0, 1.0]));
    let p = g.param(w);
    let a = g.matmul(c, p);
    let b = g.matmul(x, p);
    let s = g.add(a, b);
    let loss = g.sum(s);
    let (grads, vars) = g.backward_with_vars(loss);
    assert!(vars[c.index()].is_none());
    assert_eq!(vars[x.index()].as_ref().unwrap().data(), &[3.0, 7.0]);
    assert_eq!(grads.get(w).unwrap().data(), &[2.5, 2.5, 0.0, 0.0]);
}

#[test]
fn dropout_is_identity_without_training_and_masks_with_it() {
    let store = ParamStore::new();
    let t = Tensor::filled(4, 25, 1.0);
    let mut g = Graph::new(&store);
    let x = g.input(t.clone());
    let y = g.dropout(x, 0.5);
    assert_eq!(g.value(y), &t);

    let mut g = Graph::training(&store, 3);
    let x = g.input(t.clone());
    let y = g.dropout(x, 0.5);
    let out = g.value(y).clone();
    assert!(out.data().iter().all(|&v| v == 0.0 || v == 2.0));
    assert!(out.data().contains(&0.0) && out.data().contains(&2.0));
    let loss = g.sum(y);
    let (_, vars) = g.backward_with_vars(loss);
    assert_eq!(vars[x.index()].as_ref().unwrap(), &out);
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(values in proptest::collection::vec(-30.0f64..30.0, 12)) {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::from_vec(3, 4, values));
        let p = g.softmax(x);
        let lp = g.log_softmax(x);
        for r in 0..3 {
            let row = g.value(p).row_slice(r);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (a, b) in row.iter().zip(g.value(lp).row_slice(r)) {
                prop_assert!((a.ln() - b).abs() < 1e-9 || *a < 1e-300);
            }
        }
    }

    #[test]
    fn outer_diff_layout(a in proptest::collection::vec(-5.0f64..5.0, 6), b in proptest::collection::vec(-5.0f64..5.0, 4)) {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::from_vec(3, 2, a.clone()));
        let y = g.constant(Tensor::from_vec(2, 2, b.clone()));
        let d = g.outer_diff(x, y);
        for i in 0..3 {
            for j in 0..2 {
                for k in 0..2 {
                    prop_assert_eq!(g.value(d).get(i * 2 + j, k), a[i * 2 + k] - b[j * 2 + k]);
                }
            }
        }
    }
}

#[test]
fn adam_minimizes_a_quadratic() {
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::from_vec(1, 3, vec![3.0, -2.0, 0.5])).unwrap();
    let mut adam = Adam::new(&store, 0.05);
    for _ in 0..2000 {
        let grads = {
            let mut g = Graph::new(&store);
            let p = g.param(w);
            let sq = g.mul(p, p);
            let loss = g.sum(sq);
            g.backward(loss)
        };
        adam.update(&mut store, &grads);
    }
    assert!(store.get(w).sq_norm() < 1e-6, "{:?}", store.get(w));
}

#[test]
fn plateau_schedule_halves_then_floors() {
    let mut s = PlateauSchedule::new(0.5, 1, 1e-3, 1e-5);
    let mut lr = 1e-3;
    lr = s.observe(1.0, lr);
    assert_eq!(lr, 1e-3);
    lr = s.observe(0.9995, lr);
    assert_eq!(lr, 5e-4);
    lr = s.observe(0.5, lr);
    assert_eq!(lr, 5e-4);
    for _ in 0..20 {
        lr = s.observe(0.5, lr);
    }
    assert_eq!(lr, 1e-5);
}
