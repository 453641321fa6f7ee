use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

#[test]
fn matmul_identity_is_identity() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let eye = g
        .constant((3, 3), vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0])
        .unwrap();
    let a = g
        .constant((3, 2), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        .unwrap();
    let out = g.matmul(eye, a).unwrap();
    assert_eq!(g.value(out), g.value(a));
}

#[test]
fn concat_and_sum_rows_shapes() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let a = g.constant((1, 2), vec![1.0, 2.0]).unwrap();
    let b = g.constant((1, 1), vec![3.0]).unwrap();
    let c = g.concat_cols(a, b).unwrap();
    assert_eq!(g.shape(c), (1, 3));
    assert_eq!(g.value(c), &[1.0, 2.0, 3.0]);

    let ones = g.constant((2, 3), vec![1.0; 6]).unwrap();
    let s = g.sum_rows(ones).unwrap();
    assert_eq!(g.shape(s), (1, 3));
    assert_eq!(g.value(s), &[2.0, 2.0, 2.0]);
}

#[test]
fn shape_mismatch_names_both_shapes() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let a = g.constant((1, 2), vec![1.0, 2.0]).unwrap();
    let b = g.constant((1, 3), vec![1.0, 2.0, 3.0]).unwrap();
    let err = g.add(a, b).unwrap_err();
    assert_eq!(
        err,
        TensorError::ShapeMismatch { op: "add", lhs: (1, 2), rhs: (1, 3) }
    );
    let msg = err.to_string();
    assert!(msg.contains("(1, 2)") && msg.contains("(1, 3)"), "{msg}");
}

#[test]
fn selu_fixed_points() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let x = g.constant((1, 3), vec![0.0, 1.0, -40.0]).unwrap();
    let y = g.selu(x).unwrap();
    let v = g.value(y);
    assert_eq!(v[0], 0.0);
    assert!((v[1] - SELU_LAMBDA).abs() < 1e-12);
    // Large negative input approaches the -lambda*alpha asymptote.
    assert!((v[2] + SELU_LAMBDA * SELU_ALPHA).abs() < 1e-12);
    assert!((SELU_LAMBDA - 1.0507).abs() < 1e-4);
    assert!((SELU_LAMBDA * SELU_ALPHA - 1.7581).abs() < 1e-4);
}

#[test]
fn mse_basics() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let v = g.constant((1, 3), vec![1.0, 2.0, 3.0]).unwrap();
    let same = g.mse(v, v).unwrap();
    assert_eq!(g.scalar_value(same).unwrap(), 0.0);

    let zero = g.constant((1, 1), vec![0.0]).unwrap();
    let two = g.constant((1, 1), vec![2.0]).unwrap();
    let m = g.mse(zero, two).unwrap();
    assert_eq!(g.scalar_value(m).unwrap(), 4.0);

    let a = g.constant((1, 2), vec![1.0, 3.0]).unwrap();
    let b = g.constant((1, 2), vec![2.0, 5.0]).unwrap();
    let m = g.mse(a, b).unwrap();
    assert_eq!(g.scalar_value(m).unwrap(), 2.5);
}

#[test]
fn non_finite_values_raise() {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    assert!(matches!(
        g.constant((1, 1), vec![f64::NAN]),
        Err(TensorError::NonFinite { .. })
    ));
    let big = g.constant((1, 1), vec![1e308]).unwrap();
    let err = g.mul(big, big);
    assert!(matches!(err, Err(TensorError::NonFinite { op: "mul" })));
}

#[test]
fn gru_zero_parameters_halve_the_state() {
    // All-zero weights: z = r = 1/2, candidate = tanh(0) = 0, so the
    // update reduces to h' = h/2.
    let mut store = ParamStore::new();
    let mut rng = ChaCha12Rng::seed_from_u64(0);
    let cell = GruCell::new(&mut store, "cell", 2, 3, &mut rng);
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for id in ids {
        store.get_mut(id).values.iter_mut().for_each(|v| *v = 0.0);
    }
    let mut g = Graph::new(&store);
    let h = g.constant((1, 3), vec![0.4, -0.8, 1.2]).unwrap();
    let x = g.constant((1, 2), vec![5.0, -7.0]).unwrap();
    let h2 = cell.step(&mut g, h, x).unwrap();
    let v = g.value(h2);
    assert!((v[0] - 0.2).abs() < 1e-12);
    assert!((v[1] + 0.4).abs() < 1e-12);
    assert!((v[2] - 0.6).abs() < 1e-12);
}

#[test]
fn gru_step_is_pure() {
    let mut store = ParamStore::new();
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let cell = GruCell::new(&mut store, "cell", 2, 3, &mut rng);
    let run = || {
        let mut g = Graph::new(&store);
        let h = g.constant((1, 3), vec![0.1, 0.2, 0.3]).unwrap();
        let x = g.constant((1, 2), vec![-1.0, 2.0]).unwrap();
        let h2 = cell.step(&mut g, h, x).unwrap();
        g.value(h2).to_vec()
    };
    assert_eq!(run(), run());
}

#[test]
fn gru_two_step_gradients_match_finite_differences() {
    let mut store = ParamStore::new();
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let cell = GruCell::new(&mut store, "cell", 2, 3, &mut rng);
    let target = vec![0.3, -0.1, 0.5];
    let err = grad_check(&mut store, 1e-5, |g| {
        let h0 = g.constant((1, 3), vec![0.05, -0.2, 0.4])?;
        let x0 = g.constant((1, 2), vec![0.7, -0.3])?;
        let x1 = g.constant((1, 2), vec![-0.6, 0.9])?;
        let h1 = cell.step(g, h0, x0)?;
        let h2 = cell.step(g, h1, x1)?;
        let t = g.constant((1, 3), target.clone())?;
        g.mse(h2, t)
    })
    .unwrap();
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn quadratic_gradients_are_exact() {
    let mut store = ParamStore::new();
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    store.add_weight("w", 2, 3, &mut rng);
    let w = store.find("w").unwrap();
    let err = grad_check(&mut store, 1e-5, |g| {
        let wt = g.param(w)?;
        let z = g.zeros((2, 3))?;
        g.mse(wt, z)
    })
    .unwrap();
    assert!(err < 1e-8, "max relative error {err}");
}

#[test]
fn dense_selu_composite_gradients() {
    let mut store = ParamStore::new();
    let mut rng = ChaCha12Rng::seed_from_u64(4);
    let layer1 = Dense::new(&mut store, "l1", 3, 4, &mut rng);
    let layer2 = Dense::new(&mut store, "l2", 4, 1, &mut rng);
    let err = grad_check(&mut store, 1e-5, |g| {
        let x = g.constant((1, 3), vec![0.2, -0.7, 1.1])?;
        let h = layer1.apply(g, x)?;
        let h = g.selu(h)?;
        let y = layer2.apply(g, h)?;
        let t = g.constant((1, 1), vec![0.25])?;
        g.mse(y, t)
    })
    .unwrap();
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn backward_is_linear_in_the_loss() {
    let mut store = ParamStore::new();
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let layer = Dense::new(&mut store, "l", 2, 2, &mut rng);
    let build_losses = |g: &mut Graph| -> (TensorId, TensorId) {
        let x = g.constant((1, 2), vec![0.3, -0.4]).unwrap();
        let y = layer.apply(g, x).unwrap();
        let t1 = g.constant((1, 2), vec![1.0, 0.0]).unwrap();
        let t2 = g.constant((1, 2), vec![0.0, 1.0]).unwrap();
        let l1 = g.mse(y, t1).unwrap();
        let l2 = g.mse(y, t2).unwrap();
        (l1, l2)
    };
    let mut g = Graph::new(&store);
    let (l1, l2) = build_losses(&mut g);
    let total = g.add(l1, l2).unwrap();
    let g1 = g.backward(l1).unwrap();
    let g2 = g.backward(l2).unwrap();
    let gt = g.backward(total).unwrap();
    let mut summed = Gradients::zeros(store.len());
    summed.add_scaled(&g1, 1.0);
    summed.add_scaled(&g2, 1.0);
    for (id, _) in store.iter() {
        let a = gt.get(id).unwrap();
        let b = summed.get(id).unwrap();
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Randomly shaped matmul/add/selu/sigmoid/tanh chains pass the
    /// finite-difference check.
    #[test]
    fn random_chain_gradients(seed in 0u64..1000, rows in 1usize..3, mid in 1usize..4, cols in 1usize..3) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        store.add_weight("w1", mid, cols, &mut rng);
        store.add_weight("w2", cols, cols, &mut rng);
        let w1 = store.find("w1").unwrap();
        let w2 = store.find("w2").unwrap();
        let xv: Vec<f64> = (0..rows * mid).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let tv: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let err = grad_check(&mut store, 1e-5, move |g| {
            let x = g.constant((rows, mid), xv.clone())?;
            let w1 = g.param(w1)?;
            let h = g.matmul(x, w1)?;
            let h = g.selu(h)?;
            let w2 = g.param(w2)?;
            let h2 = g.matmul(h, w2)?;
            let s = g.sigmoid(h2)?;
            let t = g.tanh(h2)?;
            let mix = g.mul(s, t)?;
            let summed = g.sum_rows(mix)?;
            let row = g.constant((1, cols), tv[..cols].to_vec())?;
            g.mse(summed, row)
        }).unwrap();
        prop_assert!(err < 1e-4, "max relative error {}", err);
    }

    /// stack_rows/sum_list keep gradients flowing to every input.
    #[test]
    fn aggregate_op_gradients(seed in 0u64..1000, k in 2usize..5) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        store.add_weight("w", 2, 3, &mut rng);
        let w = store.find("w").unwrap();
        let err = grad_check(&mut store, 1e-5, move |g| {
            let wt = g.param(w)?;
            let rows: Vec<TensorId> = (0..k)
                .map(|i| {
                    let x = g.constant((1, 2), vec![0.3 + i as f64 * 0.1, -0.2])?;
                    g.matmul(x, wt)
                })
                .collect::<Result<_, _>>()?;
            let stacked = g.stack_rows(&rows)?;
            let summed = g.sum_list(&rows)?;
            let total = g.sum_rows(stacked)?;
            let both = g.add(total, summed)?;
            let t = g.constant((1, 3), vec![0.1, 0.2, 0.3])?;
            g.mse(both, t)
        }).unwrap();
        prop_assert!(err < 1e-4, "max relative error {}", err);
    }
}
