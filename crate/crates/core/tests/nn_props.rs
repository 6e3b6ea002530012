use danet::nn::{bce_loss, conv1d, maxpool1d, mse_loss, relu, sigmoid, AdamConfig, AdamState, ParamStore, Tensor};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        rng_seed: RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

/// (c_in, c_out, k, d, n) with odd k.
fn conv_shape() -> impl Strategy<Value = (usize, usize, usize, usize, usize)> {
    (1usize..3, 1usize..3, 0usize..3, 1usize..4, 12usize..30).prop_map(|(ci, co, h, d, n)| (ci, co, 2 * h + 1, d, n))
}

fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor {
    Tensor::new(shape.to_vec(), data).unwrap()
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn conv_is_linear_in_the_input(
        (ci, co, k, d, n) in conv_shape(),
        x1 in values(2 * 30),
        x2 in values(2 * 30),
        w in values(2 * 2 * 5),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        let (x1, x2) = (&x1[..ci * n], &x2[..ci * n]);
        let w = tensor(&[co, ci, k], w[..co * ci * k].to_vec());
        let zero = Tensor::zeros(&[co]);
        let mix: Vec<f64> = x1.iter().zip(x2).map(|(p, q)| a * p + b * q).collect();
        let y1 = conv1d(&tensor(&[ci, n], x1.to_vec()), &w, &zero, d).unwrap();
        let y2 = conv1d(&tensor(&[ci, n], x2.to_vec()), &w, &zero, d).unwrap();
        let ym = conv1d(&tensor(&[ci, n], mix), &w, &zero, d).unwrap();
        for ((m, p), q) in ym.data().iter().zip(y1.data()).zip(y2.data()) {
            prop_assert!((m - (a * p + b * q)).abs() < 1e-10);
        }
    }

    #[test]
    fn conv_commutes_with_shifts_away_from_the_edges(
        (ci, co, k, d, n) in conv_shape(),
        x in values(2 * 30),
        w in values(2 * 2 * 5),
        s in 1usize..5,
    ) {
        let x: Vec<f64> = x[..ci * n].to_vec();
        let w = tensor(&[co, ci, k], w[..co * ci * k].to_vec());
        let b = Tensor::full(&[co], 0.25);
        // shifted[i][t] = x[i][t - s]
        let mut shifted = vec![0.0; ci * n];
        for i in 0..ci {
            for t in s..n {
                shifted[i * n + t] = x[i * n + t - s];
            }
        }
        let y = conv1d(&tensor(&[ci, n], x), &w, &b, d).unwrap();
        let ys = conv1d(&tensor(&[ci, n], shifted), &w, &b, d).unwrap();
        let half = (k - 1) / 2 * d;
        for o in 0..co {
            for t in (s + half)..n.saturating_sub(half) {
                prop_assert!((ys.data()[o * n + t] - y.data()[o * n + t - s]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pooling_takes_window_maxima(x in values(23), p in 1usize..6) {
        let (y, arg) = maxpool1d(&tensor(&[1, 23], x.clone()), p).unwrap();
        prop_assert_eq!(y.shape(), &[1, 23 / p]);
        for (j, v) in y.data().iter().enumerate() {
            let window = &x[j * p..(j + 1) * p];
            prop_assert_eq!(*v, window.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
            prop_assert_eq!(x[arg[j]], *v);
        }
    }

    #[test]
    fn activations_stay_in_range(x in prop::collection::vec(-1000.0f64..1000.0, 1..20)) {
        let n = x.len();
        let t = Tensor::vector(x);
        for (v, r) in t.data().iter().zip(relu(&t).data()) {
            prop_assert_eq!(*r, v.max(0.0));
        }
        let s = sigmoid(&t);
        prop_assert_eq!(s.len(), n);
        prop_assert!(s.data().iter().all(|&p| p > 0.0 && p <= 1.0 && p.is_finite()));
    }

    #[test]
    fn losses_are_non_negative_and_mse_is_symmetric(a in values(16), b in values(16), p in prop::collection::vec(0.0f64..=1.0, 16)) {
        let ab = mse_loss(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, mse_loss(&b, &a).unwrap());
        prop_assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);
        let y: Vec<f64> = a.iter().map(|v| if *v > 0.0 { 1.0 } else { 0.0 }).collect();
        prop_assert!(bce_loss(&p, &y).unwrap() >= 0.0);
    }

    #[test]
    fn adam_skips_frozen_and_moves_against_the_gradient(g in values(6), lr in 1e-4f64..1e-1) {
        let mut store = ParamStore::new();
        let live = store.add("live", Tensor::zeros(&[6]));
        let frozen = store.add("frozen", Tensor::zeros(&[6]));
        store.set_trainable(&[frozen], false);
        store.get_mut(live).grad.data_mut().copy_from_slice(&g);
        store.get_mut(frozen).grad.data_mut().copy_from_slice(&g);
        let mut adam = AdamState::new(AdamConfig { lr, ..AdamConfig::default() });
        adam.step(&mut store).unwrap();
        prop_assert!(store.value(frozen).data().iter().all(|&v| v == 0.0));
        for (v, gi) in store.value(live).data().iter().zip(&g) {
            prop_assert!(v * gi <= 0.0);
            prop_assert!(v.abs() <= lr * (1.0 + 1e-12));
        }
    }
}

#[test]
fn bce_is_minimised_at_the_label() {
    let grid: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
    for y in [0.0, 1.0] {
        let losses: Vec<f64> = grid.iter().map(|&p| bce_loss(&[p], &[y]).unwrap()).collect();
        let best = losses.iter().cloned().fold(f64::INFINITY, f64::min);
        let at_label = bce_loss(&[y], &[y]).unwrap();
        assert!(at_label <= best);
        assert!(at_label < 1e-6);
    }
}

#[test]
fn activations_pass_nan_through() {
    let t = Tensor::vector(vec![f64::NAN, -1.0, 1.0]);
    assert!(relu(&t).data()[0].is_nan());
    assert!(sigmoid(&t).data()[0].is_nan());
    assert_eq!(relu(&t).data()[1..], [0.0, 1.0]);
}
