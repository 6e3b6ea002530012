#![allow(dead_code)]

use danet::nn::{Graph, NodeId, ParamId, ParamStore, Tensor};
use danet::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

/// Largest relative disagreement between backward and central differences,
/// over every scalar parameter in `store`. Pairs where both values are below
/// `1e-8` are compared absolutely.
pub fn max_fd_error<F>(store: &ParamStore, build: F) -> f64
where
    F: Fn(&mut Graph) -> Result<NodeId>,
{
    let mut g = Graph::new(store);
    let loss = build(&mut g).unwrap();
    let grads = g.backward(loss).unwrap();
    let eval = |s: &ParamStore| {
        let mut g = Graph::new(s);
        let l = build(&mut g).unwrap();
        g.value(l).data()[0]
    };

    let mut worst = 0.0f64;
    let mut probe = store.clone();
    for (id, p) in store.iter() {
        let zeros = Tensor::zeros(p.value.shape());
        let analytic = grads.param(id).unwrap_or(&zeros).clone();
        for k in 0..p.value.len() {
            let orig = p.value.data()[k];
            probe.get_mut(id).value.data_mut()[k] = orig + FD_STEP;
            let up = eval(&probe);
            probe.get_mut(id).value.data_mut()[k] = orig - FD_STEP;
            let down = eval(&probe);
            probe.get_mut(id).value.data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic.data()[k];
            let scale = a.abs().max(numeric.abs());
            let err = if scale < 1e-8 { (a - numeric).abs() } else { (a - numeric).abs() / scale };
            worst = worst.max(err);
        }
    }
    worst
}

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Store holding an input tensor (so its gradient is checked too).
pub fn store_with_input(shape: &[usize], seed: u64) -> (ParamStore, ParamId) {
    let mut store = ParamStore::new();
    let x = store.add("x", random_tensor(shape, &mut rng(seed)));
    (store, x)
}
