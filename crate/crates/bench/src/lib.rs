//! Shared fixtures for the criterion benchmarks.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use emt_core::nn::{ResidualNet, Tensor};

pub fn seeded_genome(d: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..d).map(|_| rng.random::<f64>()).collect()
}

/// A residual net with a nonzero head so forward passes do real work.
pub fn active_net(depth: usize, channels: usize, seed: u64) -> ResidualNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = ResidualNet::new(depth, channels, &mut rng);
    let mut params = net.params_flat();
    for p in params.iter_mut() {
        if *p == 0.0 {
            *p = 0.01;
        }
    }
    net.set_params_flat(&params);
    net.mark_trained();
    net
}

pub fn gaussian_matrices(count: usize, d: usize, seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let data = (0..d * d).map(|_| rng.random::<f64>()).collect();
            Tensor::from_vec(&[d, d], data).expect("square")
        })
        .collect()
}
