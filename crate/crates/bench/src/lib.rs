//! Shared fixtures for the pipeline benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use wavemark_core::synth::gaussian_weights;
use wavemark_core::{derive_nu, DType, LayerTensor, ModelContainer, ScrambleKey};

pub fn bench_key() -> ScrambleKey {
    derive_nu(&[7u8; 32]).expect("32-byte seed")
}

/// `n` Gaussian weights with σ = 0.05.
pub fn weights(n: usize, seed: u64) -> Vec<f64> {
    gaussian_weights(&mut ChaCha20Rng::seed_from_u64(seed), n, 0.05)
}

pub fn layer(name: &str, n: usize, seed: u64) -> LayerTensor {
    LayerTensor::new(name, vec![n], DType::Float32, weights(n, seed)).expect("valid layer")
}

/// One hidden layer per entry of `sizes`.
pub fn model(sizes: &[usize]) -> ModelContainer {
    let layers = sizes.iter().enumerate().map(|(i, &n)| layer(&format!("layer{i}"), n, i as u64)).collect();
    ModelContainer::new(layers, vec!["cat".into(), "dog".into()]).expect("valid model")
}
