//! Seeded synthetic models for tests, benches and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::container::{DType, LayerTensor, ModelContainer};
use crate::error::{Error, Result};

pub const CIFAR10_CLASSES: [&str; 10] =
    ["airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck"];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub min_layers: usize,
    pub max_layers: usize,
    pub min_weights: usize,
    pub max_weights: usize,
    /// Standard deviation of the Gaussian weights.
    pub sigma: f64,
    /// Fixed dtype, or `None` to pick one per layer.
    pub dtype: Option<DType>,
    /// Adds a `classes × 64` output layer and a CIFAR-10 class map.
    pub with_output: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            min_layers: 3,
            max_layers: 10,
            min_weights: 8192,
            max_weights: 200_000,
            sigma: 0.05,
            dtype: None,
            with_output: true,
        }
    }
}

fn layer_shape(rng: &mut impl Rng, n: usize, max: usize) -> Vec<usize> {
    let shape = match rng.random_range(0..3) {
        0 => {
            let cin = [16, 32, 64][rng.random_range(0..3)];
            vec![3, 3, cin, n.div_ceil(9 * cin)]
        }
        1 => {
            let cols = [64, 128, 256][rng.random_range(0..3)];
            vec![n.div_ceil(cols), cols]
        }
        _ => vec![n],
    };
    if shape.iter().product::<usize>() <= max {
        shape
    } else {
        vec![n]
    }
}

pub fn gaussian_weights(rng: &mut impl Rng, n: usize, sigma: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, sigma).expect("sigma must be finite and positive");
    (0..n).map(|_| normal.sample(rng)).collect()
}

/// Builds a random container from `seed`. Hidden layers are named `layer<i>`,
/// the optional output layer `fc`.
pub fn synthetic_model(seed: u64, config: &SynthConfig) -> Result<ModelContainer> {
    if config.min_layers == 0
        || config.min_layers > config.max_layers
        || config.min_weights == 0
        || config.min_weights > config.max_weights
        || !(config.sigma > 0.0 && config.sigma.is_finite())
    {
        return Err(Error::InvalidArgument("invalid synthetic model config".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let count = rng.random_range(config.min_layers..=config.max_layers);
    let mut layers = Vec::with_capacity(count + 1);
    for i in 0..count {
        let n = rng.random_range(config.min_weights..=config.max_weights);
        let shape = layer_shape(&mut rng, n, config.max_weights);
        let total = shape.iter().product();
        let dtype = config.dtype.unwrap_or(if rng.random() { DType::Float32 } else { DType::Float64 });
        let data = gaussian_weights(&mut rng, total, config.sigma);
        layers.push(LayerTensor::new(format!("layer{i}"), shape, dtype, data)?);
    }
    let mut class_map = Vec::new();
    if config.with_output {
        let data = gaussian_weights(&mut rng, CIFAR10_CLASSES.len() * 64, config.sigma);
        layers.push(LayerTensor::new("fc", vec![CIFAR10_CLASSES.len(), 64], DType::Float32, data)?);
        class_map = CIFAR10_CLASSES.iter().map(|s| s.to_string()).collect();
    }
    let mut model = ModelContainer::new(layers, class_map)?;
    if config.with_output {
        model.designate_output("fc")?;
    }
    Ok(model)
}
