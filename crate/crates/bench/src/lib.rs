//! Shared fixtures for the criterion benches.

use msarobust_core::{
    generate_synthetic, Dataset, Dims, Model, ModelConfig, Optimizer, SyntheticSpec, TrainConfig,
};

/// Synthetic dataset with the default (0.8, 0.1, 0.1) signal split.
pub fn dataset(n_train: usize, n_test: usize) -> Dataset {
    generate_synthetic(&SyntheticSpec {
        n_per_split: [n_train, n_test / 2, n_test],
        dims: Dims::new(16, 8, 8),
        signal_weights: [0.8, 0.1, 0.1],
        feature_noise_sigma: 0.5,
        seed: 7,
    })
    .expect("valid bench spec")
}

pub fn model(dataset: &Dataset, hidden: usize) -> Model {
    Model::new(ModelConfig::new(dataset.dims(), hidden, 1)).expect("valid bench model")
}

pub fn one_epoch(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 1,
        batch_size: 32,
        optimizer: Optimizer::adam(0.003),
        seed,
        robust: None,
        patience: 0,
    }
}
