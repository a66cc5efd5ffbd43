//! Shared fixtures for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trafficnet::autodiff::ParamStore;
use trafficnet::data::{synth_dataset, TrainingPair};
use trafficnet::model::{build_model, ModelConfig, ModelType};
use trafficnet::{Shape, Tensor, UNet};

/// Uniform `[0, 1)` f32 tensor.
pub fn uniform(dims: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dims.iter().product();
    let data: Vec<f32> = (0..n).map(|_| rng.random()).collect();
    Tensor::from_vec(Shape::new(dims.to_vec()).expect("bench shape"), data).expect("bench tensor")
}

/// Small symmetric weights, so activations stay bounded across layers.
pub fn weights(dims: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dims.iter().product();
    let data: Vec<f32> = (0..n).map(|_| rng.random_range(-0.05..0.05)).collect();
    Tensor::from_vec(Shape::new(dims.to_vec()).expect("bench shape"), data).expect("bench tensor")
}

pub struct ModelFixture {
    pub unet: UNet,
    pub params: ParamStore<f32>,
    pub input: Tensor,
}

/// Seeded model with a uniform input of the configured shape.
pub fn model(cfg: &ModelConfig) -> ModelFixture {
    let unet = build_model(cfg).expect("bench model");
    let params = ParamStore::init(&unet.graph, 0);
    let (h, w, c) = cfg.input_shape;
    ModelFixture {
        unet,
        params,
        input: uniform(&[h, w, c], 1),
    }
}

/// Default-depth network on a reduced frame.
pub fn mid_config(model_type: ModelType) -> ModelConfig {
    ModelConfig {
        model_type,
        input_shape: (128, 112, 115),
        ..ModelConfig::default()
    }
}

pub fn tiny_training(model_type: ModelType, n: usize) -> (UNet, Vec<TrainingPair>) {
    let ds = synth_dataset(1, n, 31, 28).expect("synthetic data");
    let unet = build_model(&ModelConfig::tiny(model_type, (31, 28, 115))).expect("tiny model");
    (unet, ds.training_pairs(true).expect("pairs"))
}
