#![allow(dead_code)]

use std::path::PathBuf;

use pathattr::models::{load_weights, Activation};
use pathattr::{Shape, Tensor, ToyModel};
use rand::Rng;
use serde::Deserialize;

pub const STUDY_IMAGES: usize = 200;
pub const STUDY_SEED: u64 = 1000;

pub fn fixture_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn fixture_model() -> ToyModel<f64> {
    load_weights(fixture_path("tiny_cnn/model.json")).unwrap().0
}

pub fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get().min(8))
}

pub fn random_image(shape: Shape, rng: &mut impl Rng) -> Tensor<f64> {
    Tensor::new(shape, (0..shape.len()).map(|_| rng.gen::<f64>()).collect()).unwrap()
}

/// Cycles through softmax regression, MLP and tiny CNN with random sizes.
pub fn random_model(rng: &mut impl Rng, trial: usize) -> ToyModel<f64> {
    let classes = rng.gen_range(2..=4);
    match trial % 3 {
        0 => {
            let shape = Shape::new(rng.gen_range(3..=6), rng.gen_range(3..=6), rng.gen_range(1..=3));
            let rows = (0..classes)
                .map(|_| (0..shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let bias = (0..classes).map(|_| rng.gen_range(-0.5..0.5)).collect();
            ToyModel::softmax_regression(shape, rows, bias).unwrap()
        }
        1 => {
            let shape = Shape::new(rng.gen_range(3..=6), rng.gen_range(3..=6), rng.gen_range(1..=3));
            let hidden = [rng.gen_range(4..=12)];
            ToyModel::random_mlp(shape, &hidden, classes, Activation::Softplus, rng).unwrap()
        }
        _ => {
            let side = 2 * rng.gen_range(2..=4);
            let shape = Shape::new(side, side, rng.gen_range(1..=3));
            ToyModel::random_tiny_cnn(shape, rng.gen_range(2..=4), 2, classes, Activation::Softplus, rng)
                .unwrap()
        }
    }
}

#[derive(Deserialize)]
pub struct LinearityWitness {
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub input: Vec<f64>,
    pub steps: usize,
}

pub fn linearity_fixture() -> LinearityWitness {
    let text = std::fs::read_to_string(fixture_path("linearity_witness.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}
