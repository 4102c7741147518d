//! Regenerates the image fixtures under `tests/fixtures/` from the committed tiny CNN.
//!
//! Run after `pathattr train-toy --seed 7 --out tests/fixtures/tiny_cnn`:
//! `cargo run --release --example make_fixtures`

use std::fs;
use std::path::Path;

use pathattr::io::{write_mask, write_png};
use pathattr::models::{load_weights, GradientOracle};
use pathattr::tensor::BinaryMask;
use pathattr::Tensor;

const BLACKOUT_SEED: u64 = 31;
const BLUR_SET_SEED: u64 = 2025;
const BLUR_SET_SIZE: usize = 8;

fn main() -> pathattr::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let (model, weights) = load_weights::<f64>(root.join("tiny_cnn/model.json"))?;
    let task = weights.task.expect("fixture model records its task");

    // a task sample whose square has a black 3x3 hole
    let sample = task.generate::<f64>(1, BLACKOUT_SEED)?.remove(0);
    let s = sample.image.shape();
    let inside: Vec<usize> = (0..s.pixels()).filter(|&p| sample.mask.values()[p]).collect();
    let (top, left) = (inside[0] / s.width, inside[0] % s.width);
    let mut image = sample.image.clone();
    let mut hole = BinaryMask::new(s.height, s.width, vec![false; s.pixels()])?;
    for r in top + 2..top + 5 {
        for c in left + 2..left + 5 {
            hole.set(r, c, true);
            for ch in 0..s.channels {
                image.set(r, c, ch, 0.0);
            }
        }
    }
    let dir = root.join("blackout");
    fs::create_dir_all(&dir).unwrap();
    write_png(&image, dir.join("image.png"))?;
    write_mask(&sample.mask, dir.join("mask.png"))?;
    write_mask(&hole, dir.join("black_pixels.png"))?;

    let reread: Tensor<f64> = pathattr::io::read_png(dir.join("image.png"))?;
    let reference = serde_json::json!({
        "image": "blackout/image.png",
        "label": sample.label,
        "predicted": model.predict(&reread)?,
        "probabilities": model.probabilities(&reread)?,
    });
    fs::write(
        root.join("tiny_cnn/reference_values.json"),
        serde_json::to_string_pretty(&reference).unwrap() + "\n",
    )
    .unwrap();

    let dir = root.join("blur_set");
    fs::create_dir_all(&dir).unwrap();
    for (i, s) in task.generate::<f64>(BLUR_SET_SIZE, BLUR_SET_SEED)?.iter().enumerate() {
        write_png(&s.image, dir.join(format!("img{i:02}.png")))?;
    }
    Ok(())
}
