mod common;

use pathattr::io::{read_mask, read_png};
use pathattr::metrics::{
    aic_sic, insertion_curve, localization, msssim, pixel_importance, AicSicOptions, MsSsimOptions,
};
use pathattr::models::GradientOracle;
use pathattr::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use common::*;

#[derive(Deserialize)]
struct Reference {
    image: String,
    label: usize,
    predicted: usize,
    probabilities: Vec<f64>,
}

#[test]
fn fixture_model_reproduces_reference_probabilities() {
    let text = std::fs::read_to_string(fixture_path("tiny_cnn/reference_values.json")).unwrap();
    let r: Reference = serde_json::from_str(&text).unwrap();
    let model = fixture_model();
    let x: Tensor<f64> = read_png(fixture_path(&r.image)).unwrap();
    let p = model.probabilities(&x).unwrap();
    for (a, b) in p.iter().zip(&r.probabilities) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
    assert_eq!(model.predict(&x).unwrap(), r.predicted);
    assert_eq!(r.label, r.predicted);
}

#[test]
fn attribution_beats_random_ordering() {
    let model = fixture_model();
    let x: Tensor<f64> = read_png(fixture_path("blackout/image.png")).unwrap();
    let class = model.predict(&x).unwrap();
    let opts = AttributeOptions { steps: 64, ..AttributeOptions::default() };
    let ig = pixel_importance(&attribute(&model, class, &x, Method::Ig, false, &opts).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (h, w) = (ig.height(), ig.width());
    let random = PixelImportance::new(h, w, (0..h * w).map(|_| rng.gen::<f64>()).collect()).unwrap();

    let ins = |imp: &PixelImportance<f64>| insertion_curve(&model, class, &x, imp, 0.05).unwrap().probability.auc;
    let (a, r) = (ins(&ig), ins(&random));
    assert!(a > r, "{a} vs {r}");

    let opts = AicSicOptions::default();
    let sic = |imp: &PixelImportance<f64>| aic_sic(&model, class, &x, imp, &opts).unwrap().sic.auc;
    let (a, r) = (sic(&ig), sic(&random));
    assert!(a >= r, "{a} vs {r}");
}

#[test]
fn ig_localizes_the_fixture_object() {
    let model = fixture_model();
    let x: Tensor<f64> = read_png(fixture_path("blackout/image.png")).unwrap();
    let mask = read_mask(fixture_path("blackout/mask.png")).unwrap();
    let class = model.predict(&x).unwrap();
    let opts = AttributeOptions { steps: 64, ..AttributeOptions::default() };
    let a = attribute(&model, class, &x, Method::Ig, false, &opts).unwrap();
    let score = localization(&pixel_importance(&a), &mask, 256).unwrap();
    assert!(score.roc_auc > 0.8, "{score:?}");
}

#[test]
fn every_method_is_finite_and_deterministic() {
    let model = fixture_model();
    let x: Tensor<f64> = read_png(fixture_path("blackout/image.png")).unwrap();
    let opts = AttributeOptions { steps: 30, ..AttributeOptions::default() };
    for method in Method::ALL {
        for idgi in [false, true] {
            if method == Method::Vanilla && idgi {
                continue;
            }
            let a = attribute(&model, 3, &x, method, idgi, &opts).unwrap();
            let b = attribute(&model, 3, &x, method, idgi, &opts).unwrap();
            assert!(a.values.is_finite());
            assert_eq!(a.values, b.values);
        }
    }
}

#[test]
fn blur_set_images_load_at_model_shape() {
    let model = fixture_model();
    for i in 0..8 {
        let x: Tensor<f64> = read_png(fixture_path(&format!("blur_set/img{i:02}.png"))).unwrap();
        assert_eq!(x.shape(), model.input_shape());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn probabilities_form_a_distribution(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, (seed % 3) as usize);
        let x = random_image(model.input_shape(), &mut rng);
        let p = model.probabilities(&x).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn ig_completeness_tightens_with_steps(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, 1);
        let x = random_image(model.input_shape(), &mut rng);
        let df = model.value(&x, 0).unwrap() - model.value(&Tensor::zeros(x.shape()), 0).unwrap();
        let gap = |n| {
            let opts = AttributeOptions { steps: n, ..AttributeOptions::default() };
            (attribute(&model, 0, &x, Method::Ig, false, &opts).unwrap().sum() - df).abs()
        };
        prop_assert!(gap(400) <= gap(4) + 1e-12);
    }

    #[test]
    fn msssim_is_symmetric_and_bounded(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = Shape::new(24, 24, 3);
        let a = random_image(shape, &mut rng);
        let b = random_image(shape, &mut rng);
        let ab = msssim(&a, &b, MsSsimOptions::default()).unwrap().value;
        let ba = msssim(&b, &a, MsSsimOptions::default()).unwrap().value;
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
    }
}
