use serde::{Deserialize, Serialize};

use super::{top_count, CurveReport, PixelImportance};
use crate::error::{Error, Result};
use crate::models::GradientOracle;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const DEFAULT_INSERTION_STEP: f64 = 0.05;

/// Insertion curves: raw class probability and probability relative to the original.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsertionReport {
    pub probability: CurveReport,
    pub ratio: CurveReport,
}

/// Inserts pixels into a black canvas from most to least important.
///
/// Level `k` restores the top `min(k * step, 1)` fraction of pixels (all channels);
/// levels run from 0% to 100% inclusive.
pub fn insertion_curve<T: Scalar, M: GradientOracle<T> + ?Sized>(
    model: &M,
    class: usize,
    x: &Tensor<T>,
    importance: &PixelImportance<T>,
    step_fraction: f64,
) -> Result<InsertionReport> {
    if !(step_fraction > 0.0 && step_fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "insertion step must be in (0, 1], got {step_fraction}"
        )));
    }
    model.check_input(x, class)?;
    let s = x.shape();
    if importance.height() != s.height || importance.width() != s.width {
        return Err(Error::invalid("importance shape does not match the image"));
    }
    let full = model.value(x, class)?.as_f64();
    if full == 0.0 {
        return Err(Error::DegenerateInput(
            "class probability of the original image is 0".into(),
        ));
    }

    let levels = (1.0 / step_fraction - 1e-9).ceil() as usize;
    let order = importance.ranking();
    let pixels = s.pixels();
    let mut canvas = Tensor::zeros(s);
    let mut inserted = 0;
    let mut xs = Vec::with_capacity(levels + 1);
    let mut ys = Vec::with_capacity(levels + 1);
    for k in 0..=levels {
        let fraction = if k == levels {
            1.0
        } else {
            k as f64 * step_fraction
        };
        let target = top_count(fraction, pixels);
        for &p in &order[inserted..target.max(inserted)] {
            let (r, c) = (p / s.width, p % s.width);
            for ch in 0..s.channels {
                canvas.set(r, c, ch, x.get(r, c, ch));
            }
        }
        inserted = inserted.max(target);
        xs.push(fraction);
        ys.push(model.value(&canvas, class)?.as_f64());
    }
    let ratios = ys.iter().map(|&y| y / full).collect();
    Ok(InsertionReport {
        probability: CurveReport::new(xs.clone(), ys)?,
        ratio: CurveReport::new(xs, ratios)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ToyModel;
    use crate::tensor::Shape;

    #[test]
    fn constant_model_gives_flat_curve() {
        let shape = Shape::new(2, 2, 1);
        let m = ToyModel::softmax_regression(shape, vec![vec![0.0; 4]; 2], vec![0.4, -0.2]).unwrap();
        let x = Tensor::from_fn(shape, |r, c, _| (r + c) as f64 / 3.0);
        let imp = PixelImportance::new(2, 2, vec![0.1, 0.4, 0.3, 0.2]).unwrap();
        let rep = insertion_curve(&m, 0, &x, &imp, 0.25).unwrap();
        let p = m.value(&x, 0).unwrap();
        assert!(rep.probability.ys.iter().all(|&y| y == p));
        assert!((rep.probability.auc - p).abs() < 1e-15);
        assert_eq!(rep.probability.xs, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn endpoints_pinned() {
        let shape = Shape::new(3, 3, 2);
        let rows = vec![
            (0..18).map(|i| (i as f64 * 0.37).sin()).collect(),
            (0..18).map(|i| (i as f64 * 0.11).cos()).collect(),
        ];
        let m = ToyModel::softmax_regression(shape, rows, vec![0.0, 0.1]).unwrap();
        let x = Tensor::from_fn(shape, |r, c, ch| ((r * 3 + c + ch) % 4) as f64 / 3.0);
        let imp = PixelImportance::new(3, 3, (0..9).map(|i| i as f64).collect()).unwrap();
        let rep = insertion_curve(&m, 1, &x, &imp, 0.05).unwrap();
        assert_eq!(rep.probability.xs.len(), 21);
        assert_eq!(*rep.probability.ys.last().unwrap(), m.value(&x, 1).unwrap());
        assert_eq!(*rep.ratio.ys.last().unwrap(), 1.0);
        assert_eq!(rep.probability.ys[0], m.value(&Tensor::zeros(shape), 1).unwrap());
    }

    #[test]
    fn rejects_bad_step() {
        let shape = Shape::new(1, 1, 1);
        let m = ToyModel::softmax_regression(shape, vec![vec![1.0], vec![0.0]], vec![0.0, 0.0]).unwrap();
        let x = Tensor::zeros(shape);
        let imp = PixelImportance::new(1, 1, vec![0.0]).unwrap();
        assert!(insertion_curve(&m, 0, &x, &imp, 0.0).is_err());
        assert!(insertion_curve(&m, 0, &x, &imp, 1.5).is_err());
    }

    #[test]
    fn zero_probability_is_degenerate() {
        let shape = Shape::new(1, 1, 1);
        let m = ToyModel::linear(shape, vec![vec![1.0]], vec![0.0]).unwrap();
        let x = Tensor::zeros(shape);
        let imp = PixelImportance::new(1, 1, vec![0.0]).unwrap();
        assert!(matches!(
            insertion_curve(&m, 0, &x, &imp, 0.5),
            Err(Error::DegenerateInput(_))
        ));
    }
}
