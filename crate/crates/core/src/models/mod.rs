//! Gradient oracles and the built-in toy classifiers.

mod toy;
mod train;
mod weights;

pub use toy::{Activation, Architecture, Layer, ToyModel};
pub use train::{train_toy, Sample, SyntheticTask, TaskKind, TrainConfig, TrainOutcome, EpochLog};
pub use weights::{load_weights, save_weights, ToyModelWeights, WEIGHTS_FORMAT, WEIGHTS_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// What `f_c` means for an oracle: the softmax probability or the raw score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Head {
    Softmax,
    Identity,
}

/// A differentiable classifier.
///
/// Implementors provide the pre-softmax scores and their vector-Jacobian product; the
/// class value `f_c`, its gradient and the probabilities follow from those.
pub trait GradientOracle<T: Scalar>: Sync {
    fn input_shape(&self) -> Shape;

    fn num_classes(&self) -> usize;

    fn head(&self) -> Head {
        Head::Softmax
    }

    /// Pre-softmax scores.
    fn logits(&self, x: &Tensor<T>) -> Result<Vec<T>>;

    /// `Σ_k cotangent_k · ∂logit_k/∂x`.
    fn logits_vjp(&self, x: &Tensor<T>, cotangent: &[T]) -> Result<Tensor<T>>;

    fn check_input(&self, x: &Tensor<T>, class: usize) -> Result<()> {
        if x.shape() != self.input_shape() {
            return Err(Error::invalid(format!(
                "input shape {} does not match model input {}",
                x.shape(),
                self.input_shape()
            )));
        }
        if class >= self.num_classes() {
            return Err(Error::invalid(format!(
                "class {class} out of range for {} classes",
                self.num_classes()
            )));
        }
        Ok(())
    }

    fn probabilities(&self, x: &Tensor<T>) -> Result<Vec<T>> {
        Ok(softmax(&self.logits(x)?))
    }

    /// `f_c(x)`.
    fn value(&self, x: &Tensor<T>, class: usize) -> Result<T> {
        self.check_input(x, class)?;
        let z = self.logits(x)?;
        Ok(match self.head() {
            Head::Identity => z[class],
            Head::Softmax => softmax(&z)[class],
        })
    }

    /// `∂f_c/∂x`.
    fn gradient(&self, x: &Tensor<T>, class: usize) -> Result<Tensor<T>> {
        Ok(self.value_and_gradient(x, class)?.1)
    }

    fn value_and_gradient(&self, x: &Tensor<T>, class: usize) -> Result<(T, Tensor<T>)> {
        self.check_input(x, class)?;
        let z = self.logits(x)?;
        let (value, cot) = head_cotangent(self.head(), &z, class);
        Ok((value, self.logits_vjp(x, &cot)?))
    }

    /// Index of the most probable class; ties go to the lowest index.
    fn predict(&self, x: &Tensor<T>) -> Result<usize> {
        let z = self.logits(x)?;
        Ok(argmax(&z))
    }
}

/// Value of `f_c` and the cotangent on the logits that yields its gradient.
pub(crate) fn head_cotangent<T: Scalar>(head: Head, logits: &[T], class: usize) -> (T, Vec<T>) {
    match head {
        Head::Identity => {
            let mut cot = vec![T::zero(); logits.len()];
            cot[class] = T::one();
            (logits[class], cot)
        }
        Head::Softmax => {
            let p = softmax(logits);
            let pc = p[class];
            let cot = p
                .iter()
                .enumerate()
                .map(|(k, &pk)| {
                    let delta = if k == class { T::one() } else { T::zero() };
                    pc * (delta - pk)
                })
                .collect();
            (pc, cot)
        }
    }
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(z: &[T]) -> Vec<T> {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub(crate) fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Views any oracle through its raw scores (`f_c` = logit `c`).
#[derive(Debug, Clone, Copy)]
pub struct Logits<'a, M: ?Sized>(pub &'a M);

impl<T: Scalar, M: GradientOracle<T> + ?Sized> GradientOracle<T> for Logits<'_, M> {
    fn input_shape(&self) -> Shape {
        self.0.input_shape()
    }
    fn num_classes(&self) -> usize {
        self.0.num_classes()
    }
    fn head(&self) -> Head {
        Head::Identity
    }
    fn logits(&self, x: &Tensor<T>) -> Result<Vec<T>> {
        self.0.logits(x)
    }
    fn logits_vjp(&self, x: &Tensor<T>, cotangent: &[T]) -> Result<Tensor<T>> {
        self.0.logits_vjp(x, cotangent)
    }
}

/// Central finite differences of `f_c`, one feature at a time.
pub fn finite_diff_gradient<T: Scalar, M: GradientOracle<T> + ?Sized>(
    model: &M,
    x: &Tensor<T>,
    class: usize,
    h: T,
) -> Result<Tensor<T>> {
    if !(h > T::zero()) {
        return Err(Error::invalid(format!("finite-difference step must be > 0, got {h}")));
    }
    model.check_input(x, class)?;
    let mut probe = x.clone();
    let mut out = Tensor::zeros(x.shape());
    let two_h = h + h;
    for i in 0..x.len() {
        let orig = x.as_slice()[i];
        probe.as_mut_slice()[i] = orig + h;
        let up = model.value(&probe, class)?;
        probe.as_mut_slice()[i] = orig - h;
        let down = model.value(&probe, class)?;
        probe.as_mut_slice()[i] = orig;
        out.as_mut_slice()[i] = (up - down) / two_h;
    }
    Ok(out)
}

/// Largest gradient discrepancy relative to the gradient's own scale:
/// `max_i |a_i - b_i| / max(max_i |a_i|, floor)`.
pub fn max_relative_error<T: Scalar>(analytic: &Tensor<T>, reference: &Tensor<T>, floor: T) -> Result<T> {
    let diff = analytic.max_abs_diff(reference)?;
    Ok(diff / analytic.max_abs().max(floor))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// f(x) = Σ x², single output, identity head.
    struct Quadratic(Shape);

    impl GradientOracle<f64> for Quadratic {
        fn input_shape(&self) -> Shape {
            self.0
        }
        fn num_classes(&self) -> usize {
            1
        }
        fn head(&self) -> Head {
            Head::Identity
        }
        fn logits(&self, x: &Tensor<f64>) -> Result<Vec<f64>> {
            Ok(vec![x.norm_sq()])
        }
        fn logits_vjp(&self, x: &Tensor<f64>, cot: &[f64]) -> Result<Tensor<f64>> {
            Ok(x.scale(2.0 * cot[0]))
        }
    }

    #[test]
    fn finite_diff_on_quadratic() {
        let shape = Shape::new(2, 3, 1);
        let x = Tensor::from_fn(shape, |r, c, _| r as f64 * 0.7 - c as f64 * 0.3 + 0.1);
        let fd = finite_diff_gradient(&Quadratic(shape), &x, 0, 1e-4).unwrap();
        assert!(fd.max_abs_diff(&x.scale(2.0)).unwrap() <= 1e-6);
    }

    #[test]
    fn finite_diff_rejects_zero_step() {
        let shape = Shape::new(1, 2, 1);
        let x = Tensor::zeros(shape);
        assert!(matches!(
            finite_diff_gradient(&Quadratic(shape), &x, 0, 0.0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn softmax_is_stable_and_normalized() {
        let p = softmax(&[1000.0f64, 1000.0, -1000.0]);
        assert!((p[0] - 0.5).abs() < 1e-15);
        assert!(p[2] >= 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn logits_view_uses_raw_scores() {
        let model = ToyModel::softmax_regression(
            Shape::new(1, 2, 1),
            vec![vec![2.0, -1.0], vec![0.0, 0.0]],
            vec![0.0, 0.0],
        )
        .unwrap();
        let x = Tensor::from_vec(vec![1.0, 1.0]).unwrap();
        let view = Logits(&model);
        assert_eq!(view.value(&x, 0).unwrap(), 1.0);
        assert_eq!(view.gradient(&x, 0).unwrap().as_slice(), &[2.0, -1.0]);
    }
}
