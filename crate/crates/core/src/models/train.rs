//! Synthetic classification tasks with known relevant pixels, and a plain SGD trainer.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::toy::{Activation, Architecture, Layer, ToyModel};
use super::GradientOracle;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{BinaryMask, Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    /// A bright square sits in one quadrant; the class is the quadrant index
    /// (0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right). Everything outside the
    /// square is background noise.
    MaskQuadrant,
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mask-quadrant" => Ok(Self::MaskQuadrant),
            other => Err(Error::invalid(format!("unknown task '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTask {
    pub kind: TaskKind,
    pub shape: Shape,
    pub classes: usize,
    /// Side of the square, in pixels.
    pub square: usize,
    /// Background values are drawn from `[0, noise]`.
    pub noise: f64,
    /// Square values are drawn from `[brightness, 1]`.
    pub brightness: f64,
}

impl Default for SyntheticTask {
    fn default() -> Self {
        Self {
            kind: TaskKind::MaskQuadrant,
            shape: Shape::new(32, 32, 3),
            classes: 4,
            square: 8,
            noise: 0.6,
            brightness: 0.7,
        }
    }
}

/// One generated image with its label and the mask of class evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub image: Tensor<T>,
    pub label: usize,
    pub mask: BinaryMask,
}

impl SyntheticTask {
    pub fn validate(&self) -> Result<()> {
        let s = self.shape;
        if self.classes < 2 {
            return Err(Error::invalid(format!(
                "task needs at least 2 classes, got {}",
                self.classes
            )));
        }
        if self.classes > 4 {
            return Err(Error::invalid("mask-quadrant supports at most 4 classes"));
        }
        if s.channels == 0 || s.height < 2 || s.width < 2 {
            return Err(Error::invalid(format!("task image shape {s} too small")));
        }
        if self.square == 0 || self.square > s.height / 2 || self.square > s.width / 2 {
            return Err(Error::invalid(format!(
                "square side {} does not fit a quadrant of {s}",
                self.square
            )));
        }
        if !(0.0..=1.0).contains(&self.noise) || !(0.0..=1.0).contains(&self.brightness) {
            return Err(Error::invalid("noise and brightness must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Draws one sample of the given class.
    pub fn sample_class<T: Scalar>(&self, label: usize, rng: &mut impl Rng) -> Sample<T> {
        let s = self.shape;
        let (qh, qw) = (s.height / 2, s.width / 2);
        let top = (label / 2) * qh + rng.gen_range(0..=qh - self.square);
        let left = (label % 2) * qw + rng.gen_range(0..=qw - self.square);
        let inside = |r: usize, c: usize| {
            (top..top + self.square).contains(&r) && (left..left + self.square).contains(&c)
        };
        let mut mask = BinaryMask::new(s.height, s.width, vec![false; s.pixels()])
            .expect("mask dimensions match");
        let image = Tensor::from_fn(s, |r, c, _| {
            if inside(r, c) {
                mask.set(r, c, true);
                T::of(rng.gen_range(self.brightness..=1.0))
            } else {
                T::of(rng.gen_range(0.0..=self.noise))
            }
        });
        Sample { image, label, mask }
    }

    pub fn sample<T: Scalar>(&self, rng: &mut impl Rng) -> Sample<T> {
        let label = rng.gen_range(0..self.classes);
        self.sample_class(label, rng)
    }

    /// `count` samples from a generator seeded with `seed`.
    pub fn generate<T: Scalar>(&self, count: usize, seed: u64) -> Result<Vec<Sample<T>>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..count).map(|_| self.sample(&mut rng)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub architecture: Architecture,
    pub activation: Activation,
    /// Hidden widths for `mlp`.
    pub hidden: Vec<usize>,
    /// Convolution channels for `tiny-cnn`.
    pub conv_channels: usize,
    /// Average-pool size for `tiny-cnn`.
    pub pool: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub train_size: usize,
    pub test_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::TinyCnn,
            activation: Activation::Softplus,
            hidden: vec![32],
            conv_channels: 4,
            pool: 4,
            epochs: 6,
            batch_size: 16,
            learning_rate: 0.2,
            train_size: 1200,
            test_size: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: ToyModel<T>,
    pub log: Vec<EpochLog>,
    /// Accuracy on a held-out set drawn from an independent stream.
    pub test_accuracy: f64,
}

/// Held-out samples use a stream derived from, but disjoint with, the training seed.
pub(crate) fn held_out_seed(seed: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15
}

fn accuracy<T: Scalar>(model: &ToyModel<T>, samples: &[Sample<T>]) -> Result<f64> {
    let mut correct = 0usize;
    for s in samples {
        if model.predict(&s.image)? == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len().max(1) as f64)
}

/// Trains a toy classifier with minibatch SGD at a constant learning rate.
/// Identical `(task, config, seed)` gives bit-identical weights.
pub fn train_toy<T: Scalar>(
    task: &SyntheticTask,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome<T>> {
    task.validate()?;
    if config.epochs == 0 || config.batch_size == 0 || config.train_size == 0 {
        return Err(Error::invalid("epochs, batch size and train size must be positive"));
    }
    if !(config.learning_rate > 0.0) || !config.learning_rate.is_finite() {
        return Err(Error::invalid("learning rate must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = match config.architecture {
        Architecture::TinyCnn => ToyModel::random_tiny_cnn(
            task.shape,
            config.conv_channels,
            config.pool,
            task.classes,
            config.activation,
            &mut rng,
        )?,
        Architecture::Mlp => ToyModel::random_mlp(
            task.shape,
            &config.hidden,
            task.classes,
            config.activation,
            &mut rng,
        )?,
        Architecture::SoftmaxRegression => {
            let rows = vec![vec![T::zero(); task.shape.len()]; task.classes];
            ToyModel::softmax_regression(task.shape, rows, vec![T::zero(); task.classes])?
        }
        Architecture::Linear => {
            return Err(Error::invalid(
                "linear models have an identity head and are not trainable with cross-entropy",
            ))
        }
    };

    let train: Vec<Sample<T>> = (0..config.train_size).map(|_| task.sample(&mut rng)).collect();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let lr = T::of(config.learning_rate);
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grads = model.zero_grads();
            for &i in batch {
                let loss = model.loss_and_grads(&train[i].image, train[i].label, &mut grads);
                let loss = loss.as_f64();
                if !loss.is_finite() {
                    return Err(Error::TrainingFailure(format!(
                        "non-finite loss at epoch {epoch}"
                    )));
                }
                total_loss += loss;
            }
            let step = lr / T::of_usize(batch.len());
            for (layer, (gw, gb)) in model.layers_mut().iter_mut().zip(&grads) {
                if let Layer::Dense { weights, bias, .. } | Layer::Conv { weights, bias, .. } = layer
                {
                    for (w, &g) in weights.iter_mut().zip(gw) {
                        *w = *w - step * g;
                    }
                    for (b, &g) in bias.iter_mut().zip(gb) {
                        *b = *b - step * g;
                    }
                }
            }
        }
        let mean_loss = total_loss / train.len() as f64;
        if !mean_loss.is_finite() {
            return Err(Error::TrainingFailure(format!("non-finite loss at epoch {epoch}")));
        }
        log.push(EpochLog {
            epoch,
            mean_loss,
            train_accuracy: accuracy(&model, &train)?,
        });
    }

    let held_out = task.generate::<T>(config.test_size, held_out_seed(seed))?;
    let test_accuracy = accuracy(&model, &held_out)?;
    Ok(TrainOutcome {
        model,
        log,
        test_accuracy,
    })
}
