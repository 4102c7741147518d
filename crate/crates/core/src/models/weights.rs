//! Versioned JSON weight files.
//!
//! ```json
//! {
//!   "format": "pathattr-toy-model",
//!   "version": 1,
//!   "architecture": "tiny-cnn",
//!   "activation": "softplus",
//!   "head": "softmax",
//!   "input_shape": { "height": 32, "width": 32, "channels": 3 },
//!   "num_classes": 4,
//!   "layers": [
//!     { "type": "conv", "in_channels": 3, "out_channels": 4, "kernel": 3, "weights": [...], "bias": [...] },
//!     { "type": "act", "activation": "softplus" },
//!     { "type": "avg-pool", "size": 4 },
//!     { "type": "dense", "inputs": 256, "outputs": 4, "weights": [...], "bias": [...] }
//!   ],
//!   "task": { ... }            // optional, the synthetic task the model was trained on
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so save followed by load is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::toy::{Activation, Architecture, Layer, ToyModel};
use super::train::SyntheticTask;
use super::{GradientOracle, Head};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Shape;

pub const WEIGHTS_FORMAT: &str = "pathattr-toy-model";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    Act {
        activation: Activation,
    },
    AvgPool {
        size: usize,
    },
}

/// Serialized form of a [`ToyModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyModelWeights {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub activation: Activation,
    pub head: Head,
    pub input_shape: Shape,
    pub num_classes: usize,
    pub layers: Vec<LayerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<SyntheticTask>,
}

fn to_f64<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn from_f64<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::of(x)).collect()
}

impl<T: Scalar> ToyModel<T> {
    pub fn to_weights(&self) -> ToyModelWeights {
        let layers = self
            .layers()
            .iter()
            .map(|l| match l {
                Layer::Dense {
                    inputs,
                    outputs,
                    weights,
                    bias,
                } => LayerSpec::Dense {
                    inputs: *inputs,
                    outputs: *outputs,
                    weights: to_f64(weights),
                    bias: to_f64(bias),
                },
                Layer::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    weights,
                    bias,
                } => LayerSpec::Conv {
                    in_channels: *in_channels,
                    out_channels: *out_channels,
                    kernel: *kernel,
                    weights: to_f64(weights),
                    bias: to_f64(bias),
                },
                Layer::Act(a) => LayerSpec::Act { activation: *a },
                Layer::AvgPool { size } => LayerSpec::AvgPool { size: *size },
            })
            .collect();
        ToyModelWeights {
            format: WEIGHTS_FORMAT.to_string(),
            version: WEIGHTS_VERSION,
            architecture: self.architecture(),
            activation: self.activation(),
            head: self.head(),
            input_shape: self.input_shape(),
            num_classes: self.num_classes(),
            layers,
            task: None,
        }
    }

    pub fn from_weights(w: &ToyModelWeights) -> Result<Self> {
        let layers = w
            .layers
            .iter()
            .map(|l| match l {
                LayerSpec::Dense {
                    inputs,
                    outputs,
                    weights,
                    bias,
                } => Layer::Dense {
                    inputs: *inputs,
                    outputs: *outputs,
                    weights: from_f64(weights),
                    bias: from_f64(bias),
                },
                LayerSpec::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    weights,
                    bias,
                } => Layer::Conv {
                    in_channels: *in_channels,
                    out_channels: *out_channels,
                    kernel: *kernel,
                    weights: from_f64(weights),
                    bias: from_f64(bias),
                },
                LayerSpec::Act { activation } => Layer::Act(*activation),
                LayerSpec::AvgPool { size } => Layer::AvgPool { size: *size },
            })
            .collect();
        ToyModel::from_layers(
            w.architecture,
            w.activation,
            w.head,
            w.input_shape,
            w.num_classes,
            layers,
        )
        .map_err(|e| Error::Format(format!("invalid model structure: {e}")))
    }
}

impl ToyModelWeights {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("weights serialize to JSON")
    }

    /// Parses and checks the header before decoding the body, so an unknown version
    /// is reported as such rather than as a field error.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("weights: {e}")))?;
        match value.get("format").and_then(|f| f.as_str()) {
            Some(WEIGHTS_FORMAT) => {}
            other => {
                return Err(Error::Format(format!(
                    "weights: expected format '{WEIGHTS_FORMAT}', found {other:?}"
                )))
            }
        }
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == WEIGHTS_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::Format(format!(
                    "weights: unsupported version {v} (this build reads version {WEIGHTS_VERSION})"
                )))
            }
            None => return Err(Error::Format("weights: missing version".into())),
        }
        serde_json::from_value(value).map_err(|e| Error::Format(format!("weights: {e}")))
    }
}

pub fn save_weights(weights: &ToyModelWeights, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, weights.to_json()).map_err(|e| Error::io(path, e))
}

/// Reads a weight file and rebuilds the model it describes.
pub fn load_weights<T: Scalar>(path: impl AsRef<Path>) -> Result<(ToyModel<T>, ToyModelWeights)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let weights = ToyModelWeights::from_json(&text)?;
    let model = ToyModel::from_weights(&weights)?;
    Ok((model, weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn sample() -> ToyModel<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        ToyModel::random_tiny_cnn(Shape::new(4, 4, 2), 2, 2, 3, Activation::Softplus, &mut rng)
            .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let model = sample();
        save_weights(&model.to_weights(), &path).unwrap();
        let (loaded, _) = load_weights::<f64>(&path).unwrap();
        assert_eq!(loaded, model);
    }

    #[test]
    fn unknown_version_names_the_version() {
        let json = sample().to_weights().to_json().replace("\"version\": 1", "\"version\": 7");
        let err = ToyModelWeights::from_json(&json).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
        assert!(err.to_string().contains('7'));
    }

    #[test]
    fn corrupted_field_is_format_error() {
        let json = sample()
            .to_weights()
            .to_json()
            .replace("\"kernel\": 3", "\"kernel\": \"three\"");
        assert!(matches!(ToyModelWeights::from_json(&json), Err(Error::Format(_))));

        let mut w = sample().to_weights();
        if let LayerSpec::Dense { weights, .. } = &mut w.layers[3] {
            weights.pop();
        }
        assert!(matches!(ToyModel::<f64>::from_weights(&w), Err(Error::Format(_))));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_weights::<f64>("/nonexistent/weights.json"),
            Err(Error::Io { .. })
        ));
    }
}
