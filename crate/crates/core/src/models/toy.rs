use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{head_cotangent, GradientOracle, Head};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    Linear,
    SoftmaxRegression,
    Mlp,
    TinyCnn,
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "softmax-regression" => Ok(Self::SoftmaxRegression),
            "mlp" => Ok(Self::Mlp),
            "tiny-cnn" => Ok(Self::TinyCnn),
            other => Err(Error::invalid(format!("unknown architecture '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Softplus,
    Relu,
}

impl Activation {
    fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            // max(v, 0) + ln(1 + e^-|v|)
            Activation::Softplus => v.max(T::zero()) + (-v.abs()).exp().ln_1p(),
            Activation::Relu => v.max(T::zero()),
        }
    }

    fn derivative<T: Scalar>(self, v: T) -> T {
        match self {
            Activation::Softplus => T::one() / (T::one() + (-v).exp()),
            Activation::Relu => {
                if v > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

/// One network stage. Tensors flow between stages as H×W×C; dense layers flatten
/// their input and emit a `1×1×outputs` tensor.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Dense {
        inputs: usize,
        outputs: usize,
        /// Row-major `outputs × inputs`.
        weights: Vec<T>,
        bias: Vec<T>,
    },
    /// Stride-1 convolution with zero "same" padding.
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        /// Indexed `[out][ky][kx][in]`.
        weights: Vec<T>,
        bias: Vec<T>,
    },
    Act(Activation),
    /// Non-overlapping `size × size` average pooling.
    AvgPool { size: usize },
}

impl<T: Scalar> Layer<T> {
    pub(crate) fn output_shape(&self, input: Shape) -> Result<Shape> {
        match self {
            Layer::Dense {
                inputs,
                outputs,
                weights,
                bias,
            } => {
                if input.len() != *inputs {
                    return Err(Error::invalid(format!(
                        "dense layer expects {inputs} inputs, got {}",
                        input.len()
                    )));
                }
                if weights.len() != inputs * outputs || bias.len() != *outputs {
                    return Err(Error::invalid("dense layer parameter sizes do not match"));
                }
                Ok(Shape::new(1, 1, *outputs))
            }
            Layer::Conv {
                in_channels,
                out_channels,
                kernel,
                weights,
                bias,
            } => {
                if input.channels != *in_channels {
                    return Err(Error::invalid(format!(
                        "conv layer expects {in_channels} channels, got {}",
                        input.channels
                    )));
                }
                if kernel % 2 == 0 {
                    return Err(Error::invalid("conv kernel size must be odd"));
                }
                if weights.len() != out_channels * kernel * kernel * in_channels
                    || bias.len() != *out_channels
                {
                    return Err(Error::invalid("conv layer parameter sizes do not match"));
                }
                Ok(Shape::new(input.height, input.width, *out_channels))
            }
            Layer::Act(_) => Ok(input),
            Layer::AvgPool { size } => {
                if *size == 0 || input.height % size != 0 || input.width % size != 0 {
                    return Err(Error::invalid(format!(
                        "pool size {size} does not divide {input}"
                    )));
                }
                Ok(Shape::new(input.height / size, input.width / size, input.channels))
            }
        }
    }

    fn parameters(&self) -> Option<(&[T], &[T])> {
        match self {
            Layer::Dense { weights, bias, .. } | Layer::Conv { weights, bias, .. } => {
                Some((weights, bias))
            }
            _ => None,
        }
    }

    fn forward(&self, x: &Tensor<T>, out_shape: Shape) -> Tensor<T> {
        match self {
            Layer::Dense {
                inputs,
                outputs,
                weights,
                bias,
            } => {
                let xs = x.as_slice();
                let mut out = Tensor::zeros(out_shape);
                for (o, slot) in out.as_mut_slice().iter_mut().enumerate().take(*outputs) {
                    let row = &weights[o * inputs..(o + 1) * inputs];
                    *slot = row
                        .iter()
                        .zip(xs)
                        .fold(bias[o], |acc, (&w, &v)| acc + w * v);
                }
                out
            }
            Layer::Conv {
                in_channels,
                out_channels,
                kernel,
                weights,
                bias,
            } => {
                let s = x.shape();
                let pad = (kernel / 2) as isize;
                let xs = x.as_slice();
                let mut out = Tensor::zeros(out_shape);
                let os = out.as_mut_slice();
                for r in 0..s.height {
                    for c in 0..s.width {
                        let base = (r * s.width + c) * out_channels;
                        os[base..base + out_channels].copy_from_slice(bias);
                        for ky in 0..*kernel {
                            let rr = r as isize + ky as isize - pad;
                            if rr < 0 || rr >= s.height as isize {
                                continue;
                            }
                            for kx in 0..*kernel {
                                let cc = c as isize + kx as isize - pad;
                                if cc < 0 || cc >= s.width as isize {
                                    continue;
                                }
                                let src = s.index(rr as usize, cc as usize, 0);
                                let patch = &xs[src..src + in_channels];
                                for o in 0..*out_channels {
                                    let w0 = ((o * kernel + ky) * kernel + kx) * in_channels;
                                    let wv = &weights[w0..w0 + in_channels];
                                    let acc = wv
                                        .iter()
                                        .zip(patch)
                                        .fold(T::zero(), |a, (&w, &v)| a + w * v);
                                    os[base + o] = os[base + o] + acc;
                                }
                            }
                        }
                    }
                }
                out
            }
            Layer::Act(act) => x.map(|v| act.apply(v)),
            Layer::AvgPool { size } => {
                let s = x.shape();
                let inv = T::one() / T::of_usize(size * size);
                let mut out = Tensor::zeros(out_shape);
                for r in 0..s.height {
                    for c in 0..s.width {
                        for ch in 0..s.channels {
                            let (pr, pc) = (r / size, c / size);
                            let prev = out.get(pr, pc, ch);
                            out.set(pr, pc, ch, prev + x.get(r, c, ch) * inv);
                        }
                    }
                }
                out
            }
        }
    }

    /// Propagates `cot_out` to the layer input; accumulates parameter gradients into
    /// `grads` (weights then bias) when given.
    fn backward(
        &self,
        x: &Tensor<T>,
        cot_out: &[T],
        grads: Option<(&mut [T], &mut [T])>,
    ) -> Tensor<T> {
        let s = x.shape();
        let mut cot_in = Tensor::zeros(s);
        match self {
            Layer::Dense {
                inputs,
                outputs,
                weights,
                ..
            } => {
                let ci = cot_in.as_mut_slice();
                for o in 0..*outputs {
                    let g = cot_out[o];
                    if g == T::zero() {
                        continue;
                    }
                    let row = &weights[o * inputs..(o + 1) * inputs];
                    for (slot, &w) in ci.iter_mut().zip(row) {
                        *slot = *slot + w * g;
                    }
                }
                if let Some((gw, gb)) = grads {
                    let xs = x.as_slice();
                    for o in 0..*outputs {
                        let g = cot_out[o];
                        gb[o] = gb[o] + g;
                        for (slot, &v) in gw[o * inputs..(o + 1) * inputs].iter_mut().zip(xs) {
                            *slot = *slot + g * v;
                        }
                    }
                }
            }
            Layer::Conv {
                in_channels,
                out_channels,
                kernel,
                weights,
                ..
            } => {
                let pad = (kernel / 2) as isize;
                let xs = x.as_slice();
                let ci = cot_in.as_mut_slice();
                let mut grads = grads;
                for r in 0..s.height {
                    for c in 0..s.width {
                        let base = (r * s.width + c) * out_channels;
                        let go = &cot_out[base..base + out_channels];
                        if let Some((_, gb)) = grads.as_mut() {
                            for o in 0..*out_channels {
                                gb[o] = gb[o] + go[o];
                            }
                        }
                        for ky in 0..*kernel {
                            let rr = r as isize + ky as isize - pad;
                            if rr < 0 || rr >= s.height as isize {
                                continue;
                            }
                            for kx in 0..*kernel {
                                let cc = c as isize + kx as isize - pad;
                                if cc < 0 || cc >= s.width as isize {
                                    continue;
                                }
                                let src = s.index(rr as usize, cc as usize, 0);
                                for o in 0..*out_channels {
                                    let g = go[o];
                                    let w0 = ((o * kernel + ky) * kernel + kx) * in_channels;
                                    for i in 0..*in_channels {
                                        ci[src + i] = ci[src + i] + weights[w0 + i] * g;
                                    }
                                    if let Some((gw, _)) = grads.as_mut() {
                                        for i in 0..*in_channels {
                                            gw[w0 + i] = gw[w0 + i] + xs[src + i] * g;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Layer::Act(act) => {
                for ((slot, &v), &g) in cot_in.as_mut_slice().iter_mut().zip(x.as_slice()).zip(cot_out)
                {
                    *slot = act.derivative(v) * g;
                }
            }
            Layer::AvgPool { size } => {
                let inv = T::one() / T::of_usize(size * size);
                let out_w = s.width / size;
                for r in 0..s.height {
                    for c in 0..s.width {
                        for ch in 0..s.channels {
                            let g = cot_out[((r / size) * out_w + c / size) * s.channels + ch];
                            cot_in.set(r, c, ch, g * inv);
                        }
                    }
                }
            }
        }
        cot_in
    }
}

/// Small feed-forward classifier with analytic gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel<T> {
    architecture: Architecture,
    activation: Activation,
    head: Head,
    input_shape: Shape,
    num_classes: usize,
    layers: Vec<Layer<T>>,
    shapes: Vec<Shape>,
}

impl<T: Scalar> ToyModel<T> {
    /// Validates that the layers chain from `input_shape` to `num_classes` scores.
    pub fn from_layers(
        architecture: Architecture,
        activation: Activation,
        head: Head,
        input_shape: Shape,
        num_classes: usize,
        layers: Vec<Layer<T>>,
    ) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::invalid("model needs at least one class"));
        }
        if input_shape.is_empty() {
            return Err(Error::invalid("model input shape is empty"));
        }
        let mut shapes = vec![input_shape];
        for layer in &layers {
            let next = layer.output_shape(*shapes.last().unwrap())?;
            shapes.push(next);
            if let Some((w, b)) = layer.parameters() {
                if w.iter().chain(b).any(|v| !v.is_finite()) {
                    return Err(Error::invalid("model parameters must be finite"));
                }
            }
        }
        let out = *shapes.last().unwrap();
        if out.len() != num_classes {
            return Err(Error::invalid(format!(
                "layers produce {} outputs, expected {num_classes}",
                out.len()
            )));
        }
        Ok(Self {
            architecture,
            activation,
            head,
            input_shape,
            num_classes,
            layers,
            shapes,
        })
    }

    fn dense_from_rows(input_shape: Shape, rows: Vec<Vec<T>>, bias: Vec<T>) -> Result<Layer<T>> {
        let inputs = input_shape.len();
        if rows.iter().any(|r| r.len() != inputs) {
            return Err(Error::invalid(format!("weight rows must have {inputs} entries")));
        }
        Ok(Layer::Dense {
            inputs,
            outputs: rows.len(),
            weights: rows.into_iter().flatten().collect(),
            bias,
        })
    }

    /// Linear scores `s_c(x) = w_c · x + b_c` with an identity head.
    pub fn linear(input_shape: Shape, rows: Vec<Vec<T>>, bias: Vec<T>) -> Result<Self> {
        let classes = rows.len();
        let layer = Self::dense_from_rows(input_shape, rows, bias)?;
        Self::from_layers(
            Architecture::Linear,
            Activation::Softplus,
            Head::Identity,
            input_shape,
            classes,
            vec![layer],
        )
    }

    /// Linear scores followed by softmax.
    pub fn softmax_regression(input_shape: Shape, rows: Vec<Vec<T>>, bias: Vec<T>) -> Result<Self> {
        let classes = rows.len();
        let layer = Self::dense_from_rows(input_shape, rows, bias)?;
        Self::from_layers(
            Architecture::SoftmaxRegression,
            Activation::Softplus,
            Head::Softmax,
            input_shape,
            classes,
            vec![layer],
        )
    }

    /// Randomly initialized multilayer perceptron.
    pub fn random_mlp(
        input_shape: Shape,
        hidden: &[usize],
        num_classes: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut layers = Vec::new();
        let mut width = input_shape.len();
        for &h in hidden {
            layers.push(random_dense(width, h, rng));
            layers.push(Layer::Act(activation));
            width = h;
        }
        layers.push(random_dense(width, num_classes, rng));
        Self::from_layers(
            Architecture::Mlp,
            activation,
            Head::Softmax,
            input_shape,
            num_classes,
            layers,
        )
    }

    /// Randomly initialized conv → activation → average pool → dense network.
    pub fn random_tiny_cnn(
        input_shape: Shape,
        conv_channels: usize,
        pool: usize,
        num_classes: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let kernel = 3;
        let fan_in = kernel * kernel * input_shape.channels;
        let fan_out = kernel * kernel * conv_channels;
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let conv = Layer::Conv {
            in_channels: input_shape.channels,
            out_channels: conv_channels,
            kernel,
            weights: (0..conv_channels * fan_in)
                .map(|_| T::of(rng.gen_range(-limit..limit)))
                .collect(),
            bias: vec![T::zero(); conv_channels],
        };
        if pool == 0 || input_shape.height % pool != 0 || input_shape.width % pool != 0 {
            return Err(Error::invalid(format!("pool size {pool} does not divide {input_shape}")));
        }
        let pooled = (input_shape.height / pool) * (input_shape.width / pool) * conv_channels;
        let layers = vec![
            conv,
            Layer::Act(activation),
            Layer::AvgPool { size: pool },
            random_dense(pooled, num_classes, rng),
        ];
        Self::from_layers(
            Architecture::TinyCnn,
            activation,
            Head::Softmax,
            input_shape,
            num_classes,
            layers,
        )
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    /// Same parameters with a different output head.
    pub fn with_head(mut self, head: Head) -> Self {
        self.head = head;
        self
    }

    /// Activations entering each layer, followed by the final scores.
    fn tape(&self, x: &Tensor<T>) -> Vec<Tensor<T>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for (layer, &shape) in self.layers.iter().zip(&self.shapes[1..]) {
            let next = layer.forward(acts.last().unwrap(), shape);
            acts.push(next);
        }
        acts
    }

    fn check_shape(&self, x: &Tensor<T>) -> Result<()> {
        if x.shape() != self.input_shape {
            return Err(Error::invalid(format!(
                "input shape {} does not match model input {}",
                x.shape(),
                self.input_shape
            )));
        }
        Ok(())
    }

    /// Backpropagates `cot` through the recorded tape. With `param_grads`, parameter
    /// gradients are accumulated per layer.
    fn backprop(
        &self,
        tape: &[Tensor<T>],
        cot: &[T],
        mut param_grads: Option<&mut [(Vec<T>, Vec<T>)]>,
    ) -> Tensor<T> {
        let mut cot = cot.to_vec();
        let mut result = None;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let grads = match (param_grads.as_deref_mut(), layer.parameters()) {
                (Some(g), Some(_)) => {
                    let (w, b) = &mut g[i];
                    Some((w.as_mut_slice(), b.as_mut_slice()))
                }
                _ => None,
            };
            let next = layer.backward(&tape[i], &cot, grads);
            if i == 0 {
                result = Some(next);
                break;
            }
            cot = next.into_vec();
        }
        result.unwrap_or_else(|| Tensor::zeros(self.input_shape))
    }

    /// Cross-entropy loss of one sample and gradients for every parameter block.
    pub(crate) fn loss_and_grads(
        &self,
        x: &Tensor<T>,
        label: usize,
        grads: &mut [(Vec<T>, Vec<T>)],
    ) -> T {
        let tape = self.tape(x);
        let logits = tape.last().unwrap().as_slice();
        let p = super::softmax(logits);
        let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<T>().ln();
        let loss = lse - logits[label];
        let cot: Vec<T> = p
            .iter()
            .enumerate()
            .map(|(k, &pk)| if k == label { pk - T::one() } else { pk })
            .collect();
        self.backprop(&tape, &cot, Some(grads));
        loss
    }

    /// Zeroed gradient buffers matching each layer's parameters.
    pub(crate) fn zero_grads(&self) -> Vec<(Vec<T>, Vec<T>)> {
        self.layers
            .iter()
            .map(|l| match l.parameters() {
                Some((w, b)) => (vec![T::zero(); w.len()], vec![T::zero(); b.len()]),
                None => (Vec::new(), Vec::new()),
            })
            .collect()
    }
}

fn random_dense<T: Scalar>(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Layer<T> {
    let limit = (6.0 / (inputs + outputs) as f64).sqrt();
    Layer::Dense {
        inputs,
        outputs,
        weights: (0..inputs * outputs)
            .map(|_| T::of(rng.gen_range(-limit..limit)))
            .collect(),
        bias: vec![T::zero(); outputs],
    }
}

impl<T: Scalar> GradientOracle<T> for ToyModel<T> {
    fn input_shape(&self) -> Shape {
        self.input_shape
    }

    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn head(&self) -> Head {
        self.head
    }

    fn logits(&self, x: &Tensor<T>) -> Result<Vec<T>> {
        self.check_shape(x)?;
        let mut cur = x.clone();
        for (layer, &shape) in self.layers.iter().zip(&self.shapes[1..]) {
            cur = layer.forward(&cur, shape);
        }
        Ok(cur.into_vec())
    }

    fn logits_vjp(&self, x: &Tensor<T>, cotangent: &[T]) -> Result<Tensor<T>> {
        self.check_shape(x)?;
        if cotangent.len() != self.num_classes {
            return Err(Error::invalid("cotangent length must equal class count"));
        }
        let tape = self.tape(x);
        Ok(self.backprop(&tape, cotangent, None))
    }

    fn value_and_gradient(&self, x: &Tensor<T>, class: usize) -> Result<(T, Tensor<T>)> {
        self.check_input(x, class)?;
        let tape = self.tape(x);
        let (value, cot) = head_cotangent(self.head, tape.last().unwrap().as_slice(), class);
        Ok((value, self.backprop(&tape, &cot, None)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::finite_diff_gradient;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_image(shape: Shape, rng: &mut impl Rng) -> Tensor<f64> {
        Tensor::from_fn(shape, |_, _, _| rng.gen::<f64>())
    }

    #[test]
    fn symmetric_linear_softmax_at_zero_is_half() {
        let m = ToyModel::softmax_regression(
            Shape::new(1, 2, 1),
            vec![vec![1.0, -1.0], vec![-1.0, 1.0]],
            vec![0.0, 0.0],
        )
        .unwrap();
        let x = Tensor::zeros(Shape::new(1, 2, 1));
        assert_eq!(m.value(&x, 0).unwrap(), 0.5);
    }

    #[test]
    fn linear_gradient_is_weight_row() {
        let m = ToyModel::linear(Shape::new(1, 2, 1), vec![vec![2.0, -1.0]], vec![0.3]).unwrap();
        let x = Tensor::from_vec(vec![0.4, 0.9]).unwrap();
        assert_eq!(m.gradient(&x, 0).unwrap().as_slice(), &[2.0, -1.0]);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let shape = Shape::new(4, 4, 2);
        let mlp = ToyModel::random_mlp(shape, &[8], 3, Activation::Softplus, &mut rng).unwrap();
        let cnn = ToyModel::random_tiny_cnn(shape, 3, 2, 3, Activation::Relu, &mut rng).unwrap();
        for _ in 0..50 {
            let x = rand_image(shape, &mut rng);
            for m in [&mlp, &cnn] {
                let p = m.probabilities(&x).unwrap();
                assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let shape = Shape::new(3, 3, 2);
        let m = ToyModel::random_mlp(shape, &[6, 5], 4, Activation::Softplus, &mut rng).unwrap();
        for _ in 0..5 {
            let x = rand_image(shape, &mut rng);
            for c in 0..4 {
                let g = m.gradient(&x, c).unwrap();
                let fd = finite_diff_gradient(&m, &x, c, 1e-5).unwrap();
                let err = crate::models::max_relative_error(&g, &fd, 1e-12).unwrap();
                assert!(err <= 1e-5, "rel err {err}");
            }
        }
    }

    #[test]
    fn cnn_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let shape = Shape::new(4, 6, 2);
        let m = ToyModel::random_tiny_cnn(shape, 3, 2, 3, Activation::Softplus, &mut rng).unwrap();
        let x = rand_image(shape, &mut rng);
        let g = m.gradient(&x, 1).unwrap();
        let fd = finite_diff_gradient(&m, &x, 1, 1e-5).unwrap();
        assert!(crate::models::max_relative_error(&g, &fd, 1e-12).unwrap() <= 1e-5);
    }

    #[test]
    fn dead_feature_has_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let shape = Shape::new(1, 5, 1);
        let mut m = ToyModel::random_mlp(shape, &[4], 2, Activation::Softplus, &mut rng).unwrap();
        if let Layer::Dense { weights, inputs, outputs, .. } = &mut m.layers_mut()[0] {
            for o in 0..*outputs {
                weights[o * *inputs + 2] = 0.0;
            }
        }
        for _ in 0..10 {
            let x = rand_image(shape, &mut rng);
            assert_eq!(m.gradient(&x, 0).unwrap().as_slice()[2], 0.0);
        }
    }

    #[test]
    fn rejects_shape_mismatch_and_bad_class() {
        let m = ToyModel::linear(Shape::new(1, 2, 1), vec![vec![1.0, 1.0]], vec![0.0]).unwrap();
        let bad = Tensor::<f64>::zeros(Shape::new(2, 1, 1));
        assert!(m.value(&bad, 0).is_err());
        assert!(m.gradient(&bad, 0).is_err());
        let ok = Tensor::<f64>::zeros(Shape::new(1, 2, 1));
        assert!(m.value(&ok, 1).is_err());
    }

    #[test]
    fn rejects_broken_layer_chain() {
        let layers = vec![Layer::Dense {
            inputs: 3,
            outputs: 2,
            weights: vec![0.0f64; 6],
            bias: vec![0.0; 2],
        }];
        assert!(ToyModel::from_layers(
            Architecture::Mlp,
            Activation::Softplus,
            Head::Softmax,
            Shape::new(1, 4, 1),
            2,
            layers
        )
        .is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let shape = Shape::new(4, 4, 1);
        let m = ToyModel::random_tiny_cnn(shape, 2, 2, 2, Activation::Softplus, &mut rng).unwrap();
        let x = rand_image(shape, &mut rng);
        let a = m.value_and_gradient(&x, 1).unwrap();
        let b = m.value_and_gradient(&x, 1).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn f32_model_tracks_f64() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shape = Shape::new(2, 2, 1);
        let m64 = ToyModel::<f64>::random_mlp(shape, &[3], 2, Activation::Softplus, &mut rng).unwrap();
        let m32 = ToyModel::<f32>::from_weights(&m64.to_weights()).unwrap();
        let x = Tensor::from_fn(shape, |r, c, _| (r + c) as f64 * 0.25);
        let v64 = m64.value(&x, 0).unwrap();
        let v32 = m32.value(&x.cast(), 0).unwrap();
        assert!((v64 - v32 as f64).abs() < 1e-6);
    }
}
