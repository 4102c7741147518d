//! Dense H×W×C tensors, Gaussian blurring and the compression-size probe.
//!
//! Layout is row-major, channel-last: element `(row, col, ch)` lives at
//! `(row * width + col) * channels + ch`.

use std::io::Write;

use flate2::write::DeflateEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub const fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn pixels(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub const fn index(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.width + col) * self.channels + ch
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// Dense real-valued tensor. Values are finite; images nominally lie in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    /// Builds a tensor, rejecting length mismatches and non-finite values.
    pub fn new(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::invalid(format!(
                "data length {} does not match shape {shape}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at index {pos}")));
        }
        Ok(Self { shape, data })
    }

    pub fn filled(shape: Shape, value: T) -> Self {
        Self {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, T::zero())
    }

    /// Builds a tensor from a function of `(row, col, channel)`.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for r in 0..shape.height {
            for c in 0..shape.width {
                for ch in 0..shape.channels {
                    data.push(f(r, c, ch));
                }
            }
        }
        Self { shape, data }
    }

    /// Flat vector viewed as a `1×n×1` tensor.
    pub fn from_vec(data: Vec<T>) -> Result<Self> {
        Self::new(Shape::new(1, data.len(), 1), data)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> T {
        self.data[self.shape.index(row, col, ch)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: T) {
        let i = self.shape.index(row, col, ch);
        self.data[i] = value;
    }

    pub fn ensure_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::invalid(format!(
                "shape mismatch: {} vs {}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two equally shaped tensors.
    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.ensure_same_shape(other)?;
        Ok(Self {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    /// Hadamard product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| v * k)
    }

    /// `self += k * other`.
    pub fn axpy(&mut self, k: T, other: &Self) -> Result<()> {
        self.ensure_same_shape(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + k * b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        self.ensure_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b))
    }

    pub fn norm_sq(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v * v)
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    pub fn l1_distance(&self, other: &Self) -> Result<T> {
        self.ensure_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc + (a - b).abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.ensure_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs())))
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    pub fn mean(&self) -> T {
        if self.data.is_empty() {
            return T::zero();
        }
        self.sum() / T::of_usize(self.data.len())
    }

    /// Population variance over all elements.
    pub fn variance(&self) -> T {
        if self.data.is_empty() {
            return T::zero();
        }
        let mean = self.mean();
        self.data
            .iter()
            .fold(T::zero(), |acc, &v| acc + (v - mean) * (v - mean))
            / T::of_usize(self.data.len())
    }

    /// Converts the element type.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    /// Quantizes to 8-bit after clamping to `[0, 1]`.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }
}

#[inline]
pub(crate) fn quantize<T: Scalar>(v: T) -> u8 {
    let v = v.as_f64().clamp(0.0, 1.0);
    (v * 255.0).round() as u8
}

/// H×W boolean mask (true = positive / relevant pixel).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    values: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, values: Vec<bool>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::invalid(format!(
                "mask has {} values, expected {height}x{width}",
                values.len()
            )));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.values[row * self.width + col] = v;
    }

    /// Number of positive pixels.
    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }
}

/// Normalized square 2D Gaussian kernel of side `2 * radius + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel<T> {
    sigma: T,
    radius: usize,
    weights: Vec<T>,
    profile: Vec<T>,
}

impl<T: Scalar> GaussianKernel<T> {
    /// Builds the kernel. The 2D weights are the outer product of a normalized 1D profile,
    /// so blurring separably with the profile is the same convolution.
    pub fn new(sigma: T, radius: usize) -> Result<Self> {
        if !(sigma > T::zero()) || !sigma.is_finite() {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        if radius == 0 {
            return Err(Error::invalid("kernel radius must be at least 1"));
        }
        let profile = gaussian_profile(sigma, radius);
        let side = 2 * radius + 1;
        let mut weights = Vec::with_capacity(side * side);
        for &a in &profile {
            for &b in &profile {
                weights.push(a * b);
            }
        }
        let total: T = weights.iter().copied().sum();
        for w in &mut weights {
            *w = *w / total;
        }
        Ok(Self {
            sigma,
            radius,
            weights,
            profile,
        })
    }

    /// Kernel with the default truncation radius `ceil(3 * sigma)`.
    pub fn with_default_radius(sigma: T) -> Result<Self> {
        Self::new(sigma, default_radius(sigma))
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    /// Row-major `side × side` weights.
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weight(&self, dy: usize, dx: usize) -> T {
        self.weights[dy * self.side() + dx]
    }

    /// Normalized 1D profile used for separable convolution.
    pub fn profile(&self) -> &[T] {
        &self.profile
    }

    /// Variance parameter of the kernel written as `exp(-(u²+v²)/alpha)`.
    pub fn alpha(&self) -> T {
        T::of(2.0) * self.sigma * self.sigma
    }
}

pub(crate) fn default_radius<T: Scalar>(sigma: T) -> usize {
    ((T::of(3.0) * sigma).ceil().as_f64() as usize).max(1)
}

fn gaussian_profile<T: Scalar>(sigma: T, radius: usize) -> Vec<T> {
    let denom = T::of(2.0) * sigma * sigma;
    let r = radius as isize;
    let raw: Vec<T> = (-r..=r)
        .map(|i| {
            let d = T::of(i as f64);
            (-(d * d) / denom).exp()
        })
        .collect();
    let total: T = raw.iter().copied().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Index into `0..n` for an arbitrary offset, mirroring about the edges without
/// repeating the edge sample (`d c b | a b c d | c b a`).
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Gaussian blur with the default radius `ceil(3 * sigma)`; `sigma == 0` returns a copy.
pub fn blur<T: Scalar>(x: &Tensor<T>, sigma: T) -> Result<Tensor<T>> {
    if sigma < T::zero() || !sigma.is_finite() {
        return Err(Error::invalid(format!("blur sigma must be >= 0, got {sigma}")));
    }
    if sigma == T::zero() {
        return Ok(x.clone());
    }
    let kernel = GaussianKernel::with_default_radius(sigma)?;
    Ok(convolve_separable(x, &kernel))
}

/// Gaussian blur with an explicit truncation radius.
pub fn blur_with_radius<T: Scalar>(x: &Tensor<T>, sigma: T, radius: usize) -> Result<Tensor<T>> {
    let kernel = GaussianKernel::new(sigma, radius)?;
    Ok(convolve_separable(x, &kernel))
}

/// Separable convolution with reflect padding, applied per channel.
pub fn convolve_separable<T: Scalar>(x: &Tensor<T>, kernel: &GaussianKernel<T>) -> Tensor<T> {
    let shape = x.shape();
    let (h, w, ch) = (shape.height, shape.width, shape.channels);
    let profile = kernel.profile();
    let r = kernel.radius() as isize;

    let col_idx: Vec<Vec<usize>> = (0..w as isize)
        .map(|c| (-r..=r).map(|k| reflect_index(c + k, w)).collect())
        .collect();
    let row_idx: Vec<Vec<usize>> = (0..h as isize)
        .map(|rr| (-r..=r).map(|k| reflect_index(rr + k, h)).collect())
        .collect();

    let src = x.as_slice();
    let mut tmp = vec![T::zero(); shape.len()];
    for row in 0..h {
        for col in 0..w {
            for c in 0..ch {
                let mut acc = T::zero();
                for (wk, &cc) in profile.iter().zip(&col_idx[col]) {
                    acc = acc + *wk * src[shape.index(row, cc, c)];
                }
                tmp[shape.index(row, col, c)] = acc;
            }
        }
    }
    let mut out = vec![T::zero(); shape.len()];
    for row in 0..h {
        for col in 0..w {
            for c in 0..ch {
                let mut acc = T::zero();
                for (wk, &rr) in profile.iter().zip(&row_idx[row]) {
                    acc = acc + *wk * tmp[shape.index(rr, col, c)];
                }
                out[shape.index(row, col, c)] = acc;
            }
        }
    }
    Tensor { shape, data: out }
}

/// Byte length of the DEFLATE stream of the 8-bit quantized pixels.
pub fn compressed_size<T: Scalar>(x: &Tensor<T>) -> usize {
    let mut enc = DeflateEncoder::new(Vec::new(), Compression::best());
    enc.write_all(&x.to_u8())
        .expect("writing to an in-memory buffer cannot fail");
    enc.finish()
        .expect("finishing an in-memory deflate stream cannot fail")
        .len()
}
