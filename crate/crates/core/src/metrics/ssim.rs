//! Structural similarity with a Gaussian window and its multi-scale product.
//!
//! Local statistics use "valid" filtering (no padding). Stabilizers assume a dynamic
//! range of 1: `C1 = 0.01²`, `C2 = 0.03²`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{GaussianKernel, Tensor};

const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Per-scale exponents for five scales, finest first.
pub const MSSSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

pub const DEFAULT_WINDOW_SIGMA: f64 = 1.5;

/// Filters one channel plane with a 1D profile along rows then columns, keeping only
/// positions where the window fits.
fn valid_filter(plane: &[f64], h: usize, w: usize, profile: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = profile.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut tmp = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            tmp[r * ow + c] = profile
                .iter()
                .enumerate()
                .map(|(i, &p)| p * plane[r * w + c + i])
                .sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = profile
                .iter()
                .enumerate()
                .map(|(i, &p)| p * tmp[(r + i) * ow + c])
                .sum();
        }
    }
    (out, oh, ow)
}

struct Planes {
    height: usize,
    width: usize,
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
}

impl Planes {
    fn new<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>) -> Self {
        let s = x.shape();
        let split = |t: &Tensor<T>| {
            (0..s.channels)
                .map(|ch| {
                    t.as_slice()
                        .iter()
                        .skip(ch)
                        .step_by(s.channels)
                        .map(|v| v.as_f64())
                        .collect()
                })
                .collect()
        };
        Self {
            height: s.height,
            width: s.width,
            x: split(x),
            y: split(y),
        }
    }

    /// 2×2 mean pooling, dropping an odd trailing row or column.
    fn downsample(&self) -> Self {
        let (h, w) = (self.height / 2, self.width / 2);
        let pool = |planes: &[Vec<f64>]| {
            planes
                .iter()
                .map(|p| {
                    let mut out = vec![0.0; h * w];
                    for r in 0..h {
                        for c in 0..w {
                            let a = p[(2 * r) * self.width + 2 * c];
                            let b = p[(2 * r) * self.width + 2 * c + 1];
                            let d = p[(2 * r + 1) * self.width + 2 * c];
                            let e = p[(2 * r + 1) * self.width + 2 * c + 1];
                            out[r * w + c] = (a + b + d + e) / 4.0;
                        }
                    }
                    out
                })
                .collect()
        };
        Self {
            height: h,
            width: w,
            x: pool(&self.x),
            y: pool(&self.y),
        }
    }

    /// Mean of `l·cs` and mean of `cs` over all valid windows and channels.
    fn stats(&self, profile: &[f64]) -> (f64, f64) {
        let (mut ssim_sum, mut cs_sum, mut count) = (0.0, 0.0, 0usize);
        let (h, w) = (self.height, self.width);
        for (px, py) in self.x.iter().zip(&self.y) {
            let xx: Vec<f64> = px.iter().map(|v| v * v).collect();
            let yy: Vec<f64> = py.iter().map(|v| v * v).collect();
            let xy: Vec<f64> = px.iter().zip(py).map(|(a, b)| a * b).collect();
            let (mx, oh, ow) = valid_filter(px, h, w, profile);
            let (my, ..) = valid_filter(py, h, w, profile);
            let (exx, ..) = valid_filter(&xx, h, w, profile);
            let (eyy, ..) = valid_filter(&yy, h, w, profile);
            let (exy, ..) = valid_filter(&xy, h, w, profile);
            for i in 0..oh * ow {
                let mxy = mx[i] * my[i];
                let vx = exx[i] - mx[i] * mx[i];
                let vy = eyy[i] - my[i] * my[i];
                let cov = exy[i] - mxy;
                let l = (2.0 * mxy + C1) / (mx[i] * mx[i] + my[i] * my[i] + C1);
                let cs = (2.0 * cov + C2) / (vx + vy + C2);
                ssim_sum += l * cs;
                cs_sum += cs;
            }
            count += oh * ow;
        }
        (ssim_sum / count as f64, cs_sum / count as f64)
    }
}

fn window_profile(sigma: f64) -> Result<Vec<f64>> {
    Ok(GaussianKernel::<f64>::with_default_radius(sigma)?.profile().to_vec())
}

/// Mean SSIM over all valid Gaussian windows and channels.
pub fn ssim<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>, window_sigma: f64) -> Result<f64> {
    x.ensure_same_shape(y)?;
    let profile = window_profile(window_sigma)?;
    let s = x.shape();
    if s.height < profile.len() || s.width < profile.len() || s.channels == 0 {
        return Err(Error::invalid(format!(
            "image {s} smaller than the {0}x{0} SSIM window",
            profile.len()
        )));
    }
    Ok(Planes::new(x, y).stats(&profile).0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsSsimOptions {
    pub levels: usize,
    pub window_sigma: f64,
    /// Use the largest level count the image supports instead of failing.
    pub auto_reduce: bool,
}

impl Default for MsSsimOptions {
    fn default() -> Self {
        Self {
            levels: 5,
            window_sigma: DEFAULT_WINDOW_SIGMA,
            auto_reduce: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsSsim {
    pub value: f64,
    pub levels_used: usize,
}

/// Multi-scale SSIM: contrast-structure at each scale, luminance at the coarsest, each
/// raised to its weight (weights renormalized when fewer than five scales are used),
/// with 2×2 mean-pool downsampling between scales. Clamped to `[0, 1]`.
pub fn msssim<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>, options: MsSsimOptions) -> Result<MsSsim> {
    x.ensure_same_shape(y)?;
    if options.levels == 0 || options.levels > MSSSIM_WEIGHTS.len() {
        return Err(Error::invalid(format!(
            "MS-SSIM levels must be in 1..={}",
            MSSSIM_WEIGHTS.len()
        )));
    }
    let profile = window_profile(options.window_sigma)?;
    let window = profile.len();
    let s = x.shape();
    let fits = |levels: usize| s.height.min(s.width) >= (1usize << (levels - 1)) * window;
    let levels = if fits(options.levels) {
        options.levels
    } else if options.auto_reduce {
        (1..options.levels)
            .rev()
            .find(|&l| fits(l))
            .ok_or_else(|| Error::invalid(format!("image {s} too small for MS-SSIM")))?
    } else {
        return Err(Error::invalid(format!(
            "image {s} too small for {} MS-SSIM levels",
            options.levels
        )));
    };
    if s.channels == 0 {
        return Err(Error::invalid("image has no channels"));
    }

    let weights = &MSSSIM_WEIGHTS[..levels];
    let total: f64 = weights.iter().sum();
    let mut planes = Planes::new(x, y);
    let mut value = 1.0;
    for (i, &w) in weights.iter().enumerate() {
        let (ssim_mean, cs_mean) = planes.stats(&profile);
        let term = if i + 1 == levels { ssim_mean } else { cs_mean };
        value *= term.max(0.0).powf(w / total);
        if i + 1 < levels {
            planes = planes.downsample();
        }
    }
    Ok(MsSsim {
        value: value.clamp(0.0, 1.0),
        levels_used: levels,
    })
}
