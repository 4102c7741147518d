//! Saliency evaluation: insertion curves, accuracy/softmax information curves,
//! MS-SSIM and localization against a ground-truth mask.

mod information;
mod insertion;
mod localization;
mod ssim;

pub use information::{
    aic_sic, bokeh_records, information_curves, normalized_entropy, normalized_entropy_raw,
    AicSicOptions, AicSicReport, BokehRecord, BokehSet, InfoLevel,
};
pub use insertion::{insertion_curve, InsertionReport, DEFAULT_INSERTION_STEP};
pub use localization::{localization, roc_auc, LocalizationScore, DEFAULT_THRESHOLD_LEVELS};
pub use ssim::{msssim, ssim, MsSsim, MsSsimOptions, MSSSIM_WEIGHTS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrators::Attribution;
use crate::scalar::Scalar;

/// Sampled curve with its normalized trapezoid area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub auc: f64,
    /// Occupied information-level bins (AIC/SIC curves only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins_occupied: Option<usize>,
}

impl CurveReport {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let auc = trapezoid_auc(&xs, &ys)?;
        Ok(Self {
            xs,
            ys,
            auc,
            bins_occupied: None,
        })
    }

    /// `x,y` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y\n");
        for (x, y) in self.xs.iter().zip(&self.ys) {
            out.push_str(&format!("{x},{y}\n"));
        }
        out
    }
}

/// Trapezoid area divided by the x-span, so a constant curve scores its constant.
pub fn trapezoid_auc(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("curve xs and ys differ in length"));
    }
    if xs.len() < 2 {
        return Err(Error::invalid("curve needs at least two points"));
    }
    if xs.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::invalid("curve xs must be ascending"));
    }
    let span = xs[xs.len() - 1] - xs[0];
    if !(span > 0.0) {
        return Err(Error::invalid("curve xs span no interval"));
    }
    let area: f64 = xs
        .windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum();
    Ok(area / span)
}

/// Per-pixel importance: the attribution summed over channels.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelImportance<T> {
    height: usize,
    width: usize,
    values: Vec<T>,
}

impl<T: Scalar> PixelImportance<T> {
    pub fn new(height: usize, width: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::invalid("importance size does not match its shape"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("importance values must be finite"));
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

    /// Signed channel sums, row-major.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Pixel indices from most to least important; ties keep index order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.values.len()).collect();
        order.sort_by(|&a, &b| self.values[b].partial_cmp(&self.values[a]).unwrap());
        order
    }

    /// Values shifted so the minimum is 0.
    pub fn shifted(&self) -> Vec<T> {
        let lo = self.values.iter().copied().fold(T::infinity(), T::min);
        self.values.iter().map(|&v| v - lo).collect()
    }

    /// Min-max scaled to `[0, 1]`; a constant map scales to all zeros.
    pub fn normalized(&self) -> Vec<T> {
        let shifted = self.shifted();
        let hi = shifted.iter().copied().fold(T::zero(), T::max);
        if hi == T::zero() {
            return vec![T::zero(); shifted.len()];
        }
        shifted.into_iter().map(|v| v / hi).collect()
    }
}

/// Reduces an attribution to per-pixel importance by summing channels.
pub fn pixel_importance<T: Scalar>(a: &Attribution<T>) -> PixelImportance<T> {
    let s = a.values.shape();
    let values = a
        .values
        .as_slice()
        .chunks(s.channels.max(1))
        .map(|px| px.iter().fold(T::zero(), |acc, &v| acc + v))
        .collect();
    PixelImportance {
        height: s.height,
        width: s.width,
        values,
    }
}

/// Number of pixels restored when keeping the top `fraction` of `pixels`.
pub(crate) fn top_count(fraction: f64, pixels: usize) -> usize {
    ((fraction * pixels as f64).round() as usize).min(pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrators::Method;
    use crate::tensor::{Shape, Tensor};

    fn attr(values: Tensor<f64>) -> Attribution<f64> {
        Attribution {
            values,
            method: Method::Ig,
            idgi: false,
            steps: 1,
            baseline: "black".into(),
            class: 0,
            degenerate_steps: 0,
        }
    }

    #[test]
    fn trapezoid_cases() {
        assert_eq!(trapezoid_auc(&[0.0, 1.0], &[0.0, 1.0]).unwrap(), 0.5);
        assert_eq!(trapezoid_auc(&[0.0, 0.3, 1.0], &[0.7, 0.7, 0.7]).unwrap(), 0.7);
        assert_eq!(trapezoid_auc(&[0.0, 0.5, 1.0], &[0.0, 1.0, 0.0]).unwrap(), 0.5);
        assert!(trapezoid_auc(&[0.0], &[1.0]).is_err());
        assert!(trapezoid_auc(&[1.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn importance_sums_channels() {
        let mut v = Tensor::zeros(Shape::new(1, 2, 3));
        v.set(0, 1, 0, 0.2);
        v.set(0, 1, 1, 0.3);
        v.set(0, 1, 2, -0.1);
        let imp = pixel_importance(&attr(v));
        assert!((imp.values()[1] - 0.4).abs() < 1e-15);
        assert_eq!(imp.values()[0], 0.0);
    }

    #[test]
    fn single_channel_importance_is_identity() {
        let v = Tensor::from_vec(vec![0.5, -1.0, 2.0]).unwrap();
        let imp = pixel_importance(&attr(v.clone()));
        assert_eq!(imp.values(), v.as_slice());
    }

    #[test]
    fn constant_importance_ties() {
        let imp = pixel_importance(&attr(Tensor::filled(Shape::new(2, 2, 3), 0.3)));
        assert!(imp.values().windows(2).all(|w| w[0] == w[1]));
        assert_eq!(imp.ranking(), vec![0, 1, 2, 3]);
        assert!(imp.normalized().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ranking_descends() {
        let imp = PixelImportance::new(1, 4, vec![0.1, 0.9, -0.5, 0.9]).unwrap();
        assert_eq!(imp.ranking(), vec![1, 3, 0, 2]);
        assert_eq!(imp.shifted()[2], 0.0);
    }
}
