//! Accuracy and softmax information curves (AIC / SIC).
//!
//! Each image yields a family of bokeh images: a heavily blurred copy with the top
//! `k%` most important pixels restored. Every bokeh is placed on an information axis
//! (compression ratio or MS-SSIM against the original) and the per-bin accuracy or
//! median probability ratio forms the curve. [`bokeh_records`] produces the raw points
//! for one image so that a dataset can be pooled before binning with
//! [`information_curves`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ssim::{msssim, MsSsimOptions};
use super::{top_count, CurveReport, PixelImportance};
use crate::error::{Error, Result};
use crate::models::GradientOracle;
use crate::scalar::Scalar;
use crate::tensor::{blur_with_radius, compressed_size, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfoLevel {
    /// Compressed size of the bokeh over that of the original.
    Entropy,
    /// MS-SSIM between bokeh and original.
    Msssim,
}

impl InfoLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            InfoLevel::Entropy => "entropy",
            InfoLevel::Msssim => "msssim",
        }
    }
}

impl fmt::Display for InfoLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InfoLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entropy" => Ok(InfoLevel::Entropy),
            "msssim" => Ok(InfoLevel::Msssim),
            other => Err(Error::invalid(format!(
                "unknown information level {other:?} (expected entropy or msssim)"
            ))),
        }
    }
}

/// Unclipped compression ratio of `bokeh` against `original`.
pub fn normalized_entropy_raw<T: Scalar>(bokeh: &Tensor<T>, original: &Tensor<T>) -> Result<f64> {
    bokeh.ensure_same_shape(original)?;
    let reference = compressed_size(original);
    Ok(compressed_size(bokeh) as f64 / reference as f64)
}

/// Compression ratio clipped to `[0, 1]`.
pub fn normalized_entropy<T: Scalar>(bokeh: &Tensor<T>, original: &Tensor<T>) -> Result<f64> {
    Ok(normalized_entropy_raw(bokeh, original)?.min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AicSicOptions {
    /// Number of restore percentages, evenly spaced over 0..=100.
    pub thresholds: usize,
    pub bins: usize,
    pub info: InfoLevel,
    pub blur_sigma: f64,
    pub blur_radius: usize,
    pub msssim: MsSsimOptions,
}

impl Default for AicSicOptions {
    fn default() -> Self {
        Self {
            thresholds: 25,
            bins: 100,
            info: InfoLevel::Msssim,
            blur_sigma: 20.0 / 3.0,
            blur_radius: 20,
            msssim: MsSsimOptions::default(),
        }
    }
}

impl AicSicOptions {
    fn validate(&self) -> Result<()> {
        if self.thresholds < 2 {
            return Err(Error::invalid("AIC/SIC needs at least 2 thresholds"));
        }
        if self.bins < 2 {
            return Err(Error::invalid("AIC/SIC needs at least 2 bins"));
        }
        Ok(())
    }
}

/// One bokeh image reduced to what the curves need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BokehRecord {
    /// Percentage of pixels restored.
    pub threshold: f64,
    pub info_level: f64,
    pub correct: bool,
    /// `f_c(bokeh) / f_c(x)` clamped to `[0, 1]`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BokehSet {
    pub records: Vec<BokehRecord>,
    /// Bokehs whose compression ratio exceeded 1 before clipping.
    pub clipped_entropy: usize,
    /// MS-SSIM scales actually used, when fewer than requested.
    pub msssim_levels: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AicSicReport {
    pub aic: CurveReport,
    pub sic: CurveReport,
    pub clipped_entropy: usize,
    pub msssim_levels: Option<usize>,
}

/// Builds and scores the bokeh images for one input.
pub fn bokeh_records<T: Scalar, M: GradientOracle<T> + ?Sized>(
    model: &M,
    class: usize,
    x: &Tensor<T>,
    importance: &PixelImportance<T>,
    options: &AicSicOptions,
) -> Result<BokehSet> {
    options.validate()?;
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

    let base = blur_with_radius(x, T::of(options.blur_sigma), options.blur_radius)?;
    let order = importance.ranking();
    let mut set = BokehSet {
        records: Vec::with_capacity(options.thresholds),
        clipped_entropy: 0,
        msssim_levels: None,
    };
    let last = (options.thresholds - 1) as f64;
    for k in 0..options.thresholds {
        let threshold = 100.0 * k as f64 / last;
        let mut bokeh = base.clone();
        for &p in &order[..top_count(threshold / 100.0, s.pixels())] {
            let (r, c) = (p / s.width, p % s.width);
            for ch in 0..s.channels {
                bokeh.set(r, c, ch, x.get(r, c, ch));
            }
        }
        let info_level = match options.info {
            InfoLevel::Entropy => {
                let raw = normalized_entropy_raw(&bokeh, x)?;
                if raw > 1.0 {
                    set.clipped_entropy += 1;
                }
                raw.min(1.0)
            }
            InfoLevel::Msssim => {
                let m = msssim(&bokeh, x, options.msssim)?;
                if m.levels_used < options.msssim.levels {
                    set.msssim_levels = Some(m.levels_used);
                }
                m.value
            }
        };
        let value = model.value(&bokeh, class)?.as_f64();
        let predicted = model.predict(&bokeh)?;
        set.records.push(BokehRecord {
            threshold,
            info_level,
            correct: predicted == class,
            ratio: (value / full).clamp(0.0, 1.0),
        });
    }
    Ok(set)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Fills empty bins linearly between occupied neighbors and holds the end values.
fn fill_gaps(ys: &[Option<f64>]) -> Vec<f64> {
    let occupied: Vec<usize> = (0..ys.len()).filter(|&i| ys[i].is_some()).collect();
    (0..ys.len())
        .map(|i| {
            if let Some(v) = ys[i] {
                return v;
            }
            let next = occupied.partition_point(|&o| o < i);
            match (next.checked_sub(1).map(|p| occupied[p]), occupied.get(next)) {
                (Some(a), Some(&b)) => {
                    let (ya, yb) = (ys[a].unwrap(), ys[b].unwrap());
                    ya + (yb - ya) * (i - a) as f64 / (b - a) as f64
                }
                (Some(a), None) => ys[a].unwrap(),
                (None, Some(&b)) => ys[b].unwrap(),
                (None, None) => 0.0,
            }
        })
        .collect()
}

/// Bins pooled bokeh records into `bins` equal-width information levels and returns
/// the accuracy (AIC) and median-ratio (SIC) curves, sampled at bin centers.
pub fn information_curves(records: &[BokehRecord], bins: usize) -> Result<(CurveReport, CurveReport)> {
    if bins < 2 {
        return Err(Error::invalid("information curves need at least 2 bins"));
    }
    if records.is_empty() {
        return Err(Error::invalid("no bokeh records to bin"));
    }
    let mut buckets: Vec<Vec<&BokehRecord>> = vec![Vec::new(); bins];
    for r in records {
        if !r.info_level.is_finite() {
            return Err(Error::invalid("information level is not finite"));
        }
        let b = ((r.info_level.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        buckets[b].push(r);
    }
    let occupied = buckets.iter().filter(|b| !b.is_empty()).count();
    let acc: Vec<Option<f64>> = buckets
        .iter()
        .map(|b| {
            (!b.is_empty())
                .then(|| b.iter().filter(|r| r.correct).count() as f64 / b.len() as f64)
        })
        .collect();
    let med: Vec<Option<f64>> = buckets
        .iter()
        .map(|b| {
            (!b.is_empty()).then(|| median(&mut b.iter().map(|r| r.ratio).collect::<Vec<_>>()))
        })
        .collect();
    let xs: Vec<f64> = (0..bins).map(|b| (b as f64 + 0.5) / bins as f64).collect();
    let mut aic = CurveReport::new(xs.clone(), fill_gaps(&acc))?;
    let mut sic = CurveReport::new(xs, fill_gaps(&med))?;
    aic.bins_occupied = Some(occupied);
    sic.bins_occupied = Some(occupied);
    Ok((aic, sic))
}

/// AIC and SIC curves for a single image.
pub fn aic_sic<T: Scalar, M: GradientOracle<T> + ?Sized>(
    model: &M,
    class: usize,
    x: &Tensor<T>,
    importance: &PixelImportance<T>,
    options: &AicSicOptions,
) -> Result<AicSicReport> {
    let set = bokeh_records(model, class, x, importance, options)?;
    let (aic, sic) = information_curves(&set.records, options.bins)?;
    Ok(AicSicReport {
        aic,
        sic,
        clipped_entropy: set.clipped_entropy,
        msssim_levels: set.msssim_levels,
    })
}
