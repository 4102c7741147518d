use serde::{Deserialize, Serialize};

use super::PixelImportance;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::BinaryMask;

pub const DEFAULT_THRESHOLD_LEVELS: usize = 256;

/// Agreement between an importance map and a ground-truth mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationScore {
    pub f1: f64,
    pub roc_auc: f64,
    pub mae: f64,
    /// Threshold on min-max normalized importance that maximized F1.
    pub best_threshold: f64,
}

/// Area under the ROC curve from the Mann-Whitney U statistic, ties sharing the
/// average rank.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("scores must be finite"));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::invalid("ROC-AUC needs both positive and negative labels"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += rank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let p = positives as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64))
}

/// Scores `importance` against `mask`: ROC-AUC over raw values, best F1 over
/// `threshold_levels` evenly spaced cuts of the normalized map, and the pixel MAE of
/// that best binarization.
pub fn localization<T: Scalar>(
    importance: &PixelImportance<T>,
    mask: &BinaryMask,
    threshold_levels: usize,
) -> Result<LocalizationScore> {
    if importance.height() != mask.height() || importance.width() != mask.width() {
        return Err(Error::invalid("importance and mask shapes differ"));
    }
    if threshold_levels < 2 {
        return Err(Error::invalid("need at least 2 threshold levels"));
    }
    let labels = mask.values();
    let positives = mask.count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::invalid("mask must contain both foreground and background"));
    }
    let scores: Vec<f64> = importance.values().iter().map(|v| v.as_f64()).collect();
    let roc = roc_auc(&scores, labels)?;

    let normalized: Vec<f64> = importance.normalized().iter().map(|v| v.as_f64()).collect();
    let n = labels.len() as f64;
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for level in 0..threshold_levels {
        let t = level as f64 / (threshold_levels - 1) as f64;
        let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
        for (&v, &l) in normalized.iter().zip(labels) {
            match (v >= t, l) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                (false, false) => {}
            }
        }
        let f1 = 2.0 * tp as f64 / (2 * tp + fp + fneg) as f64;
        if f1 > best.0 {
            best = (f1, t, (fp + fneg) as f64 / n);
        }
    }
    Ok(LocalizationScore {
        f1: best.0,
        roc_auc: roc,
        mae: best.2,
        best_threshold: best.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn stripe_mask(h: usize, w: usize) -> BinaryMask {
        BinaryMask::new(h, w, (0..h * w).map(|i| (i % w) < w / 2).collect()).unwrap()
    }

    fn imp_from(mask: &BinaryMask, f: impl Fn(bool) -> f64) -> PixelImportance<f64> {
        PixelImportance::new(mask.height(), mask.width(), mask.values().iter().map(|&b| f(b)).collect())
            .unwrap()
    }

    #[test]
    fn perfect_map() {
        let mask = stripe_mask(6, 8);
        let s = localization(&imp_from(&mask, |b| b as u8 as f64), &mask, 256).unwrap();
        assert_eq!(s.f1, 1.0);
        assert_eq!(s.roc_auc, 1.0);
        assert_eq!(s.mae, 0.0);
    }

    #[test]
    fn anti_map() {
        let mask = stripe_mask(6, 8);
        let s = localization(&imp_from(&mask, |b| 1.0 - b as u8 as f64), &mask, 256).unwrap();
        assert_eq!(s.roc_auc, 0.0);
    }

    #[test]
    fn random_map_is_near_chance() {
        let mask = stripe_mask(25, 40);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let imp = PixelImportance::new(25, 40, (0..1000).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let auc = localization(&imp, &mask, 256).unwrap().roc_auc;
        assert!((0.45..=0.55).contains(&auc), "{auc}");
    }

    #[test]
    fn ties_share_rank() {
        assert_eq!(roc_auc(&[0.5, 0.5], &[true, false]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.1, 0.5, 0.5, 0.9], &[false, true, false, true]).unwrap(), 0.875);
    }

    #[test]
    fn single_class_mask_rejected() {
        let mask = BinaryMask::new(2, 2, vec![true; 4]).unwrap();
        let imp = PixelImportance::new(2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(localization(&imp, &mask, 256), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn constant_map_predicts_everything() {
        let mask = stripe_mask(4, 4);
        let s = localization(&imp_from(&mask, |_| 0.3), &mask, 256).unwrap();
        assert_eq!(s.roc_auc, 0.5);
        assert_eq!(s.mae, 0.5);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn auc_invariant_under_monotone_transform(
            values in prop::collection::vec(-5.0f64..5.0, 40),
            labels in prop::collection::vec(any::<bool>(), 40),
        ) {
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let a = roc_auc(&values, &labels).unwrap();
            let t: Vec<f64> = values.iter().map(|v| v.exp() * 3.0 + 1.0).collect();
            prop_assert!((a - roc_auc(&t, &labels).unwrap()).abs() <= 1e-12);
        }

        #[test]
        fn scores_in_range(
            values in prop::collection::vec(-5.0f64..5.0, 36),
            labels in prop::collection::vec(any::<bool>(), 36),
        ) {
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let mask = BinaryMask::new(6, 6, labels).unwrap();
            let imp = PixelImportance::new(6, 6, values.clone()).unwrap();
            let s = localization(&imp, &mask, 64).unwrap();
            prop_assert!((0.0..=1.0).contains(&s.f1));
            prop_assert!((0.0..=1.0).contains(&s.roc_auc));
            prop_assert!((0.0..=1.0).contains(&s.mae));
            let scaled = PixelImportance::new(6, 6, imp.normalized()).unwrap();
            let s2 = localization(&scaled, &mask, 64).unwrap();
            prop_assert_eq!(s.f1, s2.f1);
            prop_assert_eq!(s.mae, s2.mae);
        }
    }
}
