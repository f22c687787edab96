use crate::error::{Error, Result};
use crate::gbdt::histogram::{GHSum, Histogram};
use crate::gbdt::TrainParams;

/// The chosen cut for a node: rows with `bin <= cut_index` go left.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitDecision {
    pub feature: usize,
    pub cut_index: usize,
    pub gain: f64,
    pub left: GHSum,
    pub right: GHSum,
}

/// Structure score gain of splitting `left + right` into the two halves.
/// `None` when a side has no curvature to divide by.
pub fn split_gain(left: GHSum, right: GHSum, lambda: f64, gamma: f64) -> Option<f64> {
    let (gl, hl) = (left.g_f64(), left.h_f64());
    let (gr, hr) = (right.g_f64(), right.h_f64());
    let parent = left + right;
    let (g, h) = (parent.g_f64(), parent.h_f64());
    if hl + lambda <= 0.0 || hr + lambda <= 0.0 || h + lambda <= 0.0 {
        return None;
    }
    Some(0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda)) - gamma)
}

/// Scans prefix sums of every feature left to right and returns the cut with
/// the largest positive gain. Ties go to the lower feature, then the lower
/// cut, so federated runs pick exactly what a centralized run picks.
pub fn find_best_split(
    hist: &Histogram,
    total: GHSum,
    params: &TrainParams,
) -> Option<SplitDecision> {
    let mut best: Option<SplitDecision> = None;
    for f in 0..hist.n_features() {
        let n_cuts = hist.n_bins(f).saturating_sub(1);
        let mut left = GHSum::default();
        for cut in 0..n_cuts {
            left = left + hist.slot(f, cut);
            let right = total - left;
            let Some(gain) = split_gain(left, right, params.lambda, params.gamma) else {
                continue;
            };
            let current = best.map_or(0.0, |b| b.gain);
            if gain > current {
                best = Some(SplitDecision {
                    feature: f,
                    cut_index: cut,
                    gain,
                    left,
                    right,
                });
            }
        }
    }
    best
}

/// Optimal leaf value `-G / (H + lambda)`.
pub fn leaf_weight(g: f64, h: f64, lambda: f64) -> Result<f64> {
    let denom = h + lambda;
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::InvalidData(format!(
            "leaf weight undefined for H + lambda = {denom}"
        )));
    }
    Ok(-g / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbdt::quantize;

    fn sum(g: f64, h: f64) -> GHSum {
        GHSum::new(quantize(g), quantize(h))
    }

    fn params(lambda: f64, gamma: f64) -> TrainParams {
        TrainParams {
            lambda,
            gamma,
            ..TrainParams::default()
        }
    }

    #[test]
    fn two_bin_gain_by_hand() {
        let mut h = Histogram::zeros(vec![2], 2);
        h.accumulate(0, 0, sum(-4.0, 2.0));
        h.accumulate(0, 1, sum(4.0, 2.0));
        let s = find_best_split(&h, h.feature_total(0), &params(1.0, 0.0)).unwrap();
        assert_eq!((s.feature, s.cut_index), (0, 0));
        // 0.5 * (16/3 + 16/3 - 0/5)
        assert!((s.gain - 16.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_histogram_has_no_split() {
        let mut h = Histogram::zeros(vec![3], 3);
        h.accumulate(0, 1, sum(-2.0, 1.0));
        assert!(find_best_split(&h, h.feature_total(0), &params(1.0, 0.0)).is_none());
    }

    #[test]
    fn ties_go_to_lower_feature() {
        let mut h = Histogram::zeros(vec![2, 2], 2);
        for f in 0..2 {
            h.accumulate(f, 0, sum(-4.0, 2.0));
            h.accumulate(f, 1, sum(4.0, 2.0));
        }
        let s = find_best_split(&h, h.feature_total(0), &params(1.0, 0.0)).unwrap();
        assert_eq!(s.feature, 0);
    }

    #[test]
    fn gamma_can_suppress_a_split() {
        let mut h = Histogram::zeros(vec![2], 2);
        h.accumulate(0, 0, sum(-4.0, 2.0));
        h.accumulate(0, 1, sum(4.0, 2.0));
        assert!(find_best_split(&h, h.feature_total(0), &params(1.0, 6.0)).is_none());
    }

    #[test]
    fn leaf_weight_examples() {
        assert_eq!(leaf_weight(0.0, 3.0, 1.0).unwrap(), 0.0);
        assert!((leaf_weight(10.0, 5.0, 1.0).unwrap() + 10.0 / 6.0).abs() < 1e-12);
        assert_eq!(leaf_weight(-3.0, 0.0, 1.0).unwrap(), 3.0);
        assert!(leaf_weight(1.0, 0.0, 0.0).is_err());
    }
}
