use std::ops::{Add, Sub};

use crate::dataset::BinnedMatrix;
use crate::error::{Error, Result};
use crate::gbdt::GHPair;

/// Fractional bits of the fixed-point grid histogram sums live on.
///
/// Gradients are rounded to this grid once, and all accumulation is exact
/// integer arithmetic. Sums therefore do not depend on accumulation order,
/// and a histogram summed under encryption decodes to the same bits as one
/// summed in the clear.
pub const FIXED_SCALE_BITS: u32 = 40;

const SCALE: f64 = (1u64 << FIXED_SCALE_BITS) as f64;

#[inline]
pub fn quantize(x: f64) -> i128 {
    (x * SCALE).round() as i128
}

#[inline]
pub(crate) fn dequantize(raw: i128) -> f64 {
    raw as f64 / SCALE
}

/// Fixed-point (G, H) sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct GHSum {
    pub g: i128,
    pub h: i128,
}

impl GHSum {
    pub fn new(g: i128, h: i128) -> Self {
        GHSum { g, h }
    }

    pub fn from_pair(pair: GHPair) -> Self {
        GHSum::new(quantize(pair.g), quantize(pair.h))
    }

    pub fn g_f64(&self) -> f64 {
        dequantize(self.g)
    }

    pub fn h_f64(&self) -> f64 {
        dequantize(self.h)
    }
}

impl Add for GHSum {
    type Output = GHSum;
    fn add(self, rhs: GHSum) -> GHSum {
        GHSum::new(self.g + rhs.g, self.h + rhs.h)
    }
}

impl Sub for GHSum {
    type Output = GHSum;
    fn sub(self, rhs: GHSum) -> GHSum {
        GHSum::new(self.g - rhs.g, self.h - rhs.h)
    }
}

/// Per-feature, per-bin (G, H) accumulators for one tree node.
///
/// Storage is a dense `n_features x width` grid; feature `f` uses the first
/// `feature_bins[f]` slots and the rest stay zero. A fixed width keeps wire
/// shapes independent of how many bins each feature happens to have.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Histogram {
    feature_bins: Vec<usize>,
    width: usize,
    g: Vec<i128>,
    h: Vec<i128>,
}

impl Histogram {
    pub fn zeros(feature_bins: Vec<usize>, width: usize) -> Self {
        assert!(
            feature_bins.iter().all(|&b| b <= width),
            "feature bin count exceeds histogram width"
        );
        let len = feature_bins.len() * width;
        Histogram {
            feature_bins,
            width,
            g: vec![0; len],
            h: vec![0; len],
        }
    }

    pub fn from_raw(
        feature_bins: Vec<usize>,
        width: usize,
        g: Vec<i128>,
        h: Vec<i128>,
    ) -> Result<Self> {
        let len = feature_bins.len() * width;
        if g.len() != len || h.len() != len {
            return Err(Error::LengthMismatch {
                expected: len,
                actual: g.len().min(h.len()),
            });
        }
        if let Some(f) = feature_bins.iter().position(|&b| b > width) {
            return Err(Error::InvalidData(format!(
                "feature {f} has {} bins, wider than {width}",
                feature_bins[f]
            )));
        }
        Ok(Histogram {
            feature_bins,
            width,
            g,
            h,
        })
    }

    pub fn n_features(&self) -> usize {
        self.feature_bins.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn feature_bins(&self) -> &[usize] {
        &self.feature_bins
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.feature_bins[feature]
    }

    pub fn raw_g(&self) -> &[i128] {
        &self.g
    }

    pub fn raw_h(&self) -> &[i128] {
        &self.h
    }

    #[inline]
    pub fn slot(&self, feature: usize, bin: usize) -> GHSum {
        let i = feature * self.width + bin;
        GHSum::new(self.g[i], self.h[i])
    }

    /// Slot sums as reals.
    pub fn get(&self, feature: usize, bin: usize) -> (f64, f64) {
        let s = self.slot(feature, bin);
        (s.g_f64(), s.h_f64())
    }

    #[inline]
    pub fn accumulate(&mut self, feature: usize, bin: usize, v: GHSum) {
        let i = feature * self.width + bin;
        self.g[i] += v.g;
        self.h[i] += v.h;
    }

    pub fn feature_total(&self, feature: usize) -> GHSum {
        let start = feature * self.width;
        let end = start + self.width;
        GHSum::new(
            self.g[start..end].iter().sum(),
            self.h[start..end].iter().sum(),
        )
    }

    pub fn occupied_bins(&self, feature: usize) -> usize {
        (0..self.width)
            .filter(|&b| self.slot(feature, b) != GHSum::default())
            .count()
    }

    pub fn same_shape(&self, other: &Histogram) -> bool {
        self.feature_bins == other.feature_bins && self.width == other.width
    }

    /// Element-wise sum in place.
    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::InvalidData("histogram shapes differ".into()));
        }
        for (a, b) in self.g.iter_mut().zip(&other.g) {
            *a += b;
        }
        for (a, b) in self.h.iter_mut().zip(&other.h) {
            *a += b;
        }
        Ok(())
    }

    /// Stacks feature blocks of several histograms, in order, at the widest width.
    pub fn concat_features(parts: &[Histogram]) -> Histogram {
        let width = parts.iter().map(|p| p.width).max().unwrap_or(1);
        let feature_bins: Vec<usize> = parts
            .iter()
            .flat_map(|p| p.feature_bins.iter().copied())
            .collect();
        let mut out = Histogram::zeros(feature_bins, width);
        let mut f_out = 0;
        for part in parts {
            for f in 0..part.n_features() {
                for b in 0..part.width {
                    let s = part.slot(f, b);
                    if s != GHSum::default() {
                        out.accumulate(f_out, b, s);
                    }
                }
                f_out += 1;
            }
        }
        out
    }
}

/// Accumulates the gradients of `rows` into a fresh histogram.
pub fn build_histogram(binned: &BinnedMatrix, gh: &[GHPair], rows: &[usize]) -> Result<Histogram> {
    let width = binned.n_bins.iter().copied().max().unwrap_or(1);
    build_histogram_with_width(binned, gh, rows, width)
}

pub(crate) fn build_histogram_with_width(
    binned: &BinnedMatrix,
    gh: &[GHPair],
    rows: &[usize],
    width: usize,
) -> Result<Histogram> {
    if gh.len() != binned.n_rows() && binned.n_features() > 0 {
        return Err(Error::LengthMismatch {
            expected: binned.n_rows(),
            actual: gh.len(),
        });
    }
    let fixed: Vec<GHSum> = rows
        .iter()
        .map(|&r| {
            gh.get(r)
                .map(|&p| GHSum::from_pair(p))
                .ok_or(Error::LengthMismatch {
                    expected: r + 1,
                    actual: gh.len(),
                })
        })
        .collect::<Result<_>>()?;
    let mut hist = Histogram::zeros(binned.n_bins.clone(), width);
    for (f, column) in binned.bins.iter().enumerate() {
        let n_bins = binned.n_bins[f];
        for (&r, &v) in rows.iter().zip(&fixed) {
            let bin = column[r] as usize;
            if bin >= n_bins {
                return Err(Error::BinOutOfRange {
                    feature: f,
                    bin,
                    n_bins,
                });
            }
            hist.accumulate(f, bin, v);
        }
    }
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binned(bins: Vec<Vec<u32>>, n_bins: Vec<usize>) -> BinnedMatrix {
        BinnedMatrix { bins, n_bins }
    }

    #[test]
    fn empty_rows_give_zero_histogram() {
        let m = binned(vec![vec![0, 1, 2]], vec![3]);
        let gh = vec![GHPair::new(1.0, 1.0); 3];
        let h = build_histogram(&m, &gh, &[]).unwrap();
        assert!(h.raw_g().iter().chain(h.raw_h()).all(|&x| x == 0));
    }

    #[test]
    fn singleton_lands_in_one_slot() {
        let m = binned(vec![vec![3]], vec![5]);
        let h = build_histogram(&m, &[GHPair::new(1.0, 2.0)], &[0]).unwrap();
        for b in 0..5 {
            let expect = if b == 3 { (1.0, 2.0) } else { (0.0, 0.0) };
            assert_eq!(h.get(0, b), expect);
        }
    }

    #[test]
    fn four_rows_two_bins_by_hand() {
        let m = binned(vec![vec![0, 1, 0, 1]], vec![2]);
        let gh = [
            GHPair::new(0.5, 0.25),
            GHPair::new(-0.25, 0.5),
            GHPair::new(-1.0, 0.125),
            GHPair::new(2.0, 1.0),
        ];
        let h = build_histogram(&m, &gh, &[0, 1, 2, 3]).unwrap();
        assert_eq!(h.get(0, 0), (0.5 - 1.0, 0.25 + 0.125));
        assert_eq!(h.get(0, 1), (-0.25 + 2.0, 0.5 + 1.0));
        // a subset only sees its own rows
        let h = build_histogram(&m, &gh, &[1, 2]).unwrap();
        assert_eq!(h.get(0, 0), (-1.0, 0.125));
        assert_eq!(h.get(0, 1), (-0.25, 0.5));
    }

    #[test]
    fn out_of_range_bin_is_rejected() {
        let m = binned(vec![vec![4]], vec![2]);
        let err = build_histogram(&m, &[GHPair::new(1.0, 1.0)], &[0]);
        assert!(matches!(err, Err(Error::BinOutOfRange { bin: 4, .. })));
    }

    #[test]
    fn concat_restrides() {
        let mut a = Histogram::zeros(vec![2], 2);
        a.accumulate(0, 1, GHSum::new(5, 6));
        let mut b = Histogram::zeros(vec![3, 1], 3);
        b.accumulate(0, 2, GHSum::new(7, 8));
        b.accumulate(1, 0, GHSum::new(1, 1));
        let c = Histogram::concat_features(&[a, b]);
        assert_eq!(c.width(), 3);
        assert_eq!(c.feature_bins(), &[2, 3, 1]);
        assert_eq!(c.slot(0, 1), GHSum::new(5, 6));
        assert_eq!(c.slot(1, 2), GHSum::new(7, 8));
        assert_eq!(c.slot(2, 0), GHSum::new(1, 1));
    }
}
