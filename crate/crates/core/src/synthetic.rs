//! Seeded synthetic binary-classification data with a controllable positive
//! rate, standing in for fraud-style tabular datasets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::DataMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_rows: usize,
    pub n_features: usize,
    #[serde(default = "default_positive_rate")]
    pub positive_rate: f64,
    #[serde(default)]
    pub seed: u64,
    /// Feature values are rounded to this many decimals, which produces ties.
    #[serde(default = "default_decimals")]
    pub decimals: u32,
}

fn default_positive_rate() -> f64 {
    0.2
}

fn default_decimals() -> u32 {
    3
}

impl SyntheticSpec {
    pub fn new(n_rows: usize, n_features: usize, seed: u64) -> Self {
        SyntheticSpec {
            n_rows,
            n_features,
            positive_rate: default_positive_rate(),
            seed,
            decimals: default_decimals(),
        }
    }

    pub fn with_positive_rate(mut self, rate: f64) -> Self {
        self.positive_rate = rate;
        self
    }

    pub fn generate(&self) -> Result<DataMatrix> {
        if self.n_rows == 0 || self.n_features == 0 {
            return Err(Error::InvalidParam(
                "synthetic data needs rows and features".into(),
            ));
        }
        if !(self.positive_rate > 0.0 && self.positive_rate < 1.0) {
            return Err(Error::InvalidParam(format!(
                "positive_rate must be in (0, 1), got {}",
                self.positive_rate
            )));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let scale = 10f64.powi(self.decimals as i32);

        let weights: Vec<f64> = (0..self.n_features)
            .map(|f| {
                // roughly half the features carry signal
                if f % 2 == 0 {
                    rng.gen_range(0.5..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }
                } else {
                    rng.gen_range(-0.2..0.2)
                }
            })
            .collect();

        let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(self.n_rows); self.n_features];
        let mut scores = Vec::with_capacity(self.n_rows);
        for _ in 0..self.n_rows {
            let mut score = 0.0;
            let mut row = Vec::with_capacity(self.n_features);
            for (f, w) in weights.iter().enumerate() {
                let raw: f64 = normal.sample(&mut rng) * (1.0 + f as f64 * 0.25);
                let v = (raw * scale).round() / scale;
                score += w * v;
                row.push(v);
            }
            if self.n_features > 1 {
                score += 0.75 * row[0] * row[1];
            }
            score += 0.5 * normal.sample(&mut rng);
            for (col, v) in columns.iter_mut().zip(row) {
                col.push(v);
            }
            scores.push(score);
        }

        // positives are the top `positive_rate` fraction of scores
        let mut order: Vec<usize> = (0..self.n_rows).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let n_pos =
            ((self.n_rows as f64 * self.positive_rate).round() as usize).clamp(1, self.n_rows);
        let mut label = vec![0.0; self.n_rows];
        for &i in &order[..n_pos] {
            label[i] = 1.0;
        }

        let names = (0..self.n_features).map(|f| format!("f{f}")).collect();
        DataMatrix::from_columns(names, columns, Some(label))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_imbalanced() {
        let spec = SyntheticSpec::new(500, 6, 11);
        let a = spec.generate().unwrap();
        let b = spec.generate().unwrap();
        assert_eq!(a, b);
        let pos: f64 = a.label().unwrap().iter().sum();
        assert_eq!(pos, 100.0);
        assert_ne!(a, SyntheticSpec::new(500, 6, 12).generate().unwrap());
    }
}
