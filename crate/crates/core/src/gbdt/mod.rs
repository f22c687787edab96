//! Histogram-based gradient boosting for binary logistic loss.
//!
//! The centralized trainer here is both a baseline and the shared machinery
//! every federated mode drives: [`TreeGrower`] owns level-order growth and
//! split selection, while callers decide where histograms come from.

mod builder;
mod histogram;
mod split;
mod tree;

pub use builder::{
    train_centralized, LeafAssignment, LocalBooster, PendingNode, StructNode, TreeGrower,
    TreeStructure,
};
pub use histogram::{build_histogram, quantize, GHSum, Histogram, FIXED_SCALE_BITS};
pub use split::{find_best_split, leaf_weight, split_gain, SplitDecision};
pub use tree::{Forest, Node, Tree, TreeNode};

pub(crate) use tree::{escape, fmt_f64, parse_record, unescape, validate_topology};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// First and second order gradient of the loss for one sample.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct GHPair {
    pub g: f64,
    pub h: f64,
}

impl GHPair {
    pub fn new(g: f64, h: f64) -> Self {
        GHPair { g, h }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    pub num_trees: usize,
    pub max_depth: usize,
    pub max_bin: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub base_score: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            num_trees: 10,
            max_depth: 5,
            max_bin: 256,
            learning_rate: 0.3,
            lambda: 1.0,
            gamma: 0.0,
            base_score: 0.5,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        if self.num_trees < 1 {
            return bad("num_trees must be >= 1".into());
        }
        if self.max_depth < 1 {
            return bad("max_depth must be >= 1".into());
        }
        if self.max_bin < 2 {
            return bad(format!("max_bin must be >= 2, got {}", self.max_bin));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            ));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return bad(format!("gamma must be >= 0, got {}", self.gamma));
        }
        if !(self.base_score > 0.0 && self.base_score < 1.0) {
            return bad(format!(
                "base_score must be in (0, 1), got {}",
                self.base_score
            ));
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Logistic-loss gradients: `g = p - y`, `h = p (1 - p)`.
pub fn compute_gradients(labels: &[f64], probabilities: &[f64]) -> Result<Vec<GHPair>> {
    if labels.len() != probabilities.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            actual: probabilities.len(),
        });
    }
    labels
        .iter()
        .zip(probabilities)
        .map(|(&y, &p)| {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidData(format!(
                    "probability {p} outside [0, 1]"
                )));
            }
            Ok(GHPair::new(p - y, p * (1.0 - p)))
        })
        .collect()
}

/// Mean binary log-loss, with probabilities clamped away from 0 and 1.
pub fn log_loss(labels: &[f64], probabilities: &[f64]) -> f64 {
    const EPS: f64 = 1e-15;
    let n = labels.len().max(1) as f64;
    labels
        .iter()
        .zip(probabilities)
        .map(|(&y, &p)| {
            let p = p.clamp(EPS, 1.0 - EPS);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / n
}

pub fn accuracy(labels: &[f64], probabilities: &[f64]) -> f64 {
    let hits = labels
        .iter()
        .zip(probabilities)
        .filter(|(&y, &p)| (p >= 0.5) == (y == 1.0))
        .count();
    hits as f64 / labels.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn gradient_examples() {
        let gh = compute_gradients(&[1.0, 0.0, 1.0], &[0.5, 0.5, 0.9]).unwrap();
        assert_eq!(gh[0], GHPair::new(-0.5, 0.25));
        assert_eq!(gh[1], GHPair::new(0.5, 0.25));
        assert!((gh[2].g + 0.1).abs() < 1e-12);
        assert!((gh[2].h - 0.09).abs() < 1e-12);
        assert!(compute_gradients(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        // loss as a function of the margin z: -(y ln s(z) + (1-y) ln(1 - s(z)))
        let loss = |y: f64, z: f64| {
            let p = sigmoid(z);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let eps = 1e-4;
        for _ in 0..10 {
            let y = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
            let p: f64 = rng.gen_range(0.05..0.95);
            let z = logit(p);
            let d1 = (loss(y, z + eps) - loss(y, z - eps)) / (2.0 * eps);
            let d2 = (loss(y, z + eps) - 2.0 * loss(y, z) + loss(y, z - eps)) / (eps * eps);
            let gh = compute_gradients(&[y], &[p]).unwrap()[0];
            assert!((gh.g - d1).abs() < 1e-6, "g {} vs {}", gh.g, d1);
            assert!((gh.h - d2).abs() < 1e-6, "h {} vs {}", gh.h, d2);
        }
    }

    #[test]
    fn params_validation() {
        assert!(TrainParams::default().validate().is_ok());
        let p = TrainParams {
            num_trees: 0,
            ..TrainParams::default()
        };
        assert!(p.validate().is_err());
        let p = TrainParams {
            max_bin: 1,
            ..TrainParams::default()
        };
        assert!(p.validate().is_err());
        let p = TrainParams {
            lambda: -1.0,
            ..TrainParams::default()
        };
        assert!(p.validate().is_err());
    }
}
