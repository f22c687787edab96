use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cli::config::{ModeKind, PluginKind};
use crate::counters::CounterSnapshot;
use crate::error::{Error, Result};
use crate::gbdt::{accuracy, log_loss, Forest, Node, TrainParams};

pub const REPORT_FORMAT: &str = "fedxgb-report";
pub const REPORT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub train_log_loss: f64,
    pub train_accuracy: f64,
    pub validation_log_loss: Option<f64>,
    pub validation_accuracy: Option<f64>,
}

impl Metrics {
    pub fn score(labels: &[f64], probs: &[f64]) -> (f64, f64) {
        (log_loss(labels, probs), accuracy(labels, probs))
    }
}

/// Phase wall times in seconds.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub cuts: f64,
    pub gradient: f64,
    pub encrypt: f64,
    pub aggregate: f64,
    pub decrypt: f64,
    pub split: f64,
    pub total: f64,
}

impl From<&crate::federation::PhaseTimings> for Timings {
    fn from(t: &crate::federation::PhaseTimings) -> Self {
        Timings {
            cuts: t.cuts.as_secs_f64(),
            gradient: t.gradient.as_secs_f64(),
            encrypt: t.encrypt.as_secs_f64(),
            aggregate: t.aggregate.as_secs_f64(),
            decrypt: t.decrypt.as_secs_f64(),
            split: t.split.as_secs_f64(),
            total: t.total().as_secs_f64(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format: String,
    pub version: u32,
    pub mode: ModeKind,
    pub plugin: PluginKind,
    pub key_bits: Option<u64>,
    pub parties: usize,
    pub rows: usize,
    pub features: usize,
    pub params: TrainParams,
    pub timings: Timings,
    pub counters: CounterSnapshot,
    pub round_counters: Vec<CounterSnapshot>,
    pub transcript_bytes: usize,
    pub fingerprint: String,
    pub metrics: Metrics,
    /// The trained forest in its text form.
    pub forest: String,
}

impl RunReport {
    pub fn forest(&self) -> Result<Forest> {
        Forest::from_text(&self.forest)
    }

    /// Everything except wall times, for determinism checks.
    pub fn without_timings(&self) -> RunReport {
        RunReport {
            timings: Timings::default(),
            ..self.clone()
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RunReport> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<RunReport> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::InvalidData(format!("report: {e}")))?;
        let format = value.get("format").and_then(|v| v.as_str());
        let version = value.get("version").and_then(|v| v.as_u64());
        if format != Some(REPORT_FORMAT) {
            return Err(Error::InvalidData(format!("not a run report (format {format:?})")));
        }
        if version != Some(REPORT_VERSION as u64) {
            return Err(Error::InvalidData(format!(
                "report version {version:?} does not match supported version {REPORT_VERSION}"
            )));
        }
        serde_json::from_value(value).map_err(|e| Error::InvalidData(format!("report: {e}")))
    }
}

/// Loads a forest from a run report or a forest text file.
pub fn load_forest_artifact(path: impl AsRef<Path>) -> Result<Forest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim_start().starts_with('{') {
        RunReport::from_json(&text)?.forest()
    } else {
        Forest::from_text(&text)
    }
}

/// One structural difference between two forests.
#[derive(Clone, Debug, PartialEq)]
pub enum ForestDiff {
    Header { field: &'static str, a: String, b: String },
    TreeCount { a: usize, b: usize },
    TreeWeight { tree: usize, a: f64, b: f64 },
    Topology { tree: usize, node: usize, reason: String },
    Feature { tree: usize, node: usize, a: String, b: String },
    Threshold { tree: usize, node: usize, feature: String, a: f64, b: f64 },
    LeafWeight { tree: usize, node: usize, a: f64, b: f64 },
}

impl std::fmt::Display for ForestDiff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ForestDiff::Header { field, a, b } => write!(f, "forest {field}: {a} vs {b}"),
            ForestDiff::TreeCount { a, b } => write!(f, "tree count: {a} vs {b}"),
            ForestDiff::TreeWeight { tree, a, b } => write!(f, "tree {tree} weight: {a} vs {b}"),
            ForestDiff::Topology { tree, node, reason } => {
                write!(f, "tree {tree} node {node} topology: {reason}")
            }
            ForestDiff::Feature { tree, node, a, b } => {
                write!(f, "tree {tree} node {node} feature: {a} vs {b}")
            }
            ForestDiff::Threshold {
                tree,
                node,
                feature,
                a,
                b,
            } => write!(f, "tree {tree} node {node} cut on {feature}: {a} vs {b}"),
            ForestDiff::LeafWeight { tree, node, a, b } => {
                write!(f, "tree {tree} node {node} leaf: {a} vs {b} (|diff| {:e})", (a - b).abs())
            }
        }
    }
}

/// Tree-by-tree diff. Thresholds must match exactly; leaf weights may differ
/// by up to `leaf_tolerance`. Subtrees under a topology mismatch are skipped.
pub fn diff_forests(a: &Forest, b: &Forest, leaf_tolerance: f64) -> Vec<ForestDiff> {
    let mut out = Vec::new();
    for (field, x, y) in [
        ("base_score", a.base_score, b.base_score),
        ("learning_rate", a.learning_rate, b.learning_rate),
    ] {
        if x.to_bits() != y.to_bits() {
            out.push(ForestDiff::Header {
                field,
                a: x.to_string(),
                b: y.to_string(),
            });
        }
    }
    if a.trees.len() != b.trees.len() {
        out.push(ForestDiff::TreeCount {
            a: a.trees.len(),
            b: b.trees.len(),
        });
    }
    for (t, (ta, tb)) in a.trees.iter().zip(&b.trees).enumerate() {
        if ta.weight.to_bits() != tb.weight.to_bits() {
            out.push(ForestDiff::TreeWeight {
                tree: t,
                a: ta.weight,
                b: tb.weight,
            });
        }
        let mut stack = vec![(0usize, 0usize)];
        while let Some((ia, ib)) = stack.pop() {
            let (Some(na), Some(nb)) = (ta.nodes.get(ia), tb.nodes.get(ib)) else {
                out.push(ForestDiff::Topology {
                    tree: t,
                    node: ia,
                    reason: "missing node".into(),
                });
                continue;
            };
            match (&na.node, &nb.node) {
                (
                    Node::Split {
                        feature: fa,
                        threshold: xa,
                        left: la,
                        right: ra,
                    },
                    Node::Split {
                        feature: fb,
                        threshold: xb,
                        left: lb,
                        right: rb,
                    },
                ) => {
                    if fa != fb {
                        out.push(ForestDiff::Feature {
                            tree: t,
                            node: ia,
                            a: fa.clone(),
                            b: fb.clone(),
                        });
                    } else if xa.to_bits() != xb.to_bits() {
                        out.push(ForestDiff::Threshold {
                            tree: t,
                            node: ia,
                            feature: fa.clone(),
                            a: *xa,
                            b: *xb,
                        });
                    }
                    stack.push((*ra, *rb));
                    stack.push((*la, *lb));
                }
                (Node::Leaf { weight: wa }, Node::Leaf { weight: wb }) => {
                    // Written this way so a NaN weight counts as a difference.
                    #[allow(clippy::neg_cmp_op_on_partial_ord)]
                    let differs = !((wa - wb).abs() <= leaf_tolerance);
                    if differs {
                        out.push(ForestDiff::LeafWeight {
                            tree: t,
                            node: ia,
                            a: *wa,
                            b: *wb,
                        });
                    }
                }
                (Node::Split { .. }, Node::Leaf { .. }) => out.push(ForestDiff::Topology {
                    tree: t,
                    node: ia,
                    reason: "split vs leaf".into(),
                }),
                (Node::Leaf { .. }, Node::Split { .. }) => out.push(ForestDiff::Topology {
                    tree: t,
                    node: ia,
                    reason: "leaf vs split".into(),
                }),
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbdt::{train_centralized, TrainParams};
    use crate::synthetic::SyntheticSpec;

    fn forest() -> Forest {
        let data = SyntheticSpec::new(80, 3, 2).generate().unwrap();
        let params = TrainParams {
            num_trees: 2,
            max_depth: 2,
            max_bin: 8,
            ..TrainParams::default()
        };
        train_centralized(&data, &params).unwrap()
    }

    #[test]
    fn reflexive_and_tolerant() {
        let f = forest();
        assert!(diff_forests(&f, &f, 0.0).is_empty());
        let mut g = f.clone();
        for n in &mut g.trees[1].nodes {
            if let Node::Leaf { weight } = &mut n.node {
                *weight += 1e-12;
            }
        }
        assert!(diff_forests(&f, &g, 1e-9).is_empty());
        assert!(matches!(diff_forests(&f, &g, 0.0)[0], ForestDiff::LeafWeight { tree: 1, .. }));
    }

    #[test]
    fn threshold_and_count_differences() {
        let f = forest();
        let mut g = f.clone();
        if let Node::Split { threshold, .. } = &mut g.trees[0].nodes[0].node {
            *threshold += 0.5;
        }
        g.trees.pop();
        let d = diff_forests(&f, &g, 0.0);
        assert!(d.contains(&ForestDiff::TreeCount { a: 2, b: 1 }));
        assert!(d.iter().any(|x| matches!(x, ForestDiff::Threshold { tree: 0, node: 0, .. })));
        assert!(d.iter().any(|x| x.to_string().starts_with("tree 0 node 0 cut on")));
    }

    #[test]
    fn report_version_is_checked() {
        let text = format!(r#"{{"format":"{REPORT_FORMAT}","version":99}}"#);
        let err = RunReport::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("version"));
    }
}
