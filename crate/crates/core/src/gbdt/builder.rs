use crate::dataset::{BinCuts, BinnedMatrix, DataMatrix};
use crate::error::{Error, Result};
use crate::gbdt::histogram::{build_histogram, GHSum, Histogram};
use crate::gbdt::split::{find_best_split, leaf_weight, SplitDecision};
use crate::gbdt::tree::{Forest, Node, Tree, TreeNode};
use crate::gbdt::{compute_gradients, GHPair, TrainParams};

/// A node expressed in bin space: `feature` is an index into the histogram's
/// feature order and rows with `bin <= cut_index` go left.
#[derive(Clone, Debug, PartialEq)]
pub enum StructNode {
    Split {
        feature: usize,
        cut_index: usize,
        left: usize,
        right: usize,
    },
    Leaf {
        weight: f64,
    },
}

/// `nodes[id] = (depth, node)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeStructure {
    pub nodes: Vec<(usize, StructNode)>,
}

impl TreeStructure {
    /// Replaces bin-space splits with named features and real thresholds.
    pub fn materialize(&self, feature_names: &[String], cuts: &BinCuts) -> Result<Tree> {
        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .map(|(id, (depth, node))| {
                let node = match *node {
                    StructNode::Split {
                        feature,
                        cut_index,
                        left,
                        right,
                    } => {
                        let threshold = *cuts
                            .per_feature
                            .get(feature)
                            .and_then(|c| c.get(cut_index))
                            .ok_or_else(|| {
                                Error::InvalidData(format!(
                                    "no cut {cut_index} for feature {feature}"
                                ))
                            })?;
                        Node::Split {
                            feature: feature_names[feature].clone(),
                            threshold,
                            left,
                            right,
                        }
                    }
                    StructNode::Leaf { weight } => Node::Leaf { weight },
                };
                Ok(TreeNode {
                    id,
                    depth: *depth,
                    node,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Tree { weight: 1.0, nodes })
    }
}

/// A node waiting for its histogram.
#[derive(Clone, Debug, PartialEq)]
pub struct PendingNode {
    pub id: usize,
    pub depth: usize,
    pub rows: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeafAssignment {
    pub id: usize,
    pub rows: Vec<usize>,
    pub weight: f64,
}

/// Level-order tree growth driven from outside.
///
/// Each step the caller supplies one histogram per [`frontier`](Self::frontier)
/// node, plus a partition callback that says which of a node's rows go left
/// under a chosen split. Where those come from (local bins, a federation of
/// parties, decrypted ciphertexts) is the caller's business; split selection
/// and node numbering are identical everywhere.
#[derive(Debug)]
pub struct TreeGrower {
    params: TrainParams,
    nodes: Vec<Option<(usize, StructNode)>>,
    frontier: Vec<PendingNode>,
    leaves: Vec<LeafAssignment>,
}

impl TreeGrower {
    pub fn new(params: &TrainParams, rows: Vec<usize>) -> Self {
        TreeGrower {
            params: params.clone(),
            nodes: vec![None],
            frontier: vec![PendingNode {
                id: 0,
                depth: 0,
                rows,
            }],
            leaves: Vec::new(),
        }
    }

    pub fn frontier(&self) -> &[PendingNode] {
        &self.frontier
    }

    pub fn is_done(&self) -> bool {
        self.frontier.is_empty()
    }

    /// Decides every frontier node. Returns `(node_id, split)` in frontier
    /// order; `None` means the node became a leaf.
    pub fn expand<F>(
        &mut self,
        histograms: &[Histogram],
        mut partition: F,
    ) -> Result<Vec<(usize, Option<SplitDecision>)>>
    where
        F: FnMut(&PendingNode, &SplitDecision) -> Result<Vec<bool>>,
    {
        if histograms.len() != self.frontier.len() {
            return Err(Error::LengthMismatch {
                expected: self.frontier.len(),
                actual: histograms.len(),
            });
        }
        let frontier = std::mem::take(&mut self.frontier);
        let mut decisions = Vec::with_capacity(frontier.len());
        for (pending, hist) in frontier.into_iter().zip(histograms) {
            if hist.n_features() == 0 {
                return Err(Error::InvalidData("histogram has no features".into()));
            }
            let total = hist.feature_total(0);
            let decision = find_best_split(hist, total, &self.params);
            match decision {
                None => self.make_leaf(pending.id, pending.depth, pending.rows, total)?,
                Some(split) => {
                    let goes_left = partition(&pending, &split)?;
                    if goes_left.len() != pending.rows.len() {
                        return Err(Error::LengthMismatch {
                            expected: pending.rows.len(),
                            actual: goes_left.len(),
                        });
                    }
                    let (mut left_rows, mut right_rows) = (Vec::new(), Vec::new());
                    for (&row, &left) in pending.rows.iter().zip(&goes_left) {
                        if left {
                            left_rows.push(row);
                        } else {
                            right_rows.push(row);
                        }
                    }
                    let left_id = self.nodes.len();
                    let right_id = left_id + 1;
                    self.nodes.push(None);
                    self.nodes.push(None);
                    self.nodes[pending.id] = Some((
                        pending.depth,
                        StructNode::Split {
                            feature: split.feature,
                            cut_index: split.cut_index,
                            left: left_id,
                            right: right_id,
                        },
                    ));
                    let depth = pending.depth + 1;
                    for (id, rows, sum) in [
                        (left_id, left_rows, split.left),
                        (right_id, right_rows, split.right),
                    ] {
                        if depth < self.params.max_depth {
                            self.frontier.push(PendingNode { id, depth, rows });
                        } else {
                            self.make_leaf(id, depth, rows, sum)?;
                        }
                    }
                }
            }
            decisions.push((pending.id, decision));
        }
        Ok(decisions)
    }

    fn make_leaf(&mut self, id: usize, depth: usize, rows: Vec<usize>, total: GHSum) -> Result<()> {
        let weight = leaf_weight(total.g_f64(), total.h_f64(), self.params.lambda)?;
        self.nodes[id] = Some((depth, StructNode::Leaf { weight }));
        self.leaves.push(LeafAssignment { id, rows, weight });
        Ok(())
    }

    pub fn finish(self) -> Result<(TreeStructure, Vec<LeafAssignment>)> {
        if !self.frontier.is_empty() {
            return Err(Error::InvalidData("tree growth is not finished".into()));
        }
        let nodes = self
            .nodes
            .into_iter()
            .map(|n| n.ok_or_else(|| Error::InvalidData("undecided node".into())))
            .collect::<Result<_>>()?;
        Ok((TreeStructure { nodes }, self.leaves))
    }
}

/// Boosts trees on one party's complete local data.
#[derive(Debug)]
pub struct LocalBooster<'a> {
    data: &'a DataMatrix,
    labels: &'a [f64],
    cuts: BinCuts,
    binned: BinnedMatrix,
    params: TrainParams,
}

impl<'a> LocalBooster<'a> {
    /// Cuts are computed from `data` alone.
    pub fn new(data: &'a DataMatrix, params: &TrainParams) -> Result<Self> {
        params.validate()?;
        let cuts = BinCuts::compute(data, params.max_bin)?;
        Self::with_cuts(data, cuts, params)
    }

    pub fn with_cuts(data: &'a DataMatrix, cuts: BinCuts, params: &TrainParams) -> Result<Self> {
        params.validate()?;
        let labels = data
            .label()
            .ok_or_else(|| Error::InvalidData("training data has no label".into()))?;
        if data.n_features() == 0 {
            return Err(Error::InvalidData("training data has no features".into()));
        }
        let binned = BinnedMatrix::new(data, &cuts)?;
        Ok(LocalBooster {
            data,
            labels,
            cuts,
            binned,
            params: params.clone(),
        })
    }

    pub fn cuts(&self) -> &BinCuts {
        &self.cuts
    }

    pub fn binned(&self) -> &BinnedMatrix {
        &self.binned
    }

    /// Gradients at the current raw scores of `forest`.
    pub fn gradients(&self, forest: &Forest, raw_scores: &[f64]) -> Result<Vec<GHPair>> {
        let probs: Vec<f64> = raw_scores.iter().map(|&s| forest.probability(s)).collect();
        compute_gradients(self.labels, &probs)
    }

    /// Grows one tree against the given gradients.
    pub fn grow_tree(&self, gh: &[GHPair]) -> Result<(Tree, Vec<LeafAssignment>)> {
        let mut grower = TreeGrower::new(&self.params, (0..self.data.n_rows()).collect());
        while !grower.is_done() {
            let hists = grower
                .frontier()
                .iter()
                .map(|p| build_histogram(&self.binned, gh, &p.rows))
                .collect::<Result<Vec<_>>>()?;
            grower.expand(&hists, |node, split| {
                let bins = &self.binned.bins[split.feature];
                Ok(node
                    .rows
                    .iter()
                    .map(|&r| bins[r] as usize <= split.cut_index)
                    .collect())
            })?;
        }
        let (structure, leaves) = grower.finish()?;
        let tree = structure.materialize(self.data.feature_names(), &self.cuts)?;
        Ok((tree, leaves))
    }

    /// Appends `n_trees` trees to `forest`, starting from its current scores
    /// on the local data.
    pub fn boost(&self, forest: &mut Forest, n_trees: usize) -> Result<()> {
        let mut raw = forest.raw_scores(self.data)?;
        for _ in 0..n_trees {
            let gh = self.gradients(forest, &raw)?;
            let (tree, leaves) = self.grow_tree(&gh)?;
            for leaf in &leaves {
                for &r in &leaf.rows {
                    raw[r] += tree.weight * leaf.weight;
                }
            }
            forest.trees.push(tree);
        }
        Ok(())
    }
}

/// Plain histogram boosting on a single labelled matrix.
pub fn train_centralized(data: &DataMatrix, params: &TrainParams) -> Result<Forest> {
    let booster = LocalBooster::new(data, params)?;
    let mut forest = Forest::new(params);
    booster.boost(&mut forest, params.num_trees)?;
    Ok(forest)
}
