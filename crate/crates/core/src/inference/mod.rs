//! Partially saved vertical models and prediction across their owners.
//!
//! After vertical training each party keeps the shared tree shape but only
//! the split thresholds on its own features. Splits on other parties'
//! features record the owner's id and a `nan` threshold. Leaf values stay
//! with the label holder. Prediction asks each owner for left/right bits at
//! its nodes and lets the label holder walk the trees.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::counters::OpCounters;
use crate::dataset::{PartyShard, Role};
use crate::error::{Error, Result};
use crate::federation::{Endpoint, Transcript, Transport};
use crate::gbdt::{
    escape, fmt_f64, parse_record, unescape, validate_topology, Forest, Node, Tree, TreeNode,
};
use crate::processor::{
    process_inbound, process_outbound, CallKind, DirectionBits, Intent, PassthroughPlugin, Payload,
    TreeSync,
};

pub const PARTIAL_MAGIC: &str = "fedxgb-partial";
const PARTIAL_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub enum PartialNode {
    Split {
        owner: usize,
        /// Present only in the owner's model.
        feature: Option<String>,
        /// `NaN` unless this party owns the feature.
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Present only in the label holder's model.
        value: Option<f64>,
    },
}

// Masked thresholds are NaN, so equality compares them bitwise.
impl PartialEq for PartialNode {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (
                PartialNode::Split {
                    owner: o1,
                    feature: f1,
                    threshold: t1,
                    left: l1,
                    right: r1,
                },
                PartialNode::Split {
                    owner: o2,
                    feature: f2,
                    threshold: t2,
                    left: l2,
                    right: r2,
                },
            ) => o1 == o2 && f1 == f2 && t1.to_bits() == t2.to_bits() && l1 == l2 && r1 == r2,
            (PartialNode::Leaf { value: a }, PartialNode::Leaf { value: b }) => a == b,
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartialTreeNode {
    pub id: usize,
    pub depth: usize,
    pub node: PartialNode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartialTree {
    pub weight: f64,
    pub nodes: Vec<PartialTreeNode>,
}

/// One party's view of a vertically trained forest.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialModel {
    pub party_id: usize,
    pub role: Role,
    pub owned_features: Vec<String>,
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<PartialTree>,
}

impl PartialModel {
    /// Split nodes whose threshold this party holds, as `(tree, node)`.
    pub fn materialized_nodes(&self) -> BTreeSet<(usize, usize)> {
        let mut out = BTreeSet::new();
        for (t, tree) in self.trees.iter().enumerate() {
            for n in &tree.nodes {
                if let PartialNode::Split {
                    feature: Some(_), ..
                } = n.node
                {
                    out.insert((t, n.id));
                }
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{PARTIAL_MAGIC} version={PARTIAL_VERSION}").unwrap();
        let owned: Vec<String> = self.owned_features.iter().map(|f| escape(f)).collect();
        writeln!(
            out,
            "partial party={} role={} base_score={} learning_rate={} trees={} owned_features={}",
            self.party_id,
            self.role,
            fmt_f64(self.base_score),
            fmt_f64(self.learning_rate),
            self.trees.len(),
            owned.join(",")
        )
        .unwrap();
        for (t, tree) in self.trees.iter().enumerate() {
            writeln!(
                out,
                "tree index={t} weight={} nodes={}",
                fmt_f64(tree.weight),
                tree.nodes.len()
            )
            .unwrap();
            for n in &tree.nodes {
                write!(out, "node id={} depth={} ", n.id, n.depth).unwrap();
                match &n.node {
                    PartialNode::Split {
                        owner,
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        write!(out, "kind=split owner={owner} ").unwrap();
                        if let Some(f) = feature {
                            write!(out, "feature={} ", escape(f)).unwrap();
                        }
                        writeln!(
                            out,
                            "threshold={} left={left} right={right}",
                            fmt_f64(*threshold)
                        )
                        .unwrap();
                    }
                    PartialNode::Leaf { value } => {
                        writeln!(
                            out,
                            "kind=leaf value={}",
                            fmt_f64(value.unwrap_or(f64::NAN))
                        )
                        .unwrap();
                    }
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<PartialModel> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::ModelFormat {
                    line: 0,
                    reason: format!("missing {what} record"),
                })
                .map(|(ln, l)| (ln + 1, l))
        };
        let (ln, line) = next("header")?;
        let header = parse_record(ln, line)?;
        header.expect_kind(PARTIAL_MAGIC)?;
        let version: u32 = header.get("version")?;
        if version != PARTIAL_VERSION {
            return Err(header.error(format!("unsupported version {version}")));
        }
        let (ln, line) = next("partial")?;
        let rec = parse_record(ln, line)?;
        rec.expect_kind("partial")?;
        let role = match rec.get_str("role")? {
            "active" => Role::Active,
            "passive" => Role::Passive,
            other => return Err(rec.error(format!("role {other:?} cannot hold a partial model"))),
        };
        let owned = rec.get_str("owned_features")?;
        let mut model = PartialModel {
            party_id: rec.get("party")?,
            role,
            owned_features: if owned.is_empty() {
                Vec::new()
            } else {
                owned.split(',').map(unescape).collect()
            },
            base_score: rec.get("base_score")?,
            learning_rate: rec.get("learning_rate")?,
            trees: Vec::new(),
        };
        let n_trees: usize = rec.get("trees")?;
        for _ in 0..n_trees {
            let (ln, line) = next("tree")?;
            let rec = parse_record(ln, line)?;
            rec.expect_kind("tree")?;
            let n_nodes: usize = rec.get("nodes")?;
            let mut tree = PartialTree {
                weight: rec.get("weight")?,
                nodes: Vec::with_capacity(n_nodes.min(1 << 16)),
            };
            for i in 0..n_nodes {
                let (ln, line) = next("node")?;
                let rec = parse_record(ln, line)?;
                rec.expect_kind("node")?;
                let id: usize = rec.get("id")?;
                if id != i {
                    return Err(rec.error(format!("expected node id {i}, found {id}")));
                }
                let node = match rec.get_str("kind")? {
                    "split" => PartialNode::Split {
                        owner: rec.get("owner")?,
                        feature: if rec.has("feature") {
                            Some(unescape(rec.get_str("feature")?))
                        } else {
                            None
                        },
                        threshold: rec.get("threshold")?,
                        left: rec.get("left")?,
                        right: rec.get("right")?,
                    },
                    "leaf" => {
                        let v: f64 = rec.get("value")?;
                        PartialNode::Leaf {
                            value: (!v.is_nan()).then_some(v),
                        }
                    }
                    other => return Err(rec.error(format!("unknown node kind {other:?}"))),
                };
                tree.nodes.push(PartialTreeNode {
                    id,
                    depth: rec.get("depth")?,
                    node,
                });
            }
            validate_partial_tree(&tree)
                .map_err(|reason| Error::ModelFormat { line: ln, reason })?;
            model.trees.push(tree);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(Error::ModelFormat {
                line: ln + 1,
                reason: "trailing records".into(),
            });
        }
        model.check_self_consistent()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PartialModel> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PartialModel::from_text(&text)
    }

    /// Own nodes name owned features with real thresholds; foreign nodes
    /// carry neither; leaf values only at the label holder.
    fn check_self_consistent(&self) -> Result<()> {
        let owned: BTreeSet<&str> = self.owned_features.iter().map(String::as_str).collect();
        for (t, tree) in self.trees.iter().enumerate() {
            for n in &tree.nodes {
                let bad = |reason: String| {
                    Error::InvalidData(format!("tree {t} node {}: {reason}", n.id))
                };
                match &n.node {
                    PartialNode::Split {
                        owner,
                        feature,
                        threshold,
                        ..
                    } => match (owner == &self.party_id, feature) {
                        (true, Some(f)) if owned.contains(f.as_str()) && threshold.is_finite() => {}
                        (true, _) => {
                            return Err(bad(
                                "own split without an owned feature and threshold".into()
                            ))
                        }
                        (false, None) if threshold.is_nan() => {}
                        (false, _) => {
                            return Err(bad(format!(
                                "foreign split reveals party {owner}'s feature"
                            )))
                        }
                    },
                    PartialNode::Leaf { value } => {
                        if value.is_some() != (self.role == Role::Active) {
                            return Err(bad("leaf values belong to the active party only".into()));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn validate_partial_tree(tree: &PartialTree) -> std::result::Result<(), String> {
    let topo: Vec<_> = tree
        .nodes
        .iter()
        .map(|n| match n.node {
            PartialNode::Split { left, right, .. } => (n.depth, Some((left, right))),
            PartialNode::Leaf { .. } => (n.depth, None),
        })
        .collect();
    validate_topology(&topo)
}

/// Which party owns which feature, and who holds the label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureOwnership {
    /// `(party_id, features)` in party order.
    pub parties: Vec<(usize, Vec<String>)>,
    pub active_party: usize,
}

impl FeatureOwnership {
    pub fn from_shards(shards: &[PartyShard]) -> Result<Self> {
        let active: Vec<usize> = shards
            .iter()
            .filter(|s| s.role == Role::Active)
            .map(|s| s.party_id)
            .collect();
        let [active_party] = active[..] else {
            return Err(Error::InvalidPartition(format!(
                "exactly one active party required, found {}",
                active.len()
            )));
        };
        Ok(FeatureOwnership {
            parties: shards
                .iter()
                .map(|s| (s.party_id, s.owned_feature_names().to_vec()))
                .collect(),
            active_party,
        })
    }

    pub fn owner_of(&self, feature: &str) -> Option<usize> {
        self.parties
            .iter()
            .find(|(_, fs)| fs.iter().any(|f| f == feature))
            .map(|(p, _)| *p)
    }

    pub fn features_of(&self, party: usize) -> Option<&[String]> {
        self.parties
            .iter()
            .find(|(p, _)| *p == party)
            .map(|(_, f)| f.as_slice())
    }
}

/// Masks a global forest down to what `party_id` may keep.
pub fn save_partial(
    forest: &Forest,
    ownership: &FeatureOwnership,
    party_id: usize,
) -> Result<PartialModel> {
    let owned = ownership.features_of(party_id).ok_or_else(|| {
        Error::InvalidData(format!("party {party_id} is not in the ownership map"))
    })?;
    let active = party_id == ownership.active_party;
    let trees = forest
        .trees
        .iter()
        .map(|tree| {
            let nodes = tree
                .nodes
                .iter()
                .map(|n| {
                    let node = match &n.node {
                        Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        } => {
                            let owner = ownership.owner_of(feature).ok_or_else(|| {
                                Error::InvalidData(format!("no party owns feature {feature:?}"))
                            })?;
                            let mine = owner == party_id;
                            PartialNode::Split {
                                owner,
                                feature: mine.then(|| feature.clone()),
                                threshold: if mine { *threshold } else { f64::NAN },
                                left: *left,
                                right: *right,
                            }
                        }
                        Node::Leaf { weight } => PartialNode::Leaf {
                            value: active.then_some(*weight),
                        },
                    };
                    Ok(PartialTreeNode {
                        id: n.id,
                        depth: n.depth,
                        node,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(PartialTree {
                weight: tree.weight,
                nodes,
            })
        })
        .collect::<Result<_>>()?;
    Ok(PartialModel {
        party_id,
        role: if active { Role::Active } else { Role::Passive },
        owned_features: owned.to_vec(),
        base_score: forest.base_score,
        learning_rate: forest.learning_rate,
        trees,
    })
}

/// Checks that the models describe one forest and that every split node is
/// materialized by exactly the party the others name as its owner.
pub fn validate_coverage(partials: &[PartialModel]) -> Result<()> {
    let first = partials
        .first()
        .ok_or_else(|| Error::InvalidData("no partial models".into()))?;
    let mut ids = BTreeSet::new();
    for m in partials {
        if !ids.insert(m.party_id) {
            return Err(Error::InvalidData(format!(
                "party {} appears twice",
                m.party_id
            )));
        }
        if m.trees.len() != first.trees.len() {
            return Err(Error::InvalidData(format!(
                "party {} has a different tree count",
                m.party_id
            )));
        }
    }
    if partials.iter().filter(|m| m.role == Role::Active).count() != 1 {
        return Err(Error::InvalidData(
            "exactly one active model required".into(),
        ));
    }
    for (t, tree) in first.trees.iter().enumerate() {
        for m in partials {
            let other = &m.trees[t];
            if other.nodes.len() != tree.nodes.len()
                || other.weight.to_bits() != tree.weight.to_bits()
            {
                return Err(Error::InvalidData(format!(
                    "tree {t} shape differs at party {}",
                    m.party_id
                )));
            }
        }
        for (i, n) in tree.nodes.iter().enumerate() {
            let PartialNode::Split {
                owner, left, right, ..
            } = n.node
            else {
                if partials
                    .iter()
                    .any(|m| !matches!(m.trees[t].nodes[i].node, PartialNode::Leaf { .. }))
                {
                    return Err(Error::InvalidData(format!(
                        "tree {t} node {i} is not a leaf everywhere"
                    )));
                }
                continue;
            };
            let mut holders = Vec::new();
            for m in partials {
                match &m.trees[t].nodes[i].node {
                    PartialNode::Split {
                        owner: o,
                        feature,
                        left: l,
                        right: r,
                        ..
                    } if *o == owner && *l == left && *r == right => {
                        if feature.is_some() {
                            holders.push(m.party_id);
                        }
                    }
                    _ => {
                        return Err(Error::InvalidData(format!(
                            "tree {t} node {i} differs at party {}",
                            m.party_id
                        )))
                    }
                }
            }
            if holders != [owner] {
                return Err(Error::InvalidData(format!(
                    "tree {t} node {i}: owner {owner} expected to resolve it, resolved by {holders:?}"
                )));
            }
        }
    }
    Ok(())
}

/// Rebuilds the full forest from every party's partial model.
pub fn assemble_global(partials: &[PartialModel]) -> Result<Forest> {
    validate_coverage(partials)?;
    let by_id: HashMap<usize, &PartialModel> = partials.iter().map(|m| (m.party_id, m)).collect();
    let active = partials
        .iter()
        .find(|m| m.role == Role::Active)
        .expect("coverage checked");
    let trees = active
        .trees
        .iter()
        .enumerate()
        .map(|(t, tree)| {
            let nodes = tree
                .nodes
                .iter()
                .map(|n| {
                    let node = match &n.node {
                        PartialNode::Split {
                            owner, left, right, ..
                        } => {
                            let PartialNode::Split {
                                feature: Some(feature),
                                threshold,
                                ..
                            } = &by_id[owner].trees[t].nodes[n.id].node
                            else {
                                unreachable!("coverage checked");
                            };
                            Node::Split {
                                feature: feature.clone(),
                                threshold: *threshold,
                                left: *left,
                                right: *right,
                            }
                        }
                        PartialNode::Leaf { value } => Node::Leaf {
                            weight: value.ok_or_else(|| {
                                Error::InvalidData("active model lacks a leaf value".into())
                            })?,
                        },
                    };
                    Ok(TreeNode {
                        id: n.id,
                        depth: n.depth,
                        node,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(Tree {
                weight: tree.weight,
                nodes,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Forest {
        base_score: active.base_score,
        learning_rate: active.learning_rate,
        trees,
    })
}

/// Prediction over partial models, one shard per model with matching party
/// ids. Returns probabilities and the messages exchanged.
pub fn federated_predict_traced(
    partials: &[PartialModel],
    shards: &[PartyShard],
) -> Result<(Vec<f64>, Transcript)> {
    validate_coverage(partials)?;
    let shard_of: HashMap<usize, &PartyShard> = shards.iter().map(|s| (s.party_id, s)).collect();
    let n_rows = shards.first().map(|s| s.data.n_rows()).unwrap_or(0);
    for s in shards {
        if s.data.row_ids() != shards[0].data.row_ids() {
            return Err(Error::InvalidPartition(format!(
                "party {} row ids differ",
                s.party_id
            )));
        }
    }
    let counters = Arc::new(OpCounters::new());
    let plugin = PassthroughPlugin::new(counters.clone());
    let mut transport = Transport::new(counters);
    let active = partials
        .iter()
        .find(|m| m.role == Role::Active)
        .expect("coverage checked");

    // Every party evaluates the nodes it owns.
    let mut directions: HashMap<(usize, usize), Vec<bool>> = HashMap::new();
    for m in partials {
        let shard = shard_of
            .get(&m.party_id)
            .ok_or_else(|| Error::InvalidPartition(format!("no shard for party {}", m.party_id)))?;
        let mut entries = Vec::new();
        for (t, tree) in m.trees.iter().enumerate() {
            for n in &tree.nodes {
                if let PartialNode::Split {
                    feature: Some(f),
                    threshold,
                    ..
                } = &n.node
                {
                    let col = shard
                        .data
                        .feature_index(f)
                        .ok_or_else(|| Error::MissingFeature(f.clone()))?;
                    let bits = shard
                        .data
                        .column(col)
                        .iter()
                        .map(|&v| v < *threshold)
                        .collect();
                    entries.push(DirectionBits {
                        tree: t as u32,
                        node: n.id as u32,
                        goes_left: bits,
                    });
                }
            }
        }
        if m.party_id == active.party_id {
            for e in entries {
                directions.insert((e.tree as usize, e.node as usize), e.goes_left);
            }
            continue;
        }
        let payload = Payload::Tree(TreeSync::Directions {
            n_rows: n_rows as u32,
            entries,
        });
        let buf = process_outbound(CallKind::AllGather, payload, &plugin, Role::Passive)?;
        let id = transport.send(
            "directions",
            CallKind::AllGather,
            Endpoint::Party(m.party_id),
            Endpoint::Party(active.party_id),
            &buf,
        );
        let Payload::Tree(TreeSync::Directions { entries, .. }) = transport.receive(id, |b| {
            process_inbound(b, &plugin, Role::Active, Intent::Decode)
        })?
        else {
            return Err(Error::Protocol("expected direction bits".into()));
        };
        for e in entries {
            if e.goes_left.len() != n_rows {
                return Err(Error::LengthMismatch {
                    expected: n_rows,
                    actual: e.goes_left.len(),
                });
            }
            directions.insert((e.tree as usize, e.node as usize), e.goes_left);
        }
    }

    // The label holder walks every tree.
    let mut acc = vec![0.0; n_rows];
    for (t, tree) in active.trees.iter().enumerate() {
        for (row, a) in acc.iter_mut().enumerate() {
            let mut id = 0;
            let leaf = loop {
                match &tree.nodes[id].node {
                    PartialNode::Leaf { value } => {
                        break value.expect("active model holds leaf values")
                    }
                    PartialNode::Split { left, right, .. } => {
                        id = if directions[&(t, id)][row] {
                            *left
                        } else {
                            *right
                        };
                    }
                }
            };
            *a += tree.weight * leaf;
        }
    }
    let forest = Forest {
        base_score: active.base_score,
        learning_rate: active.learning_rate,
        trees: Vec::new(),
    };
    let probs = acc.into_iter().map(|s| forest.probability(s)).collect();
    Ok((probs, transport.into_transcript()))
}

pub fn federated_predict(partials: &[PartialModel], shards: &[PartyShard]) -> Result<Vec<f64>> {
    Ok(federated_predict_traced(partials, shards)?.0)
}

/// Partial models for every party in `ownership`, keyed by party id.
pub fn save_all_partials(
    forest: &Forest,
    ownership: &FeatureOwnership,
) -> Result<BTreeMap<usize, PartialModel>> {
    ownership
        .parties
        .iter()
        .map(|(p, _)| Ok((*p, save_partial(forest, ownership, *p)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::dataset::{join_vertical, split_vertical};
    use crate::gbdt::{train_centralized, TrainParams};
    use crate::synthetic::SyntheticSpec;

    fn setup() -> (Vec<PartyShard>, Forest) {
        let data = SyntheticSpec::new(20, 4, 8).generate().unwrap();
        let mut assignment = BTreeMap::new();
        assignment.insert(0, vec!["f0".to_string(), "f1".to_string()]);
        assignment.insert(1, vec!["f2".to_string(), "f3".to_string()]);
        let shards = split_vertical(&data, &assignment, 0).unwrap();
        let params = TrainParams {
            num_trees: 3,
            max_depth: 3,
            max_bin: 8,
            ..TrainParams::default()
        };
        let forest = train_centralized(&join_vertical(&shards).unwrap(), &params).unwrap();
        (shards, forest)
    }

    #[test]
    fn masking_and_round_trip() {
        let (shards, forest) = setup();
        let own = FeatureOwnership::from_shards(&shards).unwrap();
        let partials = save_all_partials(&forest, &own).unwrap();
        for m in partials.values() {
            let text = m.to_text();
            assert_eq!(&PartialModel::from_text(&text).unwrap().to_text(), &text);
        }
        let passive = partials[&1].to_text();
        assert!(!passive.contains("f0") && !passive.contains("f1"));
        let models: Vec<_> = partials.into_values().collect();
        assert_eq!(assemble_global(&models).unwrap(), forest);
    }

    #[test]
    fn federated_predict_matches_centralized_bitwise() {
        let (shards, forest) = setup();
        let own = FeatureOwnership::from_shards(&shards).unwrap();
        let models: Vec<_> = save_all_partials(&forest, &own)
            .unwrap()
            .into_values()
            .collect();
        let (got, transcript) = federated_predict_traced(&models, &shards).unwrap();
        let want = forest.predict(&join_vertical(&shards).unwrap()).unwrap();
        assert_eq!(
            got.iter().map(|p| p.to_bits()).collect::<Vec<_>>(),
            want.iter().map(|p| p.to_bits()).collect::<Vec<_>>()
        );
        transcript.check_six_steps().unwrap();
    }

    #[test]
    fn empty_forest_predicts_base_score() {
        let (shards, _) = setup();
        let forest = Forest::new(&TrainParams::default());
        let own = FeatureOwnership::from_shards(&shards).unwrap();
        let models: Vec<_> = save_all_partials(&forest, &own)
            .unwrap()
            .into_values()
            .collect();
        let got = federated_predict(&models, &shards).unwrap();
        assert!(got.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn missing_party_is_a_coverage_error() {
        let (shards, forest) = setup();
        let own = FeatureOwnership::from_shards(&shards).unwrap();
        let models: Vec<_> = save_all_partials(&forest, &own)
            .unwrap()
            .into_values()
            .collect();
        assert!(forest.trees.iter().any(|t| t.nodes.iter().any(
            |n| matches!(&n.node, Node::Split { feature, .. } if feature == "f2" || feature == "f3")
        )));
        assert!(validate_coverage(&models[..1]).is_err());
    }

    #[test]
    fn tampered_passive_file_is_rejected() {
        let (shards, forest) = setup();
        let own = FeatureOwnership::from_shards(&shards).unwrap();
        let text = save_partial(&forest, &own, 1).unwrap().to_text();
        let leaked = text.replacen("kind=leaf value=nan", "kind=leaf value=0.5", 1);
        assert!(PartialModel::from_text(&leaked).is_err());
    }
}
