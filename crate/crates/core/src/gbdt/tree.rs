use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::dataset::DataMatrix;
use crate::error::{Error, Result};
use crate::gbdt::{logit, sigmoid, TrainParams};

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    /// Rows with `value < threshold` go left.
    Split {
        feature: String,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        weight: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode {
    pub id: usize,
    pub depth: usize,
    pub node: Node,
}

/// One tree. `nodes[i].id == i`; node 0 is the root.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    /// Multiplier applied to this tree's leaf values. 1 except in bagged layers.
    pub weight: f64,
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf(weight: f64) -> Tree {
        Tree {
            weight: 1.0,
            nodes: vec![TreeNode {
                id: 0,
                depth: 0,
                node: Node::Leaf { weight },
            }],
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n.node, Node::Leaf { .. }))
            .count()
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Leaf value reached by a row whose feature values are looked up by name
    /// through `column_of`.
    pub(crate) fn route(&self, value_of: impl Fn(&str) -> f64) -> f64 {
        let mut id = 0;
        loop {
            match &self.nodes[id].node {
                Node::Leaf { weight } => return *weight,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if value_of(feature) < *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }
}

/// An additive ensemble. The margin of a row is
/// `base_margin + learning_rate * sum_t(weight_t * leaf_t(row))`, with the
/// sum taken in tree order.
#[derive(Clone, Debug, PartialEq)]
pub struct Forest {
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

const FOREST_MAGIC: &str = "fedxgb-forest";
pub(crate) const FORMAT_VERSION: u32 = 1;

impl Forest {
    pub fn new(params: &TrainParams) -> Self {
        Forest {
            base_score: params.base_score,
            learning_rate: params.learning_rate,
            trees: Vec::new(),
        }
    }

    pub fn base_margin(&self) -> f64 {
        logit(self.base_score)
    }

    /// Raw weighted leaf sums `sum_t(weight_t * leaf_t(row))` per row.
    pub fn raw_scores(&self, data: &DataMatrix) -> Result<Vec<f64>> {
        let index: HashMap<&str, usize> = data
            .feature_names()
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        for tree in &self.trees {
            for node in &tree.nodes {
                if let Node::Split { feature, .. } = &node.node {
                    if !index.contains_key(feature.as_str()) {
                        return Err(Error::MissingFeature(feature.clone()));
                    }
                }
            }
        }
        let mut acc = vec![0.0; data.n_rows()];
        for tree in &self.trees {
            for (row, a) in acc.iter_mut().enumerate() {
                let leaf = tree.route(|name| data.column(index[name])[row]);
                *a += tree.weight * leaf;
            }
        }
        Ok(acc)
    }

    pub fn probability(&self, raw_score: f64) -> f64 {
        sigmoid(self.base_margin() + self.learning_rate * raw_score)
    }

    pub fn predict(&self, data: &DataMatrix) -> Result<Vec<f64>> {
        Ok(self
            .raw_scores(data)?
            .into_iter()
            .map(|s| self.probability(s))
            .collect())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{FOREST_MAGIC} version={FORMAT_VERSION}").unwrap();
        writeln!(
            out,
            "forest base_score={} learning_rate={} trees={}",
            fmt_f64(self.base_score),
            fmt_f64(self.learning_rate),
            self.trees.len()
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
            for node in &tree.nodes {
                match &node.node {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => writeln!(
                        out,
                        "node id={} depth={} kind=split feature={} threshold={} left={left} right={right}",
                        node.id,
                        node.depth,
                        escape(feature),
                        fmt_f64(*threshold)
                    ),
                    Node::Leaf { weight } => writeln!(
                        out,
                        "node id={} depth={} kind=leaf value={}",
                        node.id,
                        node.depth,
                        fmt_f64(*weight)
                    ),
                }
                .unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Forest> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (ln, header) = lines.next().ok_or(Error::ModelFormat {
            line: 1,
            reason: "empty document".into(),
        })?;
        let header = parse_record(ln + 1, header)?;
        header.expect_kind(FOREST_MAGIC)?;
        let version: u32 = header.get("version")?;
        if version != FORMAT_VERSION {
            return Err(header.error(format!("unsupported version {version}")));
        }
        let (ln, forest_line) = lines.next().ok_or(Error::ModelFormat {
            line: ln + 2,
            reason: "missing forest record".into(),
        })?;
        let rec = parse_record(ln + 1, forest_line)?;
        rec.expect_kind("forest")?;
        let mut forest = Forest {
            base_score: rec.get("base_score")?,
            learning_rate: rec.get("learning_rate")?,
            trees: Vec::new(),
        };
        let n_trees: usize = rec.get("trees")?;

        for _ in 0..n_trees {
            let (ln, line) = lines.next().ok_or(Error::ModelFormat {
                line: 0,
                reason: "missing tree record".into(),
            })?;
            let rec = parse_record(ln + 1, line)?;
            rec.expect_kind("tree")?;
            let n_nodes: usize = rec.get("nodes")?;
            let mut tree = Tree {
                weight: rec.get("weight")?,
                nodes: Vec::with_capacity(n_nodes),
            };
            for i in 0..n_nodes {
                let (ln, line) = lines.next().ok_or(Error::ModelFormat {
                    line: 0,
                    reason: "missing node record".into(),
                })?;
                let rec = parse_record(ln + 1, line)?;
                rec.expect_kind("node")?;
                let id: usize = rec.get("id")?;
                if id != i {
                    return Err(rec.error(format!("expected node id {i}, found {id}")));
                }
                let node = match rec.get_str("kind")? {
                    "split" => Node::Split {
                        feature: unescape(rec.get_str("feature")?),
                        threshold: rec.get("threshold")?,
                        left: rec.get("left")?,
                        right: rec.get("right")?,
                    },
                    "leaf" => Node::Leaf {
                        weight: rec.get("value")?,
                    },
                    other => return Err(rec.error(format!("unknown node kind {other:?}"))),
                };
                tree.nodes.push(TreeNode {
                    id,
                    depth: rec.get("depth")?,
                    node,
                });
            }
            validate_tree(&tree).map_err(|reason| Error::ModelFormat {
                line: ln + 1,
                reason,
            })?;
            forest.trees.push(tree);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(Error::ModelFormat {
                line: ln + 1,
                reason: "trailing records".into(),
            });
        }
        Ok(forest)
    }

    /// Hex SHA-256 of the text form.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

/// Every node reachable exactly once from the root, children one level
/// deeper. Input is `(depth, children)` per node id.
pub(crate) fn validate_topology(
    nodes: &[(usize, Option<(usize, usize)>)],
) -> std::result::Result<(), String> {
    if nodes.is_empty() {
        return Err("tree has no nodes".into());
    }
    let mut seen = vec![false; nodes.len()];
    let mut stack = vec![(0usize, 0usize)];
    while let Some((id, depth)) = stack.pop() {
        if id >= nodes.len() {
            return Err(format!("child id {id} out of range"));
        }
        if std::mem::replace(&mut seen[id], true) {
            return Err(format!("node {id} reachable twice"));
        }
        let (node_depth, children) = nodes[id];
        if node_depth != depth {
            return Err(format!(
                "node {id} has depth {node_depth}, expected {depth}"
            ));
        }
        if let Some((l, r)) = children {
            stack.push((l, depth + 1));
            stack.push((r, depth + 1));
        }
    }
    if let Some(id) = seen.iter().position(|s| !s) {
        return Err(format!("node {id} unreachable"));
    }
    Ok(())
}

fn validate_tree(tree: &Tree) -> std::result::Result<(), String> {
    let topo: Vec<_> = tree
        .nodes
        .iter()
        .map(|n| match n.node {
            Node::Split { left, right, .. } => (n.depth, Some((left, right))),
            Node::Leaf { .. } => (n.depth, None),
        })
        .collect();
    validate_topology(&topo)
}

pub(crate) fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_owned()
    } else {
        format!("{x:?}")
    }
}

/// Percent-escapes characters that would break a `key=value` record.
pub(crate) fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '%' | '=' | ' ' | '\t' | '\n' | '\r' | ',' => {
                let mut buf = [0u8; 4];
                for b in c.encode_utf8(&mut buf).bytes() {
                    write!(out, "%{b:02X}").unwrap();
                }
            }
            c => out.push(c),
        }
    }
    out
}

pub(crate) fn unescape(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            if let Ok(b) = u8::from_str_radix(
                std::str::from_utf8(&bytes[i + 1..i + 3]).unwrap_or("zz"),
                16,
            ) {
                out.push(b);
                i += 3;
                continue;
            }
        }
        out.push(bytes[i]);
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

/// One `kind key=value ...` line.
#[derive(Debug)]
pub(crate) struct Record<'a> {
    pub line: usize,
    pub kind: &'a str,
    pub fields: BTreeMap<&'a str, &'a str>,
}

pub(crate) fn parse_record(line: usize, text: &str) -> Result<Record<'_>> {
    let mut parts = text.split_whitespace();
    let kind = parts.next().ok_or(Error::ModelFormat {
        line,
        reason: "empty record".into(),
    })?;
    let mut fields = BTreeMap::new();
    for part in parts {
        let (k, v) = part.split_once('=').ok_or_else(|| Error::ModelFormat {
            line,
            reason: format!("field {part:?} is not key=value"),
        })?;
        if fields.insert(k, v).is_some() {
            return Err(Error::ModelFormat {
                line,
                reason: format!("duplicate field {k:?}"),
            });
        }
    }
    Ok(Record { line, kind, fields })
}

impl<'a> Record<'a> {
    pub fn error(&self, reason: impl Into<String>) -> Error {
        Error::ModelFormat {
            line: self.line,
            reason: reason.into(),
        }
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(self.error(format!("expected {kind:?} record, found {:?}", self.kind)))
        }
    }

    pub fn has(&self, key: &str) -> bool {
        self.fields.contains_key(key)
    }

    pub fn get_str(&self, key: &str) -> Result<&'a str> {
        self.fields
            .get(key)
            .copied()
            .ok_or_else(|| self.error(format!("missing field {key:?}")))
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get_str(key)?;
        raw.parse()
            .map_err(|_| self.error(format!("bad value {raw:?} for {key:?}")))
    }
}
