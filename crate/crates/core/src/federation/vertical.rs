use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use crate::counters::OpCounters;
use crate::dataset::{BinCuts, BinnedMatrix, PartyShard, Role};
use crate::error::{Error, Result};
use crate::federation::{
    par_map, timed, Endpoint, PhaseTimings, RoundMeter, RunOptions, RunOutput, Transport,
};
use crate::gbdt::{
    build_histogram, compute_gradients, Forest, Histogram, StructNode, TrainParams, TreeGrower,
};
use crate::inference::{assemble_global, PartialModel, PartialNode, PartialTree, PartialTreeNode};
use crate::processor::{
    accumulate_encrypted, process_inbound, process_outbound, CallKind, EncryptionPlugin, Intent,
    Payload, SplitNotice, TreeSync,
};

#[derive(Clone, Debug, PartialEq)]
pub struct VerticalModel {
    /// One per party, in party order.
    pub partials: Vec<PartialModel>,
    /// The forest the partial models jointly describe.
    pub forest: Forest,
}

struct VParty<'a> {
    shard: &'a PartyShard,
    plugin: Arc<dyn EncryptionPlugin>,
    cuts: BinCuts,
    binned: BinnedMatrix,
    trees: Vec<PartialTree>,
}

impl VParty<'_> {
    fn id(&self) -> usize {
        self.shard.party_id
    }

    fn endpoint(&self) -> Endpoint {
        Endpoint::Party(self.shard.party_id)
    }

    fn goes_left(&self, feature: usize, cut: usize, rows: &[usize]) -> Result<Vec<bool>> {
        let bins = self.binned.bins.get(feature).ok_or_else(|| {
            Error::Protocol(format!("party {} has no feature {feature}", self.id()))
        })?;
        Ok(rows.iter().map(|&r| bins[r] as usize <= cut).collect())
    }

    /// This party's record of a split: the real threshold if it owns the
    /// feature, otherwise only who does.
    fn split_node(
        &self,
        owner: usize,
        feature: usize,
        cut: usize,
        left: usize,
        right: usize,
    ) -> Result<PartialNode> {
        if owner != self.id() {
            return Ok(PartialNode::Split {
                owner,
                feature: None,
                threshold: f64::NAN,
                left,
                right,
            });
        }
        let threshold = *self
            .cuts
            .per_feature
            .get(feature)
            .and_then(|c| c.get(cut))
            .ok_or_else(|| Error::Protocol(format!("no cut {cut} for local feature {feature}")))?;
        Ok(PartialNode::Split {
            owner,
            feature: Some(self.shard.data.feature_names()[feature].clone()),
            threshold,
            left,
            right,
        })
    }
}

/// A passive party's copy of the tree being grown, rebuilt from the split
/// notices and partition bits it receives. Node numbering follows the same
/// rule as [`TreeGrower`], so ids agree without being sent.
struct Mirror {
    max_depth: usize,
    nodes: Vec<Option<(usize, PartialNode)>>,
    frontier: Vec<(usize, usize, Vec<usize>)>,
}

impl Mirror {
    fn new(max_depth: usize, n_rows: usize) -> Self {
        Mirror {
            max_depth,
            nodes: vec![None],
            frontier: vec![(0, 0, (0..n_rows).collect())],
        }
    }

    fn frontier_rows(&self) -> Vec<Vec<usize>> {
        self.frontier
            .iter()
            .map(|(_, _, rows)| rows.clone())
            .collect()
    }

    fn apply(
        &mut self,
        party: &VParty,
        notices: &[SplitNotice],
        partitions: &HashMap<u32, Vec<bool>>,
    ) -> Result<()> {
        let frontier = std::mem::take(&mut self.frontier);
        if notices.len() != frontier.len() {
            return Err(Error::Protocol(format!(
                "{} split notices for {} open nodes",
                notices.len(),
                frontier.len()
            )));
        }
        for ((id, depth, rows), notice) in frontier.into_iter().zip(notices) {
            if notice.node_id as usize != id {
                return Err(Error::Protocol(format!(
                    "notice for node {}, expected {id}",
                    notice.node_id
                )));
            }
            let Some((owner, feature, cut)) = notice.split else {
                self.nodes[id] = Some((depth, PartialNode::Leaf { value: None }));
                continue;
            };
            let bits = match partitions.get(&notice.node_id) {
                Some(b) => b.clone(),
                None if owner as usize == party.id() => {
                    party.goes_left(feature as usize, cut as usize, &rows)?
                }
                None => return Err(Error::Protocol(format!("no partition for node {id}"))),
            };
            if bits.len() != rows.len() {
                return Err(Error::LengthMismatch {
                    expected: rows.len(),
                    actual: bits.len(),
                });
            }
            let left = self.nodes.len();
            let right = left + 1;
            self.nodes.push(None);
            self.nodes.push(None);
            self.nodes[id] = Some((
                depth,
                party.split_node(owner as usize, feature as usize, cut as usize, left, right)?,
            ));
            let (l_rows, r_rows): (Vec<_>, Vec<_>) = rows.iter().zip(&bits).partition(|(_, &b)| b);
            for (child, child_rows) in [(left, l_rows), (right, r_rows)] {
                let child_rows: Vec<usize> = child_rows.into_iter().map(|(&r, _)| r).collect();
                if depth + 1 < self.max_depth {
                    self.frontier.push((child, depth + 1, child_rows));
                } else {
                    self.nodes[child] = Some((depth + 1, PartialNode::Leaf { value: None }));
                }
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<PartialTree> {
        if !self.frontier.is_empty() {
            return Err(Error::Protocol("tree ended with open nodes".into()));
        }
        let nodes = self
            .nodes
            .into_iter()
            .enumerate()
            .map(|(id, n)| {
                let (depth, node) =
                    n.ok_or_else(|| Error::Protocol(format!("node {id} never decided")))?;
                Ok(PartialTreeNode { id, depth, node })
            })
            .collect::<Result<_>>()?;
        Ok(PartialTree { weight: 1.0, nodes })
    }
}

fn validate(shards: &[PartyShard]) -> Result<usize> {
    let active: Vec<usize> = (0..shards.len())
        .filter(|&i| shards[i].role == Role::Active)
        .collect();
    let [a] = active[..] else {
        return Err(Error::InvalidPartition(format!(
            "vertical training needs exactly one active party, found {}",
            active.len()
        )));
    };
    if shards[a].data.label().is_none() {
        return Err(Error::InvalidPartition(
            "the active party holds no label".into(),
        ));
    }
    let mut ids = BTreeSet::new();
    let mut names = BTreeSet::new();
    for s in shards {
        if !ids.insert(s.party_id) {
            return Err(Error::InvalidPartition(format!(
                "party id {} repeats",
                s.party_id
            )));
        }
        if s.role != Role::Active && s.role != Role::Passive {
            return Err(Error::InvalidPartition(format!(
                "party {} has role {}",
                s.party_id, s.role
            )));
        }
        if s.role == Role::Passive && s.data.label().is_some() {
            return Err(Error::InvalidPartition(format!(
                "passive party {} holds a label",
                s.party_id
            )));
        }
        if s.data.row_ids() != shards[a].data.row_ids() {
            return Err(Error::InvalidPartition(format!(
                "party {} row ids differ from the active party",
                s.party_id
            )));
        }
        for n in s.data.feature_names() {
            if !names.insert(n.as_str()) {
                return Err(Error::InvalidPartition(format!(
                    "feature {n:?} is held by two parties"
                )));
            }
        }
    }
    if names.is_empty() {
        return Err(Error::InvalidPartition("no features".into()));
    }
    Ok(a)
}

/// Histogram-based vertical training.
///
/// The active party encrypts the gradients once per tree and sends them to
/// every passive party. Each passive party sums ciphertexts into histograms
/// over its own features for every open node and returns them. The active
/// party decrypts, joins the feature blocks in party order and picks splits.
/// A split on a passive feature is announced to its owner as
/// `(owner, local feature, cut index)`; the owner answers with left/right
/// bits. Thresholds never leave their owner.
pub fn run_vertical_histogram(
    shards: &[PartyShard],
    params: &TrainParams,
    opts: &RunOptions,
) -> Result<RunOutput<VerticalModel>> {
    params.validate()?;
    let a = validate(shards)?;
    let counters = Arc::new(OpCounters::new());
    let mut transport = Transport::new(counters.clone());
    let mut timings = PhaseTimings::default();
    let mut meter = RoundMeter::new(counters.clone());
    let n_rows = shards[a].data.n_rows();
    let labels = shards[a].data.label().expect("validated");

    let parties = timed(&mut timings.cuts, || {
        shards
            .iter()
            .map(|s| {
                let cuts = BinCuts::compute(&s.data, params.max_bin)?;
                let binned = BinnedMatrix::new(&s.data, &cuts)?;
                Ok(VParty {
                    shard: s,
                    plugin: opts.security.plugin_for(
                        Endpoint::Party(s.party_id),
                        s.role == Role::Active,
                        &counters,
                    )?,
                    cuts,
                    binned,
                    trees: Vec::new(),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let passive: Vec<usize> = (0..parties.len()).filter(|&i| i != a).collect();
    // Global feature index -> (party index, local feature).
    let feature_map: Vec<(usize, usize)> = parties
        .iter()
        .enumerate()
        .flat_map(|(p, party)| (0..party.binned.n_features()).map(move |f| (p, f)))
        .collect();
    let forest = Forest::new(params);
    let mut raw = vec![0.0; n_rows];
    let mut parties = parties;

    for round in 0..params.num_trees {
        transport.set_round(round);
        // `forest` holds no trees; it maps accumulated scores to probabilities.
        let gh = timed(&mut timings.gradient, || {
            let probs: Vec<f64> = raw.iter().map(|&s| forest.probability(s)).collect();
            compute_gradients(labels, &probs)
        })?;
        let active = &parties[a];
        let gh_buf = timed(&mut timings.encrypt, || {
            process_outbound(
                CallKind::Broadcast,
                Payload::GhPlain(gh.clone()),
                &*active.plugin,
                Role::Active,
            )
        })?;
        let mut gh_at = HashMap::new();
        for &p in &passive {
            let party = &parties[p];
            let id = transport.send(
                "gh",
                CallKind::Broadcast,
                active.endpoint(),
                party.endpoint(),
                &gh_buf,
            );
            let payload = transport.receive(id, |b| {
                process_inbound(b, &*party.plugin, Role::Passive, Intent::Decode)
            })?;
            gh_at.insert(p, payload);
        }

        let mut grower = TreeGrower::new(params, (0..n_rows).collect());
        let mut mirrors: HashMap<usize, Mirror> = passive
            .iter()
            .map(|&p| (p, Mirror::new(params.max_depth, n_rows)))
            .collect();
        while !grower.is_done() {
            for &p in &passive {
                let expected: Vec<Vec<usize>> =
                    grower.frontier().iter().map(|n| n.rows.clone()).collect();
                if mirrors[&p].frontier_rows() != expected {
                    return Err(Error::Protocol(format!(
                        "party {} lost track of the open nodes",
                        parties[p].id()
                    )));
                }
            }
            let active = &parties[a];
            let own: Vec<Histogram> = timed(&mut timings.aggregate, || {
                grower
                    .frontier()
                    .iter()
                    .map(|n| build_histogram(&active.binned, &gh, &n.rows))
                    .collect::<Result<_>>()
            })?;
            let work: Vec<(usize, Vec<Vec<usize>>)> = passive
                .iter()
                .map(|&p| (p, mirrors[&p].frontier_rows()))
                .collect();
            let buffers = timed(&mut timings.aggregate, || {
                par_map(opts.threads, &work, |(p, rows)| {
                    let party = &parties[*p];
                    let hist =
                        accumulate_encrypted(&gh_at[p], &party.binned, rows, &*party.plugin)?;
                    process_outbound(CallKind::AllGather, hist, &*party.plugin, Role::Passive)
                })
            })?;
            let mut per_party: HashMap<usize, Vec<Histogram>> = HashMap::new();
            let ids: Vec<_> = passive
                .iter()
                .zip(&buffers)
                .map(|(&p, buf)| {
                    transport.send(
                        "histogram",
                        CallKind::AllGather,
                        parties[p].endpoint(),
                        active.endpoint(),
                        buf,
                    )
                })
                .collect();
            for (&p, id) in passive.iter().zip(ids) {
                let payload = timed(&mut timings.decrypt, || {
                    transport.receive(id, |b| {
                        process_inbound(b, &*active.plugin, Role::Active, Intent::Decrypt)
                    })
                })?;
                let Payload::HistPlain(h) = payload else {
                    return Err(Error::Protocol(format!(
                        "expected histograms, got {}",
                        payload.kind().name()
                    )));
                };
                per_party.insert(p, h);
            }
            per_party.insert(a, own);
            let joined: Vec<Histogram> = (0..grower.frontier().len())
                .map(|n| {
                    let parts: Vec<Histogram> = (0..parties.len())
                        .map(|p| per_party[&p][n].clone())
                        .collect();
                    Histogram::concat_features(&parts)
                })
                .collect();

            let mut partitions: HashMap<u32, (usize, Vec<bool>)> = HashMap::new();
            let split_start = std::time::Instant::now();
            let decisions = grower.expand(&joined, |node, split| {
                let (owner, local) = feature_map[split.feature];
                let bits = if owner == a {
                    parties[a].goes_left(local, split.cut_index, &node.rows)?
                } else {
                    let notice = SplitNotice {
                        node_id: node.id as u32,
                        split: Some((
                            parties[owner].id() as u32,
                            local as u32,
                            split.cut_index as u32,
                        )),
                    };
                    let buf = process_outbound(
                        CallKind::Broadcast,
                        Payload::Tree(TreeSync::Splits(vec![notice])),
                        &*parties[a].plugin,
                        Role::Active,
                    )?;
                    let id = transport.send(
                        "split",
                        CallKind::Broadcast,
                        parties[a].endpoint(),
                        parties[owner].endpoint(),
                        &buf,
                    );
                    let owner_party = &parties[owner];
                    transport.receive(id, |b| {
                        process_inbound(b, &*owner_party.plugin, Role::Passive, Intent::Decode)
                    })?;
                    let bits = owner_party.goes_left(local, split.cut_index, &node.rows)?;
                    let buf = process_outbound(
                        CallKind::Broadcast,
                        Payload::Tree(TreeSync::Partition {
                            node_id: node.id as u32,
                            goes_left: bits,
                        }),
                        &*owner_party.plugin,
                        Role::Passive,
                    )?;
                    let id = transport.send(
                        "partition",
                        CallKind::Broadcast,
                        owner_party.endpoint(),
                        parties[a].endpoint(),
                        &buf,
                    );
                    match transport.receive(id, |b| {
                        process_inbound(b, &*parties[a].plugin, Role::Active, Intent::Decode)
                    })? {
                        Payload::Tree(TreeSync::Partition { goes_left, .. }) => goes_left,
                        _ => return Err(Error::Protocol("expected partition bits".into())),
                    }
                };
                partitions.insert(node.id as u32, (owner, bits.clone()));
                Ok(bits)
            })?;
            let notices: Vec<SplitNotice> = decisions
                .iter()
                .map(|(id, d)| SplitNotice {
                    node_id: *id as u32,
                    split: d.as_ref().map(|s| {
                        let (owner, local) = feature_map[s.feature];
                        (parties[owner].id() as u32, local as u32, s.cut_index as u32)
                    }),
                })
                .collect();

            // Tell every passive party how the level resolved.
            let active = &parties[a];
            let notice_buf = process_outbound(
                CallKind::Broadcast,
                Payload::Tree(TreeSync::Splits(notices.clone())),
                &*active.plugin,
                Role::Active,
            )?;
            let mut ordered: Vec<(&u32, &(usize, Vec<bool>))> = partitions.iter().collect();
            ordered.sort_by_key(|(id, _)| **id);
            for &p in &passive {
                let party = &parties[p];
                let id = transport.send(
                    "split",
                    CallKind::Broadcast,
                    active.endpoint(),
                    party.endpoint(),
                    &notice_buf,
                );
                let Payload::Tree(TreeSync::Splits(received)) = transport.receive(id, |b| {
                    process_inbound(b, &*party.plugin, Role::Passive, Intent::Decode)
                })?
                else {
                    return Err(Error::Protocol("expected split notices".into()));
                };
                let mut bits_at = HashMap::new();
                for (&node_id, (owner, bits)) in &ordered {
                    if *owner == p {
                        continue;
                    }
                    let buf = process_outbound(
                        CallKind::Broadcast,
                        Payload::Tree(TreeSync::Partition {
                            node_id,
                            goes_left: bits.clone(),
                        }),
                        &*active.plugin,
                        Role::Active,
                    )?;
                    let id = transport.send(
                        "partition",
                        CallKind::Broadcast,
                        active.endpoint(),
                        party.endpoint(),
                        &buf,
                    );
                    let Payload::Tree(TreeSync::Partition { node_id, goes_left }) = transport
                        .receive(id, |b| {
                            process_inbound(b, &*party.plugin, Role::Passive, Intent::Decode)
                        })?
                    else {
                        return Err(Error::Protocol("expected partition bits".into()));
                    };
                    bits_at.insert(node_id, goes_left);
                }
                mirrors
                    .get_mut(&p)
                    .expect("mirror per passive party")
                    .apply(party, &received, &bits_at)?;
            }
            timings.split += split_start.elapsed();
        }

        let (structure, leaves) = grower.finish()?;
        let active = &parties[a];
        let active_tree = PartialTree {
            weight: 1.0,
            nodes: structure
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
                            let (owner, local) = feature_map[feature];
                            active.split_node(parties[owner].id(), local, cut_index, left, right)?
                        }
                        StructNode::Leaf { weight } => PartialNode::Leaf {
                            value: Some(weight),
                        },
                    };
                    Ok(PartialTreeNode {
                        id,
                        depth: *depth,
                        node,
                    })
                })
                .collect::<Result<_>>()?,
        };
        for leaf in &leaves {
            for &r in &leaf.rows {
                raw[r] += active_tree.weight * leaf.weight;
            }
        }
        parties[a].trees.push(active_tree);
        for &p in &passive {
            let tree = mirrors
                .remove(&p)
                .expect("mirror per passive party")
                .finish()?;
            parties[p].trees.push(tree);
        }
        meter.close_round();
    }

    let partials: Vec<PartialModel> = parties
        .into_iter()
        .map(|p| PartialModel {
            party_id: p.shard.party_id,
            role: p.shard.role,
            owned_features: p.shard.data.feature_names().to_vec(),
            base_score: params.base_score,
            learning_rate: params.learning_rate,
            trees: p.trees,
        })
        .collect();
    let forest = assemble_global(&partials)?;
    Ok(RunOutput {
        model: VerticalModel { partials, forest },
        transcript: transport.into_transcript(),
        counters: counters.snapshot(),
        round_counters: meter.rounds,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::dataset::{join_vertical, split_vertical, DataMatrix};
    use crate::gbdt::train_centralized;
    use crate::he::keygen;
    use crate::synthetic::SyntheticSpec;

    fn params() -> TrainParams {
        TrainParams {
            num_trees: 2,
            max_depth: 3,
            max_bin: 8,
            ..TrainParams::default()
        }
    }

    fn shards(data: &DataMatrix, split_at: usize, active: usize) -> Vec<PartyShard> {
        let names = data.feature_names();
        let mut assignment = BTreeMap::new();
        assignment.insert(0, names[..split_at].to_vec());
        assignment.insert(1, names[split_at..].to_vec());
        split_vertical(data, &assignment, active).unwrap()
    }

    #[test]
    fn plain_run_equals_centralized() {
        let data = SyntheticSpec::new(120, 5, 3).generate().unwrap();
        for active in [0, 1] {
            let s = shards(&data, 2, active);
            let out = run_vertical_histogram(&s, &params(), &RunOptions::plain()).unwrap();
            let central = train_centralized(&join_vertical(&s).unwrap(), &params()).unwrap();
            assert_eq!(out.model.forest.to_text(), central.to_text());
            out.transcript.check_six_steps().unwrap();
        }
    }

    #[test]
    fn secure_run_matches_plain_and_counts() {
        let data = SyntheticSpec::new(60, 4, 7).generate().unwrap();
        let s = shards(&data, 1, 0);
        let plain = run_vertical_histogram(&s, &params(), &RunOptions::plain()).unwrap();
        let secure = run_vertical_histogram(
            &s,
            &params(),
            &RunOptions::secure(keygen(512, 5).unwrap(), 1).with_threads(true),
        )
        .unwrap();
        assert_eq!(plain.model, secure.model);
        for r in &secure.round_counters {
            assert_eq!(r.encryptions, 2 * 60);
        }
    }

    #[test]
    fn active_owning_everything_is_centralized() {
        let data = SyntheticSpec::new(50, 3, 1).generate().unwrap();
        let s = vec![PartyShard {
            party_id: 0,
            role: Role::Active,
            data: data.clone(),
        }];
        let out = run_vertical_histogram(&s, &params(), &RunOptions::plain()).unwrap();
        assert_eq!(
            out.model.forest,
            train_centralized(&data, &params()).unwrap()
        );
        assert!(out.transcript.entries.is_empty());
    }

    #[test]
    fn two_active_parties_rejected() {
        let data = SyntheticSpec::new(20, 2, 1).generate().unwrap();
        let mut s = shards(&data, 1, 0);
        s[1].role = Role::Active;
        assert!(matches!(
            run_vertical_histogram(&s, &params(), &RunOptions::plain()),
            Err(Error::InvalidPartition(_))
        ));
    }
}
