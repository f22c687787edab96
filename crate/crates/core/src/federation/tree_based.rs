use std::collections::BTreeSet;
use std::sync::Arc;

use crate::counters::OpCounters;
use crate::dataset::{PartyShard, Role};
use crate::error::{Error, Result};
use crate::federation::{
    par_map, Endpoint, PhaseTimings, RoundMeter, RunOptions, RunOutput, Transport,
};
use crate::gbdt::{Forest, LocalBooster, TrainParams};
use crate::processor::{
    process_inbound, process_outbound, CallKind, Intent, PassthroughPlugin, Payload, TreeSync,
};

#[derive(Clone, Debug, PartialEq)]
pub struct TreeBasedModel {
    pub forest: Forest,
    /// Party that trained each tree, in forest order.
    pub tree_origin: Vec<usize>,
}

fn validate(shards: &[PartyShard]) -> Result<()> {
    let first = shards
        .first()
        .ok_or_else(|| Error::InvalidPartition("no parties".into()))?;
    let mut ids = BTreeSet::new();
    for s in shards {
        if s.role != Role::Peer {
            return Err(Error::InvalidPartition(format!(
                "party {} is not a peer",
                s.party_id
            )));
        }
        if !ids.insert(s.party_id) {
            return Err(Error::InvalidPartition(format!(
                "party id {} repeats",
                s.party_id
            )));
        }
        if s.data.feature_names() != first.data.feature_names() {
            return Err(Error::InvalidPartition(format!(
                "party {} has a different feature set",
                s.party_id
            )));
        }
    }
    Ok(())
}

fn ordered(shards: &[PartyShard]) -> Vec<&PartyShard> {
    let mut v: Vec<&PartyShard> = shards.iter().collect();
    v.sort_by_key(|s| s.party_id);
    v
}

fn send_forest(
    transport: &mut Transport,
    plugin: &PassthroughPlugin,
    step: &'static str,
    call: CallKind,
    from: (Endpoint, Role),
    to: (Endpoint, Role),
    forest: &Forest,
) -> Result<Forest> {
    let buf = process_outbound(
        call,
        Payload::Tree(TreeSync::Forest(forest.to_text())),
        plugin,
        from.1,
    )?;
    let id = transport.send(step, call, from.0, to.0, &buf);
    match transport.receive(id, |b| process_inbound(b, plugin, to.1, Intent::Decode))? {
        Payload::Tree(TreeSync::Forest(text)) => Forest::from_text(&text),
        other => Err(Error::Protocol(format!(
            "expected a forest, got {}",
            other.kind().name()
        ))),
    }
}

/// Cyclic training: the model travels from party to party in ascending id
/// order, each adding `trees_per_round` trees boosted on its own data with
/// its own cuts, until `num_trees` trees exist.
pub fn run_cyclic(
    shards: &[PartyShard],
    params: &TrainParams,
    trees_per_round: usize,
    _opts: &RunOptions,
) -> Result<RunOutput<TreeBasedModel>> {
    params.validate()?;
    validate(shards)?;
    if trees_per_round == 0 {
        return Err(Error::InvalidParam(
            "trees_per_round must be at least 1".into(),
        ));
    }
    let parties = ordered(shards);
    let counters = Arc::new(OpCounters::new());
    let plugin = PassthroughPlugin::new(counters.clone());
    let mut transport = Transport::new(counters.clone());
    let mut meter = RoundMeter::new(counters.clone());
    let mut timings = PhaseTimings::default();
    let mut forest = Forest::new(params);
    let mut origin = Vec::new();
    let mut round = 0;
    while forest.trees.len() < params.num_trees {
        transport.set_round(round);
        let i = round % parties.len();
        let party = parties[i];
        let start = std::time::Instant::now();
        let booster = LocalBooster::new(&party.data, params)?;
        timings.cuts += start.elapsed();
        let n = trees_per_round.min(params.num_trees - forest.trees.len());
        let start = std::time::Instant::now();
        booster.boost(&mut forest, n)?;
        timings.split += start.elapsed();
        origin.extend(std::iter::repeat_n(party.party_id, n));
        if forest.trees.len() < params.num_trees {
            let next = parties[(i + 1) % parties.len()];
            forest = send_forest(
                &mut transport,
                &plugin,
                "forest",
                CallKind::Broadcast,
                (Endpoint::Party(party.party_id), Role::Peer),
                (Endpoint::Party(next.party_id), Role::Peer),
                &forest,
            )?;
        }
        meter.close_round();
        round += 1;
    }
    Ok(RunOutput {
        model: TreeBasedModel {
            forest,
            tree_origin: origin,
        },
        transcript: transport.into_transcript(),
        counters: counters.snapshot(),
        round_counters: meter.rounds,
        timings,
    })
}

/// Bagging: each of `num_trees` rounds, every party boosts
/// `trees_per_round` trees from the current global model on its own data and
/// submits them. The server appends all submissions in party order, each
/// weighted `1/N`, and sends the grown model back out.
pub fn run_bagging(
    shards: &[PartyShard],
    params: &TrainParams,
    trees_per_round: usize,
    opts: &RunOptions,
) -> Result<RunOutput<TreeBasedModel>> {
    params.validate()?;
    validate(shards)?;
    if trees_per_round == 0 {
        return Err(Error::InvalidParam(
            "trees_per_round must be at least 1".into(),
        ));
    }
    let parties = ordered(shards);
    let n = parties.len();
    let counters = Arc::new(OpCounters::new());
    let plugin = PassthroughPlugin::new(counters.clone());
    let mut transport = Transport::new(counters.clone());
    let mut meter = RoundMeter::new(counters.clone());
    let mut timings = PhaseTimings::default();
    let boosters = parties
        .iter()
        .map(|p| LocalBooster::new(&p.data, params))
        .collect::<Result<Vec<_>>>()?;
    let mut global = Forest::new(params);
    let mut origin = Vec::new();
    for round in 0..params.num_trees {
        transport.set_round(round);
        let mut local = Vec::with_capacity(n);
        for p in &parties {
            local.push(send_forest(
                &mut transport,
                &plugin,
                "forest",
                CallKind::Broadcast,
                (Endpoint::Server, Role::Server),
                (Endpoint::Party(p.party_id), Role::Peer),
                &global,
            )?);
        }
        let start = std::time::Instant::now();
        let base = global.trees.len();
        let work: Vec<(&LocalBooster, Forest)> = boosters.iter().zip(local).collect();
        let submissions = par_map(opts.threads, &work, |(booster, forest)| {
            let mut forest = forest.clone();
            booster.boost(&mut forest, trees_per_round)?;
            let mut new = Forest {
                trees: forest.trees.split_off(base),
                ..forest
            };
            for t in &mut new.trees {
                t.weight = 1.0 / n as f64;
            }
            Ok(new)
        })?;
        timings.split += start.elapsed();
        for (p, sub) in parties.iter().zip(&submissions) {
            let received = send_forest(
                &mut transport,
                &plugin,
                "trees",
                CallKind::AllGather,
                (Endpoint::Party(p.party_id), Role::Peer),
                (Endpoint::Server, Role::Server),
                sub,
            )?;
            origin.extend(std::iter::repeat_n(p.party_id, received.trees.len()));
            global.trees.extend(received.trees);
        }
        meter.close_round();
    }
    Ok(RunOutput {
        model: TreeBasedModel {
            forest: global,
            tree_origin: origin,
        },
        transcript: transport.into_transcript(),
        counters: counters.snapshot(),
        round_counters: meter.rounds,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::split_horizontal;
    use crate::gbdt::train_centralized;
    use crate::synthetic::SyntheticSpec;

    fn params(n: usize) -> TrainParams {
        TrainParams {
            num_trees: n,
            max_depth: 3,
            max_bin: 16,
            ..TrainParams::default()
        }
    }

    #[test]
    fn cyclic_alternates_parties() {
        let data = SyntheticSpec::new(100, 3, 2).generate().unwrap();
        let shards = split_horizontal(&data, 2).unwrap();
        let out = run_cyclic(&shards, &params(4), 1, &RunOptions::plain()).unwrap();
        assert_eq!(out.model.tree_origin, vec![0, 1, 0, 1]);
        let senders: Vec<Endpoint> = out.transcript.entries.iter().map(|e| e.sender).collect();
        assert_eq!(
            senders,
            vec![Endpoint::Party(0), Endpoint::Party(1), Endpoint::Party(0)]
        );
        out.transcript.check_six_steps().unwrap();
    }

    #[test]
    fn single_party_reduces_to_centralized() {
        let data = SyntheticSpec::new(80, 3, 4).generate().unwrap();
        let shard = [PartyShard::peer(0, data.clone())];
        let central = train_centralized(&data, &params(3)).unwrap();
        assert_eq!(
            run_cyclic(&shard, &params(3), 1, &RunOptions::plain())
                .unwrap()
                .model
                .forest,
            central
        );
        assert_eq!(
            run_bagging(&shard, &params(3), 1, &RunOptions::plain())
                .unwrap()
                .model
                .forest,
            central
        );
    }

    #[test]
    fn bagging_layers_and_symmetry() {
        let data = SyntheticSpec::new(60, 3, 6).generate().unwrap();
        let shards: Vec<_> = (0..3).map(|i| PartyShard::peer(i, data.clone())).collect();
        let out = run_bagging(
            &shards,
            &params(2),
            1,
            &RunOptions::plain().with_threads(true),
        )
        .unwrap();
        let trees = &out.model.forest.trees;
        assert_eq!(trees.len(), 6);
        assert_eq!(out.model.tree_origin, vec![0, 1, 2, 0, 1, 2]);
        for layer in trees.chunks(3) {
            assert!(layer.iter().all(|t| t == &layer[0]));
            assert!(layer.iter().all(|t| t.weight == 1.0 / 3.0));
        }
    }
}
