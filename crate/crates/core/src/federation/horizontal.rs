use std::collections::BTreeSet;
use std::sync::Arc;

use crate::counters::OpCounters;
use crate::dataset::{compute_cuts, merge_cut_candidates, BinCuts, BinnedMatrix, PartyShard, Role};
use crate::error::{Error, Result};
use crate::federation::{
    par_map, timed, Endpoint, PhaseTimings, RoundMeter, RunOptions, RunOutput, Transport,
};
use crate::gbdt::{build_histogram, compute_gradients, Forest, TrainParams, TreeGrower};
use crate::processor::{
    add_encrypted_histograms, process_inbound, process_outbound, CallKind, EncryptionPlugin,
    Intent, Payload,
};

#[derive(Clone, Debug, PartialEq)]
pub struct HorizontalModel {
    pub forest: Forest,
    /// The merged cuts every party binned with.
    pub cuts: BinCuts,
    /// Each party's own copy of the forest, in party order.
    pub party_forests: Vec<Forest>,
}

struct Peer<'a> {
    shard: &'a PartyShard,
    labels: &'a [f64],
    plugin: Arc<dyn EncryptionPlugin>,
    binned: Option<BinnedMatrix>,
    raw: Vec<f64>,
}

impl Peer<'_> {
    fn endpoint(&self) -> Endpoint {
        Endpoint::Party(self.shard.party_id)
    }

    fn binned(&self) -> &BinnedMatrix {
        self.binned.as_ref().expect("binned after cut sync")
    }
}

fn validate(shards: &[PartyShard]) -> Result<()> {
    let first = shards
        .first()
        .ok_or_else(|| Error::InvalidPartition("no parties".into()))?;
    let mut seen_ids = BTreeSet::new();
    let mut seen_rows = BTreeSet::new();
    for s in shards {
        if s.role != Role::Peer {
            return Err(Error::InvalidPartition(format!(
                "party {} has role {}, horizontal parties must be peers",
                s.party_id, s.role
            )));
        }
        if !seen_ids.insert(s.party_id) {
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
        if s.data.label().is_none() {
            return Err(Error::InvalidPartition(format!(
                "party {} has no label",
                s.party_id
            )));
        }
        for &r in s.data.row_ids() {
            if !seen_rows.insert(r) {
                return Err(Error::InvalidPartition(format!(
                    "row id {r} appears in more than one shard"
                )));
            }
        }
    }
    Ok(())
}

/// Histogram-based horizontal training.
///
/// Parties agree on cuts by sending local candidates to the server, which
/// merges and returns them. Then, level by level, every party sends its
/// local node histograms, the server sums them without decrypting, and every
/// party decrypts the global histograms and makes the same split decisions
/// on its own rows.
pub fn run_horizontal_histogram(
    shards: &[PartyShard],
    params: &TrainParams,
    opts: &RunOptions,
) -> Result<RunOutput<HorizontalModel>> {
    params.validate()?;
    validate(shards)?;
    let counters = Arc::new(OpCounters::new());
    let mut transport = Transport::new(counters.clone());
    let mut timings = PhaseTimings::default();
    let mut meter = RoundMeter::new(counters.clone());
    let server_plugin = opts
        .security
        .plugin_for(Endpoint::Server, false, &counters)?;
    let mut peers = shards
        .iter()
        .map(|s| {
            Ok(Peer {
                shard: s,
                labels: s.data.label().expect("validated"),
                plugin: opts
                    .security
                    .plugin_for(Endpoint::Party(s.party_id), true, &counters)?,
                binned: None,
                raw: vec![0.0; s.data.n_rows()],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let endpoints: Vec<Endpoint> = peers.iter().map(Peer::endpoint).collect();
    let feature_names = shards[0].data.feature_names().to_vec();

    // Cut agreement.
    let cut_start = std::time::Instant::now();
    let mut gathered = Vec::with_capacity(peers.len());
    for p in &peers {
        let local = p
            .shard
            .data
            .columns()
            .iter()
            .map(|c| compute_cuts(c, params.max_bin))
            .collect::<Result<Vec<_>>>()?;
        let buf = process_outbound(
            CallKind::AllGather,
            Payload::Cuts(local),
            &*p.plugin,
            Role::Peer,
        )?;
        let id = transport.send(
            "cuts",
            CallKind::AllGather,
            p.endpoint(),
            Endpoint::Server,
            &buf,
        );
        let payload = transport.receive(id, |b| {
            process_inbound(b, &*server_plugin, Role::Server, Intent::Decode)
        })?;
        let Payload::Cuts(c) = payload else {
            return Err(Error::Protocol("expected local cuts".into()));
        };
        gathered.push(c);
    }
    let merged: Vec<Vec<f64>> = (0..feature_names.len())
        .map(|f| {
            let lists: Vec<Vec<f64>> = gathered.iter().map(|g| g[f].clone()).collect();
            merge_cut_candidates(&lists, params.max_bin)
        })
        .collect();
    let buf = process_outbound(
        CallKind::Broadcast,
        Payload::Cuts(merged),
        &*server_plugin,
        Role::Server,
    )?;
    let ids = transport.send_all(
        "cuts",
        CallKind::Broadcast,
        Endpoint::Server,
        &endpoints,
        &buf,
    );
    let mut cuts = None;
    for (p, id) in peers.iter_mut().zip(ids) {
        let payload = transport.receive(id, |b| {
            process_inbound(b, &*p.plugin, Role::Peer, Intent::Decode)
        })?;
        let Payload::Cuts(per_feature) = payload else {
            return Err(Error::Protocol("expected merged cuts".into()));
        };
        let c = BinCuts { per_feature };
        p.binned = Some(BinnedMatrix::new(&p.shard.data, &c)?);
        cuts = Some(c);
    }
    let cuts = cuts.expect("at least one party");
    timings.cuts += cut_start.elapsed();

    let mut forests = vec![Forest::new(params); peers.len()];
    for round in 0..params.num_trees {
        transport.set_round(round);
        let ghs = timed(&mut timings.gradient, || {
            peers
                .iter()
                .zip(&forests)
                .map(|(p, forest)| {
                    let probs: Vec<f64> = p.raw.iter().map(|&s| forest.probability(s)).collect();
                    compute_gradients(p.labels, &probs)
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let mut growers: Vec<TreeGrower> = peers
            .iter()
            .map(|p| TreeGrower::new(params, (0..p.shard.data.n_rows()).collect()))
            .collect();
        while !growers[0].is_done() {
            let work: Vec<(&Peer, &TreeGrower, &Vec<_>)> = peers
                .iter()
                .zip(&growers)
                .zip(&ghs)
                .map(|((p, g), gh)| (p, g, gh))
                .collect();
            let buffers = timed(&mut timings.encrypt, || {
                par_map(opts.threads, &work, |(p, grower, gh)| {
                    let hists = grower
                        .frontier()
                        .iter()
                        .map(|node| build_histogram(p.binned(), gh, &node.rows))
                        .collect::<Result<Vec<_>>>()?;
                    process_outbound(
                        CallKind::AllReduce,
                        Payload::HistPlain(hists),
                        &*p.plugin,
                        Role::Peer,
                    )
                })
            })?;
            let mut local = Vec::with_capacity(peers.len());
            for (p, buf) in peers.iter().zip(&buffers) {
                let id = transport.send(
                    "histogram",
                    CallKind::AllReduce,
                    p.endpoint(),
                    Endpoint::Server,
                    buf,
                );
                local.push(transport.receive(id, |b| {
                    process_inbound(b, &*server_plugin, Role::Server, Intent::Decode)
                })?);
            }
            let agg = timed(&mut timings.aggregate, || {
                add_encrypted_histograms(&local, &*server_plugin)
            })?;
            let buf = process_outbound(CallKind::Broadcast, agg, &*server_plugin, Role::Server)?;
            let ids = transport.send_all(
                "aggregate",
                CallKind::Broadcast,
                Endpoint::Server,
                &endpoints,
                &buf,
            );
            let inbound: Vec<(&Peer, Vec<u8>)> = peers
                .iter()
                .zip(&ids)
                .map(|(p, &id)| (p, transport.bytes(id).to_vec()))
                .collect();
            let globals = timed(&mut timings.decrypt, || {
                par_map(opts.threads, &inbound, |(p, bytes)| match process_inbound(
                    bytes,
                    &*p.plugin,
                    Role::Peer,
                    Intent::Decrypt,
                )? {
                    Payload::AggPlain(h) => Ok(h),
                    other => Err(Error::Protocol(format!(
                        "expected an aggregate, got {}",
                        other.kind().name()
                    ))),
                })
            })?;
            for id in ids {
                transport.mark_inbound(id);
            }
            timed(&mut timings.split, || {
                for ((p, grower), global) in peers.iter().zip(growers.iter_mut()).zip(&globals) {
                    let binned = p.binned();
                    grower.expand(global, |node, split| {
                        let bins = &binned.bins[split.feature];
                        Ok(node
                            .rows
                            .iter()
                            .map(|&r| bins[r] as usize <= split.cut_index)
                            .collect())
                    })?;
                }
                Ok::<_, Error>(())
            })?;
        }
        for ((p, grower), forest) in peers.iter_mut().zip(growers).zip(forests.iter_mut()) {
            let (structure, leaves) = grower.finish()?;
            let tree = structure.materialize(&feature_names, &cuts)?;
            for leaf in &leaves {
                for &r in &leaf.rows {
                    p.raw[r] += tree.weight * leaf.weight;
                }
            }
            forest.trees.push(tree);
        }
        meter.close_round();
    }
    if forests.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::Protocol(
            "parties ended with different forests".into(),
        ));
    }
    Ok(RunOutput {
        model: HorizontalModel {
            forest: forests[0].clone(),
            cuts,
            party_forests: forests,
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

    #[test]
    fn single_party_equals_centralized() {
        let data = SyntheticSpec::new(120, 4, 5).generate().unwrap();
        let shard = PartyShard::peer(0, data.clone());
        let out = run_horizontal_histogram(&[shard], &params(), &RunOptions::plain()).unwrap();
        assert_eq!(
            out.model.forest,
            train_centralized(&data, &params()).unwrap()
        );
    }

    #[test]
    fn secure_and_plain_agree_and_count() {
        let data = SyntheticSpec::new(150, 3, 9).generate().unwrap();
        let shards = split_horizontal(&data, 3).unwrap();
        let plain = run_horizontal_histogram(&shards, &params(), &RunOptions::plain()).unwrap();
        let secure = run_horizontal_histogram(
            &shards,
            &params(),
            &RunOptions::secure(keygen(512, 3).unwrap(), 4).with_threads(true),
        )
        .unwrap();
        assert_eq!(plain.model.forest.to_text(), secure.model.forest.to_text());
        secure.transcript.check_six_steps().unwrap();
        let nodes: usize = secure
            .transcript
            .entries
            .iter()
            .filter(|e| e.step == "aggregate" && e.receiver == Endpoint::Party(0))
            .map(|e| match Payload::from_bytes(&e.bytes).unwrap() {
                Payload::AggEnc(h) => h.nodes.len(),
                other => panic!("unexpected {:?}", other.kind()),
            })
            .sum();
        assert_eq!(
            secure.counters.vector_additions,
            (2 * (3 - 1) * nodes) as u64
        );
        assert_eq!(secure.counters.vector_encryptions, (2 * 3 * nodes) as u64);
    }

    #[test]
    fn overlapping_rows_rejected() {
        let data = SyntheticSpec::new(20, 2, 1).generate().unwrap();
        let shards = vec![PartyShard::peer(0, data.clone()), PartyShard::peer(1, data)];
        assert!(matches!(
            run_horizontal_histogram(&shards, &params(), &RunOptions::plain()),
            Err(Error::InvalidPartition(_))
        ));
    }
}
