//! The boundary between the tree engine and the transport.
//!
//! Outbound, a payload is checked against the collective call carrying it,
//! handed to the plugin for encryption where the protocol calls for it, and
//! framed as a [`ProcessorBuffer`]. Inbound, bytes are parsed and, when the
//! caller asks and its role allows, decrypted.

mod buffer;
mod payload;
mod plugin;

use std::fmt;

pub use buffer::{BufferKind, ProcessorBuffer, HEADER_LEN, MAGIC, VERSION};
pub use payload::{
    DirectionBits, EncGh, EncHistograms, EncLayout, EncNodeHistogram, Payload, SplitNotice,
    TreeSync,
};
pub use plugin::{EncryptionPlugin, PaillierPlugin, PassthroughPlugin};

use crate::dataset::{BinnedMatrix, Role};
use crate::error::{Error, Result};

/// Collective operation a message belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CallKind {
    /// Many senders, one collector (passive histograms, local cuts).
    AllGather,
    /// Many senders, combined at the server and returned to all.
    AllReduce,
    /// One sender, many receivers.
    Broadcast,
}

impl fmt::Display for CallKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CallKind::AllGather => "allgather",
            CallKind::AllReduce => "allreduce",
            CallKind::Broadcast => "broadcast",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Intent {
    /// Parse only. Ciphertexts stay ciphertexts.
    Decode,
    /// Parse and decrypt encrypted kinds.
    Decrypt,
}

fn mismatch(call: CallKind, payload: &Payload, role: Role) -> Error {
    Error::Protocol(format!(
        "{} cannot be sent by a {role} party over {call}",
        payload.kind().name()
    ))
}

/// Steps 1 and 2 of an exchange: validate, encrypt if needed, serialize.
pub fn process_outbound(
    call: CallKind,
    payload: Payload,
    plugin: &dyn EncryptionPlugin,
    role: Role,
) -> Result<ProcessorBuffer> {
    let out = match (&payload, call, role) {
        (Payload::GhPlain(gh), CallKind::Broadcast, Role::Active) => plugin.encrypt_gh(gh)?,
        (Payload::HistPlain(h), CallKind::AllReduce, Role::Peer) => plugin.encrypt_histograms(h)?,
        (Payload::HistPlain(_), CallKind::AllGather, Role::Passive) if !plugin.is_secure() => {
            payload
        }
        (Payload::HistEnc(_), CallKind::AllGather, Role::Passive) if plugin.is_secure() => payload,
        (Payload::AggPlain(_), CallKind::Broadcast, Role::Server) if !plugin.is_secure() => payload,
        (Payload::AggEnc(_), CallKind::Broadcast, Role::Server) if plugin.is_secure() => payload,
        (Payload::Cuts(_), CallKind::AllGather, Role::Peer) => payload,
        (Payload::Cuts(_), CallKind::Broadcast, Role::Server) => payload,
        (Payload::Tree(_), CallKind::Broadcast | CallKind::AllGather, _) => payload,
        _ => return Err(mismatch(call, &payload, role)),
    };
    out.to_buffer()
}

/// Steps 5 and 6: parse, then decrypt when asked and authorized.
///
/// Only a key holder may decrypt: the active party in vertical mode and the
/// clients in horizontal mode. The server and passive parties are refused
/// even if a key were somehow within reach.
pub fn process_inbound(
    bytes: &[u8],
    plugin: &dyn EncryptionPlugin,
    role: Role,
    intent: Intent,
) -> Result<Payload> {
    let buffer = ProcessorBuffer::from_bytes(bytes)?;
    let payload = Payload::from_buffer(&buffer)?;
    if intent == Intent::Decode || !buffer.kind.is_encrypted() {
        return Ok(payload);
    }
    if matches!(role, Role::Server | Role::Passive) {
        return Err(Error::Unauthorized(format!(
            "a {role} party may not decrypt {}",
            buffer.kind.name()
        )));
    }
    if !plugin.can_decrypt() {
        return Err(Error::Unauthorized(format!(
            "plugin {} holds no private key",
            plugin.name()
        )));
    }
    Ok(match payload {
        Payload::GhEnc(_) => Payload::GhPlain(plugin.decrypt_gh(&payload)?),
        Payload::HistEnc(_) => Payload::HistPlain(plugin.decrypt_histograms(&payload)?),
        Payload::AggEnc(_) => Payload::AggPlain(plugin.decrypt_histograms(&payload)?),
        other => other,
    })
}

/// Per-node histograms over a passive party's own features, summed from the
/// label holder's (possibly encrypted) gradients.
pub fn accumulate_encrypted(
    gh: &Payload,
    binned: &BinnedMatrix,
    node_rows: &[Vec<usize>],
    plugin: &dyn EncryptionPlugin,
) -> Result<Payload> {
    plugin.accumulate_rows(gh, binned, node_rows)
}

/// Server-side fold of every party's histogram payload. Needs no key.
pub fn add_encrypted_histograms(
    payloads: &[Payload],
    plugin: &dyn EncryptionPlugin,
) -> Result<Payload> {
    if payloads.len() == 1 {
        return Ok(match payloads[0].clone() {
            Payload::HistPlain(h) => Payload::AggPlain(h),
            Payload::HistEnc(e) => Payload::AggEnc(e),
            other => other,
        });
    }
    plugin.add_histograms(payloads)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::counters::OpCounters;
    use crate::dataset::BinnedMatrix;
    use crate::gbdt::{build_histogram, GHPair, GHSum, Histogram};
    use crate::he::{keygen, Keypair, PackingParams};

    fn keypair() -> Keypair {
        keygen(512, 11).unwrap()
    }

    fn paillier(kp: &Keypair, holder: bool, counters: &Arc<OpCounters>) -> PaillierPlugin {
        if holder {
            PaillierPlugin::with_keypair(kp.clone(), PackingParams::default(), 1, counters.clone())
                .unwrap()
        } else {
            PaillierPlugin::public_only(
                kp.public().clone(),
                PackingParams::default(),
                2,
                counters.clone(),
            )
            .unwrap()
        }
    }

    fn gh3() -> Vec<GHPair> {
        vec![
            GHPair::new(-0.5, 0.25),
            GHPair::new(0.5, 0.25),
            GHPair::new(-0.1, 0.09),
        ]
    }

    #[test]
    fn empty_gh_buffer() {
        let plain = PassthroughPlugin::default();
        let buf = process_outbound(
            CallKind::Broadcast,
            Payload::GhPlain(vec![]),
            &plain,
            Role::Active,
        )
        .unwrap();
        assert_eq!(buf.kind, BufferKind::GhPairsPlain);
        assert_eq!(buf.counts, [0, 0, 0]);
        assert!(buf.payload.is_empty());
    }

    #[test]
    fn plain_gh_is_six_little_endian_doubles() {
        let plain = PassthroughPlugin::default();
        let buf = process_outbound(
            CallKind::Broadcast,
            Payload::GhPlain(gh3()),
            &plain,
            Role::Active,
        )
        .unwrap();
        assert_eq!(buf.kind as u8, 1);
        let expected: Vec<u8> = [-0.5f64, 0.25, 0.5, 0.25, -0.1, 0.09]
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        assert_eq!(buf.payload, expected);
        let back = process_inbound(&buf.to_bytes(), &plain, Role::Passive, Intent::Decode).unwrap();
        assert_eq!(back, Payload::GhPlain(gh3()));
    }

    #[test]
    fn encrypted_gh_round_trips_through_key_holder() {
        let kp = keypair();
        let counters = Arc::new(OpCounters::new());
        let active = paillier(&kp, true, &counters);
        let buf = process_outbound(
            CallKind::Broadcast,
            Payload::GhPlain(gh3()),
            &active,
            Role::Active,
        )
        .unwrap();
        assert_eq!(buf.kind as u8, 2);
        assert_eq!(buf.counts[0], 3);
        assert_eq!(counters.snapshot().encryptions, 6);
        let Payload::GhPlain(back) =
            process_inbound(&buf.to_bytes(), &active, Role::Active, Intent::Decrypt).unwrap()
        else {
            panic!("expected plaintext gradients");
        };
        for (a, b) in back.iter().zip(gh3()) {
            assert!((a.g - b.g).abs() <= 2f64.powi(-40));
            assert!((a.h - b.h).abs() <= 2f64.powi(-40));
        }
    }

    #[test]
    fn server_and_passive_cannot_decrypt() {
        let kp = keypair();
        let counters = Arc::new(OpCounters::new());
        let holder = paillier(&kp, true, &counters);
        let bytes = process_outbound(
            CallKind::Broadcast,
            Payload::GhPlain(gh3()),
            &holder,
            Role::Active,
        )
        .unwrap()
        .to_bytes();
        for role in [Role::Server, Role::Passive] {
            let err = process_inbound(&bytes, &holder, role, Intent::Decrypt).unwrap_err();
            assert!(matches!(err, Error::Unauthorized(_)), "{role}: {err}");
        }
        let public = paillier(&kp, false, &counters);
        let err = process_inbound(&bytes, &public, Role::Peer, Intent::Decrypt).unwrap_err();
        assert!(matches!(err, Error::Unauthorized(_)));
        assert!(process_inbound(&bytes, &public, Role::Server, Intent::Decode).is_ok());
    }

    #[test]
    fn truncation_names_an_offset() {
        let plain = PassthroughPlugin::default();
        let bytes = process_outbound(
            CallKind::Broadcast,
            Payload::GhPlain(gh3()),
            &plain,
            Role::Active,
        )
        .unwrap()
        .to_bytes();
        for cut in [3, 10, HEADER_LEN + 5, bytes.len() - 1] {
            match process_inbound(&bytes[..cut], &plain, Role::Passive, Intent::Decode) {
                Err(Error::Parse { offset, .. }) => assert!(offset <= cut),
                other => panic!("cut at {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn wrong_call_is_rejected() {
        let plain = PassthroughPlugin::default();
        let err = process_outbound(
            CallKind::AllReduce,
            Payload::GhPlain(gh3()),
            &plain,
            Role::Active,
        );
        assert!(matches!(err, Err(Error::Protocol(_))));
        let err = process_outbound(
            CallKind::Broadcast,
            Payload::GhPlain(gh3()),
            &plain,
            Role::Passive,
        );
        assert!(matches!(err, Err(Error::Protocol(_))));
    }

    fn toy_binned() -> BinnedMatrix {
        BinnedMatrix {
            bins: vec![vec![0, 1, 1, 0], vec![2, 2, 0, 1]],
            n_bins: vec![2, 3],
        }
    }

    fn toy_gh() -> Vec<GHPair> {
        vec![
            GHPair::new(0.5, 0.25),
            GHPair::new(-0.25, 0.1875),
            GHPair::new(1.0, 0.0),
            GHPair::new(-2.0, 0.5),
        ]
    }

    #[test]
    fn encrypted_accumulation_matches_plain_builder() {
        let kp = keypair();
        let counters = Arc::new(OpCounters::new());
        let active = paillier(&kp, true, &counters);
        let passive = paillier(&kp, false, &counters);
        let enc = active.encrypt_gh(&toy_gh()).unwrap();
        let nodes = vec![vec![0, 1, 2, 3], vec![1, 3]];
        let before = counters.snapshot();
        let hist = accumulate_encrypted(&enc, &toy_binned(), &nodes, &passive).unwrap();
        let delta = counters.snapshot() - before;
        // node 0: feature 0 has 4 rows over 2 bins, feature 1 has 4 over 3
        // node 1: rows 1, 3 land in distinct bins for both features
        assert_eq!(delta.ciphertext_additions, 2 * ((4 - 2) + (4 - 3)));
        // empty slots: node 1 feature 1 bin 0
        assert_eq!(delta.padding_encryptions, 2);
        let got = active.decrypt_histograms(&hist).unwrap();
        for (rows, h) in nodes.iter().zip(&got) {
            assert_eq!(h, &build_histogram(&toy_binned(), &toy_gh(), rows).unwrap());
        }
    }

    #[test]
    fn singleton_accumulation() {
        let kp = keypair();
        let counters = Arc::new(OpCounters::new());
        let active = paillier(&kp, true, &counters);
        let binned = BinnedMatrix {
            bins: vec![vec![3]],
            n_bins: vec![4],
        };
        let gh = vec![GHPair::new(1.0, 2.0)];
        let enc = active.encrypt_gh(&gh).unwrap();
        let got = active
            .decrypt_histograms(&accumulate_encrypted(&enc, &binned, &[vec![0]], &active).unwrap())
            .unwrap();
        for b in 0..4 {
            let expect = if b == 3 { (1.0, 2.0) } else { (0.0, 0.0) };
            assert_eq!(got[0].get(0, b), expect);
        }
    }

    #[test]
    fn row_count_mismatch_is_rejected() {
        let plain = PassthroughPlugin::default();
        let err = accumulate_encrypted(
            &Payload::GhPlain(toy_gh()[..3].to_vec()),
            &toy_binned(),
            &[vec![0]],
            &plain,
        );
        assert!(matches!(err, Err(Error::LengthMismatch { .. })));
    }

    fn toy_hist(seed: i128) -> Histogram {
        let mut h = Histogram::zeros(vec![3, 2], 3);
        h.accumulate(0, 1, GHSum::new(seed * 1000, seed.abs() * 7));
        h.accumulate(1, 0, GHSum::new(-seed, 3));
        h.accumulate(0, 2, GHSum::new(seed << 40, 1 << 38));
        h
    }

    #[test]
    fn server_aggregation_counts_and_sums() {
        let kp = keypair();
        let counters = Arc::new(OpCounters::new());
        let clients: Vec<_> = (0..5).map(|_| paillier(&kp, true, &counters)).collect();
        let server = paillier(&kp, false, &counters);
        let hists: Vec<Histogram> = (0..5).map(|i| toy_hist(i as i128 - 2)).collect();
        let payloads: Vec<Payload> = clients
            .iter()
            .zip(&hists)
            .map(|(c, h)| {
                let buf = process_outbound(
                    CallKind::AllReduce,
                    Payload::HistPlain(vec![h.clone()]),
                    c,
                    Role::Peer,
                )
                .unwrap();
                process_inbound(&buf.to_bytes(), &server, Role::Server, Intent::Decode).unwrap()
            })
            .collect();
        let before = counters.snapshot();
        let agg = add_encrypted_histograms(&payloads, &server).unwrap();
        assert_eq!((counters.snapshot() - before).vector_additions, 8);
        assert_eq!(counters.snapshot().vector_encryptions, 10);
        let bytes = process_outbound(CallKind::Broadcast, agg, &server, Role::Server)
            .unwrap()
            .to_bytes();
        let Payload::AggPlain(got) =
            process_inbound(&bytes, &clients[0], Role::Peer, Intent::Decrypt).unwrap()
        else {
            panic!("expected plaintext aggregate");
        };
        let mut expect = hists[0].clone();
        for h in &hists[1..] {
            expect.merge(h).unwrap();
        }
        assert_eq!(got, vec![expect]);
    }

    #[test]
    fn single_payload_is_identity() {
        let plain = PassthroughPlugin::default();
        let h = toy_hist(3);
        let agg = add_encrypted_histograms(&[Payload::HistPlain(vec![h.clone()])], &plain).unwrap();
        assert_eq!(agg, Payload::AggPlain(vec![h]));
    }

    #[test]
    fn key_mismatch_is_rejected() {
        let a = keypair();
        let b = keygen(512, 12).unwrap();
        let counters = Arc::new(OpCounters::new());
        let pa = paillier(&a, true, &counters);
        let pb = paillier(&b, true, &counters);
        let enc = pa.encrypt_histograms(&[toy_hist(1)]).unwrap();
        assert!(matches!(
            pb.decrypt_histograms(&enc),
            Err(Error::KeyMismatch(..))
        ));
    }
}
