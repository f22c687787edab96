//! Byte-for-byte wire stability. Run with `FEDXGB_BLESS=1` to rewrite the
//! files after an intentional format change.

use std::path::PathBuf;
use std::sync::Arc;

use fedxgb::counters::OpCounters;
use fedxgb::dataset::Role;
use fedxgb::gbdt::{GHPair, GHSum, Histogram};
use fedxgb::he::{keygen, PackingParams};
use fedxgb::processor::{
    add_encrypted_histograms, process_outbound, CallKind, DirectionBits, EncryptionPlugin, PaillierPlugin,
    PassthroughPlugin, Payload, ProcessorBuffer, SplitNotice, TreeSync,
};
use fedxgb::Error;

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn histogram(shift: i128) -> Histogram {
    let mut h = Histogram::zeros(vec![2, 3], 3);
    h.accumulate(0, 1, GHSum::new(-(5 << 40) + shift, 3 << 40));
    h.accumulate(1, 2, GHSum::new((1 << 39) + shift, 1 << 38));
    h
}

fn gh() -> Vec<GHPair> {
    vec![
        GHPair::new(-0.5, 0.25),
        GHPair::new(0.5, 0.25),
        GHPair::new(0.125, 0.109375),
    ]
}

fn secure_plugin() -> PaillierPlugin {
    PaillierPlugin::with_keypair(
        keygen(512, 2024).unwrap(),
        PackingParams::default(),
        7,
        Arc::new(OpCounters::new()),
    )
    .unwrap()
}

/// One buffer per kind, built through the same entry points the protocols use.
fn cases() -> Vec<(&'static str, Vec<u8>)> {
    let plain = PassthroughPlugin::default();
    let secure = secure_plugin();
    let out = |call, payload, plugin: &dyn EncryptionPlugin, role| {
        process_outbound(call, payload, plugin, role).unwrap().to_bytes()
    };
    let hist_enc = |shift| {
        Payload::from_buffer(&process_outbound(
            CallKind::AllReduce,
            Payload::HistPlain(vec![histogram(shift)]),
            &secure,
            Role::Peer,
        )
        .unwrap())
        .unwrap()
    };
    let agg_enc = add_encrypted_histograms(&[hist_enc(0), hist_enc(1)], &secure).unwrap();
    let agg_plain = add_encrypted_histograms(
        &[Payload::HistPlain(vec![histogram(0)]), Payload::HistPlain(vec![histogram(1)])],
        &plain,
    )
    .unwrap();
    vec![
        ("gh_pairs_plain", out(CallKind::Broadcast, Payload::GhPlain(gh()), &plain, Role::Active)),
        ("gh_pairs_enc", out(CallKind::Broadcast, Payload::GhPlain(gh()), &secure, Role::Active)),
        (
            "histogram_plain",
            out(CallKind::AllReduce, Payload::HistPlain(vec![histogram(0)]), &plain, Role::Peer),
        ),
        ("histogram_enc", hist_enc(0).to_bytes().unwrap()),
        ("agg_result_plain", out(CallKind::Broadcast, agg_plain, &plain, Role::Server)),
        ("agg_result_enc", out(CallKind::Broadcast, agg_enc, &secure, Role::Server)),
        (
            "cut_sync",
            out(
                CallKind::Broadcast,
                Payload::Cuts(vec![vec![-1.25, 0.5, 3.0], vec![]]),
                &plain,
                Role::Server,
            ),
        ),
        (
            "tree_sync_splits",
            Payload::Tree(TreeSync::Splits(vec![
                SplitNotice {
                    node_id: 0,
                    split: Some((1, 0, 2)),
                },
                SplitNotice {
                    node_id: 1,
                    split: None,
                },
            ]))
            .to_bytes()
            .unwrap(),
        ),
        (
            "tree_sync_directions",
            Payload::Tree(TreeSync::Directions {
                n_rows: 10,
                entries: vec![DirectionBits {
                    tree: 0,
                    node: 3,
                    goes_left: vec![true, false, false, true, true, false, true, false, true, true],
                }],
            })
            .to_bytes()
            .unwrap(),
        ),
    ]
}

#[test]
fn every_buffer_kind_matches_its_golden_file() {
    let dir = golden_dir();
    let bless = std::env::var_os("FEDXGB_BLESS").is_some();
    let mut kinds = std::collections::BTreeSet::new();
    for (name, bytes) in cases() {
        kinds.insert(bytes[5]);
        let path = dir.join(format!("{name}.bin"));
        if bless {
            std::fs::create_dir_all(&dir).unwrap();
            std::fs::write(&path, &bytes).unwrap();
            continue;
        }
        let expected = std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}; rerun with FEDXGB_BLESS=1", path.display()));
        assert_eq!(bytes, expected, "{name} drifted from {}", path.display());
        // Decoding and re-encoding is the identity on the golden bytes.
        assert_eq!(Payload::from_bytes(&expected).unwrap().to_bytes().unwrap(), expected, "{name}");
    }
    assert_eq!(kinds.into_iter().collect::<Vec<_>>(), (1..=8).collect::<Vec<u8>>());
}

#[test]
fn plain_gh_golden_is_six_little_endian_doubles() {
    let bytes = std::fs::read(golden_dir().join("gh_pairs_plain.bin")).unwrap();
    assert_eq!(&bytes[..4], b"SFXB");
    assert_eq!(bytes[4], 1);
    assert_eq!(bytes[5], 1);
    assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 3);
    let payload = &bytes[18..];
    assert_eq!(payload.len(), 6 * 8);
    let values: Vec<f64> = payload
        .chunks(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    assert_eq!(values, vec![-0.5, 0.25, 0.5, 0.25, 0.125, 0.109375]);
}

#[test]
fn truncated_golden_files_name_an_offset() {
    for (name, _) in cases() {
        let bytes = std::fs::read(golden_dir().join(format!("{name}.bin"))).unwrap();
        for k in [3, 17, bytes.len() - 1] {
            match Payload::from_bytes(&bytes[..k]) {
                Err(Error::Parse { offset, .. }) => assert!(offset <= k, "{name} cut at {k}: offset {offset}"),
                other => panic!("{name} cut at {k}: {other:?}"),
            }
        }
        let mut header = ProcessorBuffer::from_bytes(&bytes).unwrap().to_bytes();
        header[4] = 2;
        assert!(matches!(Payload::from_bytes(&header), Err(Error::Parse { offset: 4, .. })));
    }
}
