//! Typed message bodies and their byte layouts.
//!
//! Integers are little-endian. Ciphertexts are a `u32` byte length followed
//! by the big-endian integer. Encrypted bodies start with the `u64` key id.

use crate::error::{Error, Result};
use crate::gbdt::{GHPair, Histogram};
use crate::he::Ciphertext;
use crate::processor::buffer::{
    checked_u32, put_biguint, put_u32, BufferKind, ProcessorBuffer, Reader, HEADER_LEN,
};

/// Encrypted per-sample gradients, `(g, h)` per row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncGh {
    pub key_id: u64,
    pub pairs: Vec<(Ciphertext, Ciphertext)>,
}

/// How histogram slots map onto ciphertexts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncLayout {
    /// One ciphertext per slot.
    Scalar,
    /// `slots_per_ciphertext` slots of `slot_bits` each per ciphertext.
    Packed {
        slot_bits: u32,
        slots_per_ciphertext: u32,
    },
}

/// Encrypted G and H vectors for one node, each over `n_features * width`
/// slots in feature-major order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncNodeHistogram {
    pub g: Vec<Ciphertext>,
    pub h: Vec<Ciphertext>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncHistograms {
    pub key_id: u64,
    pub layout: EncLayout,
    pub feature_bins: Vec<usize>,
    pub width: usize,
    pub nodes: Vec<EncNodeHistogram>,
}

impl EncHistograms {
    pub fn n_slots(&self) -> usize {
        self.feature_bins.len() * self.width
    }

    pub fn same_shape(&self, other: &EncHistograms) -> bool {
        self.key_id == other.key_id
            && self.layout == other.layout
            && self.feature_bins == other.feature_bins
            && self.width == other.width
            && self.nodes.len() == other.nodes.len()
            && self
                .nodes
                .iter()
                .zip(&other.nodes)
                .all(|(a, b)| a.g.len() == b.g.len() && a.h.len() == b.h.len())
    }

    pub fn n_ciphertexts(&self) -> usize {
        self.nodes.iter().map(|n| n.g.len() + n.h.len()).sum()
    }
}

/// A split announced by the label holder: which party owns the feature, that
/// party's local feature index, and the cut index. `None` marks a leaf.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitNotice {
    pub node_id: u32,
    pub split: Option<(u32, u32, u32)>,
}

/// Per-node left/right bits for one tree, produced by the node's owner.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DirectionBits {
    pub tree: u32,
    pub node: u32,
    pub goes_left: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TreeSync {
    /// Whole forest in its text form.
    Forest(String),
    Splits(Vec<SplitNotice>),
    /// Left/right bits for the rows of one node, in the node's row order.
    Partition {
        node_id: u32,
        goes_left: Vec<bool>,
    },
    Directions {
        n_rows: u32,
        entries: Vec<DirectionBits>,
    },
}

const SYNC_FOREST: u8 = 0;
const SYNC_SPLITS: u8 = 1;
const SYNC_PARTITION: u8 = 2;
const SYNC_DIRECTIONS: u8 = 3;

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    GhPlain(Vec<GHPair>),
    GhEnc(EncGh),
    HistPlain(Vec<Histogram>),
    HistEnc(EncHistograms),
    AggPlain(Vec<Histogram>),
    AggEnc(EncHistograms),
    Cuts(Vec<Vec<f64>>),
    Tree(TreeSync),
}

impl Payload {
    pub fn kind(&self) -> BufferKind {
        match self {
            Payload::GhPlain(_) => BufferKind::GhPairsPlain,
            Payload::GhEnc(_) => BufferKind::GhPairsEnc,
            Payload::HistPlain(_) => BufferKind::HistogramPlain,
            Payload::HistEnc(_) => BufferKind::HistogramEnc,
            Payload::AggPlain(_) => BufferKind::AggResultPlain,
            Payload::AggEnc(_) => BufferKind::AggResultEnc,
            Payload::Cuts(_) => BufferKind::CutSync,
            Payload::Tree(_) => BufferKind::TreeSync,
        }
    }

    pub fn to_buffer(&self) -> Result<ProcessorBuffer> {
        let mut payload = Vec::new();
        let counts = match self {
            Payload::GhPlain(gh) => {
                for p in gh {
                    payload.extend_from_slice(&p.g.to_le_bytes());
                    payload.extend_from_slice(&p.h.to_le_bytes());
                }
                [checked_u32(gh.len(), "n_samples")?, 0, 0]
            }
            Payload::GhEnc(enc) => {
                payload.extend_from_slice(&enc.key_id.to_le_bytes());
                for (g, h) in &enc.pairs {
                    put_biguint(&mut payload, &g.value);
                    put_biguint(&mut payload, &h.value);
                }
                [checked_u32(enc.pairs.len(), "n_samples")?, 0, 0]
            }
            Payload::HistPlain(hists) | Payload::AggPlain(hists) => {
                encode_plain_histograms(hists, &mut payload)?
            }
            Payload::HistEnc(enc) | Payload::AggEnc(enc) => {
                encode_enc_histograms(enc, &mut payload)?
            }
            Payload::Cuts(cuts) => {
                for c in cuts {
                    put_u32(&mut payload, checked_u32(c.len(), "cut count")?);
                    for v in c {
                        payload.extend_from_slice(&v.to_le_bytes());
                    }
                }
                [checked_u32(cuts.len(), "n_features")?, 0, 0]
            }
            Payload::Tree(sync) => encode_tree_sync(sync, &mut payload)?,
        };
        Ok(ProcessorBuffer {
            kind: self.kind(),
            counts,
            payload,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(self.to_buffer()?.to_bytes())
    }

    pub fn from_buffer(buf: &ProcessorBuffer) -> Result<Payload> {
        let mut r = Reader::new(&buf.payload, HEADER_LEN);
        let [c0, c1, c2] = buf.counts.map(|c| c as usize);
        let payload = match buf.kind {
            BufferKind::GhPairsPlain => {
                r.check_remaining(c0, 16, "n_samples")?;
                let gh = (0..c0)
                    .map(|_| Ok(GHPair::new(r.f64("g")?, r.f64("h")?)))
                    .collect::<Result<_>>()?;
                Payload::GhPlain(gh)
            }
            BufferKind::GhPairsEnc => {
                let key_id = r.u64("key id")?;
                r.check_remaining(c0, 8, "n_samples")?;
                let pairs = (0..c0)
                    .map(|_| {
                        let g = r.biguint("g ciphertext")?;
                        let h = r.biguint("h ciphertext")?;
                        Ok((
                            Ciphertext { value: g, key_id },
                            Ciphertext { value: h, key_id },
                        ))
                    })
                    .collect::<Result<_>>()?;
                Payload::GhEnc(EncGh { key_id, pairs })
            }
            BufferKind::HistogramPlain => {
                Payload::HistPlain(decode_plain_histograms(&mut r, c0, c1, c2)?)
            }
            BufferKind::AggResultPlain => {
                Payload::AggPlain(decode_plain_histograms(&mut r, c0, c1, c2)?)
            }
            BufferKind::HistogramEnc => {
                Payload::HistEnc(decode_enc_histograms(&mut r, c0, c1, c2)?)
            }
            BufferKind::AggResultEnc => Payload::AggEnc(decode_enc_histograms(&mut r, c0, c1, c2)?),
            BufferKind::CutSync => {
                r.check_remaining(c0, 4, "n_features")?;
                let mut cuts = Vec::with_capacity(c0);
                for _ in 0..c0 {
                    let n = r.u32("cut count")? as usize;
                    r.check_remaining(n, 8, "cut")?;
                    cuts.push((0..n).map(|_| r.f64("cut")).collect::<Result<_>>()?);
                }
                Payload::Cuts(cuts)
            }
            BufferKind::TreeSync => Payload::Tree(decode_tree_sync(&mut r, c0)?),
        };
        r.finish()?;
        Ok(payload)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Payload> {
        Payload::from_buffer(&ProcessorBuffer::from_bytes(bytes)?)
    }
}

fn put_feature_bins(out: &mut Vec<u8>, feature_bins: &[usize]) -> Result<()> {
    for &b in feature_bins {
        put_u32(out, checked_u32(b, "bin count")?);
    }
    Ok(())
}

fn take_feature_bins(r: &mut Reader<'_>, n_features: usize, width: usize) -> Result<Vec<usize>> {
    r.check_remaining(n_features, 4, "n_features")?;
    (0..n_features)
        .map(|_| {
            let at = r.offset();
            let b = r.u32("bin count")? as usize;
            if b > width {
                return Err(Error::parse(
                    at,
                    format!("bin count {b} exceeds width {width}"),
                ));
            }
            Ok(b)
        })
        .collect()
}

fn encode_plain_histograms(hists: &[Histogram], out: &mut Vec<u8>) -> Result<[u32; 3]> {
    let (feature_bins, width) = match hists.first() {
        Some(h) => (h.feature_bins().to_vec(), h.width()),
        None => (Vec::new(), 0),
    };
    if hists
        .iter()
        .any(|h| h.feature_bins() != feature_bins.as_slice() || h.width() != width)
    {
        return Err(Error::InvalidData(
            "histograms in one message must share a shape".into(),
        ));
    }
    put_feature_bins(out, &feature_bins)?;
    for h in hists {
        for (g, hh) in h.raw_g().iter().zip(h.raw_h()) {
            out.extend_from_slice(&g.to_le_bytes());
            out.extend_from_slice(&hh.to_le_bytes());
        }
    }
    Ok([
        checked_u32(feature_bins.len(), "n_features")?,
        checked_u32(width, "n_bins")?,
        checked_u32(hists.len(), "n_nodes")?,
    ])
}

fn decode_plain_histograms(
    r: &mut Reader<'_>,
    n_features: usize,
    width: usize,
    n_nodes: usize,
) -> Result<Vec<Histogram>> {
    let feature_bins = take_feature_bins(r, n_features, width)?;
    let slots = n_features
        .checked_mul(width)
        .ok_or_else(|| Error::parse(r.offset(), "histogram size overflows"))?;
    r.check_remaining(n_nodes, slots.saturating_mul(32), "n_nodes")?;
    (0..n_nodes)
        .map(|_| {
            let mut g = Vec::with_capacity(slots);
            let mut h = Vec::with_capacity(slots);
            for _ in 0..slots {
                g.push(r.i128("G")?);
                h.push(r.i128("H")?);
            }
            Histogram::from_raw(feature_bins.clone(), width, g, h)
        })
        .collect()
}

fn encode_enc_histograms(enc: &EncHistograms, out: &mut Vec<u8>) -> Result<[u32; 3]> {
    out.extend_from_slice(&enc.key_id.to_le_bytes());
    match enc.layout {
        EncLayout::Scalar => out.push(0),
        EncLayout::Packed {
            slot_bits,
            slots_per_ciphertext,
        } => {
            out.push(1);
            put_u32(out, slot_bits);
            put_u32(out, slots_per_ciphertext);
        }
    }
    put_feature_bins(out, &enc.feature_bins)?;
    for node in &enc.nodes {
        if node.g.len() != node.h.len() {
            return Err(Error::InvalidData(
                "G and H vectors differ in length".into(),
            ));
        }
        put_u32(out, checked_u32(node.g.len(), "ciphertext count")?);
        for c in node.g.iter().chain(&node.h) {
            if c.key_id != enc.key_id {
                return Err(Error::KeyMismatch(c.key_id, enc.key_id));
            }
            put_biguint(out, &c.value);
        }
    }
    Ok([
        checked_u32(enc.feature_bins.len(), "n_features")?,
        checked_u32(enc.width, "n_bins")?,
        checked_u32(enc.nodes.len(), "n_nodes")?,
    ])
}

fn decode_enc_histograms(
    r: &mut Reader<'_>,
    n_features: usize,
    width: usize,
    n_nodes: usize,
) -> Result<EncHistograms> {
    let key_id = r.u64("key id")?;
    let at = r.offset();
    let layout = match r.u8("layout")? {
        0 => EncLayout::Scalar,
        1 => EncLayout::Packed {
            slot_bits: r.u32("slot bits")?,
            slots_per_ciphertext: r.u32("slots per ciphertext")?,
        },
        other => return Err(Error::parse(at, format!("unknown layout {other}"))),
    };
    let feature_bins = take_feature_bins(r, n_features, width)?;
    r.check_remaining(n_nodes, 4, "n_nodes")?;
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let count = r.u32("ciphertext count")? as usize;
        r.check_remaining(count, 8, "ciphertext")?;
        let mut read = |what| -> Result<Vec<Ciphertext>> {
            (0..count)
                .map(|_| {
                    Ok(Ciphertext {
                        value: r.biguint(what)?,
                        key_id,
                    })
                })
                .collect()
        };
        let g = read("G ciphertext")?;
        let h = read("H ciphertext")?;
        nodes.push(EncNodeHistogram { g, h });
    }
    Ok(EncHistograms {
        key_id,
        layout,
        feature_bins,
        width,
        nodes,
    })
}

fn put_bits(out: &mut Vec<u8>, bits: &[bool]) -> Result<()> {
    put_u32(out, checked_u32(bits.len(), "bit count")?);
    let mut bytes = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            bytes[i / 8] |= 1 << (i % 8);
        }
    }
    out.extend_from_slice(&bytes);
    Ok(())
}

fn take_bits(r: &mut Reader<'_>) -> Result<Vec<bool>> {
    let n = r.u32("bit count")? as usize;
    let bytes = r.take(n.div_ceil(8), "bitmap")?;
    Ok((0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect())
}

fn encode_tree_sync(sync: &TreeSync, out: &mut Vec<u8>) -> Result<[u32; 3]> {
    let records = match sync {
        TreeSync::Forest(text) => {
            out.push(SYNC_FOREST);
            put_u32(out, checked_u32(text.len(), "forest length")?);
            out.extend_from_slice(text.as_bytes());
            1
        }
        TreeSync::Splits(notices) => {
            out.push(SYNC_SPLITS);
            for n in notices {
                put_u32(out, n.node_id);
                match n.split {
                    None => out.push(0),
                    Some((owner, feature, cut)) => {
                        out.push(1);
                        put_u32(out, owner);
                        put_u32(out, feature);
                        put_u32(out, cut);
                    }
                }
            }
            notices.len()
        }
        TreeSync::Partition { node_id, goes_left } => {
            out.push(SYNC_PARTITION);
            put_u32(out, *node_id);
            put_bits(out, goes_left)?;
            1
        }
        TreeSync::Directions { n_rows, entries } => {
            out.push(SYNC_DIRECTIONS);
            put_u32(out, *n_rows);
            for e in entries {
                put_u32(out, e.tree);
                put_u32(out, e.node);
                put_bits(out, &e.goes_left)?;
            }
            entries.len()
        }
    };
    Ok([checked_u32(records, "records")?, 0, 0])
}

fn decode_tree_sync(r: &mut Reader<'_>, records: usize) -> Result<TreeSync> {
    let at = r.offset();
    Ok(match r.u8("sync type")? {
        SYNC_FOREST => {
            let len = r.u32("forest length")? as usize;
            let at = r.offset();
            let bytes = r.take(len, "forest text")?;
            TreeSync::Forest(
                String::from_utf8(bytes.to_vec())
                    .map_err(|_| Error::parse(at, "forest text is not utf-8"))?,
            )
        }
        SYNC_SPLITS => {
            r.check_remaining(records, 5, "split notices")?;
            let notices = (0..records)
                .map(|_| {
                    let node_id = r.u32("node id")?;
                    let at = r.offset();
                    let split = match r.u8("split flag")? {
                        0 => None,
                        1 => Some((r.u32("owner")?, r.u32("feature")?, r.u32("cut")?)),
                        other => return Err(Error::parse(at, format!("bad split flag {other}"))),
                    };
                    Ok(SplitNotice { node_id, split })
                })
                .collect::<Result<_>>()?;
            TreeSync::Splits(notices)
        }
        SYNC_PARTITION => TreeSync::Partition {
            node_id: r.u32("node id")?,
            goes_left: take_bits(r)?,
        },
        SYNC_DIRECTIONS => {
            let n_rows = r.u32("n_rows")?;
            r.check_remaining(records, 12, "direction entries")?;
            let entries = (0..records)
                .map(|_| {
                    Ok(DirectionBits {
                        tree: r.u32("tree")?,
                        node: r.u32("node")?,
                        goes_left: take_bits(r)?,
                    })
                })
                .collect::<Result<_>>()?;
            TreeSync::Directions { n_rows, entries }
        }
        other => return Err(Error::parse(at, format!("unknown tree sync type {other}"))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbdt::GHSum;
    use num_bigint::BigUint;

    fn round_trip(p: &Payload) {
        let bytes = p.to_bytes().unwrap();
        assert_eq!(&Payload::from_bytes(&bytes).unwrap(), p);
    }

    #[test]
    fn every_kind_round_trips() {
        let ct = |v: u32| Ciphertext {
            value: BigUint::from(v),
            key_id: 9,
        };
        let mut h = Histogram::zeros(vec![2, 3], 3);
        h.accumulate(1, 2, GHSum::new(-5, 7));
        round_trip(&Payload::GhPlain(vec![GHPair::new(-0.5, 0.25)]));
        round_trip(&Payload::GhEnc(EncGh {
            key_id: 9,
            pairs: vec![(ct(3), ct(400))],
        }));
        round_trip(&Payload::HistPlain(vec![h.clone(), h.clone()]));
        round_trip(&Payload::AggPlain(vec![h]));
        let enc = EncHistograms {
            key_id: 9,
            layout: EncLayout::Packed {
                slot_bits: 128,
                slots_per_ciphertext: 3,
            },
            feature_bins: vec![2, 3],
            width: 3,
            nodes: vec![EncNodeHistogram {
                g: vec![ct(1), ct(2)],
                h: vec![ct(3), ct(4)],
            }],
        };
        round_trip(&Payload::HistEnc(enc.clone()));
        round_trip(&Payload::AggEnc(EncHistograms {
            layout: EncLayout::Scalar,
            ..enc
        }));
        round_trip(&Payload::Cuts(vec![vec![1.5, 2.5], vec![]]));
        round_trip(&Payload::Tree(TreeSync::Forest(
            "fedxgb-forest version=1\n".into(),
        )));
        round_trip(&Payload::Tree(TreeSync::Splits(vec![
            SplitNotice {
                node_id: 0,
                split: Some((1, 2, 3)),
            },
            SplitNotice {
                node_id: 1,
                split: None,
            },
        ])));
        round_trip(&Payload::Tree(TreeSync::Partition {
            node_id: 4,
            goes_left: vec![true, false, true, true, false, false, false, true, true],
        }));
        round_trip(&Payload::Tree(TreeSync::Directions {
            n_rows: 3,
            entries: vec![DirectionBits {
                tree: 0,
                node: 2,
                goes_left: vec![false, true, true],
            }],
        }));
    }

    #[test]
    fn absurd_counts_do_not_allocate() {
        let buf = ProcessorBuffer {
            kind: BufferKind::GhPairsPlain,
            counts: [u32::MAX, 0, 0],
            payload: vec![0; 16],
        };
        assert!(matches!(
            Payload::from_buffer(&buf),
            Err(Error::Parse { .. })
        ));
    }
}
