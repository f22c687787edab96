//! Framing for messages crossing the processor boundary.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "SFXB"
//! 4       1     version
//! 5       1     kind
//! 6       12    counts: three u32 little-endian
//! 18      ..    payload (kind specific)
//! ```

use num_bigint::BigUint;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SFXB";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 18;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum BufferKind {
    GhPairsPlain = 1,
    GhPairsEnc = 2,
    HistogramPlain = 3,
    HistogramEnc = 4,
    AggResultPlain = 5,
    AggResultEnc = 6,
    CutSync = 7,
    TreeSync = 8,
}

impl BufferKind {
    pub fn from_u8(v: u8) -> Option<Self> {
        use BufferKind::*;
        Some(match v {
            1 => GhPairsPlain,
            2 => GhPairsEnc,
            3 => HistogramPlain,
            4 => HistogramEnc,
            5 => AggResultPlain,
            6 => AggResultEnc,
            7 => CutSync,
            8 => TreeSync,
            _ => return None,
        })
    }

    pub fn is_encrypted(self) -> bool {
        matches!(
            self,
            BufferKind::GhPairsEnc | BufferKind::HistogramEnc | BufferKind::AggResultEnc
        )
    }

    pub fn name(self) -> &'static str {
        use BufferKind::*;
        match self {
            GhPairsPlain => "GH_PAIRS_PLAIN",
            GhPairsEnc => "GH_PAIRS_ENC",
            HistogramPlain => "HISTOGRAM_PLAIN",
            HistogramEnc => "HISTOGRAM_ENC",
            AggResultPlain => "AGG_RESULT_PLAIN",
            AggResultEnc => "AGG_RESULT_ENC",
            CutSync => "CUT_SYNC",
            TreeSync => "TREE_SYNC",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProcessorBuffer {
    pub kind: BufferKind,
    /// `[n_samples, 0, 0]` for gradient kinds, `[n_features, n_bins, n_nodes]`
    /// for histogram kinds, `[n_features, 0, 0]` for cuts, `[n_records, 0, 0]`
    /// for tree sync.
    pub counts: [u32; 3],
    pub payload: Vec<u8>,
}

impl ProcessorBuffer {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.kind as u8);
        for c in self.counts {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::parse(bytes.len(), "truncated magic"));
        }
        if bytes[..4] != MAGIC {
            return Err(Error::parse(0, "bad magic"));
        }
        let version = *bytes
            .get(4)
            .ok_or_else(|| Error::parse(4, "truncated version"))?;
        if version != VERSION {
            return Err(Error::parse(4, format!("unsupported version {version}")));
        }
        let kind_byte = *bytes
            .get(5)
            .ok_or_else(|| Error::parse(5, "truncated kind"))?;
        let kind = BufferKind::from_u8(kind_byte)
            .ok_or_else(|| Error::parse(5, format!("unknown kind {kind_byte}")))?;
        if bytes.len() < HEADER_LEN {
            return Err(Error::parse(bytes.len(), "truncated header counts"));
        }
        let mut counts = [0u32; 3];
        for (i, c) in counts.iter_mut().enumerate() {
            let at = 6 + 4 * i;
            *c = u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
        }
        Ok(ProcessorBuffer {
            kind,
            counts,
            payload: bytes[HEADER_LEN..].to_vec(),
        })
    }
}

/// Cursor over a payload that reports absolute buffer offsets on error.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8], base: usize) -> Self {
        Reader { buf, pos: 0, base }
    }

    pub fn offset(&self) -> usize {
        self.base + self.pos
    }

    pub fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::parse(self.offset(), format!("truncated {what}"))),
        }
    }

    pub fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }

    pub fn i128(&mut self, what: &str) -> Result<i128> {
        Ok(i128::from_le_bytes(
            self.take(16, what)?.try_into().expect("16 bytes"),
        ))
    }

    pub fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }

    pub fn biguint(&mut self, what: &str) -> Result<BigUint> {
        let len = self.u32(what)? as usize;
        Ok(BigUint::from_bytes_be(self.take(len, what)?))
    }

    /// Guards preallocation against absurd counts in corrupt buffers.
    pub fn check_remaining(&self, items: usize, min_item_size: usize, what: &str) -> Result<()> {
        let need = items.checked_mul(min_item_size);
        match need {
            Some(need) if need <= self.buf.len() - self.pos => Ok(()),
            _ => Err(Error::parse(
                self.offset(),
                format!("{what} count exceeds buffer"),
            )),
        }
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::parse(self.offset(), "trailing bytes"));
        }
        Ok(())
    }
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_biguint(out: &mut Vec<u8>, v: &BigUint) {
    crate::he::put_biguint(out, v);
}

pub(crate) fn checked_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidData(format!("{what} {v} exceeds u32")))
}
