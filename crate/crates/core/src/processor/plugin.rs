use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::counters::OpCounters;
use crate::dataset::BinnedMatrix;
use crate::error::{Error, Result};
use crate::gbdt::{build_histogram, GHPair, GHSum, Histogram};
use crate::he::{
    decode_i128, encode_i128, pack_raw, unpack_raw, Ciphertext, Encryptor, Keypair, PackedVector,
    PackingParams, PublicKey,
};
use crate::processor::payload::{EncGh, EncHistograms, EncLayout, EncNodeHistogram, Payload};

/// What the processor asks of an encryption scheme.
///
/// Encrypted histograms carry one slot per real bin: feature `f` contributes
/// `feature_bins[f]` consecutive slots, features in order. Padding columns
/// up to the histogram width are never encrypted.
pub trait EncryptionPlugin: Send + Sync {
    fn name(&self) -> &str;
    fn is_secure(&self) -> bool;
    fn counters(&self) -> &Arc<OpCounters>;
    fn can_decrypt(&self) -> bool;
    /// Identifier of the public key, 0 for plaintext plugins.
    fn key_id(&self) -> u64;

    fn encrypt_gh(&self, gh: &[GHPair]) -> Result<Payload>;
    fn decrypt_gh(&self, payload: &Payload) -> Result<Vec<GHPair>>;
    /// Builds one histogram per node from gradients received from the label
    /// holder, without decrypting them.
    fn accumulate_rows(
        &self,
        gh: &Payload,
        binned: &BinnedMatrix,
        nodes: &[Vec<usize>],
    ) -> Result<Payload>;
    fn encrypt_histograms(&self, hists: &[Histogram]) -> Result<Payload>;
    /// Slot-wise sum of same-shaped histogram payloads, as an aggregate.
    fn add_histograms(&self, payloads: &[Payload]) -> Result<Payload>;
    fn decrypt_histograms(&self, payload: &Payload) -> Result<Vec<Histogram>>;
}

fn dequantize(raw: i128) -> f64 {
    raw as f64 / (1u64 << crate::gbdt::FIXED_SCALE_BITS) as f64
}

fn real_slots(hist: &Histogram) -> (Vec<i128>, Vec<i128>) {
    let mut g = Vec::new();
    let mut h = Vec::new();
    for f in 0..hist.n_features() {
        for b in 0..hist.n_bins(f) {
            let s = hist.slot(f, b);
            g.push(s.g);
            h.push(s.h);
        }
    }
    (g, h)
}

fn from_real_slots(
    feature_bins: &[usize],
    width: usize,
    g: &[i128],
    h: &[i128],
) -> Result<Histogram> {
    let total: usize = feature_bins.iter().sum();
    if g.len() != total || h.len() != total {
        return Err(Error::LengthMismatch {
            expected: total,
            actual: g.len().min(h.len()),
        });
    }
    let mut hist = Histogram::zeros(feature_bins.to_vec(), width);
    let mut i = 0;
    for (f, &bins) in feature_bins.iter().enumerate() {
        for b in 0..bins {
            hist.accumulate(f, b, GHSum::new(g[i], h[i]));
            i += 1;
        }
    }
    Ok(hist)
}

fn width_of(binned: &BinnedMatrix) -> usize {
    binned.n_bins.iter().copied().max().unwrap_or(1)
}

fn check_rows(binned: &BinnedMatrix, n_gh: usize) -> Result<()> {
    if binned.n_features() > 0 && binned.n_rows() != n_gh {
        return Err(Error::LengthMismatch {
            expected: binned.n_rows(),
            actual: n_gh,
        });
    }
    Ok(())
}

fn plain_histograms(p: &Payload) -> Result<&[Histogram]> {
    match p {
        Payload::HistPlain(h) | Payload::AggPlain(h) => Ok(h),
        _ => Err(Error::Protocol(format!(
            "expected a plaintext histogram, got {}",
            p.kind().name()
        ))),
    }
}

/// Sends everything in the clear. The baseline every secure run must match.
#[derive(Debug, Default)]
pub struct PassthroughPlugin {
    counters: Arc<OpCounters>,
}

impl PassthroughPlugin {
    pub fn new(counters: Arc<OpCounters>) -> Self {
        PassthroughPlugin { counters }
    }
}

impl EncryptionPlugin for PassthroughPlugin {
    fn name(&self) -> &str {
        "passthrough"
    }

    fn is_secure(&self) -> bool {
        false
    }

    fn counters(&self) -> &Arc<OpCounters> {
        &self.counters
    }

    fn can_decrypt(&self) -> bool {
        true
    }

    fn key_id(&self) -> u64 {
        0
    }

    fn encrypt_gh(&self, gh: &[GHPair]) -> Result<Payload> {
        Ok(Payload::GhPlain(gh.to_vec()))
    }

    fn decrypt_gh(&self, payload: &Payload) -> Result<Vec<GHPair>> {
        match payload {
            Payload::GhPlain(gh) => Ok(gh.clone()),
            other => Err(Error::Protocol(format!(
                "passthrough cannot read {}",
                other.kind().name()
            ))),
        }
    }

    fn accumulate_rows(
        &self,
        gh: &Payload,
        binned: &BinnedMatrix,
        nodes: &[Vec<usize>],
    ) -> Result<Payload> {
        let Payload::GhPlain(gh) = gh else {
            return Err(Error::Protocol(format!(
                "passthrough cannot accumulate {}",
                gh.kind().name()
            )));
        };
        check_rows(binned, gh.len())?;
        let hists = nodes
            .iter()
            .map(|rows| build_histogram(binned, gh, rows))
            .collect::<Result<_>>()?;
        Ok(Payload::HistPlain(hists))
    }

    fn encrypt_histograms(&self, hists: &[Histogram]) -> Result<Payload> {
        Ok(Payload::HistPlain(hists.to_vec()))
    }

    fn add_histograms(&self, payloads: &[Payload]) -> Result<Payload> {
        let (first, rest) = payloads
            .split_first()
            .ok_or_else(|| Error::InvalidData("nothing to aggregate".into()))?;
        let mut acc = plain_histograms(first)?.to_vec();
        for p in rest {
            let hists = plain_histograms(p)?;
            if hists.len() != acc.len() {
                return Err(Error::InvalidData(
                    "node counts differ between parties".into(),
                ));
            }
            for (a, b) in acc.iter_mut().zip(hists) {
                a.merge(b)?;
            }
        }
        Ok(Payload::AggPlain(acc))
    }

    fn decrypt_histograms(&self, payload: &Payload) -> Result<Vec<Histogram>> {
        Ok(plain_histograms(payload)?.to_vec())
    }
}

/// Paillier with scalar ciphertexts for gradients and packed slots for
/// whole histograms.
pub struct PaillierPlugin {
    public: PublicKey,
    keypair: Option<Keypair>,
    packing: PackingParams,
    rng: Mutex<ChaCha20Rng>,
    counters: Arc<OpCounters>,
}

impl std::fmt::Debug for PaillierPlugin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PaillierPlugin")
            .field("key_id", &self.public.key_id())
            .field("can_decrypt", &self.keypair.is_some())
            .field("packing", &self.packing)
            .finish()
    }
}

impl PaillierPlugin {
    /// A key holder: can encrypt and decrypt.
    pub fn with_keypair(
        keypair: Keypair,
        packing: PackingParams,
        seed: u64,
        counters: Arc<OpCounters>,
    ) -> Result<Self> {
        packing.validate()?;
        Ok(PaillierPlugin {
            public: keypair.public().clone(),
            keypair: Some(keypair),
            packing,
            rng: Mutex::new(ChaCha20Rng::seed_from_u64(seed)),
            counters,
        })
    }

    /// A party that only ever sees the public key.
    pub fn public_only(
        public: PublicKey,
        packing: PackingParams,
        seed: u64,
        counters: Arc<OpCounters>,
    ) -> Result<Self> {
        packing.validate()?;
        Ok(PaillierPlugin {
            public,
            keypair: None,
            packing,
            rng: Mutex::new(ChaCha20Rng::seed_from_u64(seed)),
            counters,
        })
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.public
    }

    pub fn packing(&self) -> &PackingParams {
        &self.packing
    }

    fn keypair(&self) -> Result<&Keypair> {
        self.keypair
            .as_ref()
            .ok_or_else(|| Error::Unauthorized("this party holds no private key".into()))
    }

    fn encryptor(&self) -> &dyn Encryptor {
        match &self.keypair {
            Some(kp) => kp,
            None => &self.public,
        }
    }

    fn encrypt_scalar(&self, v: i128, rng: &mut ChaCha20Rng) -> Result<Ciphertext> {
        let m = encode_i128(v, self.public.n())?;
        self.encryptor().encrypt_plain(&m, rng)
    }

    fn decrypt_scalar(&self, kp: &Keypair, c: &Ciphertext) -> Result<i128> {
        decode_i128(&kp.decrypt(c)?, self.public.n())
    }

    fn check_key(&self, key_id: u64) -> Result<()> {
        if key_id != self.public.key_id() {
            return Err(Error::KeyMismatch(key_id, self.public.key_id()));
        }
        Ok(())
    }

    fn enc_histograms<'p>(&self, p: &'p Payload) -> Result<&'p EncHistograms> {
        match p {
            Payload::HistEnc(e) | Payload::AggEnc(e) => {
                self.check_key(e.key_id)?;
                Ok(e)
            }
            _ => Err(Error::Protocol(format!(
                "expected an encrypted histogram, got {}",
                p.kind().name()
            ))),
        }
    }

    fn lock_rng(&self) -> std::sync::MutexGuard<'_, ChaCha20Rng> {
        self.rng.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl EncryptionPlugin for PaillierPlugin {
    fn name(&self) -> &str {
        "paillier"
    }

    fn is_secure(&self) -> bool {
        true
    }

    fn counters(&self) -> &Arc<OpCounters> {
        &self.counters
    }

    fn can_decrypt(&self) -> bool {
        self.keypair.is_some()
    }

    fn key_id(&self) -> u64 {
        self.public.key_id()
    }

    fn encrypt_gh(&self, gh: &[GHPair]) -> Result<Payload> {
        let mut rng = self.lock_rng();
        let pairs = gh
            .iter()
            .map(|p| {
                let s = GHSum::from_pair(*p);
                Ok((
                    self.encrypt_scalar(s.g, &mut rng)?,
                    self.encrypt_scalar(s.h, &mut rng)?,
                ))
            })
            .collect::<Result<_>>()?;
        self.counters.add_encryptions(2 * gh.len() as u64);
        Ok(Payload::GhEnc(EncGh {
            key_id: self.public.key_id(),
            pairs,
        }))
    }

    fn decrypt_gh(&self, payload: &Payload) -> Result<Vec<GHPair>> {
        let kp = self.keypair()?;
        let Payload::GhEnc(enc) = payload else {
            return Err(Error::Protocol(format!(
                "expected GH_PAIRS_ENC, got {}",
                payload.kind().name()
            )));
        };
        self.check_key(enc.key_id)?;
        let out = enc
            .pairs
            .iter()
            .map(|(g, h)| {
                Ok(GHPair::new(
                    dequantize(self.decrypt_scalar(kp, g)?),
                    dequantize(self.decrypt_scalar(kp, h)?),
                ))
            })
            .collect::<Result<_>>()?;
        self.counters.add_decryptions(2 * enc.pairs.len() as u64);
        Ok(out)
    }

    fn accumulate_rows(
        &self,
        gh: &Payload,
        binned: &BinnedMatrix,
        nodes: &[Vec<usize>],
    ) -> Result<Payload> {
        let Payload::GhEnc(enc) = gh else {
            return Err(Error::Protocol(format!(
                "expected GH_PAIRS_ENC, got {}",
                gh.kind().name()
            )));
        };
        self.check_key(enc.key_id)?;
        check_rows(binned, enc.pairs.len())?;
        let mut rng = self.lock_rng();
        let mut additions = 0u64;
        let mut padding = 0u64;
        let mut out_nodes = Vec::with_capacity(nodes.len());
        for rows in nodes {
            if let Some(&r) = rows.iter().find(|&&r| r >= enc.pairs.len()) {
                return Err(Error::LengthMismatch {
                    expected: enc.pairs.len(),
                    actual: r + 1,
                });
            }
            let mut g = Vec::new();
            let mut h = Vec::new();
            for (f, column) in binned.bins.iter().enumerate() {
                let n_bins = binned.n_bins[f];
                let mut slots: Vec<Option<(Ciphertext, Ciphertext)>> = vec![None; n_bins];
                for &r in rows {
                    let bin = column[r] as usize;
                    let slot = slots.get_mut(bin).ok_or(Error::BinOutOfRange {
                        feature: f,
                        bin,
                        n_bins,
                    })?;
                    let (cg, ch) = &enc.pairs[r];
                    *slot = Some(match slot.take() {
                        None => (cg.clone(), ch.clone()),
                        Some((ag, ah)) => {
                            additions += 2;
                            (self.public.add(&ag, cg)?, self.public.add(&ah, ch)?)
                        }
                    });
                }
                for slot in slots {
                    let (sg, sh) = match slot {
                        Some(pair) => pair,
                        None => {
                            padding += 2;
                            (
                                self.encrypt_scalar(0, &mut rng)?,
                                self.encrypt_scalar(0, &mut rng)?,
                            )
                        }
                    };
                    g.push(sg);
                    h.push(sh);
                }
            }
            out_nodes.push(EncNodeHistogram { g, h });
        }
        self.counters.add_ciphertext_additions(additions);
        self.counters.add_padding_encryptions(padding);
        Ok(Payload::HistEnc(EncHistograms {
            key_id: self.public.key_id(),
            layout: EncLayout::Scalar,
            feature_bins: binned.n_bins.clone(),
            width: width_of(binned),
            nodes: out_nodes,
        }))
    }

    fn encrypt_histograms(&self, hists: &[Histogram]) -> Result<Payload> {
        let (feature_bins, width) = match hists.first() {
            Some(h) => (h.feature_bins().to_vec(), h.width()),
            None => (Vec::new(), 0),
        };
        let mut rng = self.lock_rng();
        let mut nodes = Vec::with_capacity(hists.len());
        let mut scalar = 0u64;
        for hist in hists {
            if hist.feature_bins() != feature_bins.as_slice() || hist.width() != width {
                return Err(Error::InvalidData(
                    "histograms in one message must share a shape".into(),
                ));
            }
            let (g, h) = real_slots(hist);
            let pg = pack_raw(&g, &self.packing, self.encryptor(), &mut *rng)?;
            let ph = pack_raw(&h, &self.packing, self.encryptor(), &mut *rng)?;
            scalar += (pg.ciphertexts.len() + ph.ciphertexts.len()) as u64;
            nodes.push(EncNodeHistogram {
                g: pg.ciphertexts,
                h: ph.ciphertexts,
            });
        }
        self.counters.add_encryptions(scalar);
        self.counters.add_vector_encryptions(2 * hists.len() as u64);
        Ok(Payload::HistEnc(EncHistograms {
            key_id: self.public.key_id(),
            layout: EncLayout::Packed {
                slot_bits: self.packing.slot_bits,
                slots_per_ciphertext: self.packing.slots_per_ciphertext(self.public.bits()) as u32,
            },
            feature_bins,
            width,
            nodes,
        }))
    }

    fn add_histograms(&self, payloads: &[Payload]) -> Result<Payload> {
        let (first, rest) = payloads
            .split_first()
            .ok_or_else(|| Error::InvalidData("nothing to aggregate".into()))?;
        let mut acc = self.enc_histograms(first)?.clone();
        for p in rest {
            let e = self.enc_histograms(p)?;
            if !acc.same_shape(e) {
                return Err(Error::InvalidData(
                    "encrypted histogram shapes differ".into(),
                ));
            }
            for (a, b) in acc.nodes.iter_mut().zip(&e.nodes) {
                for (x, y) in a.g.iter_mut().zip(&b.g).chain(a.h.iter_mut().zip(&b.h)) {
                    *x = self.public.add(x, y)?;
                }
            }
            self.counters
                .add_ciphertext_additions(e.n_ciphertexts() as u64);
            self.counters.add_vector_additions(2 * e.nodes.len() as u64);
        }
        Ok(Payload::AggEnc(acc))
    }

    fn decrypt_histograms(&self, payload: &Payload) -> Result<Vec<Histogram>> {
        let kp = self.keypair()?;
        let enc = self.enc_histograms(payload)?;
        let slots = enc.feature_bins.iter().sum::<usize>();
        let mut out = Vec::with_capacity(enc.nodes.len());
        let mut decryptions = 0u64;
        for node in &enc.nodes {
            let (g, h) = match enc.layout {
                EncLayout::Scalar => {
                    let dec = |cts: &[Ciphertext]| -> Result<Vec<i128>> {
                        cts.iter().map(|c| self.decrypt_scalar(kp, c)).collect()
                    };
                    (dec(&node.g)?, dec(&node.h)?)
                }
                EncLayout::Packed {
                    slot_bits,
                    slots_per_ciphertext,
                } => {
                    let params = PackingParams {
                        slot_bits,
                        ..self.packing
                    };
                    let vector = |cts: &[Ciphertext]| PackedVector {
                        ciphertexts: cts.to_vec(),
                        slots_per_ciphertext: slots_per_ciphertext as usize,
                        slot_bits,
                        logical_length: slots,
                    };
                    (
                        unpack_raw(&vector(&node.g), &params, kp)?,
                        unpack_raw(&vector(&node.h), &params, kp)?,
                    )
                }
            };
            decryptions += (node.g.len() + node.h.len()) as u64;
            out.push(from_real_slots(&enc.feature_bins, enc.width, &g, &h)?);
        }
        self.counters.add_decryptions(decryptions);
        Ok(out)
    }
}
