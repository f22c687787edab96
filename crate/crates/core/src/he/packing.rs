//! Several signed fixed-point slots per Paillier plaintext.
//!
//! A block of values `v_0..v_k` is packed as the integer
//! `sum_j v_j * 2^(j * slot_bits)` and then mapped into `Z_n` like any signed
//! value. Negative slots borrow from the slot above, which unpacking undoes by
//! peeling the low `slot_bits` bits as a signed number and shifting. Keeping
//! each slot below `2^(slot_bits - guard_bits - 1)` in magnitude leaves room
//! for `2^guard_bits` homomorphic additions before a slot could overflow.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::he::fixed::{decode_signed, encode_signed, scale_real};
use crate::he::paillier::{Ciphertext, Keypair, PublicKey};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PackingParams {
    pub slot_bits: u32,
    pub guard_bits: u32,
    pub scale_bits: u32,
}

impl Default for PackingParams {
    fn default() -> Self {
        PackingParams {
            slot_bits: 128,
            guard_bits: 10,
            scale_bits: crate::he::DEFAULT_SCALE_BITS,
        }
    }
}

impl PackingParams {
    pub fn validate(&self) -> Result<()> {
        if self.slot_bits == 0 || self.slot_bits > 128 {
            return Err(Error::InvalidParam(format!(
                "slot_bits must be in 1..=128, got {}",
                self.slot_bits
            )));
        }
        if self.guard_bits + 2 > self.slot_bits {
            return Err(Error::InvalidParam(
                "guard_bits leave no room for values".into(),
            ));
        }
        Ok(())
    }

    /// `floor((modulus_bits - 1) / slot_bits)`.
    pub fn slots_per_ciphertext(&self, modulus_bits: u64) -> usize {
        (modulus_bits.saturating_sub(1) / self.slot_bits as u64) as usize
    }

    /// Exclusive bound on a freshly packed slot's magnitude.
    pub fn slot_limit(&self) -> u128 {
        1u128 << (self.slot_bits - self.guard_bits - 1)
    }

    /// Ciphertexts needed for `len` slots.
    pub fn ciphertexts_for(&self, len: usize, modulus_bits: u64) -> usize {
        len.div_ceil(self.slots_per_ciphertext(modulus_bits).max(1))
    }
}

/// Anything that can encrypt a plaintext under some public key.
pub trait Encryptor {
    fn public_key(&self) -> &PublicKey;
    fn encrypt_plain(&self, m: &BigUint, rng: &mut dyn rand::RngCore) -> Result<Ciphertext>;
}

impl Encryptor for PublicKey {
    fn public_key(&self) -> &PublicKey {
        self
    }

    fn encrypt_plain(&self, m: &BigUint, rng: &mut dyn rand::RngCore) -> Result<Ciphertext> {
        self.encrypt(m, rng)
    }
}

impl Encryptor for Keypair {
    fn public_key(&self) -> &PublicKey {
        self.public()
    }

    fn encrypt_plain(&self, m: &BigUint, rng: &mut dyn rand::RngCore) -> Result<Ciphertext> {
        self.encrypt(m, rng)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackedVector {
    pub ciphertexts: Vec<Ciphertext>,
    pub slots_per_ciphertext: usize,
    pub slot_bits: u32,
    pub logical_length: usize,
}

/// Packs signed integers into plaintext residues mod `n`.
pub fn pack_plaintexts(
    values: &[i128],
    params: &PackingParams,
    n: &BigUint,
) -> Result<Vec<BigUint>> {
    params.validate()?;
    let slots = params.slots_per_ciphertext(n.bits());
    if slots == 0 {
        return Err(Error::InvalidParam(format!(
            "a {}-bit modulus cannot hold a {}-bit slot",
            n.bits(),
            params.slot_bits
        )));
    }
    let limit = params.slot_limit();
    if let Some(i) = values.iter().position(|v| v.unsigned_abs() >= limit) {
        return Err(Error::Overflow(format!(
            "slot {i} magnitude exceeds 2^{}",
            params.slot_bits - params.guard_bits - 1
        )));
    }
    values
        .chunks(slots)
        .map(|chunk| {
            let mut acc = BigInt::zero();
            for &v in chunk.iter().rev() {
                acc = (acc << params.slot_bits) + BigInt::from(v);
            }
            encode_signed(&acc, n)
        })
        .collect()
}

/// Inverse of [`pack_plaintexts`] after any number of in-range additions.
pub fn unpack_plaintexts(
    plaintexts: &[BigUint],
    params: &PackingParams,
    n: &BigUint,
    logical_length: usize,
) -> Result<Vec<i128>> {
    params.validate()?;
    let slots = params.slots_per_ciphertext(n.bits());
    let expected = logical_length.div_ceil(slots.max(1));
    if plaintexts.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            actual: plaintexts.len(),
        });
    }
    let modulus = BigInt::one() << params.slot_bits;
    let half = BigInt::one() << (params.slot_bits - 1);
    let mut out = Vec::with_capacity(logical_length);
    for (k, raw) in plaintexts.iter().enumerate() {
        let mut acc = decode_signed(raw, n);
        let used = slots.min(logical_length - k * slots);
        for _ in 0..used {
            let mut low = ((&acc % &modulus) + &modulus) % &modulus;
            if low >= half {
                low -= &modulus;
            }
            acc = (acc - &low) >> params.slot_bits;
            out.push(low.to_i128().expect("slot fits in 128 bits"));
        }
        if !acc.is_zero() {
            return Err(Error::Overflow(format!(
                "ciphertext {k} has bits beyond its slots"
            )));
        }
    }
    Ok(out)
}

pub fn pack_raw<E: Encryptor + ?Sized>(
    values: &[i128],
    params: &PackingParams,
    encryptor: &E,
    rng: &mut dyn rand::RngCore,
) -> Result<PackedVector> {
    let pk = encryptor.public_key();
    let plaintexts = pack_plaintexts(values, params, pk.n())?;
    let ciphertexts = plaintexts
        .iter()
        .map(|m| encryptor.encrypt_plain(m, rng))
        .collect::<Result<_>>()?;
    Ok(PackedVector {
        ciphertexts,
        slots_per_ciphertext: params.slots_per_ciphertext(pk.bits()),
        slot_bits: params.slot_bits,
        logical_length: values.len(),
    })
}

pub fn unpack_raw(
    vector: &PackedVector,
    params: &PackingParams,
    keypair: &Keypair,
) -> Result<Vec<i128>> {
    if vector.slot_bits != params.slot_bits {
        return Err(Error::InvalidParam(
            "slot width differs from packing params".into(),
        ));
    }
    let plaintexts = vector
        .ciphertexts
        .iter()
        .map(|c| keypair.decrypt(c))
        .collect::<Result<Vec<_>>>()?;
    unpack_plaintexts(
        &plaintexts,
        params,
        keypair.public().n(),
        vector.logical_length,
    )
}

/// Packs reals at `params.scale_bits` fractional bits and encrypts.
pub fn pack_vector<E: Encryptor + ?Sized, R: Rng>(
    values: &[f64],
    params: &PackingParams,
    encryptor: &E,
    rng: &mut R,
) -> Result<PackedVector> {
    let raw = values
        .iter()
        .map(|&x| scale_real(x, params.scale_bits))
        .collect::<Result<Vec<_>>>()?;
    pack_raw(&raw, params, encryptor, rng)
}

pub fn unpack_vector(
    vector: &PackedVector,
    params: &PackingParams,
    keypair: &Keypair,
) -> Result<Vec<f64>> {
    let scale = 2f64.powi(params.scale_bits as i32);
    Ok(unpack_raw(vector, params, keypair)?
        .into_iter()
        .map(|v| v as f64 / scale)
        .collect())
}

/// Slot-wise homomorphic sum of two packed vectors.
pub fn add_packed(pk: &PublicKey, a: &PackedVector, b: &PackedVector) -> Result<PackedVector> {
    if a.logical_length != b.logical_length
        || a.slot_bits != b.slot_bits
        || a.ciphertexts.len() != b.ciphertexts.len()
    {
        return Err(Error::InvalidData("packed vector shapes differ".into()));
    }
    let ciphertexts = a
        .ciphertexts
        .iter()
        .zip(&b.ciphertexts)
        .map(|(x, y)| pk.add(x, y))
        .collect::<Result<_>>()?;
    Ok(PackedVector {
        ciphertexts,
        ..a.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::he::keygen;
    use rand::SeedableRng;

    #[test]
    fn full_scale_ciphertext_count() {
        let p = PackingParams::default();
        assert_eq!(p.slots_per_ciphertext(2048), 15);
        assert_eq!(p.ciphertexts_for(7680, 2048), 512);
        assert_eq!(p.slots_per_ciphertext(512), 3);
    }

    #[test]
    fn plaintext_packing_is_exact_for_signed_slots() {
        let kp = keygen(512, 8).unwrap();
        let n = kp.public().n();
        let p = PackingParams::default();
        let limit = p.slot_limit() as i128;
        let values = vec![-1, 0, 1, limit - 1, -(limit - 1), -5, 7];
        let packed = pack_plaintexts(&values, &p, n).unwrap();
        assert_eq!(packed.len(), 3);
        assert_eq!(
            unpack_plaintexts(&packed, &p, n, values.len()).unwrap(),
            values
        );
        assert!(pack_plaintexts(&[limit], &p, n).is_err());
    }

    #[test]
    fn single_value_uses_one_ciphertext() {
        let kp = keygen(512, 8).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let p = PackingParams::default();
        let v = pack_vector(&[-2.25], &p, &kp, &mut rng).unwrap();
        assert_eq!(v.ciphertexts.len(), 1);
        assert_eq!(v.logical_length, 1);
        assert_eq!(unpack_vector(&v, &p, &kp).unwrap(), vec![-2.25]);
    }

    #[test]
    fn slot_too_wide_for_modulus() {
        let n = BigUint::from(1u64 << 40);
        let p = PackingParams {
            slot_bits: 64,
            guard_bits: 4,
            scale_bits: 10,
        };
        assert!(pack_plaintexts(&[1], &p, &n).is_err());
    }
}
