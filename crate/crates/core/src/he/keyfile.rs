//! Binary key files: a version byte, a kind byte, then integer fields as a
//! little-endian `u32` byte length followed by the big-endian magnitude.

use num_bigint::BigUint;

use crate::error::{Error, Result};
use crate::he::paillier::{Keypair, PublicKey};

pub const KEY_FILE_VERSION: u8 = 1;
const KIND_PUBLIC: u8 = 1;
const KIND_PRIVATE: u8 = 2;

pub(crate) fn put_biguint(out: &mut Vec<u8>, v: &BigUint) {
    let bytes = v.to_bytes_be();
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&bytes);
}

pub(crate) fn take_biguint(buf: &[u8], pos: &mut usize) -> Result<BigUint> {
    let len_end = *pos + 4;
    let len_bytes = buf
        .get(*pos..len_end)
        .ok_or_else(|| Error::parse(*pos, "truncated integer length"))?;
    let len = u32::from_le_bytes(len_bytes.try_into().expect("4 bytes")) as usize;
    let body = buf
        .get(len_end..len_end + len)
        .ok_or_else(|| Error::parse(len_end, format!("truncated integer of {len} bytes")))?;
    *pos = len_end + len;
    Ok(BigUint::from_bytes_be(body))
}

fn header(buf: &[u8], kind: u8) -> Result<usize> {
    match buf {
        [] => Err(Error::parse(0, "empty key file")),
        [v, ..] if *v != KEY_FILE_VERSION => {
            Err(Error::parse(0, format!("unsupported key file version {v}")))
        }
        [_] => Err(Error::parse(1, "missing key kind")),
        [_, k, ..] if *k != kind => Err(Error::parse(
            1,
            format!("expected key kind {kind}, found {k}"),
        )),
        _ => Ok(2),
    }
}

fn finish(buf: &[u8], pos: usize) -> Result<()> {
    if pos != buf.len() {
        return Err(Error::parse(pos, "trailing bytes"));
    }
    Ok(())
}

pub fn encode_public_key(pk: &PublicKey) -> Vec<u8> {
    let mut out = vec![KEY_FILE_VERSION, KIND_PUBLIC];
    put_biguint(&mut out, pk.n());
    out
}

pub fn decode_public_key(buf: &[u8]) -> Result<PublicKey> {
    let mut pos = header(buf, KIND_PUBLIC)?;
    let n = take_biguint(buf, &mut pos)?;
    finish(buf, pos)?;
    PublicKey::from_modulus(n)
}

pub fn encode_keypair(kp: &Keypair) -> Vec<u8> {
    let mut out = vec![KEY_FILE_VERSION, KIND_PRIVATE];
    put_biguint(&mut out, kp.private().p());
    put_biguint(&mut out, kp.private().q());
    out
}

pub fn decode_keypair(buf: &[u8]) -> Result<Keypair> {
    let mut pos = header(buf, KIND_PRIVATE)?;
    let p = take_biguint(buf, &mut pos)?;
    let q = take_biguint(buf, &mut pos)?;
    finish(buf, pos)?;
    Keypair::from_primes(p, q)
}
