//! Signed fixed-point integers in `Z_n`: residues above `(n - 1) / 2` stand
//! for negative values.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{Signed, ToPrimitive};

use crate::error::{Error, Result};

pub const DEFAULT_SCALE_BITS: u32 = 40;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedFixed {
    pub raw: BigUint,
    pub scale_bits: u32,
}

/// `round(x * 2^scale_bits)` as an integer.
pub fn scale_real(x: f64, scale_bits: u32) -> Result<i128> {
    if !x.is_finite() {
        return Err(Error::Overflow(format!("cannot encode {x}")));
    }
    let scaled = (x * 2f64.powi(scale_bits as i32)).round();
    if scaled.abs() >= 2f64.powi(126) {
        return Err(Error::Overflow(format!(
            "{x} too large at {scale_bits} fractional bits"
        )));
    }
    Ok(scaled as i128)
}

/// Maps a signed integer into `Z_n`; `|v|` must stay below `n / 2`.
pub fn encode_signed(v: &BigInt, n: &BigUint) -> Result<BigUint> {
    let half = n >> 1u32;
    if v.magnitude() > &half || (v.is_negative() && v.magnitude() == &half) {
        return Err(Error::Overflow("value does not fit below n/2".into()));
    }
    Ok(match v.sign() {
        Sign::Minus => n - v.magnitude(),
        _ => v.magnitude().clone(),
    })
}

/// Centered lift of a residue mod `n`.
pub fn decode_signed(raw: &BigUint, n: &BigUint) -> BigInt {
    let half = n >> 1u32;
    if raw > &half {
        BigInt::from_biguint(Sign::Minus, n - raw)
    } else {
        BigInt::from_biguint(Sign::Plus, raw.clone())
    }
}

pub fn encode_i128(v: i128, n: &BigUint) -> Result<BigUint> {
    encode_signed(&BigInt::from(v), n)
}

pub fn decode_i128(raw: &BigUint, n: &BigUint) -> Result<i128> {
    decode_signed(raw, n)
        .to_i128()
        .ok_or_else(|| Error::Overflow("decoded value exceeds 128 bits".into()))
}

pub fn encode_fixed(x: f64, scale_bits: u32, n: &BigUint) -> Result<EncodedFixed> {
    let v = scale_real(x, scale_bits)?;
    Ok(EncodedFixed {
        raw: encode_i128(v, n)?,
        scale_bits,
    })
}

pub fn decode_fixed(e: &EncodedFixed, n: &BigUint) -> f64 {
    let v = decode_signed(&e.raw, n);
    v.to_f64().unwrap_or(f64::NAN) / 2f64.powi(e.scale_bits as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::he::keygen;
    use num_traits::Zero;
    use rand::{Rng, SeedableRng};

    #[test]
    fn zero_and_negative_half() {
        let kp = keygen(512, 3).unwrap();
        let n = kp.public().n();
        assert!(encode_fixed(0.0, 40, n).unwrap().raw.is_zero());
        let e = encode_fixed(-0.5, 40, n).unwrap();
        assert_eq!(e.raw, n - (BigUint::from(1u8) << 39u32));
        assert_eq!(decode_fixed(&e, n), -0.5);
    }

    #[test]
    fn round_trip_within_resolution() {
        let kp = keygen(512, 3).unwrap();
        let n = kp.public().n();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let tol = 2f64.powi(-40);
        for _ in 0..1000 {
            let x: f64 = rng.gen_range(-100.0..100.0);
            let back = decode_fixed(&encode_fixed(x, 40, n).unwrap(), n);
            assert!((back - x).abs() <= tol, "{x} -> {back}");
        }
    }

    #[test]
    fn overflow_is_rejected() {
        let n = BigUint::from(1000u32);
        assert!(encode_i128(499, &n).is_ok());
        assert!(encode_i128(-499, &n).is_ok());
        assert!(encode_i128(501, &n).is_err());
        assert!(encode_fixed(1e30, 40, &n).is_err());
        assert!(encode_fixed(f64::NAN, 40, &n).is_err());
    }
}
