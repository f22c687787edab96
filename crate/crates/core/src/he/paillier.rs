//! Paillier with `g = n + 1`.
//!
//! Key holders encrypt and decrypt through CRT over `p^2` and `q^2`, roughly
//! four times cheaper than the textbook exponentiations modulo `n^2`. The
//! textbook decryption is kept alongside as an independent check.

use std::fmt;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const ALLOWED_MODULUS_BITS: [u64; 4] = [512, 1024, 2048, 3072];

const MAX_PRIME_CANDIDATES: usize = 200_000;
const MILLER_RABIN_ROUNDS: usize = 32;

#[derive(Clone, PartialEq, Eq)]
pub struct PublicKey {
    n: BigUint,
    n_squared: BigUint,
    key_id: u64,
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PublicKey")
            .field("bits", &self.bits())
            .field("key_id", &format_args!("{:016x}", self.key_id))
            .finish()
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct PrivateKey {
    p: BigUint,
    q: BigUint,
    lambda: BigUint,
    mu: BigUint,
    p_squared: BigUint,
    q_squared: BigUint,
    // CRT decryption constants
    hp: BigUint,
    hq: BigUint,
    q_inv_p: BigUint,
    // CRT recombination modulo n^2, and the exponent n reduced per prime power
    q_sq_inv_p_sq: BigUint,
    n_mod_phi_p_sq: BigUint,
    n_mod_phi_q_sq: BigUint,
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PrivateKey(..)")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Keypair {
    public: PublicKey,
    private: PrivateKey,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Ciphertext {
    pub value: BigUint,
    pub key_id: u64,
}

fn key_id_of(n: &BigUint) -> u64 {
    let digest = Sha256::digest(n.to_bytes_be());
    u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"))
}

impl PublicKey {
    pub fn from_modulus(n: BigUint) -> Result<Self> {
        if n < BigUint::from(6u8) || n.is_even() {
            return Err(Error::Crypto("modulus must be an odd composite".into()));
        }
        let n_squared = &n * &n;
        Ok(PublicKey {
            key_id: key_id_of(&n),
            n,
            n_squared,
        })
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn n_squared(&self) -> &BigUint {
        &self.n_squared
    }

    pub fn generator(&self) -> BigUint {
        &self.n + 1u32
    }

    pub fn key_id(&self) -> u64 {
        self.key_id
    }

    pub fn bits(&self) -> u64 {
        self.n.bits()
    }

    /// Uniform nonce in `[2, n)` coprime to `n`.
    pub fn sample_nonce<R: Rng + ?Sized>(&self, rng: &mut R) -> BigUint {
        let two = BigUint::from(2u8);
        loop {
            let r = rng.gen_biguint_range(&two, &self.n);
            if r.gcd(&self.n).is_one() {
                return r;
            }
        }
    }

    fn check_plaintext(&self, m: &BigUint) -> Result<()> {
        if m >= &self.n {
            return Err(Error::Crypto("plaintext not below the modulus".into()));
        }
        Ok(())
    }

    /// `(1 + m n) r^n mod n^2` for a caller-chosen nonce.
    pub fn encrypt_with_nonce(&self, m: &BigUint, r: &BigUint) -> Result<Ciphertext> {
        self.check_plaintext(m)?;
        if r.is_zero() || r >= &self.n || !r.gcd(&self.n).is_one() {
            return Err(Error::Crypto("nonce must be a unit below n".into()));
        }
        let rn = r.modpow(&self.n, &self.n_squared);
        Ok(self.finish_encryption(m, rn))
    }

    fn finish_encryption(&self, m: &BigUint, rn: BigUint) -> Ciphertext {
        let gm = (BigUint::one() + m * &self.n) % &self.n_squared;
        Ciphertext {
            value: gm * rn % &self.n_squared,
            key_id: self.key_id,
        }
    }

    pub fn encrypt<R: Rng + ?Sized>(&self, m: &BigUint, rng: &mut R) -> Result<Ciphertext> {
        let r = self.sample_nonce(rng);
        self.encrypt_with_nonce(m, &r)
    }

    /// Homomorphic addition: `Dec(a * b) = Dec(a) + Dec(b) mod n`.
    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.check_key(a)?;
        self.check_key(b)?;
        Ok(Ciphertext {
            value: &a.value * &b.value % &self.n_squared,
            key_id: self.key_id,
        })
    }

    pub fn check_key(&self, c: &Ciphertext) -> Result<()> {
        if c.key_id != self.key_id {
            return Err(Error::KeyMismatch(c.key_id, self.key_id));
        }
        Ok(())
    }

    /// Range and unit checks for a ciphertext under this key.
    pub fn validate(&self, c: &Ciphertext) -> Result<()> {
        self.check_key(c)?;
        if c.value.is_zero() || c.value >= self.n_squared {
            return Err(Error::Crypto("ciphertext outside [1, n^2)".into()));
        }
        if !c.value.gcd(&self.n).is_one() {
            return Err(Error::Crypto("ciphertext not coprime to n^2".into()));
        }
        Ok(())
    }
}

impl PrivateKey {
    fn new(p: BigUint, q: BigUint, n: &BigUint) -> Result<Self> {
        let one = BigUint::one();
        let p1 = &p - &one;
        let q1 = &q - &one;
        let lambda = p1.lcm(&q1);
        let mu = (&lambda % n)
            .modinv(n)
            .ok_or_else(|| Error::Crypto("lambda not invertible mod n".into()))?;
        let p_squared = &p * &p;
        let q_squared = &q * &q;
        let g = n + 1u32;
        let hp = l_function(&g.modpow(&p1, &p_squared), &p)
            .modinv(&p)
            .ok_or_else(|| Error::Crypto("hp not invertible".into()))?;
        let hq = l_function(&g.modpow(&q1, &q_squared), &q)
            .modinv(&q)
            .ok_or_else(|| Error::Crypto("hq not invertible".into()))?;
        let q_inv_p = (&q % &p)
            .modinv(&p)
            .ok_or_else(|| Error::Crypto("q not invertible mod p".into()))?;
        let q_sq_inv_p_sq = (&q_squared % &p_squared)
            .modinv(&p_squared)
            .ok_or_else(|| Error::Crypto("q^2 not invertible mod p^2".into()))?;
        let n_mod_phi_p_sq = n % (&p * &p1);
        let n_mod_phi_q_sq = n % (&q * &q1);
        Ok(PrivateKey {
            p,
            q,
            lambda,
            mu,
            p_squared,
            q_squared,
            hp,
            hq,
            q_inv_p,
            q_sq_inv_p_sq,
            n_mod_phi_p_sq,
            n_mod_phi_q_sq,
        })
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }

    pub fn lambda(&self) -> &BigUint {
        &self.lambda
    }

    pub fn mu(&self) -> &BigUint {
        &self.mu
    }
}

/// `L(u) = (u - 1) / d`.
fn l_function(u: &BigUint, d: &BigUint) -> BigUint {
    (u - 1u32) / d
}

impl Keypair {
    /// Builds a keypair from two primes. Small primes are only useful for
    /// hand-checkable tests; primality is not re-verified here.
    pub fn from_primes(p: BigUint, q: BigUint) -> Result<Self> {
        if p == q {
            return Err(Error::Crypto("p and q must differ".into()));
        }
        let one = BigUint::one();
        if p <= one || q <= one {
            return Err(Error::Crypto("primes must exceed 1".into()));
        }
        let n = &p * &q;
        let phi = (&p - &one) * (&q - &one);
        if !n.gcd(&phi).is_one() {
            return Err(Error::Crypto("gcd(n, (p-1)(q-1)) != 1".into()));
        }
        let public = PublicKey::from_modulus(n)?;
        let private = PrivateKey::new(p, q, &public.n)?;
        Ok(Keypair { public, private })
    }

    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    pub fn private(&self) -> &PrivateKey {
        &self.private
    }

    /// Encryption using CRT for `r^n mod n^2`.
    pub fn encrypt<R: Rng + ?Sized>(&self, m: &BigUint, rng: &mut R) -> Result<Ciphertext> {
        self.public.check_plaintext(m)?;
        let r = self.public.sample_nonce(rng);
        let sk = &self.private;
        let xp = (&r % &sk.p_squared).modpow(&sk.n_mod_phi_p_sq, &sk.p_squared);
        let xq = (&r % &sk.q_squared).modpow(&sk.n_mod_phi_q_sq, &sk.q_squared);
        let rn = crt(&xp, &xq, &sk.p_squared, &sk.q_squared, &sk.q_sq_inv_p_sq);
        Ok(self.public.finish_encryption(m, rn))
    }

    /// CRT decryption.
    pub fn decrypt(&self, c: &Ciphertext) -> Result<BigUint> {
        self.public.validate(c)?;
        let sk = &self.private;
        let mp = l_function(
            &(&c.value % &sk.p_squared).modpow(&(&sk.p - 1u32), &sk.p_squared),
            &sk.p,
        ) * &sk.hp
            % &sk.p;
        let mq = l_function(
            &(&c.value % &sk.q_squared).modpow(&(&sk.q - 1u32), &sk.q_squared),
            &sk.q,
        ) * &sk.hq
            % &sk.q;
        Ok(crt(&mp, &mq, &sk.p, &sk.q, &sk.q_inv_p))
    }

    /// `L(c^lambda mod n^2) * mu mod n`.
    pub fn decrypt_textbook(&self, c: &Ciphertext) -> Result<BigUint> {
        self.public.validate(c)?;
        let u = c.value.modpow(&self.private.lambda, &self.public.n_squared);
        Ok(l_function(&u, &self.public.n) * &self.private.mu % &self.public.n)
    }
}

/// `x = a mod m1, x = b mod m2`, given `m2^-1 mod m1`.
fn crt(a: &BigUint, b: &BigUint, m1: &BigUint, m2: &BigUint, m2_inv_m1: &BigUint) -> BigUint {
    let b_mod = b % m1;
    let diff = if a >= &b_mod {
        a - &b_mod
    } else {
        a + m1 - &b_mod
    };
    b + m2 * (diff * m2_inv_m1 % m1)
}

/// Deterministic keypair for a given size and seed.
pub fn keygen(modulus_bits: u64, seed: u64) -> Result<Keypair> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    keygen_with_rng(modulus_bits, &mut rng)
}

pub fn keygen_with_rng<R: Rng + ?Sized>(modulus_bits: u64, rng: &mut R) -> Result<Keypair> {
    if !ALLOWED_MODULUS_BITS.contains(&modulus_bits) {
        return Err(Error::InvalidParam(format!(
            "modulus_bits must be one of {ALLOWED_MODULUS_BITS:?}, got {modulus_bits}"
        )));
    }
    let half = modulus_bits / 2;
    for _ in 0..64 {
        let p = random_prime(half, rng)?;
        let q = random_prime(half, rng)?;
        if p == q {
            continue;
        }
        let n = &p * &q;
        if n.bits() != modulus_bits {
            continue;
        }
        if let Ok(kp) = Keypair::from_primes(p, q) {
            return Ok(kp);
        }
    }
    Err(Error::Crypto("could not find a suitable prime pair".into()))
}

const SMALL_PRIMES: [u32; 53] = [
    3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193,
    197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

/// Random prime of exactly `bits` bits with the top two bits set, so that a
/// product of two such primes has exactly `2 * bits` bits.
pub fn random_prime<R: Rng + ?Sized>(bits: u64, rng: &mut R) -> Result<BigUint> {
    if bits < 8 {
        return Err(Error::InvalidParam("prime size too small".into()));
    }
    for _ in 0..MAX_PRIME_CANDIDATES {
        let mut candidate = rng.gen_biguint(bits);
        candidate.set_bit(bits - 1, true);
        candidate.set_bit(bits - 2, true);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate, MILLER_RABIN_ROUNDS, rng) {
            return Ok(candidate);
        }
    }
    Err(Error::Crypto(format!(
        "no {bits}-bit prime found in {MAX_PRIME_CANDIDATES} candidates"
    )))
}

/// Trial division by small primes, then Miller-Rabin with random bases.
pub fn is_probable_prime<R: Rng + ?Sized>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    let two = BigUint::from(2u8);
    if n < &two {
        return false;
    }
    if n.is_even() {
        return n == &two;
    }
    for &sp in &SMALL_PRIMES {
        let sp = BigUint::from(sp);
        if n == &sp {
            return true;
        }
        if (n % &sp).is_zero() {
            return false;
        }
    }
    let one = BigUint::one();
    let n_minus_1 = n - &one;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    'witness: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &n_minus_1);
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = &x * &x % n;
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> Keypair {
        Keypair::from_primes(BigUint::from(5u8), BigUint::from(7u8)).unwrap()
    }

    #[test]
    fn toy_key_arithmetic() {
        let kp = toy();
        assert_eq!(kp.public().n(), &BigUint::from(35u8));
        assert_eq!(kp.public().n_squared(), &BigUint::from(1225u32));
        assert_eq!(kp.private().lambda(), &BigUint::from(12u8));
        assert_eq!(kp.private().mu(), &BigUint::from(3u8));
    }

    #[test]
    fn toy_encryption_of_zero() {
        let kp = toy();
        let c = kp
            .public()
            .encrypt_with_nonce(&BigUint::zero(), &BigUint::from(2u8))
            .unwrap();
        // 2^35 mod 1225 by repeated squaring
        let mut expect = 1u64;
        for _ in 0..35 {
            expect = expect * 2 % 1225;
        }
        assert_eq!(c.value, BigUint::from(expect));
        assert_eq!(kp.decrypt(&c).unwrap(), BigUint::zero());
        assert_eq!(kp.decrypt_textbook(&c).unwrap(), BigUint::zero());
    }

    #[test]
    fn toy_exhaustive_round_trip() {
        let kp = toy();
        let pk = kp.public();
        for m in 0u32..35 {
            for r in [1u32, 2, 3, 4, 6, 8, 34] {
                let c = pk
                    .encrypt_with_nonce(&BigUint::from(m), &BigUint::from(r))
                    .unwrap();
                assert_eq!(kp.decrypt(&c).unwrap(), BigUint::from(m));
                assert_eq!(kp.decrypt_textbook(&c).unwrap(), BigUint::from(m));
            }
        }
    }

    #[test]
    fn one_decrypts_to_zero() {
        let kp = keygen(512, 1).unwrap();
        let c = Ciphertext {
            value: BigUint::one(),
            key_id: kp.public().key_id(),
        };
        assert!(kp.decrypt(&c).unwrap().is_zero());
    }

    #[test]
    fn rejects_bad_inputs() {
        let kp = toy();
        let pk = kp.public();
        assert!(pk
            .encrypt_with_nonce(&BigUint::from(35u8), &BigUint::from(2u8))
            .is_err());
        assert!(pk
            .encrypt_with_nonce(&BigUint::from(1u8), &BigUint::from(5u8))
            .is_err());
        let bad = Ciphertext {
            value: BigUint::from(7u8),
            key_id: pk.key_id(),
        };
        assert!(kp.decrypt(&bad).is_err());
        let other = keygen(512, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = other.public().encrypt(&BigUint::one(), &mut rng).unwrap();
        assert!(matches!(kp.decrypt(&c), Err(Error::KeyMismatch(..))));
        assert!(matches!(pk.add(&c, &c), Err(Error::KeyMismatch(..))));
    }

    #[test]
    fn keygen_sizes_and_determinism() {
        let a = keygen(512, 42).unwrap();
        let b = keygen(512, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.public().bits(), 512);
        assert_ne!(a, keygen(512, 43).unwrap());
        assert!(keygen(100, 1).is_err());
    }

    #[test]
    fn keygen_2048_has_exact_size() {
        let kp = keygen(2048, 7).unwrap();
        assert_eq!(kp.public().bits(), 2048);
    }

    #[test]
    fn crt_paths_match_textbook() {
        let kp = keygen(512, 5).unwrap();
        let pk = kp.public();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let m = rng.gen_biguint_below(pk.n());
            let c1 = kp.encrypt(&m, &mut rng).unwrap();
            let c2 = pk.encrypt(&m, &mut rng).unwrap();
            assert_ne!(c1.value, c2.value);
            for c in [&c1, &c2] {
                assert_eq!(kp.decrypt(c).unwrap(), m);
                assert_eq!(kp.decrypt_textbook(c).unwrap(), m);
            }
        }
    }

    #[test]
    fn miller_rabin_known_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for p in [2u64, 3, 5, 257, 65537, 2_147_483_647, 1_000_000_007] {
            assert!(is_probable_prime(&BigUint::from(p), 16, &mut rng), "{p}");
        }
        // Carmichael numbers and ordinary composites
        for c in [1u64, 4, 561, 1105, 1729, 2465, 15841, 1_000_000_007 * 3] {
            assert!(!is_probable_prime(&BigUint::from(c), 16, &mut rng), "{c}");
        }
    }
}
