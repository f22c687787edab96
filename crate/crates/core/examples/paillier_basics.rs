//! Encrypt two reals, add them under encryption, decrypt the sum.

use fedxgb::he::{decode_fixed, encode_fixed, keygen, EncodedFixed};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() -> fedxgb::Result<()> {
    let kp = keygen(1024, 42)?;
    let pk = kp.public();
    let mut rng = ChaCha20Rng::seed_from_u64(1);

    let (a, b) = (-3.75, 12.125);
    let ca = pk.encrypt(&encode_fixed(a, 40, pk.n())?.raw, &mut rng)?;
    let cb = pk.encrypt(&encode_fixed(b, 40, pk.n())?.raw, &mut rng)?;
    let sum = pk.add(&ca, &cb)?;
    let raw = kp.decrypt(&sum)?;
    let back = decode_fixed(&EncodedFixed { raw, scale_bits: 40 }, pk.n());

    println!("modulus bits: {}", pk.bits());
    println!("{a} + {b} = {back} (decrypted)");
    assert_eq!(back, a + b);
    Ok(())
}
