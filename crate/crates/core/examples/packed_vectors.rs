//! Slot packing: several fixed-point values share one ciphertext and are
//! added slot by slot.

use fedxgb::he::{add_packed, keygen, pack_vector, unpack_vector, PackingParams};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() -> fedxgb::Result<()> {
    let kp = keygen(512, 3)?;
    let params = PackingParams {
        slot_bits: 64,
        ..PackingParams::default()
    };
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let a = vec![0.5, -1.25, 3.0, 0.0, 7.5, -0.125, 2.0, 1.0, -4.0];
    let b = vec![1.5, 1.25, -1.0, 2.0, 0.5, 0.125, -2.0, 0.0, 4.0];

    let pa = pack_vector(&a, &params, kp.public(), &mut rng)?;
    let pb = pack_vector(&b, &params, kp.public(), &mut rng)?;
    let sum = add_packed(kp.public(), &pa, &pb)?;
    println!(
        "{} values in {} ciphertexts ({} slots each, headroom for {} additions)",
        a.len(),
        sum.ciphertexts.len(),
        params.slots_per_ciphertext(kp.public().bits()),
        1u64 << params.guard_bits
    );
    let got = unpack_vector(&sum, &params, &kp)?;
    for ((x, y), s) in a.iter().zip(&b).zip(&got) {
        println!("{x:>7} + {y:>7} = {s}");
    }
    Ok(())
}
