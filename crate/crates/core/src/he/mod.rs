//! Additively homomorphic encryption: Paillier, fixed-point encodings, and
//! multi-slot packing for vector payloads.

mod fixed;
mod keyfile;
mod packing;
mod paillier;

pub use fixed::{
    decode_fixed, decode_i128, decode_signed, encode_fixed, encode_i128, encode_signed, scale_real,
    EncodedFixed, DEFAULT_SCALE_BITS,
};
pub(crate) use keyfile::put_biguint;
pub use keyfile::{
    decode_keypair, decode_public_key, encode_keypair, encode_public_key, KEY_FILE_VERSION,
};
pub use packing::{
    add_packed, pack_plaintexts, pack_raw, pack_vector, unpack_plaintexts, unpack_raw,
    unpack_vector, Encryptor, PackedVector, PackingParams,
};
pub use paillier::{
    is_probable_prime, keygen, keygen_with_rng, random_prime, Ciphertext, Keypair, PrivateKey,
    PublicKey, ALLOWED_MODULUS_BITS,
};
