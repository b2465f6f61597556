//! Cryptographic primitives used across the system.
//!
//! - AES-128 in CBC mode with PKCS#7 padding for file bodies, one fresh key per file.
//! - RSA (keygen, raw block operations, PKCS#1 v1.5 type-2 key wrapping).
//! - Hybrid envelopes: RSA wraps a fresh 128-bit session key, AES carries the message.
//! - MD5 digests for every identity field that gets persisted.
//! - One-time passwords: 16 characters over `[A-Za-z0-9]`.
//!
//! Everything here draws randomness from the operating system and holds no
//! shared mutable state, so all functions are safe to call from any thread.
//!
//! MD5 and unauthenticated CBC are known-weak choices kept for fidelity with
//! the system's design; see the README for the threat-model notes.

mod digest;
mod envelope;
mod otp;
mod random;
mod rsa;
mod symmetric;

pub use digest::{md5_digest, Digest};
pub use envelope::{open_envelope, seal_envelope, Envelope};
pub use otp::{generate_otp, OneTimePassword, OTP_ALPHABET, OTP_LEN};
pub use random::fill_random;
pub use rsa::{
    rsa_decrypt_block, rsa_encrypt_block, rsa_generate, PrivateKey, PublicKey, RsaKeyPair,
    DEFAULT_RSA_BITS, MIN_RSA_BITS,
};
pub use symmetric::{
    aes_block_encrypt, decrypt_file, encrypt_file, generate_symmetric_key, Ciphertext, InitVector,
    SymmetricKey, BLOCK_LEN, KEY_LEN,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("secure random source unavailable")]
    RandomSourceUnavailable,
    #[error("bad padding (wrong key or corrupted ciphertext)")]
    BadPadding,
    #[error("malformed ciphertext: {0}")]
    MalformedCiphertext(&'static str),
    #[error("prime generation failed for {bits}-bit modulus")]
    PrimeGenerationFailure { bits: u64 },
    #[error("message out of range for modulus")]
    MessageOutOfRange,
    #[error("decryption failure")]
    DecryptionFailure,
    #[error("RSA modulus too small: {bytes} bytes, need at least {needed}")]
    KeyTooSmall { bytes: usize, needed: usize },
    #[error("invalid key material: {0}")]
    InvalidKey(String),
}
