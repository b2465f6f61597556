use rand::rngs::OsRng;
use rand::RngCore;

use super::CryptoError;

/// Fills `buf` from the operating system CSPRNG.
pub fn fill_random(buf: &mut [u8]) -> Result<(), CryptoError> {
    OsRng
        .try_fill_bytes(buf)
        .map_err(|_| CryptoError::RandomSourceUnavailable)
}
