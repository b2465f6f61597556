use std::fmt;

use super::digest::{md5_digest, Digest};
use super::random::fill_random;
use super::CryptoError;

pub const OTP_LEN: usize = 16;
pub const OTP_ALPHABET: &[u8; 62] =
    b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";

/// A single-use login password. Only [`OneTimePassword::digest`] is ever stored.
#[derive(Clone, PartialEq, Eq)]
pub struct OneTimePassword(String);

impl OneTimePassword {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn digest(&self) -> Digest {
        md5_digest(self.0.as_bytes())
    }
}

impl fmt::Debug for OneTimePassword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("OneTimePassword(..)")
    }
}

pub fn generate_otp() -> Result<OneTimePassword, CryptoError> {
    // Rejection sampling: 248 = 4 * 62 keeps the alphabet uniform.
    let mut out = String::with_capacity(OTP_LEN);
    let mut buf = [0u8; 32];
    while out.len() < OTP_LEN {
        fill_random(&mut buf)?;
        for &b in &buf {
            if b < 248 && out.len() < OTP_LEN {
                out.push(OTP_ALPHABET[(b % 62) as usize] as char);
            }
        }
    }
    Ok(OneTimePassword(out))
}
