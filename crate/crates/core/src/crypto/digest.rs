use std::fmt;
use std::str::FromStr;

use md5::{Digest as _, Md5};

use super::CryptoError;

/// 16-byte MD5 output. Usernames and OTPs are only ever persisted in this form.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest([u8; 16]);

impl Digest {
    pub fn from_bytes(bytes: [u8; 16]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl FromStr for Digest {
    type Err = CryptoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = hex::decode(s).map_err(|e| CryptoError::InvalidKey(e.to_string()))?;
        let arr: [u8; 16] = bytes
            .try_into()
            .map_err(|_| CryptoError::InvalidKey("digest must be 16 bytes".into()))?;
        Ok(Self(arr))
    }
}

/// MD5 over the exact input bytes; callers pass UTF-8 text untrimmed and case-preserved.
pub fn md5_digest(input: &[u8]) -> Digest {
    Digest(Md5::digest(input).into())
}

#[cfg(test)]
mod tests {
    use super::*;

    // RFC 1321 appendix A.5 test suite.
    const SUITE: [(&str, &str); 7] = [
        ("", "d41d8cd98f00b204e9800998ecf8427e"),
        ("a", "0cc175b9c0f1b6a831c399e269772661"),
        ("abc", "900150983cd24fb0d6963f7d28e17f72"),
        ("message digest", "f96b697d7cb7938d525a2f31aaf161d0"),
        (
            "abcdefghijklmnopqrstuvwxyz",
            "c3fcd3d76192e4007dfb496cca67e13b",
        ),
        (
            "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789",
            "d174ab98d277d9f5a5611c2c9f419d9f",
        ),
        (
            "12345678901234567890123456789012345678901234567890123456789012345678901234567890",
            "57edf4a22be3c955ac49da2e2107b67a",
        ),
    ];

    #[test]
    fn rfc1321_suite() {
        for (input, expected) in SUITE {
            assert_eq!(md5_digest(input.as_bytes()).to_hex(), expected, "{input:?}");
        }
    }

    #[test]
    fn case_sensitive_and_untrimmed() {
        assert_ne!(md5_digest(b"alice"), md5_digest(b"Alice"));
        assert_ne!(md5_digest(b"alice"), md5_digest(b"alice "));
        assert_eq!(
            md5_digest(b"alice").to_hex(),
            "6384e2b2184bcbf58eccf10ca7a6563c"
        );
        assert_eq!(
            md5_digest(b"Alice").to_hex(),
            "64489c85dc2fe0787b85cd87214b3810"
        );
    }

    #[test]
    fn hex_round_trip() {
        let d = md5_digest(b"abc");
        assert_eq!(d.to_hex().parse::<Digest>().unwrap(), d);
        assert!("abcd".parse::<Digest>().is_err());
    }
}
