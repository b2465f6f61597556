use std::fmt;

use aes::cipher::block_padding::Pkcs7;
use aes::cipher::{BlockDecryptMut, BlockEncrypt, BlockEncryptMut, KeyInit, KeyIvInit};
use aes::Aes128;

use super::random::fill_random;
use super::CryptoError;

pub const KEY_LEN: usize = 16;
pub const BLOCK_LEN: usize = 16;

type CbcEnc = cbc::Encryptor<Aes128>;
type CbcDec = cbc::Decryptor<Aes128>;

/// A 128-bit AES key. Each key encrypts exactly one file.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SymmetricKey([u8; KEY_LEN]);

impl SymmetricKey {
    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        Self(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; KEY_LEN] = bytes
            .try_into()
            .map_err(|_| CryptoError::InvalidKey(format!("key must be {KEY_LEN} bytes")))?;
        Ok(Self(arr))
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        let bytes = hex::decode(s).map_err(|e| CryptoError::InvalidKey(e.to_string()))?;
        Self::from_slice(&bytes)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

// Key material stays out of logs and panic messages.
impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymmetricKey(..)")
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct InitVector([u8; BLOCK_LEN]);

impl InitVector {
    pub fn random() -> Result<Self, CryptoError> {
        let mut iv = [0u8; BLOCK_LEN];
        fill_random(&mut iv)?;
        Ok(Self(iv))
    }

    pub fn from_bytes(bytes: [u8; BLOCK_LEN]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; BLOCK_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

/// IV plus a CBC body whose length is a positive multiple of the block size.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Ciphertext {
    iv: InitVector,
    body: Vec<u8>,
}

impl Ciphertext {
    pub fn new(iv: InitVector, body: Vec<u8>) -> Result<Self, CryptoError> {
        if body.is_empty() {
            return Err(CryptoError::MalformedCiphertext("empty body"));
        }
        if !body.len().is_multiple_of(BLOCK_LEN) {
            return Err(CryptoError::MalformedCiphertext(
                "body length not a multiple of 16",
            ));
        }
        Ok(Self { iv, body })
    }

    pub fn iv(&self) -> &InitVector {
        &self.iv
    }

    pub fn body(&self) -> &[u8] {
        &self.body
    }

    /// Serialized form: IV followed by the body.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(BLOCK_LEN + self.body.len());
        out.extend_from_slice(self.iv.as_bytes());
        out.extend_from_slice(&self.body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() < BLOCK_LEN {
            return Err(CryptoError::MalformedCiphertext("shorter than an IV"));
        }
        let (iv, body) = bytes.split_at(BLOCK_LEN);
        let iv = InitVector(iv.try_into().expect("split at block length"));
        Self::new(iv, body.to_vec())
    }

    /// Length of [`Ciphertext::to_bytes`].
    pub fn encoded_len(&self) -> usize {
        BLOCK_LEN + self.body.len()
    }
}

pub fn generate_symmetric_key() -> Result<SymmetricKey, CryptoError> {
    let mut key = [0u8; KEY_LEN];
    fill_random(&mut key)?;
    Ok(SymmetricKey(key))
}

/// The bare AES-128 block transform, exposed for known-answer checks.
pub fn aes_block_encrypt(key: &SymmetricKey, block: [u8; BLOCK_LEN]) -> [u8; BLOCK_LEN] {
    let cipher = Aes128::new(key.as_bytes().into());
    let mut b = block.into();
    cipher.encrypt_block(&mut b);
    b.into()
}

/// AES-128-CBC with PKCS#7 padding under a fresh random IV.
pub fn encrypt_file(plaintext: &[u8], key: &SymmetricKey) -> Result<Ciphertext, CryptoError> {
    let iv = InitVector::random()?;
    Ok(encrypt_with_iv(plaintext, key, iv))
}

pub(crate) fn encrypt_with_iv(plaintext: &[u8], key: &SymmetricKey, iv: InitVector) -> Ciphertext {
    let body = CbcEnc::new(key.as_bytes().into(), iv.as_bytes().into())
        .encrypt_padded_vec_mut::<Pkcs7>(plaintext);
    Ciphertext { iv, body }
}

pub fn decrypt_file(ct: &Ciphertext, key: &SymmetricKey) -> Result<Vec<u8>, CryptoError> {
    if ct.body.is_empty() || !ct.body.len().is_multiple_of(BLOCK_LEN) {
        return Err(CryptoError::MalformedCiphertext(
            "body length not a positive multiple of 16",
        ));
    }
    CbcDec::new(key.as_bytes().into(), ct.iv.as_bytes().into())
        .decrypt_padded_vec_mut::<Pkcs7>(&ct.body)
        .map_err(|_| CryptoError::BadPadding)
}

#[cfg(test)]
mod tests {
    use super::*;
    use aes::cipher::BlockDecrypt;
    use proptest::prelude::*;

    fn key(hex_str: &str) -> SymmetricKey {
        SymmetricKey::from_hex(hex_str).unwrap()
    }

    // Hand-rolled CBC/PKCS#7 over the raw block cipher; independent of the `cbc` crate.
    fn oracle_cbc_encrypt(pt: &[u8], k: &SymmetricKey, iv: [u8; 16]) -> Vec<u8> {
        let pad = 16 - pt.len() % 16;
        let mut data = pt.to_vec();
        data.extend(std::iter::repeat_n(pad as u8, pad));
        let mut prev = iv;
        let mut out = Vec::new();
        for chunk in data.chunks(16) {
            let mut block = [0u8; 16];
            for i in 0..16 {
                block[i] = chunk[i] ^ prev[i];
            }
            prev = aes_block_encrypt(k, block);
            out.extend_from_slice(&prev);
        }
        out
    }

    #[test]
    fn aes_known_answer() {
        let k = key("000102030405060708090a0b0c0d0e0f");
        let pt: [u8; 16] = hex::decode("00112233445566778899aabbccddeeff")
            .unwrap()
            .try_into()
            .unwrap();
        assert_eq!(
            hex::encode(aes_block_encrypt(&k, pt)),
            "69c4e0d86a7b0430d8cdb78070b4c55a"
        );
        let cipher = Aes128::new(k.as_bytes().into());
        let mut b = hex::decode("69c4e0d86a7b0430d8cdb78070b4c55a").unwrap();
        cipher.decrypt_block(b.as_mut_slice().into());
        assert_eq!(b, pt);
    }

    #[test]
    fn cbc_matches_hand_rolled_oracle() {
        let k = generate_symmetric_key().unwrap();
        for len in [0usize, 1, 15, 16, 17, 31, 32, 100, 1000] {
            let pt: Vec<u8> = (0..len).map(|i| (i * 7 + 3) as u8).collect();
            let iv = InitVector::random().unwrap();
            let ct = encrypt_with_iv(&pt, &k, iv);
            assert_eq!(
                ct.body(),
                oracle_cbc_encrypt(&pt, &k, *iv.as_bytes()).as_slice()
            );
        }
    }

    #[test]
    fn empty_plaintext_is_one_block() {
        let k = generate_symmetric_key().unwrap();
        let ct = encrypt_file(b"", &k).unwrap();
        assert_eq!(ct.body().len(), 16);
        assert_eq!(decrypt_file(&ct, &k).unwrap(), b"");
    }

    #[test]
    fn repeated_encryption_differs() {
        let k = generate_symmetric_key().unwrap();
        let a = encrypt_file(b"same bytes", &k).unwrap();
        let b = encrypt_file(b"same bytes", &k).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn wrong_key_is_bad_padding() {
        // A random wrong key yields valid PKCS#7 padding with probability about 1/256
        // per trial, so demand near-total rejection rather than all 100.
        let k = generate_symmetric_key().unwrap();
        let ct = encrypt_file(b"attack at dawn, bring snacks", &k).unwrap();
        let mut rejected = 0;
        for _ in 0..100 {
            let wrong = generate_symmetric_key().unwrap();
            match decrypt_file(&ct, &wrong) {
                Err(CryptoError::BadPadding) => rejected += 1,
                Ok(pt) => assert_ne!(pt, b"attack at dawn, bring snacks"),
                Err(e) => panic!("unexpected error {e}"),
            }
        }
        assert!(rejected >= 95, "only {rejected}/100 rejected");
    }

    #[test]
    fn truncated_body_is_malformed() {
        let k = generate_symmetric_key().unwrap();
        let ct = encrypt_file(b"0123456789abcdef0123", &k).unwrap();
        let mut bytes = ct.to_bytes();
        bytes.truncate(16 + 15);
        assert!(matches!(
            Ciphertext::from_bytes(&bytes),
            Err(CryptoError::MalformedCiphertext(_))
        ));
        let bad = Ciphertext {
            iv: *ct.iv(),
            body: ct.body()[..15].to_vec(),
        };
        assert!(matches!(
            decrypt_file(&bad, &k),
            Err(CryptoError::MalformedCiphertext(_))
        ));
    }

    #[test]
    fn key_generation_is_fresh_and_spread() {
        let mut seen = std::collections::HashSet::new();
        let mut leading = [0u32; 256];
        for _ in 0..1000 {
            let k = generate_symmetric_key().unwrap();
            leading[k.as_bytes()[0] as usize] += 1;
            assert!(seen.insert(k));
        }
        let distinct = leading.iter().filter(|&&c| c > 0).count();
        assert!(distinct >= 120, "{distinct} distinct leading bytes");
        // Chi-squared against uniform over 256 bins, 255 dof; 99.9th percentile ~ 330.
        let expected = 1000.0 / 256.0;
        let chi2: f64 = leading
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 340.0, "chi2 = {chi2}");
    }

    #[test]
    fn debug_redacts_key() {
        let k = key("000102030405060708090a0b0c0d0e0f");
        assert!(!format!("{k:?}").contains("0001"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn round_trip(pt in proptest::collection::vec(any::<u8>(), 0..4096)) {
            let k = generate_symmetric_key().unwrap();
            let ct = encrypt_file(&pt, &k).unwrap();
            prop_assert_eq!(ct.body().len() % 16, 0);
            prop_assert!(ct.body().len() > pt.len());
            let parsed = Ciphertext::from_bytes(&ct.to_bytes()).unwrap();
            prop_assert_eq!(decrypt_file(&parsed, &k).unwrap(), pt);
        }
    }

    #[test]
    fn round_trip_one_mebibyte() {
        let k = generate_symmetric_key().unwrap();
        let mut pt = vec![0u8; 1 << 20];
        fill_random(&mut pt).unwrap();
        let ct = encrypt_file(&pt, &k).unwrap();
        assert_eq!(decrypt_file(&ct, &k).unwrap(), pt);
    }
}
