use super::rsa::{unwrap, wrap, PrivateKey, PublicKey};
use super::symmetric::{
    decrypt_file, encrypt_file, generate_symmetric_key, Ciphertext, SymmetricKey,
};
use super::CryptoError;

/// A message sealed under a fresh AES session key, which is itself
/// PKCS#1 v1.5 wrapped to the recipient's RSA key.
///
/// Binary layout: 4-byte big-endian length of the wrapped key, the wrapped
/// key block, then the payload ciphertext (IV followed by body).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Envelope {
    pub wrapped_key: Vec<u8>,
    pub payload: Ciphertext,
}

impl Envelope {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.wrapped_key.len() + self.payload.encoded_len());
        out.extend_from_slice(&(self.wrapped_key.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.wrapped_key);
        out.extend_from_slice(&self.payload.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() < 4 {
            return Err(CryptoError::MalformedCiphertext(
                "envelope header truncated",
            ));
        }
        let wrapped_len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
        let rest = &bytes[4..];
        if rest.len() < wrapped_len {
            return Err(CryptoError::MalformedCiphertext("wrapped key truncated"));
        }
        let (wrapped, payload) = rest.split_at(wrapped_len);
        Ok(Self {
            wrapped_key: wrapped.to_vec(),
            payload: Ciphertext::from_bytes(payload)?,
        })
    }
}

pub fn seal_envelope(msg: &[u8], recipient: &PublicKey) -> Result<Envelope, CryptoError> {
    let session = generate_symmetric_key()?;
    let wrapped_key = wrap(session.as_bytes(), recipient)?;
    let payload = encrypt_file(msg, &session)?;
    Ok(Envelope {
        wrapped_key,
        payload,
    })
}

pub fn open_envelope(env: &Envelope, key: &PrivateKey) -> Result<Vec<u8>, CryptoError> {
    let session = unwrap(&env.wrapped_key, key)?;
    let session = SymmetricKey::from_slice(&session).map_err(|_| CryptoError::DecryptionFailure)?;
    decrypt_file(&env.payload, &session).map_err(|_| CryptoError::DecryptionFailure)
}
