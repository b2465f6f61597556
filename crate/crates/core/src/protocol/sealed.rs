use super::frame::{decode_frame, encode_frame, Frame};
use super::message::Message;
use super::ProtocolError;
use crate::crypto::{open_envelope, seal_envelope, Envelope, PrivateKey, PublicKey};

/// Tag of a frame whose payload is an envelope around an encoded inner frame.
pub const SEALED_TAG: u8 = 0x80;

/// Client <-> system direction: the whole encoded message goes inside an envelope.
pub fn send_sealed(msg: &Message, recipient: &PublicKey) -> Result<Frame, ProtocolError> {
    let inner = encode_frame(msg)?;
    let env =
        seal_envelope(&inner, recipient).map_err(|e| ProtocolError::malformed(e.to_string()))?;
    Frame::new(SEALED_TAG, env.to_bytes())
}

pub fn recv_sealed(frame: &Frame, key: &PrivateKey) -> Result<Message, ProtocolError> {
    if frame.tag != SEALED_TAG {
        return Err(ProtocolError::malformed("expected a sealed frame"));
    }
    let env = Envelope::from_bytes(&frame.payload).map_err(|_| ProtocolError::DecryptionFailure)?;
    let inner = open_envelope(&env, key).map_err(|_| ProtocolError::DecryptionFailure)?;
    decode_frame(&inner)
}

/// System <-> storage direction: anything file-shaped here is already ciphertext.
pub fn send_plain(msg: &Message) -> Result<Frame, ProtocolError> {
    msg.to_frame()
}

pub fn recv_plain(frame: &Frame) -> Result<Message, ProtocolError> {
    if frame.tag == SEALED_TAG {
        return Err(ProtocolError::malformed("sealed frame on a plain channel"));
    }
    Message::from_frame(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{rsa_generate, Ciphertext, Digest, InitVector, RsaKeyPair};
    use crate::placement::FileNumber;
    use crate::protocol::message::SessionToken;
    use std::sync::OnceLock;

    fn pair() -> &'static RsaKeyPair {
        static PAIR: OnceLock<RsaKeyPair> = OnceLock::new();
        PAIR.get_or_init(|| rsa_generate(1024).unwrap())
    }

    fn contains(hay: &[u8], needle: &[u8]) -> bool {
        hay.windows(needle.len()).any(|w| w == needle)
    }

    #[test]
    fn sealed_round_trip_and_nondeterminism() {
        let msg = Message::UploadRequest {
            session_token: SessionToken::from_bytes([3; 16]),
            label: "taxes-2024".into(),
            file_bytes: b"SENTINEL-plaintext-marker".to_vec(),
        };
        let a = send_sealed(&msg, pair().public()).unwrap();
        let b = send_sealed(&msg, pair().public()).unwrap();
        assert_ne!(a, b);
        assert_eq!(recv_sealed(&a, pair().private()).unwrap(), msg);
        for frame in [&a, &b] {
            let wire = frame.to_bytes();
            for marker in [
                &b"SENTINEL-plaintext-marker"[..],
                hex::encode(b"SENTINEL-plaintext-marker").as_bytes(),
                b"taxes-2024",
                b"label",
            ] {
                assert!(
                    !contains(&wire, marker),
                    "{:?} leaked",
                    String::from_utf8_lossy(marker)
                );
            }
        }
    }

    #[test]
    fn wrong_key_or_plain_frame_rejected() {
        let msg = Message::Ping;
        let sealed = send_sealed(&msg, pair().public()).unwrap();
        let other = rsa_generate(1024).unwrap();
        assert!(matches!(
            recv_sealed(&sealed, other.private()),
            Err(ProtocolError::DecryptionFailure)
        ));
        assert!(recv_sealed(&send_plain(&msg).unwrap(), pair().private()).is_err());
        assert!(recv_plain(&sealed).is_err());
    }

    #[test]
    fn plain_store_blob_round_trip() {
        let msg = Message::StoreBlob {
            user_digest: Digest::from_bytes([9; 16]),
            file_number: FileNumber::new(42).unwrap(),
            blob: Ciphertext::new(InitVector::from_bytes([1; 16]), vec![2; 32]).unwrap(),
        };
        let frame = send_plain(&msg).unwrap();
        assert_eq!(frame, send_plain(&msg).unwrap());
        assert_eq!(recv_plain(&frame).unwrap(), msg);
    }
}
