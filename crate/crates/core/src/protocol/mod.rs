//! Wire format shared by every connection in the system.
//!
//! A frame is a 1-byte tag, a 4-byte big-endian payload length and the
//! payload. Message payloads are a canonical textual map: one `key=value`
//! line per field, keys in ascending order, binary fields in lowercase hex.
//!
//! Client to system traffic travels in [`SEALED_TAG`] frames whose payload is
//! an [`Envelope`](crate::crypto::Envelope) over the encoded inner frame.
//! System to storage traffic is framed directly; it only ever carries
//! digests, file numbers and ciphertext.

mod fields;
mod frame;
mod message;
mod sealed;

use std::io;

use thiserror::Error;

pub use frame::{decode_frame, encode_frame, Frame, HEADER_LEN, MAX_FRAME_LEN};
pub use message::{DumpFile, ErrorCode, Message, SessionToken};
pub use sealed::{recv_plain, recv_sealed, send_plain, send_sealed, SEALED_TAG};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("unknown frame tag 0x{0:02x}")]
    UnknownTag(u8),
    #[error("truncated frame")]
    TruncatedFrame,
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
    #[error("decryption failure")]
    DecryptionFailure,
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

impl ProtocolError {
    pub(crate) fn malformed(msg: impl Into<String>) -> Self {
        Self::MalformedPayload(msg.into())
    }
}
