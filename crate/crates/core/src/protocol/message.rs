use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;

use super::fields::{decode_hex, FieldReader, FieldWriter};
use super::frame::Frame;
use super::ProtocolError;
use crate::crypto::{fill_random, Ciphertext, CryptoError, Digest, PublicKey};
use crate::placement::{FileNumber, PlacementEntry};

/// 16 random bytes naming one login session; hex on the wire.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SessionToken([u8; 16]);

impl SessionToken {
    pub fn random() -> Result<Self, CryptoError> {
        let mut b = [0u8; 16];
        fill_random(&mut b)?;
        Ok(Self(b))
    }

    pub fn from_bytes(b: [u8; 16]) -> Self {
        Self(b)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl FromStr for SessionToken {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let b = decode_hex(s)?;
        Ok(Self(b.try_into().map_err(|_| {
            ProtocolError::malformed("session token must be 16 bytes")
        })?))
    }
}

impl fmt::Debug for SessionToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SessionToken(..)")
    }
}

/// Stable machine-readable error names carried by [`Message::ErrorFrame`].
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub enum ErrorCode {
    AuthFailed,
    InvalidSession,
    DuplicateUser,
    DuplicateLabel,
    NoSuchLabel,
    NotFound,
    StorageUnavailable,
    IntegrityFailure,
    FileTooLarge,
    TableFull,
    DuplicateFileNumber,
    DiskFailure,
    MailDeliveryFailure,
    PersistenceFailure,
    BadRequest,
    Internal,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 16] = [
        ErrorCode::AuthFailed,
        ErrorCode::InvalidSession,
        ErrorCode::DuplicateUser,
        ErrorCode::DuplicateLabel,
        ErrorCode::NoSuchLabel,
        ErrorCode::NotFound,
        ErrorCode::StorageUnavailable,
        ErrorCode::IntegrityFailure,
        ErrorCode::FileTooLarge,
        ErrorCode::TableFull,
        ErrorCode::DuplicateFileNumber,
        ErrorCode::DiskFailure,
        ErrorCode::MailDeliveryFailure,
        ErrorCode::PersistenceFailure,
        ErrorCode::BadRequest,
        ErrorCode::Internal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::AuthFailed => "AUTH_FAILED",
            ErrorCode::InvalidSession => "INVALID_SESSION",
            ErrorCode::DuplicateUser => "DUPLICATE_USER",
            ErrorCode::DuplicateLabel => "DUPLICATE_LABEL",
            ErrorCode::NoSuchLabel => "NO_SUCH_LABEL",
            ErrorCode::NotFound => "NOT_FOUND",
            ErrorCode::StorageUnavailable => "STORAGE_UNAVAILABLE",
            ErrorCode::IntegrityFailure => "INTEGRITY_FAILURE",
            ErrorCode::FileTooLarge => "FILE_TOO_LARGE",
            ErrorCode::TableFull => "TABLE_FULL",
            ErrorCode::DuplicateFileNumber => "DUPLICATE_FILE_NUMBER",
            ErrorCode::DiskFailure => "DISK_FAILURE",
            ErrorCode::MailDeliveryFailure => "MAIL_DELIVERY_FAILURE",
            ErrorCode::PersistenceFailure => "PERSISTENCE_FAILURE",
            ErrorCode::BadRequest => "BAD_REQUEST",
            ErrorCode::Internal => "INTERNAL",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ErrorCode {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| ProtocolError::malformed(format!("unknown error code {s:?}")))
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct DumpFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// Every message that can cross a connection. None of them carries a
/// symmetric file key.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Message {
    // client <-> system (sealed)
    Register {
        username: String,
        mail_address: String,
        client_public_key: PublicKey,
    },
    LoginRequest {
        username: String,
        otp: String,
    },
    LoginResponse {
        session_token: SessionToken,
        status: String,
    },
    UploadRequest {
        session_token: SessionToken,
        label: String,
        file_bytes: Vec<u8>,
    },
    UploadAck {
        label: String,
        status: String,
    },
    DownloadRequest {
        session_token: SessionToken,
        label: String,
    },
    FilePayload {
        label: String,
        file_bytes: Vec<u8>,
    },
    ListRequest {
        session_token: SessionToken,
    },
    ListResponse {
        labels: Vec<String>,
    },
    Logout {
        session_token: SessionToken,
    },
    Ack {
        status: String,
    },
    // system <-> storage (plain)
    StoreBlob {
        user_digest: Digest,
        file_number: FileNumber,
        blob: Ciphertext,
    },
    BlobStored {
        file_number: FileNumber,
        entry: PlacementEntry,
    },
    FetchBlob {
        user_digest: Digest,
        file_number: FileNumber,
    },
    BlobPayload {
        blob: Ciphertext,
    },
    // admin / health (plain, local only)
    Ping,
    Pong,
    DumpRequest,
    DumpResponse {
        files: Vec<DumpFile>,
    },
    ErrorFrame {
        code: ErrorCode,
        text: String,
    },
}

mod tag {
    pub const REGISTER: u8 = 0x01;
    pub const LOGIN_REQUEST: u8 = 0x02;
    pub const LOGIN_RESPONSE: u8 = 0x03;
    pub const UPLOAD_REQUEST: u8 = 0x04;
    pub const UPLOAD_ACK: u8 = 0x05;
    pub const DOWNLOAD_REQUEST: u8 = 0x06;
    pub const FILE_PAYLOAD: u8 = 0x07;
    pub const LIST_REQUEST: u8 = 0x08;
    pub const LIST_RESPONSE: u8 = 0x09;
    pub const LOGOUT: u8 = 0x0a;
    pub const ACK: u8 = 0x0b;
    pub const STORE_BLOB: u8 = 0x20;
    pub const BLOB_STORED: u8 = 0x21;
    pub const FETCH_BLOB: u8 = 0x22;
    pub const BLOB_PAYLOAD: u8 = 0x23;
    pub const PING: u8 = 0x30;
    pub const PONG: u8 = 0x31;
    pub const DUMP_REQUEST: u8 = 0x32;
    pub const DUMP_RESPONSE: u8 = 0x33;
    pub const ERROR: u8 = 0x7f;
}

fn biguint_hex(v: &BigUint) -> Vec<u8> {
    v.to_bytes_be()
}

fn read_biguint(r: &mut FieldReader<'_>, key: &str) -> Result<BigUint, ProtocolError> {
    let b = r.bytes(key)?;
    if b.is_empty() || b[0] == 0 {
        return Err(ProtocolError::malformed(format!(
            "non-canonical integer in {key}"
        )));
    }
    Ok(BigUint::from_bytes_be(&b))
}

fn read_file_number(r: &mut FieldReader<'_>) -> Result<FileNumber, ProtocolError> {
    FileNumber::new(r.num("file_number")?)
        .ok_or_else(|| ProtocolError::malformed("file number must be positive"))
}

fn read_token(r: &mut FieldReader<'_>) -> Result<SessionToken, ProtocolError> {
    r.str("session_token")?.parse()
}

fn read_digest(r: &mut FieldReader<'_>) -> Result<Digest, ProtocolError> {
    let b = r.bytes("user_digest")?;
    Ok(Digest::from_bytes(b.try_into().map_err(|_| {
        ProtocolError::malformed("digest must be 16 bytes")
    })?))
}

fn read_blob(r: &mut FieldReader<'_>) -> Result<Ciphertext, ProtocolError> {
    Ciphertext::from_bytes(&r.bytes("blob")?)
        .map_err(|e| ProtocolError::malformed(format!("blob: {e}")))
}

impl Message {
    pub fn tag(&self) -> u8 {
        match self {
            Message::Register { .. } => tag::REGISTER,
            Message::LoginRequest { .. } => tag::LOGIN_REQUEST,
            Message::LoginResponse { .. } => tag::LOGIN_RESPONSE,
            Message::UploadRequest { .. } => tag::UPLOAD_REQUEST,
            Message::UploadAck { .. } => tag::UPLOAD_ACK,
            Message::DownloadRequest { .. } => tag::DOWNLOAD_REQUEST,
            Message::FilePayload { .. } => tag::FILE_PAYLOAD,
            Message::ListRequest { .. } => tag::LIST_REQUEST,
            Message::ListResponse { .. } => tag::LIST_RESPONSE,
            Message::Logout { .. } => tag::LOGOUT,
            Message::Ack { .. } => tag::ACK,
            Message::StoreBlob { .. } => tag::STORE_BLOB,
            Message::BlobStored { .. } => tag::BLOB_STORED,
            Message::FetchBlob { .. } => tag::FETCH_BLOB,
            Message::BlobPayload { .. } => tag::BLOB_PAYLOAD,
            Message::Ping => tag::PING,
            Message::Pong => tag::PONG,
            Message::DumpRequest => tag::DUMP_REQUEST,
            Message::DumpResponse { .. } => tag::DUMP_RESPONSE,
            Message::ErrorFrame { .. } => tag::ERROR,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Message::Register { .. } => "Register",
            Message::LoginRequest { .. } => "LoginRequest",
            Message::LoginResponse { .. } => "LoginResponse",
            Message::UploadRequest { .. } => "UploadRequest",
            Message::UploadAck { .. } => "UploadAck",
            Message::DownloadRequest { .. } => "DownloadRequest",
            Message::FilePayload { .. } => "FilePayload",
            Message::ListRequest { .. } => "ListRequest",
            Message::ListResponse { .. } => "ListResponse",
            Message::Logout { .. } => "Logout",
            Message::Ack { .. } => "Ack",
            Message::StoreBlob { .. } => "StoreBlob",
            Message::BlobStored { .. } => "BlobStored",
            Message::FetchBlob { .. } => "FetchBlob",
            Message::BlobPayload { .. } => "BlobPayload",
            Message::Ping => "Ping",
            Message::Pong => "Pong",
            Message::DumpRequest => "DumpRequest",
            Message::DumpResponse { .. } => "DumpResponse",
            Message::ErrorFrame { .. } => "ErrorFrame",
        }
    }

    pub fn error(code: ErrorCode, text: impl Into<String>) -> Self {
        Message::ErrorFrame {
            code,
            text: text.into(),
        }
    }

    fn payload(&self) -> Vec<u8> {
        let w = FieldWriter::default();
        match self {
            Message::Register {
                username,
                mail_address,
                client_public_key,
            } => w
                .bytes("client_key_e", &biguint_hex(&client_public_key.e))
                .bytes("client_key_n", &biguint_hex(&client_public_key.n))
                .str("mail_address", mail_address)
                .str("username", username),
            Message::LoginRequest { username, otp } => w.str("otp", otp).str("username", username),
            Message::LoginResponse {
                session_token,
                status,
            } => w
                .str("session_token", &session_token.to_hex())
                .str("status", status),
            Message::UploadRequest {
                session_token,
                label,
                file_bytes,
            } => w
                .bytes("file_bytes", file_bytes)
                .str("label", label)
                .str("session_token", &session_token.to_hex()),
            Message::UploadAck { label, status } => w.str("label", label).str("status", status),
            Message::DownloadRequest {
                session_token,
                label,
            } => w
                .str("label", label)
                .str("session_token", &session_token.to_hex()),
            Message::FilePayload { label, file_bytes } => {
                w.bytes("file_bytes", file_bytes).str("label", label)
            }
            Message::ListRequest { session_token } | Message::Logout { session_token } => {
                w.str("session_token", &session_token.to_hex())
            }
            Message::ListResponse { labels } => labels.iter().fold(w, |w, l| w.str("label", l)),
            Message::Ack { status } => w.str("status", status),
            Message::StoreBlob {
                user_digest,
                file_number,
                blob,
            } => w
                .bytes("blob", &blob.to_bytes())
                .num("file_number", file_number.get())
                .bytes("user_digest", user_digest.as_bytes()),
            Message::BlobStored { file_number, entry } => w
                .num("file_number", file_number.get())
                .num("offset", entry.offset)
                .num("position", entry.position),
            Message::FetchBlob {
                user_digest,
                file_number,
            } => w
                .num("file_number", file_number.get())
                .bytes("user_digest", user_digest.as_bytes()),
            Message::BlobPayload { blob } => w.bytes("blob", &blob.to_bytes()),
            Message::Ping | Message::Pong | Message::DumpRequest => w,
            Message::DumpResponse { files } => files.iter().fold(w, |w, f| {
                w.raw(
                    "file",
                    format!(
                        "{}:{}",
                        hex::encode(f.name.as_bytes()),
                        hex::encode(&f.bytes)
                    ),
                )
            }),
            Message::ErrorFrame { code, text } => w.str("code", code.as_str()).str("text", text),
        }
        .finish()
    }

    pub fn to_frame(&self) -> Result<Frame, ProtocolError> {
        Frame::new(self.tag(), self.payload())
    }

    pub fn from_frame(frame: &Frame) -> Result<Self, ProtocolError> {
        let mut r = FieldReader::parse(&frame.payload)?;
        let msg = match frame.tag {
            tag::REGISTER => Message::Register {
                client_public_key: PublicKey::new(
                    read_biguint(&mut r, "client_key_n")?,
                    read_biguint(&mut r, "client_key_e")?,
                ),
                mail_address: r.str("mail_address")?,
                username: r.str("username")?,
            },
            tag::LOGIN_REQUEST => Message::LoginRequest {
                otp: r.str("otp")?,
                username: r.str("username")?,
            },
            tag::LOGIN_RESPONSE => Message::LoginResponse {
                session_token: read_token(&mut r)?,
                status: r.str("status")?,
            },
            tag::UPLOAD_REQUEST => Message::UploadRequest {
                file_bytes: r.bytes("file_bytes")?,
                label: r.str("label")?,
                session_token: read_token(&mut r)?,
            },
            tag::UPLOAD_ACK => Message::UploadAck {
                label: r.str("label")?,
                status: r.str("status")?,
            },
            tag::DOWNLOAD_REQUEST => Message::DownloadRequest {
                label: r.str("label")?,
                session_token: read_token(&mut r)?,
            },
            tag::FILE_PAYLOAD => Message::FilePayload {
                file_bytes: r.bytes("file_bytes")?,
                label: r.str("label")?,
            },
            tag::LIST_REQUEST => Message::ListRequest {
                session_token: read_token(&mut r)?,
            },
            tag::LIST_RESPONSE => Message::ListResponse {
                labels: r.str_list("label")?,
            },
            tag::LOGOUT => Message::Logout {
                session_token: read_token(&mut r)?,
            },
            tag::ACK => Message::Ack {
                status: r.str("status")?,
            },
            tag::STORE_BLOB => Message::StoreBlob {
                blob: read_blob(&mut r)?,
                file_number: read_file_number(&mut r)?,
                user_digest: read_digest(&mut r)?,
            },
            tag::BLOB_STORED => Message::BlobStored {
                file_number: read_file_number(&mut r)?,
                entry: PlacementEntry {
                    offset: r.num("offset")?,
                    position: r.num("position")?,
                },
            },
            tag::FETCH_BLOB => Message::FetchBlob {
                file_number: read_file_number(&mut r)?,
                user_digest: read_digest(&mut r)?,
            },
            tag::BLOB_PAYLOAD => Message::BlobPayload {
                blob: read_blob(&mut r)?,
            },
            tag::PING => Message::Ping,
            tag::PONG => Message::Pong,
            tag::DUMP_REQUEST => Message::DumpRequest,
            tag::DUMP_RESPONSE => {
                let files = r
                    .raw_list("file")
                    .into_iter()
                    .map(|v| {
                        let (name, bytes) = v
                            .split_once(':')
                            .ok_or_else(|| ProtocolError::malformed("bad dump entry"))?;
                        let name = String::from_utf8(decode_hex(name)?)
                            .map_err(|_| ProtocolError::malformed("dump name not UTF-8"))?;
                        Ok(DumpFile {
                            name,
                            bytes: decode_hex(bytes)?,
                        })
                    })
                    .collect::<Result<Vec<_>, ProtocolError>>()?;
                Message::DumpResponse { files }
            }
            tag::ERROR => Message::ErrorFrame {
                code: r.str("code")?.parse()?,
                text: r.str("text")?,
            },
            other => return Err(ProtocolError::UnknownTag(other)),
        };
        r.finish()?;
        Ok(msg)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::crypto::{InitVector, RsaKeyPair};
    use crate::protocol::{decode_frame, encode_frame, HEADER_LEN};
    use proptest::prelude::*;

    fn text() -> impl Strategy<Value = String> {
        prop_oneof![
            "[a-zA-Z0-9 _.@-]{0,24}",
            any::<String>(),
            Just("tab\tnew\nline\\back\rret".to_string()),
        ]
    }

    fn bytes() -> impl Strategy<Value = Vec<u8>> {
        proptest::collection::vec(any::<u8>(), 0..256)
    }

    fn token() -> impl Strategy<Value = SessionToken> {
        any::<[u8; 16]>().prop_map(SessionToken::from_bytes)
    }

    fn digest() -> impl Strategy<Value = Digest> {
        any::<[u8; 16]>().prop_map(Digest::from_bytes)
    }

    fn file_number() -> impl Strategy<Value = FileNumber> {
        (1u64..=u64::MAX).prop_map(|n| FileNumber::new(n).unwrap())
    }

    fn ciphertext() -> impl Strategy<Value = Ciphertext> {
        (any::<[u8; 16]>(), 1usize..8, any::<u8>()).prop_map(|(iv, blocks, fill)| {
            Ciphertext::new(InitVector::from_bytes(iv), vec![fill; blocks * 16]).unwrap()
        })
    }

    fn public_key() -> impl Strategy<Value = PublicKey> {
        (1u64..=u64::MAX, 1u64..=u64::MAX)
            .prop_map(|(n, e)| PublicKey::new(BigUint::from(n), BigUint::from(e)))
    }

    pub(crate) fn any_message() -> impl Strategy<Value = Message> {
        prop_oneof![
            (text(), text(), public_key()).prop_map(
                |(username, mail_address, client_public_key)| {
                    Message::Register {
                        username,
                        mail_address,
                        client_public_key,
                    }
                }
            ),
            (text(), text()).prop_map(|(username, otp)| Message::LoginRequest { username, otp }),
            (token(), text()).prop_map(|(session_token, status)| Message::LoginResponse {
                session_token,
                status
            }),
            (token(), text(), bytes()).prop_map(|(session_token, label, file_bytes)| {
                Message::UploadRequest {
                    session_token,
                    label,
                    file_bytes,
                }
            }),
            (text(), text()).prop_map(|(label, status)| Message::UploadAck { label, status }),
            (token(), text()).prop_map(|(session_token, label)| Message::DownloadRequest {
                session_token,
                label
            }),
            (text(), bytes())
                .prop_map(|(label, file_bytes)| Message::FilePayload { label, file_bytes }),
            token().prop_map(|session_token| Message::ListRequest { session_token }),
            proptest::collection::vec(text(), 0..6)
                .prop_map(|labels| Message::ListResponse { labels }),
            token().prop_map(|session_token| Message::Logout { session_token }),
            text().prop_map(|status| Message::Ack { status }),
            (digest(), file_number(), ciphertext()).prop_map(|(user_digest, file_number, blob)| {
                Message::StoreBlob {
                    user_digest,
                    file_number,
                    blob,
                }
            }),
            (file_number(), any::<u64>(), any::<u64>()).prop_map(
                |(file_number, position, offset)| {
                    Message::BlobStored {
                        file_number,
                        entry: PlacementEntry { position, offset },
                    }
                }
            ),
            (digest(), file_number()).prop_map(|(user_digest, file_number)| Message::FetchBlob {
                user_digest,
                file_number
            }),
            ciphertext().prop_map(|blob| Message::BlobPayload { blob }),
            Just(Message::Ping),
            Just(Message::Pong),
            Just(Message::DumpRequest),
            proptest::collection::vec((text(), bytes()), 0..4).prop_map(|files| {
                Message::DumpResponse {
                    files: files
                        .into_iter()
                        .map(|(name, bytes)| DumpFile { name, bytes })
                        .collect(),
                }
            }),
            (proptest::sample::select(ErrorCode::ALL.to_vec()), text())
                .prop_map(|(code, text)| Message::ErrorFrame { code, text }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn decode_inverts_encode(msg in any_message()) {
            let bytes = encode_frame(&msg).unwrap();
            prop_assert_eq!(bytes[0], msg.tag());
            prop_assert_eq!(u32::from_be_bytes(bytes[1..5].try_into().unwrap()) as usize, bytes.len() - HEADER_LEN);
            let back = decode_frame(&bytes).unwrap();
            prop_assert_eq!(&back, &msg);
            // Canonical: re-encoding the decoded value reproduces the same bytes.
            prop_assert_eq!(encode_frame(&back).unwrap(), bytes);
        }

        #[test]
        fn decoder_never_panics(raw in proptest::collection::vec(any::<u8>(), 0..64)) {
            let _ = decode_frame(&raw);
        }
    }

    #[test]
    fn empty_payload_layout() {
        assert_eq!(
            encode_frame(&Message::Ping).unwrap(),
            vec![0x30, 0, 0, 0, 0]
        );
        assert_eq!(
            encode_frame(&Message::ListResponse { labels: vec![] }).unwrap(),
            vec![0x09, 0, 0, 0, 0]
        );
    }

    #[test]
    fn short_and_unknown_input() {
        assert!(matches!(
            decode_frame(&[1, 0, 0]),
            Err(ProtocolError::TruncatedFrame)
        ));
        assert!(matches!(
            decode_frame(&[1, 0, 0, 0, 9, b'a']),
            Err(ProtocolError::TruncatedFrame)
        ));
        assert!(matches!(
            decode_frame(&[0xee, 0, 0, 0, 0]),
            Err(ProtocolError::UnknownTag(0xee))
        ));
        assert!(matches!(
            decode_frame(&[0x30, 0xff, 0xff, 0xff, 0xff]),
            Err(ProtocolError::MalformedPayload(_))
        ));
        assert!(matches!(
            decode_frame(&[0x30, 0, 0, 0, 0, 7]),
            Err(ProtocolError::MalformedPayload(_))
        ));
    }

    #[test]
    fn extra_or_missing_fields_rejected() {
        let mut f = Message::Ack {
            status: "OK".into(),
        }
        .to_frame()
        .unwrap();
        f.payload.extend_from_slice(b"zzz=1\n");
        assert!(matches!(
            Message::from_frame(&f),
            Err(ProtocolError::MalformedPayload(_))
        ));
        let f = Frame::new(0x0b, Vec::new()).unwrap();
        assert!(matches!(
            Message::from_frame(&f),
            Err(ProtocolError::MalformedPayload(_))
        ));
    }

    #[test]
    fn canonical_store_blob_bytes() {
        let msg = Message::StoreBlob {
            user_digest: Digest::from_bytes([0x11; 16]),
            file_number: FileNumber::new(7).unwrap(),
            blob: Ciphertext::new(InitVector::from_bytes([0; 16]), vec![0xab; 16]).unwrap(),
        };
        let expected_payload = format!(
            "blob={}{}\nfile_number=7\nuser_digest={}\n",
            "00".repeat(16),
            "ab".repeat(16),
            "11".repeat(16)
        );
        let bytes = encode_frame(&msg).unwrap();
        assert_eq!(&bytes[HEADER_LEN..], expected_payload.as_bytes());
        assert_eq!(bytes, encode_frame(&msg.clone()).unwrap());
    }

    #[test]
    fn oversized_payload_rejected() {
        let msg = Message::FilePayload {
            label: "big".into(),
            file_bytes: vec![0; 9 * 1024 * 1024],
        };
        assert!(matches!(
            encode_frame(&msg),
            Err(ProtocolError::MalformedPayload(_))
        ));
    }

    #[test]
    fn real_public_key_round_trips() {
        let kp = RsaKeyPair::from_primes(
            BigUint::from(61u32),
            BigUint::from(53u32),
            BigUint::from(17u32),
        )
        .unwrap();
        let msg = Message::Register {
            username: "alice".into(),
            mail_address: "alice@example.org".into(),
            client_public_key: kp.public().clone(),
        };
        assert_eq!(decode_frame(&encode_frame(&msg).unwrap()).unwrap(), msg);
    }
}
