//! Client side of the sealed channel to the system server.
//!
//! Every request is sealed to the system server's public key. Replies are
//! either sealed to this client's key or a plain error frame.

use std::fs;
use std::io;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{CryptoError, PublicKey, RsaKeyPair};
use crate::net;
use crate::protocol::{
    recv_plain, recv_sealed, send_plain, send_sealed, ErrorCode, Message, ProtocolError,
    SessionToken, SEALED_TAG,
};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("{code}: {text}")]
    Remote { code: ErrorCode, text: String },
    #[error("protocol: {0}")]
    Protocol(#[from] ProtocolError),
    #[error("crypto: {0}")]
    Crypto(#[from] CryptoError),
    #[error("unexpected reply {0}")]
    UnexpectedReply(&'static str),
    #[error("{0}")]
    Local(String),
}

impl ClientError {
    /// Stable machine-readable name printed by the CLI.
    pub fn code_name(&self) -> &'static str {
        match self {
            ClientError::Remote { code, .. } => code.as_str(),
            ClientError::Protocol(ProtocolError::DecryptionFailure) => "DECRYPTION_FAILURE",
            ClientError::Protocol(ProtocolError::Io(_))
            | ClientError::Protocol(ProtocolError::TruncatedFrame) => "SYSTEM_UNAVAILABLE",
            ClientError::Protocol(_) => "PROTOCOL_ERROR",
            ClientError::Crypto(_) => "CRYPTO_ERROR",
            ClientError::UnexpectedReply(_) => "PROTOCOL_ERROR",
            ClientError::Local(_) => "LOCAL_ERROR",
        }
    }

    pub fn remote_code(&self) -> Option<ErrorCode> {
        match self {
            ClientError::Remote { code, .. } => Some(*code),
            _ => None,
        }
    }
}

pub struct Client {
    system: SocketAddr,
    system_key: PublicKey,
    keypair: RsaKeyPair,
    timeout: Duration,
    plaintext: bool,
}

impl Client {
    pub fn new(system: SocketAddr, system_key: PublicKey, keypair: RsaKeyPair) -> Self {
        Self {
            system,
            system_key,
            keypair,
            timeout: DEFAULT_TIMEOUT,
            plaintext: false,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Sends requests unsealed. Only a server built with the plaintext-channel
    /// mutation accepts them; the leakage audit uses this to prove it notices.
    pub fn with_plaintext_channel(mut self, on: bool) -> Self {
        self.plaintext = on;
        self
    }

    pub fn public_key(&self) -> &PublicKey {
        self.keypair.public()
    }

    fn exchange(&self, msg: &Message) -> Result<Message, ClientError> {
        let frame = if self.plaintext {
            send_plain(msg)?
        } else {
            send_sealed(msg, &self.system_key)?
        };
        let reply = net::request(self.system, &frame, self.timeout)?;
        let reply = if reply.tag == SEALED_TAG {
            recv_sealed(&reply, self.keypair.private())?
        } else {
            recv_plain(&reply)?
        };
        match reply {
            Message::ErrorFrame { code, text } => Err(ClientError::Remote { code, text }),
            m => Ok(m),
        }
    }

    pub fn register(&self, username: &str, mail_address: &str) -> Result<(), ClientError> {
        match self.exchange(&Message::Register {
            username: username.into(),
            mail_address: mail_address.into(),
            client_public_key: self.keypair.public().clone(),
        })? {
            Message::Ack { .. } => Ok(()),
            other => Err(ClientError::UnexpectedReply(other.kind())),
        }
    }

    pub fn login(&self, username: &str, otp: &str) -> Result<SessionToken, ClientError> {
        match self.exchange(&Message::LoginRequest {
            username: username.into(),
            otp: otp.into(),
        })? {
            Message::LoginResponse { session_token, .. } => Ok(session_token),
            other => Err(ClientError::UnexpectedReply(other.kind())),
        }
    }

    pub fn upload(
        &self,
        token: &SessionToken,
        label: &str,
        file_bytes: &[u8],
    ) -> Result<(), ClientError> {
        match self.exchange(&Message::UploadRequest {
            session_token: *token,
            label: label.into(),
            file_bytes: file_bytes.to_vec(),
        })? {
            Message::UploadAck { .. } => Ok(()),
            other => Err(ClientError::UnexpectedReply(other.kind())),
        }
    }

    pub fn download(&self, token: &SessionToken, label: &str) -> Result<Vec<u8>, ClientError> {
        match self.exchange(&Message::DownloadRequest {
            session_token: *token,
            label: label.into(),
        })? {
            Message::FilePayload { file_bytes, .. } => Ok(file_bytes),
            other => Err(ClientError::UnexpectedReply(other.kind())),
        }
    }

    pub fn list(&self, token: &SessionToken) -> Result<Vec<String>, ClientError> {
        match self.exchange(&Message::ListRequest {
            session_token: *token,
        })? {
            Message::ListResponse { labels } => Ok(labels),
            other => Err(ClientError::UnexpectedReply(other.kind())),
        }
    }

    pub fn logout(&self, token: &SessionToken) -> Result<(), ClientError> {
        match self.exchange(&Message::Logout {
            session_token: *token,
        })? {
            Message::Ack { .. } => Ok(()),
            other => Err(ClientError::UnexpectedReply(other.kind())),
        }
    }
}

/// Settings of the `splitvault` command-line client.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClientConfig {
    pub system_addr: SocketAddr,
    /// Public key of the system server, as written by the server on first start.
    pub system_public_key: PathBuf,
    /// This client's RSA key pair, created by `splitvault keygen`.
    pub keypair: PathBuf,
    /// Where the session token is cached between invocations.
    pub token_cache: PathBuf,
    /// Directory of a file-backed mailbox, when OTPs are delivered locally.
    #[serde(default)]
    pub mailbox_dir: Option<PathBuf>,
    /// Address OTPs are mailed to; used by `login` when no OTP is given.
    #[serde(default)]
    pub mail_address: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    DEFAULT_TIMEOUT.as_secs()
}

/// Writes `user\ttoken` readable by the owner only.
pub fn save_token(path: &Path, username: &str, token: &SessionToken) -> io::Result<()> {
    crate::persist::atomic_write(path, format!("{username}\t{}\n", token.to_hex()).as_bytes())?;
    restrict_permissions(path)
}

pub fn load_token(path: &Path) -> io::Result<Option<(String, SessionToken)>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e),
    };
    let bad = || {
        io::Error::new(
            io::ErrorKind::InvalidData,
            format!("{}: bad token cache", path.display()),
        )
    };
    let (user, token) = text.trim_end().split_once('\t').ok_or_else(bad)?;
    Ok(Some((user.to_string(), token.parse().map_err(|_| bad())?)))
}

pub fn clear_token(path: &Path) -> io::Result<()> {
    match fs::remove_file(path) {
        Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e),
        _ => Ok(()),
    }
}

#[cfg(unix)]
pub fn restrict_permissions(path: &Path) -> io::Result<()> {
    use std::os::unix::fs::PermissionsExt;
    fs::set_permissions(path, fs::Permissions::from_mode(0o600))
}

#[cfg(not(unix))]
pub fn restrict_permissions(_path: &Path) -> io::Result<()> {
    Ok(())
}
