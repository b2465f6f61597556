//! The coordinating server: accounts, one-time-password rotation, the
//! per-file key table and the global file sequence.
//!
//! Uploads write to storage first and to the key table second, so a crash
//! between the two can orphan a blob but never leaves a key without its
//! blob. The file-number counter is persisted before a number is used and
//! is therefore never reused, even across restarts.

pub mod tables;

use std::collections::{HashMap, HashSet};
use std::io;
use std::net::{IpAddr, SocketAddr, TcpListener};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{
    decrypt_file, encrypt_file, generate_otp, generate_symmetric_key, md5_digest, Ciphertext,
    CryptoError, Digest, PublicKey, RsaKeyPair, SymmetricKey, KEY_LEN,
};
use crate::mail::MailChannel;
use crate::net::{self, Handler, ServerHandle};
use crate::persist::CrashSwitch;
use crate::placement::FileNumber;
use crate::protocol::{
    recv_plain, recv_sealed, send_plain, send_sealed, DumpFile, ErrorCode, Frame, Message,
    SessionToken, SEALED_TAG,
};
pub use tables::{AccountRecord, KeyRecord};

pub const MAX_FILE_LEN: usize = 16 * 1024 * 1024;
pub const DEFAULT_SESSION_IDLE: Duration = Duration::from_secs(30 * 60);
const MAX_LABEL_LEN: usize = 255;

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("user already registered")]
    DuplicateUser,
    #[error("mail delivery failed: {0}")]
    MailDeliveryFailure(String),
    #[error("authentication failed")]
    AuthFailed,
    #[error("invalid or expired session")]
    InvalidSession,
    #[error("label already in use")]
    DuplicateLabel,
    #[error("no such label")]
    NoSuchLabel,
    #[error("file exceeds {MAX_FILE_LEN} bytes")]
    FileTooLarge,
    #[error("storage unavailable: {0}")]
    StorageUnavailable(String),
    #[error("stored blob failed integrity check")]
    IntegrityFailure,
    #[error("persistence failure: {0}")]
    PersistenceFailure(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("crypto: {0}")]
    Crypto(#[from] CryptoError),
    #[error("system server crashed (injected)")]
    Crashed,
}

impl SystemError {
    pub fn code(&self) -> ErrorCode {
        match self {
            SystemError::DuplicateUser => ErrorCode::DuplicateUser,
            SystemError::MailDeliveryFailure(_) => ErrorCode::MailDeliveryFailure,
            SystemError::AuthFailed => ErrorCode::AuthFailed,
            SystemError::InvalidSession => ErrorCode::InvalidSession,
            SystemError::DuplicateLabel => ErrorCode::DuplicateLabel,
            SystemError::NoSuchLabel => ErrorCode::NoSuchLabel,
            SystemError::FileTooLarge => ErrorCode::FileTooLarge,
            SystemError::StorageUnavailable(_) => ErrorCode::StorageUnavailable,
            SystemError::IntegrityFailure => ErrorCode::IntegrityFailure,
            SystemError::PersistenceFailure(_) => ErrorCode::PersistenceFailure,
            SystemError::BadRequest(_) => ErrorCode::BadRequest,
            SystemError::Crypto(_) | SystemError::Crashed => ErrorCode::Internal,
        }
    }
}

impl From<io::Error> for SystemError {
    fn from(e: io::Error) -> Self {
        SystemError::PersistenceFailure(e.to_string())
    }
}

/// Deliberately broken builds used to prove the leakage audit catches them.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    /// Prefix every stored blob with its own AES key.
    KeysOnStorage,
    /// Accept and answer unsealed client frames.
    PlaintextChannel,
}

/// Crash points along the upload path.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SystemFault {
    /// File number durable, nothing sent to storage.
    AfterFileNumber,
    /// Storage acknowledged, key record not written.
    AfterBlobStored,
    /// Half a key-record line written.
    TornKeyRecord,
    /// Key record durable, client never answered.
    AfterKeyRecord,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageTarget {
    pub id: String,
    pub addr: SocketAddr,
}

#[derive(Clone, Debug)]
pub struct SystemOptions {
    pub session_idle: Duration,
    pub storage_timeout: Duration,
    pub max_file_len: usize,
    pub mutation: Option<Mutation>,
}

impl Default for SystemOptions {
    fn default() -> Self {
        Self {
            session_idle: DEFAULT_SESSION_IDLE,
            storage_timeout: Duration::from_secs(30),
            max_file_len: MAX_FILE_LEN,
            mutation: None,
        }
    }
}

/// File-level configuration of the `splitvault-system` binary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemConfig {
    pub data_dir: PathBuf,
    pub listen: SocketAddr,
    pub admin: SocketAddr,
    /// Private key file; generated on first start if absent.
    pub keypair: PathBuf,
    #[serde(default = "default_rsa_bits")]
    pub rsa_bits: u64,
    pub storage: Vec<StorageTarget>,
    pub mail_dir: PathBuf,
    #[serde(default = "default_session_idle_secs")]
    pub session_idle_secs: u64,
    #[serde(default)]
    pub mutation: Option<Mutation>,
}

fn default_rsa_bits() -> u64 {
    crate::crypto::DEFAULT_RSA_BITS
}

fn default_session_idle_secs() -> u64 {
    DEFAULT_SESSION_IDLE.as_secs()
}

/// `<keypair>.pub`: where the server publishes its public key for clients.
pub fn public_key_path(keypair: &Path) -> PathBuf {
    let mut s = keypair.as_os_str().to_owned();
    s.push(".pub");
    PathBuf::from(s)
}

/// Loads the server key pair, generating and saving it on first start.
/// The public half is (re)written next to it on every call.
pub fn load_or_create_keypair(path: &Path, bits: u64) -> Result<RsaKeyPair, SystemError> {
    let keypair = match std::fs::read_to_string(path) {
        Ok(text) => RsaKeyPair::from_text(&text)?,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            let kp = crate::crypto::rsa_generate(bits)?;
            kp.self_test(4)?;
            crate::persist::atomic_write(path, kp.to_text().as_bytes())?;
            crate::client::restrict_permissions(path)?;
            kp
        }
        Err(e) => return Err(e.into()),
    };
    crate::persist::atomic_write(
        &public_key_path(path),
        keypair.public().to_text().as_bytes(),
    )?;
    Ok(keypair)
}

struct Session {
    user: Digest,
    client_key: PublicKey,
    last_seen: Instant,
}

#[derive(Default)]
struct KeyTable {
    by_label: HashMap<(Digest, String), KeyRecord>,
    used_keys: HashSet<[u8; KEY_LEN]>,
}

pub struct SystemServer {
    data_dir: PathBuf,
    keypair: RsaKeyPair,
    mail: Arc<dyn MailChannel>,
    storage: Vec<StorageTarget>,
    opts: SystemOptions,
    accounts: RwLock<HashMap<Digest, Arc<Mutex<AccountRecord>>>>,
    // Image of accounts.tsv; lock order is account record, then this.
    accounts_file: Mutex<HashMap<Digest, AccountRecord>>,
    registering: Mutex<HashSet<Digest>>,
    keys: RwLock<KeyTable>,
    pending_labels: Mutex<HashSet<(Digest, String)>>,
    counter: Mutex<u64>,
    sessions: Mutex<HashMap<SessionToken, Session>>,
    round_robin: AtomicUsize,
    faults: CrashSwitch<SystemFault>,
}

struct LabelReservation<'a> {
    set: &'a Mutex<HashSet<(Digest, String)>>,
    key: (Digest, String),
}

impl Drop for LabelReservation<'_> {
    fn drop(&mut self) {
        self.set.lock().unwrap().remove(&self.key);
    }
}

fn validate_text(what: &str, s: &str) -> Result<(), SystemError> {
    if s.is_empty() {
        return Err(SystemError::BadRequest(format!("{what} must not be empty")));
    }
    if s.chars().any(char::is_control) {
        return Err(SystemError::BadRequest(format!(
            "{what} contains control characters"
        )));
    }
    Ok(())
}

impl SystemServer {
    pub fn open(
        data_dir: impl Into<PathBuf>,
        keypair: RsaKeyPair,
        storage: Vec<StorageTarget>,
        mail: Arc<dyn MailChannel>,
        opts: SystemOptions,
    ) -> Result<Self, SystemError> {
        let data_dir = data_dir.into();
        std::fs::create_dir_all(&data_dir)?;
        if storage.is_empty() {
            return Err(SystemError::BadRequest(
                "no storage servers configured".into(),
            ));
        }
        let accounts = tables::load_accounts(&data_dir)?;
        let mut key_table = KeyTable::default();
        for rec in tables::load_keys(&data_dir)? {
            key_table.used_keys.insert(*rec.key.as_bytes());
            key_table
                .by_label
                .insert((rec.user_digest, rec.label.clone()), rec);
        }
        let counter = tables::load_counter(&data_dir)?;
        Ok(Self {
            data_dir,
            keypair,
            mail,
            storage,
            opts,
            accounts: RwLock::new(
                accounts
                    .iter()
                    .map(|a| (a.user_digest, Arc::new(Mutex::new(a.clone()))))
                    .collect(),
            ),
            accounts_file: Mutex::new(accounts.into_iter().map(|a| (a.user_digest, a)).collect()),
            registering: Mutex::new(HashSet::new()),
            keys: RwLock::new(key_table),
            pending_labels: Mutex::new(HashSet::new()),
            counter: Mutex::new(counter),
            sessions: Mutex::new(HashMap::new()),
            round_robin: AtomicUsize::new(0),
            faults: CrashSwitch::default(),
        })
    }

    pub fn public_key(&self) -> &PublicKey {
        self.keypair.public()
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    pub fn faults(&self) -> &CrashSwitch<SystemFault> {
        &self.faults
    }

    fn check_alive(&self) -> Result<(), SystemError> {
        if self.faults.is_crashed() {
            Err(SystemError::Crashed)
        } else {
            Ok(())
        }
    }

    fn persist_account(&self, record: &AccountRecord) -> Result<(), SystemError> {
        let mut image = self.accounts_file.lock().unwrap();
        let previous = image.insert(record.user_digest, record.clone());
        let mut rows: Vec<&AccountRecord> = image.values().collect();
        rows.sort_by_key(|r| r.user_digest);
        if let Err(e) = tables::write_accounts(&self.data_dir, rows.into_iter()) {
            match previous {
                Some(p) => image.insert(record.user_digest, p),
                None => image.remove(&record.user_digest),
            };
            return Err(e.into());
        }
        Ok(())
    }

    pub fn register(
        &self,
        username: &str,
        mail_address: &str,
        client_key: PublicKey,
    ) -> Result<(), SystemError> {
        self.check_alive()?;
        validate_text("username", username)?;
        validate_text("mail address", mail_address)?;
        if client_key.size_bytes() < KEY_LEN + 11 {
            return Err(SystemError::BadRequest(
                "client key too small to wrap a session key".into(),
            ));
        }
        let user = md5_digest(username.as_bytes());
        {
            let accounts = self.accounts.read().unwrap();
            let mut registering = self.registering.lock().unwrap();
            if accounts.contains_key(&user) || !registering.insert(user) {
                return Err(SystemError::DuplicateUser);
            }
        }
        let result = (|| {
            let otp = generate_otp()?;
            let record = AccountRecord {
                user_digest: user,
                otp_digest: otp.digest(),
                mail_address: mail_address.to_string(),
                client_public_key: client_key,
            };
            self.mail
                .deliver(mail_address, otp.as_str())
                .map_err(|e| SystemError::MailDeliveryFailure(e.to_string()))?;
            self.persist_account(&record)?;
            self.accounts
                .write()
                .unwrap()
                .insert(user, Arc::new(Mutex::new(record)));
            Ok(())
        })();
        self.registering.lock().unwrap().remove(&user);
        result
    }

    /// Verifies the current OTP, rotates it, mails the next one and opens a session.
    pub fn login(&self, username: &str, otp: &str) -> Result<SessionToken, SystemError> {
        self.check_alive()?;
        let user = md5_digest(username.as_bytes());
        let presented = md5_digest(otp.as_bytes());
        let account = self.accounts.read().unwrap().get(&user).cloned();
        let Some(account) = account else {
            // Same digest work as the known-user path.
            let _ = presented == md5_digest(b"");
            return Err(SystemError::AuthFailed);
        };
        let mut record = account.lock().unwrap();
        if record.otp_digest != presented {
            return Err(SystemError::AuthFailed);
        }
        let next = generate_otp()?;
        let mut updated = record.clone();
        updated.otp_digest = next.digest();
        self.mail
            .deliver(&record.mail_address, next.as_str())
            .map_err(|e| SystemError::MailDeliveryFailure(e.to_string()))?;
        self.persist_account(&updated)?;
        *record = updated;
        let token = SessionToken::random()?;
        self.sessions.lock().unwrap().insert(
            token,
            Session {
                user,
                client_key: record.client_public_key.clone(),
                last_seen: Instant::now(),
            },
        );
        Ok(token)
    }

    pub fn logout(&self, token: &SessionToken) -> Result<(), SystemError> {
        self.sessions
            .lock()
            .unwrap()
            .remove(token)
            .map(|_| ())
            .ok_or(SystemError::InvalidSession)
    }

    fn session(&self, token: &SessionToken) -> Result<(Digest, PublicKey), SystemError> {
        let mut sessions = self.sessions.lock().unwrap();
        let now = Instant::now();
        match sessions.get_mut(token) {
            Some(s) if now.duration_since(s.last_seen) <= self.opts.session_idle => {
                s.last_seen = now;
                Ok((s.user, s.client_key.clone()))
            }
            Some(_) => {
                sessions.remove(token);
                Err(SystemError::InvalidSession)
            }
            None => Err(SystemError::InvalidSession),
        }
    }

    pub fn next_file_number(&self) -> Result<FileNumber, SystemError> {
        let mut next = self.counter.lock().unwrap();
        let n = *next;
        tables::store_counter(&self.data_dir, n + 1)?;
        *next = n + 1;
        Ok(FileNumber::new(n).expect("counter starts at 1"))
    }

    fn fresh_key(&self) -> Result<SymmetricKey, SystemError> {
        loop {
            let key = generate_symmetric_key()?;
            if !self.keys.read().unwrap().used_keys.contains(key.as_bytes()) {
                return Ok(key);
            }
        }
    }

    fn storage_call(&self, target: &StorageTarget, msg: &Message) -> Result<Message, SystemError> {
        let unavailable =
            |e: String| SystemError::StorageUnavailable(format!("{}: {e}", target.id));
        let frame = send_plain(msg).map_err(|e| unavailable(e.to_string()))?;
        let reply = net::request(target.addr, &frame, self.opts.storage_timeout)
            .map_err(|e| unavailable(e.to_string()))?;
        recv_plain(&reply).map_err(|e| unavailable(e.to_string()))
    }

    pub fn upload(
        &self,
        token: &SessionToken,
        label: &str,
        file_bytes: &[u8],
    ) -> Result<(), SystemError> {
        self.check_alive()?;
        let (user, _) = self.session(token)?;
        validate_text("label", label)?;
        if label.len() > MAX_LABEL_LEN {
            return Err(SystemError::BadRequest("label too long".into()));
        }
        if file_bytes.len() > self.opts.max_file_len {
            return Err(SystemError::FileTooLarge);
        }
        let slot = (user, label.to_string());
        {
            let keys = self.keys.read().unwrap();
            let mut pending = self.pending_labels.lock().unwrap();
            if keys.by_label.contains_key(&slot) || !pending.insert(slot.clone()) {
                return Err(SystemError::DuplicateLabel);
            }
        }
        let _reservation = LabelReservation {
            set: &self.pending_labels,
            key: slot.clone(),
        };

        let file_number = self.next_file_number()?;
        if self.faults.fire(SystemFault::AfterFileNumber) {
            return Err(SystemError::Crashed);
        }
        let key = self.fresh_key()?;
        let ct = encrypt_file(file_bytes, &key)?;
        let blob = match self.opts.mutation {
            Some(Mutation::KeysOnStorage) => {
                let mut b = key.as_bytes().to_vec();
                b.extend_from_slice(&ct.to_bytes());
                Ciphertext::from_bytes(&b)?
            }
            _ => ct,
        };
        let target =
            &self.storage[self.round_robin.fetch_add(1, Ordering::SeqCst) % self.storage.len()];
        let reply = self.storage_call(
            target,
            &Message::StoreBlob {
                user_digest: user,
                file_number,
                blob: blob.clone(),
            },
        )?;
        match reply {
            Message::BlobStored { file_number: n, .. } if n == file_number => {}
            Message::ErrorFrame { code, text } => {
                return Err(SystemError::StorageUnavailable(format!(
                    "{}: {code}: {text}",
                    target.id
                )))
            }
            other => {
                return Err(SystemError::StorageUnavailable(format!(
                    "{}: unexpected {}",
                    target.id,
                    other.kind()
                )))
            }
        }
        if self.faults.fire(SystemFault::AfterBlobStored) {
            return Err(SystemError::Crashed);
        }

        let record = KeyRecord {
            user_digest: user,
            label: label.to_string(),
            file_number,
            key,
            storage_id: target.id.clone(),
            blob_digest: md5_digest(&blob.to_bytes()),
        };
        let mut keys = self.keys.write().unwrap();
        if self.faults.fire(SystemFault::TornKeyRecord) {
            tables::append_key_torn(&self.data_dir, &record)?;
            return Err(SystemError::Crashed);
        }
        tables::append_key(&self.data_dir, &record)?;
        keys.used_keys.insert(*record.key.as_bytes());
        keys.by_label.insert(slot, record);
        drop(keys);
        if self.faults.fire(SystemFault::AfterKeyRecord) {
            return Err(SystemError::Crashed);
        }
        Ok(())
    }

    pub fn download(&self, token: &SessionToken, label: &str) -> Result<Vec<u8>, SystemError> {
        self.check_alive()?;
        let (user, _) = self.session(token)?;
        let record = self
            .keys
            .read()
            .unwrap()
            .by_label
            .get(&(user, label.to_string()))
            .cloned()
            .ok_or(SystemError::NoSuchLabel)?;
        let target = self
            .storage
            .iter()
            .find(|t| t.id == record.storage_id)
            .ok_or_else(|| {
                SystemError::StorageUnavailable(format!("unknown storage id {}", record.storage_id))
            })?;
        let reply = self.storage_call(
            target,
            &Message::FetchBlob {
                user_digest: user,
                file_number: record.file_number,
            },
        )?;
        let blob = match reply {
            Message::BlobPayload { blob } => blob,
            Message::ErrorFrame {
                code: ErrorCode::NotFound,
                ..
            } => return Err(SystemError::IntegrityFailure),
            Message::ErrorFrame { code, text } => {
                return Err(SystemError::StorageUnavailable(format!(
                    "{}: {code}: {text}",
                    target.id
                )))
            }
            other => {
                return Err(SystemError::StorageUnavailable(format!(
                    "{}: unexpected {}",
                    target.id,
                    other.kind()
                )))
            }
        };
        let bytes = blob.to_bytes();
        if md5_digest(&bytes) != record.blob_digest {
            return Err(SystemError::IntegrityFailure);
        }
        let ct = match self.opts.mutation {
            Some(Mutation::KeysOnStorage) => Ciphertext::from_bytes(&bytes[KEY_LEN..])
                .map_err(|_| SystemError::IntegrityFailure)?,
            _ => blob,
        };
        decrypt_file(&ct, &record.key).map_err(|_| SystemError::IntegrityFailure)
    }

    /// Labels owned by the session's user, in upload order.
    pub fn list(&self, token: &SessionToken) -> Result<Vec<String>, SystemError> {
        self.check_alive()?;
        let (user, _) = self.session(token)?;
        let keys = self.keys.read().unwrap();
        let mut mine: Vec<&KeyRecord> = keys
            .by_label
            .values()
            .filter(|r| r.user_digest == user)
            .collect();
        mine.sort_by_key(|r| r.file_number);
        Ok(mine.into_iter().map(|r| r.label.clone()).collect())
    }

    pub fn key_records(&self) -> Vec<KeyRecord> {
        let keys = self.keys.read().unwrap();
        let mut v: Vec<KeyRecord> = keys.by_label.values().cloned().collect();
        v.sort_by_key(|r| r.file_number);
        v
    }

    pub fn account(&self, username: &str) -> Option<AccountRecord> {
        let user = md5_digest(username.as_bytes());
        let account = self.accounts.read().unwrap().get(&user).cloned()?;
        let record = account.lock().unwrap().clone();
        Some(record)
    }

    /// Byte-faithful copy of every persisted table.
    pub fn dump_tables(&self) -> Result<Vec<DumpFile>, SystemError> {
        let _accounts = self.accounts_file.lock().unwrap();
        let _keys = self.keys.read().unwrap();
        let mut files = Vec::new();
        for name in [
            tables::ACCOUNTS_FILE,
            tables::KEYS_FILE,
            tables::COUNTER_FILE,
        ] {
            let path = self.data_dir.join(name);
            if path.exists() {
                files.push(DumpFile {
                    name: name.to_string(),
                    bytes: std::fs::read(path)?,
                });
            }
        }
        Ok(files)
    }

    fn dispatch(&self, msg: Message) -> Result<(Message, PublicKey), SystemError> {
        match msg {
            Message::Register {
                username,
                mail_address,
                client_public_key,
            } => {
                self.register(&username, &mail_address, client_public_key.clone())?;
                Ok((
                    Message::Ack {
                        status: "OK".into(),
                    },
                    client_public_key,
                ))
            }
            Message::LoginRequest { username, otp } => {
                let token = self.login(&username, &otp)?;
                let (_, key) = self.session(&token)?;
                Ok((
                    Message::LoginResponse {
                        session_token: token,
                        status: "OK".into(),
                    },
                    key,
                ))
            }
            Message::UploadRequest {
                session_token,
                label,
                file_bytes,
            } => {
                self.upload(&session_token, &label, &file_bytes)?;
                let (_, key) = self.session(&session_token)?;
                Ok((
                    Message::UploadAck {
                        label,
                        status: "OK".into(),
                    },
                    key,
                ))
            }
            Message::DownloadRequest {
                session_token,
                label,
            } => {
                let file_bytes = self.download(&session_token, &label)?;
                let (_, key) = self.session(&session_token)?;
                Ok((Message::FilePayload { label, file_bytes }, key))
            }
            Message::ListRequest { session_token } => {
                let labels = self.list(&session_token)?;
                let (_, key) = self.session(&session_token)?;
                Ok((Message::ListResponse { labels }, key))
            }
            Message::Logout { session_token } => {
                let (_, key) = self.session(&session_token)?;
                self.logout(&session_token)?;
                Ok((
                    Message::Ack {
                        status: "OK".into(),
                    },
                    key,
                ))
            }
            other => Err(SystemError::BadRequest(format!(
                "{} is not a client request",
                other.kind()
            ))),
        }
    }

    /// Client-port dispatch. Successful replies are sealed to the client's
    /// registered key; error replies travel as plain [`Message::ErrorFrame`]s
    /// since the caller may not be identifiable.
    pub fn handle_frame(&self, frame: &Frame) -> Option<Frame> {
        if self.faults.is_crashed() {
            return None;
        }
        let plaintext_ok = self.opts.mutation == Some(Mutation::PlaintextChannel);
        let (msg, sealed) = if frame.tag == SEALED_TAG {
            match recv_sealed(frame, self.keypair.private()) {
                Ok(m) => (m, true),
                Err(e) => {
                    return plain_reply(&Message::error(ErrorCode::BadRequest, e.to_string()))
                }
            }
        } else {
            match recv_plain(frame) {
                Ok(Message::Ping) => return plain_reply(&Message::Pong),
                Ok(m) if plaintext_ok => (m, false),
                Ok(_) => {
                    return plain_reply(&Message::error(
                        ErrorCode::BadRequest,
                        "client requests must be sealed",
                    ))
                }
                Err(e) => {
                    return plain_reply(&Message::error(ErrorCode::BadRequest, e.to_string()))
                }
            }
        };
        let kind = msg.kind();
        match self.dispatch(msg) {
            Ok((reply, key)) if sealed => match send_sealed(&reply, &key) {
                Ok(f) => Some(f),
                Err(e) => plain_reply(&Message::error(ErrorCode::Internal, e.to_string())),
            },
            Ok((reply, _)) => plain_reply(&reply),
            Err(SystemError::Crashed) => None,
            Err(e) => {
                log::debug!("{kind} failed: {e}");
                plain_reply(&Message::error(e.code(), e.to_string()))
            }
        }
    }

    pub fn handle_admin(&self, frame: &Frame) -> Option<Frame> {
        let reply = match recv_plain(frame) {
            Ok(Message::Ping) => Message::Pong,
            Ok(Message::DumpRequest) => match self.dump_tables() {
                Ok(files) => Message::DumpResponse { files },
                Err(e) => Message::error(e.code(), e.to_string()),
            },
            Ok(other) => Message::error(
                ErrorCode::BadRequest,
                format!("{} not an admin request", other.kind()),
            ),
            Err(e) => Message::error(ErrorCode::BadRequest, e.to_string()),
        };
        plain_reply(&reply)
    }
}

fn plain_reply(msg: &Message) -> Option<Frame> {
    send_plain(msg)
        .or_else(|e| send_plain(&Message::error(ErrorCode::Internal, e.to_string())))
        .ok()
}

/// Running system server: client port and local-only admin port.
pub struct SystemNode {
    pub server: Arc<SystemServer>,
    pub client: ServerHandle,
    pub admin: ServerHandle,
}

impl SystemNode {
    pub fn start(
        server: Arc<SystemServer>,
        client: TcpListener,
        admin: TcpListener,
    ) -> io::Result<Self> {
        let s = server.clone();
        let client_handler: Handler = Arc::new(move |f, _| s.handle_frame(&f));
        let s = server.clone();
        let admin_handler: Handler = Arc::new(move |f, _| s.handle_admin(&f));
        let loopback = vec![
            IpAddr::from([127, 0, 0, 1]),
            IpAddr::from([0u16, 0, 0, 0, 0, 0, 0, 1]),
        ];
        Ok(Self {
            client: net::serve(client, client_handler, Vec::new())?,
            admin: net::serve(admin, admin_handler, loopback)?,
            server,
        })
    }

    pub fn stop(&mut self) {
        self.client.stop();
        self.admin.stop();
    }
}
