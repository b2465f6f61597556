//! Storage node: ciphertext blobs placed by the quadratic-start probing
//! table, indexed by `(user digest, file number)`. It never sees a key.
//!
//! On disk, under the data directory:
//!
//! - `placement.txt`: the placement table in its text form
//! - `records.tsv`: `user_digest<TAB>file_number<TAB>position<TAB>offset<TAB>path`
//! - `blobs/<position>.bin`: IV followed by the CBC body
//!
//! `records.tsv` is the durable authority. A blob is written first, its
//! record appended second, the placement file rewritten third and only then
//! is the store acknowledged. On open, the placement table is rebuilt from
//! the records, so a crash anywhere in that sequence leaves at worst an
//! unreferenced blob file.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::net::{IpAddr, SocketAddr, TcpListener};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use thiserror::Error;

use crate::crypto::{Ciphertext, Digest};
use crate::net::{self, Handler, ServerHandle};
use crate::persist::{self, CrashSwitch};
use crate::placement::{FileNumber, PlacementEntry, PlacementError, PlacementTable};
use crate::protocol::{recv_plain, send_plain, DumpFile, ErrorCode, Frame, Message};

pub const PLACEMENT_FILE: &str = "placement.txt";
pub const RECORDS_FILE: &str = "records.tsv";
pub const BLOB_DIR: &str = "blobs";

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("placement table is full")]
    TableFull,
    #[error("file number {0} already stored")]
    DuplicateFileNumber(FileNumber),
    #[error("not found")]
    NotFound,
    #[error("disk failure: {0}")]
    DiskFailure(String),
    #[error("corrupt storage state: {0}")]
    Corrupt(String),
    #[error("storage server crashed (injected)")]
    Crashed,
}

impl StorageError {
    pub fn code(&self) -> ErrorCode {
        match self {
            StorageError::TableFull => ErrorCode::TableFull,
            StorageError::DuplicateFileNumber(_) => ErrorCode::DuplicateFileNumber,
            StorageError::NotFound => ErrorCode::NotFound,
            StorageError::DiskFailure(_) => ErrorCode::DiskFailure,
            StorageError::Corrupt(_) | StorageError::Crashed => ErrorCode::Internal,
        }
    }
}

impl From<io::Error> for StorageError {
    fn from(e: io::Error) -> Self {
        StorageError::DiskFailure(e.to_string())
    }
}

/// Points in [`StorageServer::store_blob`] where a test can kill the server.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum StorageFault {
    /// Blob file durable, no record yet.
    AfterBlobWrite,
    /// Half a record line written.
    TornRecord,
    /// Record and placement durable, acknowledgment never sent.
    BeforeAck,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BlobRecord {
    pub user_digest: Digest,
    pub file_number: FileNumber,
    pub entry: PlacementEntry,
    pub path: String,
}

impl BlobRecord {
    fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.user_digest, self.file_number, self.entry.position, self.entry.offset, self.path
        )
    }

    fn from_line(line: &str) -> Result<Self, StorageError> {
        let bad = || StorageError::Corrupt(format!("bad record line {line:?}"));
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(bad());
        }
        Ok(Self {
            user_digest: cols[0].parse().map_err(|_| bad())?,
            file_number: cols[1].parse().map_err(|_| bad())?,
            entry: PlacementEntry {
                position: cols[2].parse().map_err(|_| bad())?,
                offset: cols[3].parse().map_err(|_| bad())?,
            },
            path: cols[4].to_string(),
        })
    }
}

pub fn blob_path(position: u64) -> String {
    format!("{BLOB_DIR}/{position}.bin")
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct StorageConfig {
    pub id: String,
    pub data_dir: PathBuf,
    pub seed: u64,
    pub listen: SocketAddr,
    pub admin: SocketAddr,
    /// Peers allowed on the data port; empty admits anyone.
    #[serde(default)]
    pub allowed_peers: Vec<IpAddr>,
}

struct State {
    table: PlacementTable,
    records: HashMap<FileNumber, BlobRecord>,
}

pub struct StorageServer {
    data_dir: PathBuf,
    state: RwLock<State>,
    faults: CrashSwitch<StorageFault>,
}

impl StorageServer {
    pub fn open(data_dir: impl Into<PathBuf>, seed: u64) -> Result<Self, StorageError> {
        let data_dir = data_dir.into();
        fs::create_dir_all(data_dir.join(BLOB_DIR))?;
        let placement_path = data_dir.join(PLACEMENT_FILE);
        if let Ok(text) = fs::read_to_string(&placement_path) {
            let on_disk = PlacementTable::from_text(&text)
                .map_err(|e| StorageError::Corrupt(format!("{PLACEMENT_FILE}: {e}")))?;
            if on_disk.seed() != seed {
                return Err(StorageError::Corrupt(format!(
                    "data directory uses S={}, configured S={seed}",
                    on_disk.seed()
                )));
            }
        }
        let mut records = HashMap::new();
        for line in persist::read_lines_recovering(&data_dir.join(RECORDS_FILE))? {
            let rec = BlobRecord::from_line(&line)?;
            if !data_dir.join(&rec.path).is_file() {
                return Err(StorageError::Corrupt(format!("missing blob {}", rec.path)));
            }
            if records.insert(rec.file_number, rec).is_some() {
                return Err(StorageError::Corrupt("file number recorded twice".into()));
            }
        }
        let table =
            PlacementTable::from_entries(seed, records.values().map(|r| (r.file_number, r.entry)))
                .map_err(|e| match e {
                    PlacementError::InvalidSeed => {
                        StorageError::Corrupt("seed must be at least 1".into())
                    }
                    e => StorageError::Corrupt(format!("{RECORDS_FILE}: {e}")),
                })?;
        persist::atomic_write(&placement_path, table.to_text().as_bytes())?;
        Ok(Self {
            data_dir,
            state: RwLock::new(State { table, records }),
            faults: CrashSwitch::default(),
        })
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    pub fn faults(&self) -> &CrashSwitch<StorageFault> {
        &self.faults
    }

    fn check_alive(&self) -> Result<(), StorageError> {
        if self.faults.is_crashed() {
            Err(StorageError::Crashed)
        } else {
            Ok(())
        }
    }

    pub fn store_blob(
        &self,
        user_digest: Digest,
        file_number: FileNumber,
        blob: &Ciphertext,
    ) -> Result<PlacementEntry, StorageError> {
        self.check_alive()?;
        let mut state = self.state.write().unwrap();
        if state.records.contains_key(&file_number) {
            return Err(StorageError::DuplicateFileNumber(file_number));
        }
        let mut table = state.table.clone();
        let entry = table.insert(file_number).map_err(|e| match e {
            PlacementError::TableFull => StorageError::TableFull,
            PlacementError::DuplicateFileNumber(n) => StorageError::DuplicateFileNumber(n),
            e => StorageError::Corrupt(e.to_string()),
        })?;
        let record = BlobRecord {
            user_digest,
            file_number,
            entry,
            path: blob_path(entry.position),
        };

        persist::atomic_write(&self.data_dir.join(&record.path), &blob.to_bytes())?;
        if self.faults.fire(StorageFault::AfterBlobWrite) {
            return Err(StorageError::Crashed);
        }
        let records_path = self.data_dir.join(RECORDS_FILE);
        if self.faults.fire(StorageFault::TornRecord) {
            persist::append_torn(&records_path, &record.to_line())?;
            return Err(StorageError::Crashed);
        }
        persist::append_line(&records_path, &record.to_line())?;
        persist::atomic_write(
            &self.data_dir.join(PLACEMENT_FILE),
            table.to_text().as_bytes(),
        )?;
        state.table = table;
        state.records.insert(file_number, record);
        if self.faults.fire(StorageFault::BeforeAck) {
            return Err(StorageError::Crashed);
        }
        Ok(entry)
    }

    /// Returns the blob only when both the file number and the owner digest match.
    pub fn fetch_blob(
        &self,
        user_digest: Digest,
        file_number: FileNumber,
    ) -> Result<Ciphertext, StorageError> {
        self.check_alive()?;
        let path = {
            let state = self.state.read().unwrap();
            match state.records.get(&file_number) {
                Some(r) if r.user_digest == user_digest => self.data_dir.join(&r.path),
                _ => return Err(StorageError::NotFound),
            }
        };
        let bytes = fs::read(&path)?;
        Ciphertext::from_bytes(&bytes).map_err(|e| StorageError::Corrupt(e.to_string()))
    }

    pub fn locate(&self, file_number: FileNumber) -> Result<PlacementEntry, StorageError> {
        self.state
            .read()
            .unwrap()
            .table
            .locate(file_number)
            .map_err(|_| StorageError::NotFound)
    }

    pub fn records(&self) -> Vec<BlobRecord> {
        let mut v: Vec<_> = self
            .state
            .read()
            .unwrap()
            .records
            .values()
            .cloned()
            .collect();
        v.sort_by_key(|r| r.file_number);
        v
    }

    pub fn placement_text(&self) -> String {
        self.state.read().unwrap().table.to_text()
    }

    /// Byte-faithful copy of every persisted file.
    pub fn dump_tables(&self) -> Result<Vec<DumpFile>, StorageError> {
        let _guard = self.state.read().unwrap();
        let mut files = Vec::new();
        for name in [PLACEMENT_FILE, RECORDS_FILE] {
            let path = self.data_dir.join(name);
            if path.exists() {
                files.push(DumpFile {
                    name: name.to_string(),
                    bytes: fs::read(path)?,
                });
            }
        }
        let mut blobs: Vec<_> = fs::read_dir(self.data_dir.join(BLOB_DIR))?
            .filter_map(Result::ok)
            .filter(|e| e.path().extension().is_some_and(|x| x == "bin"))
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        blobs.sort();
        for name in blobs {
            files.push(DumpFile {
                bytes: fs::read(self.data_dir.join(BLOB_DIR).join(&name))?,
                name: format!("{BLOB_DIR}/{name}"),
            });
        }
        Ok(files)
    }

    /// Data-port dispatch: StoreBlob, FetchBlob, Ping.
    pub fn handle_frame(&self, frame: &Frame) -> Option<Frame> {
        let reply = match recv_plain(frame) {
            Ok(Message::StoreBlob {
                user_digest,
                file_number,
                blob,
            }) => match self.store_blob(user_digest, file_number, &blob) {
                Ok(entry) => Message::BlobStored { file_number, entry },
                Err(StorageError::Crashed) => return None,
                Err(e) => Message::error(e.code(), e.to_string()),
            },
            Ok(Message::FetchBlob {
                user_digest,
                file_number,
            }) => match self.fetch_blob(user_digest, file_number) {
                Ok(blob) => Message::BlobPayload { blob },
                Err(StorageError::Crashed) => return None,
                Err(e) => Message::error(e.code(), e.to_string()),
            },
            Ok(Message::Ping) if !self.faults.is_crashed() => Message::Pong,
            Ok(Message::Ping) => return None,
            Ok(other) => Message::error(
                ErrorCode::BadRequest,
                format!("{} not accepted by storage", other.kind()),
            ),
            Err(e) => Message::error(ErrorCode::BadRequest, e.to_string()),
        };
        encode_reply(&reply)
    }

    /// Admin-port dispatch: Ping, DumpRequest.
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
        encode_reply(&reply)
    }
}

fn encode_reply(reply: &Message) -> Option<Frame> {
    match send_plain(reply) {
        Ok(f) => Some(f),
        Err(e) => send_plain(&Message::error(ErrorCode::Internal, e.to_string())).ok(),
    }
}

/// Running storage node: data port and local-only admin port.
pub struct StorageNode {
    pub server: Arc<StorageServer>,
    pub data: ServerHandle,
    pub admin: ServerHandle,
}

impl StorageNode {
    pub fn start(
        server: Arc<StorageServer>,
        data: TcpListener,
        admin: TcpListener,
        allowed_peers: Vec<IpAddr>,
    ) -> io::Result<Self> {
        let s = server.clone();
        let data_handler: Handler = Arc::new(move |f, _| s.handle_frame(&f));
        let s = server.clone();
        let admin_handler: Handler = Arc::new(move |f, _| s.handle_admin(&f));
        let loopback = vec![
            IpAddr::from([127, 0, 0, 1]),
            IpAddr::from([0u16, 0, 0, 0, 0, 0, 0, 1]),
        ];
        Ok(Self {
            data: net::serve(data, data_handler, allowed_peers)?,
            admin: net::serve(admin, admin_handler, loopback)?,
            server,
        })
    }

    pub fn stop(&mut self) {
        self.data.stop();
        self.admin.stop();
    }
}
