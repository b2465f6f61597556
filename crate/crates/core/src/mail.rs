//! Delivery of one-time passwords to a user's mail address.
//!
//! Real SMTP is not wired in. [`InMemoryMailbox`] serves in-process
//! topologies; [`FileMailbox`] lets separate processes (the CLI in test mode)
//! read what the system server delivered.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MailError {
    #[error("mail delivery to {address} failed: {reason}")]
    Delivery { address: String, reason: String },
    #[error("mailbox unavailable: {0}")]
    Unavailable(String),
}

pub trait MailChannel: Send + Sync {
    fn deliver(&self, address: &str, body: &str) -> Result<(), MailError>;
}

#[derive(Default, Debug)]
pub struct InMemoryMailbox {
    boxes: Mutex<HashMap<String, Vec<String>>>,
}

impl InMemoryMailbox {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn messages(&self, address: &str) -> Vec<String> {
        self.boxes
            .lock()
            .unwrap()
            .get(address)
            .cloned()
            .unwrap_or_default()
    }

    pub fn latest(&self, address: &str) -> Option<String> {
        self.boxes
            .lock()
            .unwrap()
            .get(address)
            .and_then(|m| m.last().cloned())
    }

    pub fn count(&self, address: &str) -> usize {
        self.boxes.lock().unwrap().get(address).map_or(0, Vec::len)
    }
}

impl MailChannel for InMemoryMailbox {
    fn deliver(&self, address: &str, body: &str) -> Result<(), MailError> {
        self.boxes
            .lock()
            .unwrap()
            .entry(address.to_string())
            .or_default()
            .push(body.to_string());
        Ok(())
    }
}

/// One append-only file per address under a shared directory.
#[derive(Debug, Clone)]
pub struct FileMailbox {
    dir: PathBuf,
}

impl FileMailbox {
    pub fn new(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, address: &str) -> PathBuf {
        self.dir
            .join(format!("{}.mbox", hex::encode(address.as_bytes())))
    }

    pub fn messages(&self, address: &str) -> Result<Vec<String>, MailError> {
        match fs::read_to_string(self.path_for(address)) {
            Ok(text) => Ok(text.lines().map(str::to_owned).collect()),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(MailError::Unavailable(e.to_string())),
        }
    }

    pub fn latest(&self, address: &str) -> Result<Option<String>, MailError> {
        Ok(self.messages(address)?.pop())
    }
}

impl MailChannel for FileMailbox {
    fn deliver(&self, address: &str, body: &str) -> Result<(), MailError> {
        if body.contains('\n') {
            return Err(MailError::Delivery {
                address: address.into(),
                reason: "multi-line body".into(),
            });
        }
        let write = || -> io::Result<()> {
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(self.path_for(address))?;
            writeln!(f, "{body}")?;
            f.sync_data()
        };
        write().map_err(|e| MailError::Delivery {
            address: address.into(),
            reason: e.to_string(),
        })
    }
}
