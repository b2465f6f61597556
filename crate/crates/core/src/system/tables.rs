//! On-disk tables of the system server.
//!
//! Each table is a header line `table=<name>` followed by TAB-separated rows.
//! `accounts.tsv` is rewritten atomically on every change so a rotated OTP
//! digest leaves no trace of its predecessor. `keys.tsv` is append-only.
//! `file_number` holds the next sequence number to hand out.

use std::fs;
use std::io;
use std::path::Path;

use num_bigint::BigUint;

use crate::crypto::{Digest, PublicKey, SymmetricKey};
use crate::persist;
use crate::placement::FileNumber;

pub const ACCOUNTS_FILE: &str = "accounts.tsv";
pub const KEYS_FILE: &str = "keys.tsv";
pub const COUNTER_FILE: &str = "file_number";

const ACCOUNTS_HEADER: &str = "table=accounts";
const KEYS_HEADER: &str = "table=keys";

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AccountRecord {
    pub user_digest: Digest,
    pub otp_digest: Digest,
    pub mail_address: String,
    pub client_public_key: PublicKey,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct KeyRecord {
    pub user_digest: Digest,
    pub label: String,
    pub file_number: FileNumber,
    pub key: SymmetricKey,
    pub storage_id: String,
    /// MD5 of the stored ciphertext bytes, checked on every fetch.
    pub blob_digest: Digest,
}

fn invalid(msg: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg)
}

impl AccountRecord {
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.user_digest,
            self.otp_digest,
            self.mail_address,
            self.client_public_key.n.to_str_radix(16),
            self.client_public_key.e.to_str_radix(16)
        )
    }

    pub fn from_line(line: &str) -> io::Result<Self> {
        let bad = || invalid(format!("bad account row {line:?}"));
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(bad());
        }
        let big = |s: &str| BigUint::parse_bytes(s.as_bytes(), 16).ok_or_else(bad);
        Ok(Self {
            user_digest: cols[0].parse().map_err(|_| bad())?,
            otp_digest: cols[1].parse().map_err(|_| bad())?,
            mail_address: cols[2].to_string(),
            client_public_key: PublicKey::new(big(cols[3])?, big(cols[4])?),
        })
    }
}

impl KeyRecord {
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.user_digest,
            self.label,
            self.file_number,
            self.key.to_hex(),
            self.storage_id,
            self.blob_digest
        )
    }

    pub fn from_line(line: &str) -> io::Result<Self> {
        let bad = || invalid(format!("bad key row for {:?}", line.split('\t').nth(1)));
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 6 {
            return Err(bad());
        }
        Ok(Self {
            user_digest: cols[0].parse().map_err(|_| bad())?,
            label: cols[1].to_string(),
            file_number: cols[2].parse().map_err(|_| bad())?,
            key: SymmetricKey::from_hex(cols[3]).map_err(|_| bad())?,
            storage_id: cols[4].to_string(),
            blob_digest: cols[5].parse().map_err(|_| bad())?,
        })
    }
}

fn strip_header(lines: Vec<String>, header: &str, file: &str) -> io::Result<Vec<String>> {
    let mut it = lines.into_iter();
    match it.next() {
        None => Ok(Vec::new()),
        Some(h) if h == header => Ok(it.collect()),
        Some(h) => Err(invalid(format!("{file}: unexpected header {h:?}"))),
    }
}

pub fn load_accounts(dir: &Path) -> io::Result<Vec<AccountRecord>> {
    let lines = persist::read_lines_recovering(&dir.join(ACCOUNTS_FILE))?;
    strip_header(lines, ACCOUNTS_HEADER, ACCOUNTS_FILE)?
        .iter()
        .map(|l| AccountRecord::from_line(l))
        .collect()
}

pub fn write_accounts<'a>(
    dir: &Path,
    rows: impl Iterator<Item = &'a AccountRecord>,
) -> io::Result<()> {
    let mut text = format!("{ACCOUNTS_HEADER}\n");
    for r in rows {
        text.push_str(&r.to_line());
        text.push('\n');
    }
    persist::atomic_write(&dir.join(ACCOUNTS_FILE), text.as_bytes())
}

pub fn load_keys(dir: &Path) -> io::Result<Vec<KeyRecord>> {
    let path = dir.join(KEYS_FILE);
    let lines = persist::read_lines_recovering(&path)?;
    if lines.is_empty() {
        persist::atomic_write(&path, format!("{KEYS_HEADER}\n").as_bytes())?;
        return Ok(Vec::new());
    }
    strip_header(lines, KEYS_HEADER, KEYS_FILE)?
        .iter()
        .map(|l| KeyRecord::from_line(l))
        .collect()
}

pub fn append_key(dir: &Path, record: &KeyRecord) -> io::Result<()> {
    persist::append_line(&dir.join(KEYS_FILE), &record.to_line())
}

pub fn append_key_torn(dir: &Path, record: &KeyRecord) -> io::Result<()> {
    persist::append_torn(&dir.join(KEYS_FILE), &record.to_line())
}

/// Next file number to hand out; 1 on a fresh directory.
pub fn load_counter(dir: &Path) -> io::Result<u64> {
    match fs::read_to_string(dir.join(COUNTER_FILE)) {
        Ok(s) => s
            .trim()
            .parse::<u64>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| invalid(format!("bad counter {s:?}"))),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(1),
        Err(e) => Err(e),
    }
}

pub fn store_counter(dir: &Path, next: u64) -> io::Result<()> {
    persist::atomic_write(&dir.join(COUNTER_FILE), format!("{next}\n").as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{generate_symmetric_key, md5_digest};

    #[test]
    fn rows_round_trip() {
        let acct = AccountRecord {
            user_digest: md5_digest(b"alice"),
            otp_digest: md5_digest(b"otp"),
            mail_address: "box-1@mail.test".into(),
            client_public_key: PublicKey::new(BigUint::from(3233u32), BigUint::from(17u32)),
        };
        assert_eq!(AccountRecord::from_line(&acct.to_line()).unwrap(), acct);
        let key = KeyRecord {
            user_digest: md5_digest(b"alice"),
            label: "report.pdf".into(),
            file_number: FileNumber::new(9).unwrap(),
            key: generate_symmetric_key().unwrap(),
            storage_id: "s1".into(),
            blob_digest: md5_digest(b"blob"),
        };
        assert_eq!(KeyRecord::from_line(&key.to_line()).unwrap(), key);
    }

    #[test]
    fn torn_key_row_is_dropped_on_load() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_keys(dir.path()).unwrap().is_empty());
        let key = KeyRecord {
            user_digest: md5_digest(b"a"),
            label: "l".into(),
            file_number: FileNumber::new(1).unwrap(),
            key: generate_symmetric_key().unwrap(),
            storage_id: "s1".into(),
            blob_digest: md5_digest(b"b"),
        };
        append_key(dir.path(), &key).unwrap();
        append_key_torn(dir.path(), &key).unwrap();
        assert_eq!(load_keys(dir.path()).unwrap(), vec![key]);
    }

    #[test]
    fn counter_defaults_to_one() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(load_counter(dir.path()).unwrap(), 1);
        store_counter(dir.path(), 4).unwrap();
        assert_eq!(load_counter(dir.path()).unwrap(), 4);
    }
}
