//! Leakage audit: scans of server dumps and captured client traffic for
//! secrets each party is supposed never to hold.
//!
//! The adversary is passive and strong: full read access to one party's
//! persisted state, or to every byte on the client channel.

use std::collections::HashSet;

use serde::Serialize;

use super::proxy::CaptureProxy;
use super::topology::fetch_dump;
use super::workload::WorkloadOutcome;
use super::{Deployment, HarnessError};
use crate::crypto::{decrypt_file, Ciphertext, InitVector, SymmetricKey, BLOCK_LEN, KEY_LEN};
use crate::protocol::DumpFile;
use crate::storage::BLOB_DIR;
use crate::system::tables::{KeyRecord, KEYS_FILE};

const MAX_EVIDENCE: usize = 16;

/// Where an offending value was found: `source[start..end]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Evidence {
    pub source: String,
    pub start: usize,
    pub end: usize,
    pub found: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub id: char,
    pub claim: &'static str,
    pub passed: bool,
    /// Total offending hits; `evidence` holds at most the first few.
    pub hits: usize,
    pub evidence: Vec<Evidence>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditReport {
    pub checks: Vec<CheckResult>,
}

impl AuditReport {
    pub fn pass_vector(&self) -> Vec<bool> {
        self.checks.iter().map(|c| c.passed).collect()
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, id: char) -> &CheckResult {
        self.checks
            .iter()
            .find(|c| c.id == id)
            .expect("known check id")
    }

    pub fn render_text(&self) -> String {
        let mut out = String::from("check  result  hits  claim\n");
        for c in &self.checks {
            out.push_str(&format!(
                "({})    {:<6}  {:>4}  {}\n",
                c.id,
                if c.passed { "PASS" } else { "FAIL" },
                c.hits,
                c.claim
            ));
            for e in &c.evidence {
                out.push_str(&format!(
                    "         {}[{}..{}] {}\n",
                    e.source, e.start, e.end, e.found
                ));
            }
        }
        out
    }
}

struct Needle {
    bytes: Vec<u8>,
    name: String,
}

fn find_all(hay: &[u8], needle: &[u8]) -> Vec<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return Vec::new();
    }
    let first = needle[0];
    (0..=hay.len() - needle.len())
        .filter(|&i| hay[i] == first && &hay[i..i + needle.len()] == needle)
        .collect()
}

#[derive(Default)]
struct Findings {
    hits: usize,
    evidence: Vec<Evidence>,
}

impl Findings {
    fn push(&mut self, e: Evidence) {
        self.hits += 1;
        if self.evidence.len() < MAX_EVIDENCE {
            self.evidence.push(e);
        }
    }

    fn scan(&mut self, sources: &[(String, Vec<u8>)], needles: &[Needle]) {
        for (source, hay) in sources {
            for n in needles {
                for start in find_all(hay, &n.bytes) {
                    self.push(Evidence {
                        source: source.clone(),
                        start,
                        end: start + n.bytes.len(),
                        found: n.name.clone(),
                    });
                }
            }
        }
    }

    fn finish(self, id: char, claim: &'static str) -> CheckResult {
        CheckResult {
            id,
            claim,
            passed: self.hits == 0,
            hits: self.hits,
            evidence: self.evidence,
        }
    }
}

/// Raw and lowercase-hex forms; the wire encodes binary fields as hex.
fn sentinel_needles(outcome: &WorkloadOutcome, with_hex: bool) -> Vec<Needle> {
    let mut v = Vec::new();
    for s in outcome.sentinels() {
        v.push(Needle {
            bytes: s.as_bytes().to_vec(),
            name: format!("sentinel {s}"),
        });
        if with_hex {
            v.push(Needle {
                bytes: hex::encode(s).into_bytes(),
                name: format!("hex(sentinel {s})"),
            });
        }
    }
    v
}

fn prefixed(owner: &str, files: &[DumpFile]) -> Vec<(String, Vec<u8>)> {
    files
        .iter()
        .map(|f| (format!("{owner}:{}", f.name), f.bytes.clone()))
        .collect()
}

fn key_table(system: &[DumpFile]) -> Result<Vec<KeyRecord>, HarnessError> {
    let Some(file) = system.iter().find(|f| f.name == KEYS_FILE) else {
        return Ok(Vec::new());
    };
    let text = String::from_utf8_lossy(&file.bytes);
    text.lines()
        .skip(1)
        .map(|l| KeyRecord::from_line(l).map_err(HarnessError::from))
        .collect()
}

/// True when `key` turns `blob` into bytes containing a known sentinel.
fn recovers_plaintext(blob: &[u8], key: &SymmetricKey, sentinels: &[&[u8]]) -> bool {
    if blob.len() < 2 * BLOCK_LEN || !blob.len().is_multiple_of(BLOCK_LEN) {
        return false;
    }
    // Cheap filter: only the final block decides whether padding is valid.
    let tail = blob.len() - 2 * BLOCK_LEN;
    let iv = InitVector::from_bytes(blob[tail..tail + BLOCK_LEN].try_into().unwrap());
    let Ok(last) = Ciphertext::new(iv, blob[tail + BLOCK_LEN..].to_vec()) else {
        return false;
    };
    if decrypt_file(&last, key).is_err() {
        return false;
    }
    let Ok(ct) = Ciphertext::from_bytes(blob) else {
        return false;
    };
    match decrypt_file(&ct, key) {
        Ok(pt) => sentinels.iter().any(|s| !find_all(&pt, s).is_empty()),
        Err(_) => false,
    }
}

/// Check (e) for one storage server's dump: every 16-byte window of the dump
/// is tried as the AES key of every blob in it.
fn brute_force_storage(
    owner: &str,
    files: &[DumpFile],
    sentinels: &[&[u8]],
    findings: &mut Findings,
) {
    let blobs: Vec<&DumpFile> = files
        .iter()
        .filter(|f| f.name.starts_with(&format!("{BLOB_DIR}/")))
        .collect();
    let mut tried = HashSet::new();
    for f in files {
        if f.bytes.len() < KEY_LEN {
            continue;
        }
        for start in 0..=f.bytes.len() - KEY_LEN {
            let window: [u8; KEY_LEN] = f.bytes[start..start + KEY_LEN].try_into().unwrap();
            if !tried.insert(window) {
                continue;
            }
            let key = SymmetricKey::from_bytes(window);
            for blob in &blobs {
                if recovers_plaintext(&blob.bytes, &key, sentinels) {
                    findings.push(Evidence {
                        source: format!("{owner}:{}", f.name),
                        start,
                        end: start + KEY_LEN,
                        found: format!("key that decrypts {owner}:{}", blob.name),
                    });
                }
            }
        }
    }
}

/// Runs all five checks. Call only after the workload has quiesced.
pub fn leakage_audit(
    dep: &dyn Deployment,
    capture: &CaptureProxy,
    outcome: &WorkloadOutcome,
) -> Result<AuditReport, HarnessError> {
    let system_dump = fetch_dump(dep.system_admin())?;
    let mut storage_dumps = Vec::new();
    for (id, admin) in dep.storage_admins() {
        storage_dumps.push((id.clone(), fetch_dump(admin)?));
    }
    let keys = key_table(&system_dump)?;
    let system_sources = prefixed("system", &system_dump);
    let storage_sources: Vec<(String, Vec<u8>)> = storage_dumps
        .iter()
        .flat_map(|(id, files)| prefixed(id, files))
        .collect();

    // (a) storage holds neither keys nor plaintext.
    let mut a = Findings::default();
    let mut key_needles: Vec<Needle> = keys
        .iter()
        .map(|k| Needle {
            bytes: k.key.as_bytes().to_vec(),
            name: format!("AES key of file {}", k.file_number),
        })
        .collect();
    key_needles.extend(sentinel_needles(outcome, false));
    a.scan(&storage_sources, &key_needles);

    // (b) the system server holds no file bytes: no sentinel, no whole file.
    let mut b = Findings::default();
    let mut file_needles = sentinel_needles(outcome, false);
    file_needles.extend(outcome.files.iter().map(|f| Needle {
        bytes: f.bytes.clone(),
        name: format!("contents of {}", f.label),
    }));
    b.scan(&system_sources, &file_needles);

    // (c) no plaintext username anywhere at rest.
    let mut c = Findings::default();
    let user_needles: Vec<Needle> = outcome
        .usernames
        .iter()
        .map(|u| Needle {
            bytes: u.as_bytes().to_vec(),
            name: format!("username {u}"),
        })
        .collect();
    c.scan(&system_sources, &user_needles);
    c.scan(&storage_sources, &user_needles);

    // (d) the client channel carries no plaintext.
    let mut d = Findings::default();
    d.scan(&capture.streams(), &sentinel_needles(outcome, true));

    // (e) one storage server's state alone decrypts nothing.
    let mut e = Findings::default();
    let sentinels: Vec<&[u8]> = outcome.sentinels().into_iter().map(str::as_bytes).collect();
    for (id, files) in &storage_dumps {
        brute_force_storage(id, files, &sentinels, &mut e);
    }

    Ok(AuditReport {
        checks: vec![
            a.finish(
                'a',
                "storage dumps contain no key bytes and no plaintext sentinels",
            ),
            b.finish('b', "system dump contains no file bytes"),
            c.finish('c', "no dump contains a plaintext username"),
            d.finish('d', "captured client-system traffic contains no sentinels"),
            e.finish(
                'e',
                "no 16-byte string in a storage dump decrypts any of its blobs",
            ),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{encrypt_file, generate_symmetric_key};

    #[test]
    fn find_all_reports_every_offset() {
        assert_eq!(find_all(b"abcabcab", b"ab"), vec![0, 3, 6]);
        assert!(find_all(b"ab", b"abc").is_empty());
        assert!(find_all(b"ab", b"").is_empty());
    }

    #[test]
    fn brute_force_finds_a_key_hidden_in_the_dump() {
        let key = generate_symmetric_key().unwrap();
        let ct = encrypt_file(b"xx SV-SENTINEL-00 yy", &key)
            .unwrap()
            .to_bytes();
        let sentinels: Vec<&[u8]> = vec![b"SV-SENTINEL-00"];
        let honest = vec![DumpFile {
            name: "blobs/1.bin".into(),
            bytes: ct.clone(),
        }];
        let mut f = Findings::default();
        brute_force_storage("s1", &honest, &sentinels, &mut f);
        assert_eq!(f.hits, 0);

        let mut leaky = honest.clone();
        let mut table = b"pos\t".to_vec();
        table.extend_from_slice(key.as_bytes());
        leaky.push(DumpFile {
            name: "placement.txt".into(),
            bytes: table,
        });
        let mut f = Findings::default();
        brute_force_storage("s1", &leaky, &sentinels, &mut f);
        assert_eq!(f.hits, 1);
        assert_eq!((f.evidence[0].start, f.evidence[0].end), (4, 20));
    }
}
