//! Deterministic scripted workload with sentinel strings embedded in every
//! uploaded file, so later scans know exactly what must not leak.

use std::net::SocketAddr;

use rand::rngs::StdRng;
use rand::{Rng, RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{Deployment, HarnessError};
use crate::client::Client;
use crate::crypto::{rsa_generate, RsaKeyPair};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub users: usize,
    pub files_per_user: usize,
    pub min_size: usize,
    pub max_size: usize,
    pub client_rsa_bits: u64,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            users: 3,
            files_per_user: 4,
            min_size: 64,
            max_size: 6 * 1024,
            client_rsa_bits: 1024,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct UploadedFile {
    pub username: String,
    pub label: String,
    pub bytes: Vec<u8>,
    pub sentinel: String,
}

#[derive(Clone, Debug, Default)]
pub struct WorkloadOutcome {
    pub usernames: Vec<String>,
    pub mail_addresses: Vec<String>,
    pub files: Vec<UploadedFile>,
}

impl WorkloadOutcome {
    pub fn sentinels(&self) -> Vec<&str> {
        self.files.iter().map(|f| f.sentinel.as_str()).collect()
    }
}

fn hex_tag(rng: &mut StdRng) -> String {
    let mut b = [0u8; 8];
    rng.fill_bytes(&mut b);
    hex::encode(b)
}

/// Random bytes with the sentinel at the start, middle and end.
fn sentinel_file(rng: &mut StdRng, size: usize, sentinel: &str) -> Vec<u8> {
    let s = sentinel.as_bytes();
    let size = size.max(3 * s.len());
    let mut bytes = vec![0u8; size];
    rng.fill_bytes(&mut bytes);
    let mid = size / 2 - s.len() / 2;
    bytes[..s.len()].copy_from_slice(s);
    bytes[mid..mid + s.len()].copy_from_slice(s);
    bytes[size - s.len()..].copy_from_slice(s);
    bytes
}

/// Registers `spec.users` users, logs each in, uploads their files and
/// downloads every one back. Clients talk to `via` (normally a capture proxy
/// in front of the system server).
pub fn run_workload(
    dep: &dyn Deployment,
    via: SocketAddr,
    spec: &WorkloadSpec,
) -> Result<WorkloadOutcome, HarnessError> {
    let mut rng = StdRng::seed_from_u64(spec.seed);
    let plaintext = dep.mutation() == Some(crate::system::Mutation::PlaintextChannel);
    let mut out = WorkloadOutcome::default();
    for u in 0..spec.users {
        let username = format!("audit-user-{u}-{}", hex_tag(&mut rng));
        // Mail addresses are stored in the clear, so they must not spell the username.
        let mail = format!("mailbox-{}@mail.test", hex_tag(&mut rng));
        let keypair: RsaKeyPair = rsa_generate(spec.client_rsa_bits)?;
        let client =
            Client::new(via, dep.system_public_key(), keypair).with_plaintext_channel(plaintext);
        client.register(&username, &mail)?;
        let otp = dep
            .latest_mail(&mail)?
            .ok_or_else(|| HarnessError::Unexpected(format!("no OTP mailed to {mail}")))?;
        let token = client.login(&username, &otp)?;
        for f in 0..spec.files_per_user {
            let sentinel = format!("SV-SENTINEL-{}", hex_tag(&mut rng));
            let size = rng.gen_range(spec.min_size..=spec.max_size);
            let bytes = sentinel_file(&mut rng, size, &sentinel);
            let label = format!("doc-{f}.bin");
            client.upload(&token, &label, &bytes)?;
            out.files.push(UploadedFile {
                username: username.clone(),
                label,
                bytes,
                sentinel,
            });
        }
        for file in out.files.iter().filter(|f| f.username == username) {
            let back = client.download(&token, &file.label)?;
            if back != file.bytes {
                return Err(HarnessError::Unexpected(format!(
                    "{} came back altered",
                    file.label
                )));
            }
        }
        client.logout(&token)?;
        out.usernames.push(username);
        out.mail_addresses.push(mail);
    }
    Ok(out)
}
