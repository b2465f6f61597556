//! Topology runner, leakage auditor and latency benchmark.

pub mod audit;
pub mod bench;
pub mod proxy;
pub mod topology;
pub mod workload;

use std::io;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

pub use audit::{leakage_audit, AuditReport, CheckResult, Evidence};
pub use bench::{timing_benchmark, BenchTable, DEFAULT_SIZES};
pub use proxy::CaptureProxy;
pub use topology::{
    fetch_dump, ping, Binaries, Deployment, LocalCluster, ProcessCluster, RunMode, TopologyConfig,
};
pub use workload::{run_workload, WorkloadOutcome, WorkloadSpec};

use crate::client::ClientError;
use crate::config::ConfigError;
use crate::crypto::CryptoError;
use crate::mail::MailError;
use crate::protocol::ProtocolError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("startup failure in {component}: {reason}")]
    StartupFailure { component: String, reason: String },
    #[error("client: {0}")]
    Client(#[from] ClientError),
    #[error("protocol: {0}")]
    Protocol(#[from] ProtocolError),
    #[error("crypto: {0}")]
    Crypto(#[from] CryptoError),
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("mail: {0}")]
    Mail(#[from] MailError),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Unexpected(String),
}

/// Machine-readable record of one harness invocation.
#[derive(Debug, Default, Serialize)]
pub struct Summary {
    pub command: String,
    pub health: Vec<(String, bool)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bench: Option<BenchTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upload_inversions: Option<usize>,
    pub passed: bool,
}

impl Summary {
    pub fn write_json(&self, path: &Path) -> io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        crate::persist::atomic_write(path, text.as_bytes())
    }
}
