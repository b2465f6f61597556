//! Bringing up one system server and k storage servers on loopback, either
//! as threads of this process or as separate child processes.

use std::collections::HashMap;
use std::fs;
use std::net::{IpAddr, SocketAddr, TcpListener};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::config::save_toml;
use crate::crypto::{rsa_generate, PublicKey, RsaKeyPair};
use crate::mail::{FileMailbox, InMemoryMailbox};
use crate::net;
use crate::protocol::{recv_plain, send_plain, DumpFile, Message};
use crate::storage::{StorageConfig, StorageNode, StorageServer};
use crate::system::{
    public_key_path, Mutation, StorageTarget, SystemConfig, SystemNode, SystemOptions, SystemServer,
};

const PING_TIMEOUT: Duration = Duration::from_secs(2);
const STARTUP_DEADLINE: Duration = Duration::from_secs(30);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    #[default]
    InProcess,
    Processes,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodePorts {
    pub listen: SocketAddr,
    pub admin: SocketAddr,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StorageNodeConfig {
    pub id: String,
    pub listen: SocketAddr,
    pub admin: SocketAddr,
}

/// Port `0` asks the OS for a free port.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TopologyConfig {
    /// Each run gets a fresh subdirectory here.
    pub base_dir: PathBuf,
    #[serde(default)]
    pub mode: RunMode,
    pub seed: u64,
    #[serde(default = "default_bits")]
    pub rsa_bits: u64,
    pub system: NodePorts,
    pub storage: Vec<StorageNodeConfig>,
    #[serde(default)]
    pub mutation: Option<Mutation>,
}

fn default_bits() -> u64 {
    crate::crypto::DEFAULT_RSA_BITS
}

impl TopologyConfig {
    /// `k` storage servers on ephemeral loopback ports.
    pub fn loopback(base_dir: impl Into<PathBuf>, k: usize, seed: u64, rsa_bits: u64) -> Self {
        let any: SocketAddr = "127.0.0.1:0".parse().unwrap();
        Self {
            base_dir: base_dir.into(),
            mode: RunMode::InProcess,
            seed,
            rsa_bits,
            system: NodePorts {
                listen: any,
                admin: any,
            },
            storage: (1..=k)
                .map(|i| StorageNodeConfig {
                    id: format!("s{i}"),
                    listen: any,
                    admin: any,
                })
                .collect(),
            mutation: None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |component: &str, reason: String| HarnessError::StartupFailure {
            component: component.to_string(),
            reason,
        };
        if self.storage.is_empty() {
            return Err(fail(
                "topology",
                "at least one storage server is required".into(),
            ));
        }
        if self.seed == 0 {
            return Err(fail("topology", "seed S must be at least 1".into()));
        }
        let mut seen: HashMap<SocketAddr, String> = HashMap::new();
        let mut ids = std::collections::HashSet::new();
        let mut ports = vec![
            ("system".to_string(), self.system.listen),
            ("system admin".to_string(), self.system.admin),
        ];
        for s in &self.storage {
            if !ids.insert(s.id.as_str()) {
                return Err(fail(&s.id, format!("duplicate storage id {}", s.id)));
            }
            ports.push((s.id.clone(), s.listen));
            ports.push((format!("{} admin", s.id), s.admin));
        }
        for (component, addr) in ports {
            if addr.port() == 0 {
                continue;
            }
            if let Some(first) = seen.insert(addr, component.clone()) {
                return Err(fail(
                    &component,
                    format!("port {} already assigned to {first}", addr.port()),
                ));
            }
        }
        Ok(())
    }
}

fn fresh_run_dir(base: &Path) -> Result<PathBuf, HarnessError> {
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or_default()
        .as_nanos();
    let dir = base.join(format!("run-{}-{stamp}", std::process::id()));
    fs::create_dir_all(&dir).map_err(|e| HarnessError::StartupFailure {
        component: "topology".into(),
        reason: format!("{}: {e}", dir.display()),
    })?;
    Ok(dir)
}

fn bind(component: &str, addr: SocketAddr) -> Result<TcpListener, HarnessError> {
    TcpListener::bind(addr).map_err(|e| HarnessError::StartupFailure {
        component: component.to_string(),
        reason: format!("bind {addr} (port {}): {e}", addr.port()),
    })
}

/// Health check: a Ping answered by a Pong.
pub fn ping(addr: SocketAddr) -> bool {
    let Ok(frame) = send_plain(&Message::Ping) else {
        return false;
    };
    matches!(
        net::request(addr, &frame, PING_TIMEOUT).map(|f| recv_plain(&f)),
        Ok(Ok(Message::Pong))
    )
}

/// Reads a server's persisted tables through its admin port.
pub fn fetch_dump(admin: SocketAddr) -> Result<Vec<DumpFile>, HarnessError> {
    let reply = net::request(
        admin,
        &send_plain(&Message::DumpRequest)?,
        Duration::from_secs(30),
    )?;
    match recv_plain(&reply)? {
        Message::DumpResponse { files } => Ok(files),
        other => Err(HarnessError::Unexpected(format!(
            "dump answered with {}",
            other.kind()
        ))),
    }
}

/// What the workload, audit and benchmark need from a running topology.
pub trait Deployment {
    /// Address clients talk to.
    fn system_addr(&self) -> SocketAddr;
    fn system_public_key(&self) -> PublicKey;
    fn system_admin(&self) -> SocketAddr;
    /// `(id, admin address)` per storage server.
    fn storage_admins(&self) -> Vec<(String, SocketAddr)>;
    fn mail_messages(&self, address: &str) -> Result<Vec<String>, HarnessError>;
    fn mutation(&self) -> Option<Mutation>;

    fn latest_mail(&self, address: &str) -> Result<Option<String>, HarnessError> {
        Ok(self.mail_messages(address)?.pop())
    }

    /// Pings every server's client/data and admin ports.
    fn health(&self) -> Vec<(String, bool)>;
}

struct LocalStorage {
    cfg: StorageNodeConfig,
    dir: PathBuf,
    node: Option<StorageNode>,
}

/// All servers as threads of the current process.
pub struct LocalCluster {
    config: TopologyConfig,
    run_dir: PathBuf,
    keypair: RsaKeyPair,
    mail: Arc<InMemoryMailbox>,
    system_ports: NodePorts,
    system: Option<SystemNode>,
    storage: Vec<LocalStorage>,
    options: SystemOptions,
}

impl LocalCluster {
    pub fn start(config: TopologyConfig) -> Result<Self, HarnessError> {
        Self::start_with(config, SystemOptions::default())
    }

    pub fn start_with(
        config: TopologyConfig,
        mut options: SystemOptions,
    ) -> Result<Self, HarnessError> {
        config.validate()?;
        let run_dir = fresh_run_dir(&config.base_dir)?;
        let keypair = rsa_generate(config.rsa_bits).map_err(|e| HarnessError::StartupFailure {
            component: "system".into(),
            reason: e.to_string(),
        })?;
        options.mutation = config.mutation;
        let mut storage = Vec::new();
        for s in &config.storage {
            let dir = run_dir.join(&s.id);
            let mut entry = LocalStorage {
                cfg: s.clone(),
                dir,
                node: None,
            };
            let node = start_storage(&entry.cfg, &entry.dir, config.seed)?;
            // Pin ephemeral ports so restarts come back on the same address.
            entry.cfg.listen = node.data.addr();
            entry.cfg.admin = node.admin.addr();
            entry.node = Some(node);
            storage.push(entry);
        }
        let mut cluster = Self {
            system_ports: config.system.clone(),
            config,
            run_dir,
            keypair,
            mail: Arc::new(InMemoryMailbox::new()),
            system: None,
            storage,
            options,
        };
        cluster.start_system()?;
        cluster.check_health()?;
        Ok(cluster)
    }

    fn targets(&self) -> Vec<StorageTarget> {
        self.storage
            .iter()
            .map(|s| StorageTarget {
                id: s.cfg.id.clone(),
                addr: s.cfg.listen,
            })
            .collect()
    }

    fn start_system(&mut self) -> Result<(), HarnessError> {
        let fail = |reason: String| HarnessError::StartupFailure {
            component: "system".into(),
            reason,
        };
        let server = SystemServer::open(
            self.run_dir.join("system"),
            self.keypair.clone(),
            self.targets(),
            self.mail.clone(),
            self.options.clone(),
        )
        .map_err(|e| fail(e.to_string()))?;
        let node = SystemNode::start(
            Arc::new(server),
            bind("system", self.system_ports.listen)?,
            bind("system admin", self.system_ports.admin)?,
        )
        .map_err(|e| fail(e.to_string()))?;
        self.system_ports.listen = node.client.addr();
        self.system_ports.admin = node.admin.addr();
        self.system = Some(node);
        Ok(())
    }

    fn check_health(&self) -> Result<(), HarnessError> {
        for (component, ok) in self.health() {
            if !ok {
                return Err(HarnessError::StartupFailure {
                    component,
                    reason: "health ping unanswered".into(),
                });
            }
        }
        Ok(())
    }

    pub fn config(&self) -> &TopologyConfig {
        &self.config
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    pub fn mailbox(&self) -> &InMemoryMailbox {
        &self.mail
    }

    pub fn system(&self) -> &Arc<SystemServer> {
        &self.system.as_ref().expect("system running").server
    }

    pub fn storage_server(&self, i: usize) -> &Arc<StorageServer> {
        &self.storage[i]
            .node
            .as_ref()
            .expect("storage running")
            .server
    }

    pub fn storage_count(&self) -> usize {
        self.storage.len()
    }

    pub fn storage_id(&self, i: usize) -> &str {
        &self.storage[i].cfg.id
    }

    pub fn storage_index(&self, id: &str) -> Option<usize> {
        self.storage.iter().position(|s| s.cfg.id == id)
    }

    /// Stops the system server and reopens it from its data directory.
    pub fn restart_system(&mut self) -> Result<(), HarnessError> {
        if let Some(mut node) = self.system.take() {
            node.stop();
        }
        self.start_system()
    }

    pub fn restart_storage(&mut self, i: usize) -> Result<(), HarnessError> {
        let entry = &mut self.storage[i];
        if let Some(mut node) = entry.node.take() {
            node.stop();
        }
        entry.node = Some(start_storage(&entry.cfg, &entry.dir, self.config.seed)?);
        Ok(())
    }

    pub fn stop(&mut self) {
        if let Some(mut n) = self.system.take() {
            n.stop();
        }
        for s in &mut self.storage {
            if let Some(mut n) = s.node.take() {
                n.stop();
            }
        }
    }
}

impl Drop for LocalCluster {
    fn drop(&mut self) {
        self.stop();
    }
}

fn start_storage(
    cfg: &StorageNodeConfig,
    dir: &Path,
    seed: u64,
) -> Result<StorageNode, HarnessError> {
    let fail = |reason: String| HarnessError::StartupFailure {
        component: cfg.id.clone(),
        reason,
    };
    let server = StorageServer::open(dir, seed).map_err(|e| fail(e.to_string()))?;
    StorageNode::start(
        Arc::new(server),
        bind(&cfg.id, cfg.listen)?,
        bind(&format!("{} admin", cfg.id), cfg.admin)?,
        Vec::new(),
    )
    .map_err(|e| fail(e.to_string()))
}

impl Deployment for LocalCluster {
    fn system_addr(&self) -> SocketAddr {
        self.system_ports.listen
    }

    fn system_public_key(&self) -> PublicKey {
        self.keypair.public().clone()
    }

    fn system_admin(&self) -> SocketAddr {
        self.system_ports.admin
    }

    fn storage_admins(&self) -> Vec<(String, SocketAddr)> {
        self.storage
            .iter()
            .map(|s| (s.cfg.id.clone(), s.cfg.admin))
            .collect()
    }

    fn mail_messages(&self, address: &str) -> Result<Vec<String>, HarnessError> {
        Ok(self.mail.messages(address))
    }

    fn mutation(&self) -> Option<Mutation> {
        self.config.mutation
    }

    fn health(&self) -> Vec<(String, bool)> {
        let mut out = vec![
            ("system".to_string(), ping(self.system_ports.listen)),
            ("system admin".to_string(), ping(self.system_ports.admin)),
        ];
        for s in &self.storage {
            out.push((s.cfg.id.clone(), ping(s.cfg.listen)));
            out.push((format!("{} admin", s.cfg.id), ping(s.cfg.admin)));
        }
        out
    }
}

/// Paths of the server binaries used in process mode.
#[derive(Clone, Debug)]
pub struct Binaries {
    pub system: PathBuf,
    pub storage: PathBuf,
}

impl Binaries {
    /// Siblings of the running executable.
    pub fn beside_current_exe() -> Result<Self, HarnessError> {
        let exe = std::env::current_exe()?;
        let dir = exe.parent().unwrap_or_else(|| Path::new("."));
        let suffix = std::env::consts::EXE_SUFFIX;
        Ok(Self {
            system: dir.join(format!("splitvault-system{suffix}")),
            storage: dir.join(format!("splitvault-storage{suffix}")),
        })
    }
}

/// Every server as a separate child process with its own config file.
pub struct ProcessCluster {
    config: TopologyConfig,
    run_dir: PathBuf,
    system_key: PublicKey,
    mailbox: FileMailbox,
    system_ports: NodePorts,
    storage_ports: Vec<StorageNodeConfig>,
    children: Vec<(String, Child)>,
}

/// Reserves concrete ports for `0` entries by binding and releasing them.
fn concrete(addr: SocketAddr) -> Result<SocketAddr, HarnessError> {
    if addr.port() != 0 {
        return Ok(addr);
    }
    Ok(TcpListener::bind(addr)?.local_addr()?)
}

impl ProcessCluster {
    pub fn start(config: TopologyConfig, bins: &Binaries) -> Result<Self, HarnessError> {
        config.validate()?;
        for (what, path) in [("system", &bins.system), ("storage", &bins.storage)] {
            if !path.is_file() {
                return Err(HarnessError::StartupFailure {
                    component: what.into(),
                    reason: format!("binary not found at {}", path.display()),
                });
            }
        }
        let run_dir = fresh_run_dir(&config.base_dir)?;
        let mail_dir = run_dir.join("mail");
        let mailbox = FileMailbox::new(&mail_dir)?;
        let mut cluster = Self {
            system_ports: NodePorts {
                listen: concrete(config.system.listen)?,
                admin: concrete(config.system.admin)?,
            },
            storage_ports: Vec::new(),
            system_key: PublicKey::new(1u32.into(), 1u32.into()),
            mailbox,
            run_dir,
            children: Vec::new(),
            config,
        };
        for s in cluster.config.storage.clone() {
            let cfg = StorageConfig {
                id: s.id.clone(),
                data_dir: cluster.run_dir.join(&s.id),
                seed: cluster.config.seed,
                listen: concrete(s.listen)?,
                admin: concrete(s.admin)?,
                allowed_peers: vec![IpAddr::from([127, 0, 0, 1])],
            };
            cluster.storage_ports.push(StorageNodeConfig {
                id: s.id.clone(),
                listen: cfg.listen,
                admin: cfg.admin,
            });
            let path = cluster.run_dir.join(format!("{}.toml", s.id));
            save_toml(&path, &cfg)?;
            cluster.spawn(&s.id, &bins.storage, &path)?;
        }
        for s in cluster.storage_ports.clone() {
            cluster.wait_healthy(&s.id, s.listen)?;
        }

        let keypair_path = cluster.run_dir.join("system.key");
        let kp = rsa_generate(cluster.config.rsa_bits)?;
        crate::persist::atomic_write(&keypair_path, kp.to_text().as_bytes())?;
        let sys = SystemConfig {
            data_dir: cluster.run_dir.join("system"),
            listen: cluster.system_ports.listen,
            admin: cluster.system_ports.admin,
            keypair: keypair_path.clone(),
            rsa_bits: cluster.config.rsa_bits,
            storage: cluster
                .storage_ports
                .iter()
                .map(|s| StorageTarget {
                    id: s.id.clone(),
                    addr: s.listen,
                })
                .collect(),
            mail_dir,
            session_idle_secs: crate::system::DEFAULT_SESSION_IDLE.as_secs(),
            mutation: cluster.config.mutation,
        };
        let path = cluster.run_dir.join("system.toml");
        save_toml(&path, &sys)?;
        cluster.spawn("system", &bins.system, &path)?;
        cluster.wait_healthy("system", sys.listen)?;
        let text = fs::read_to_string(public_key_path(&keypair_path))?;
        cluster.system_key = PublicKey::from_text(&text)?;
        for (component, ok) in cluster.health() {
            if !ok {
                return Err(HarnessError::StartupFailure {
                    component,
                    reason: "health ping unanswered".into(),
                });
            }
        }
        Ok(cluster)
    }

    fn spawn(&mut self, component: &str, bin: &Path, config: &Path) -> Result<(), HarnessError> {
        let log = fs::File::create(self.run_dir.join(format!("{component}.log")))?;
        let child = Command::new(bin)
            .arg("--config")
            .arg(config)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(log)
            .spawn()
            .map_err(|e| HarnessError::StartupFailure {
                component: component.into(),
                reason: format!("spawn {}: {e}", bin.display()),
            })?;
        self.children.push((component.to_string(), child));
        Ok(())
    }

    fn wait_healthy(&mut self, component: &str, addr: SocketAddr) -> Result<(), HarnessError> {
        let deadline = Instant::now() + STARTUP_DEADLINE;
        loop {
            if ping(addr) {
                return Ok(());
            }
            if let Some((_, child)) = self.children.iter_mut().find(|(c, _)| c == component) {
                if let Ok(Some(status)) = child.try_wait() {
                    let log = fs::read_to_string(self.run_dir.join(format!("{component}.log")))
                        .unwrap_or_default();
                    return Err(HarnessError::StartupFailure {
                        component: component.into(),
                        reason: format!("exited with {status}: {}", log.trim()),
                    });
                }
            }
            if Instant::now() > deadline {
                return Err(HarnessError::StartupFailure {
                    component: component.into(),
                    reason: format!("no health ping answer on {addr}"),
                });
            }
            std::thread::sleep(Duration::from_millis(50));
        }
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    pub fn mailbox_dir(&self) -> &Path {
        self.mailbox.dir()
    }

    pub fn system_key_path(&self) -> PathBuf {
        public_key_path(&self.run_dir.join("system.key"))
    }

    pub fn stop(&mut self) {
        for (_, child) in &mut self.children {
            let _ = child.kill();
            let _ = child.wait();
        }
        self.children.clear();
    }
}

impl Drop for ProcessCluster {
    fn drop(&mut self) {
        self.stop();
    }
}

impl Deployment for ProcessCluster {
    fn system_addr(&self) -> SocketAddr {
        self.system_ports.listen
    }

    fn system_public_key(&self) -> PublicKey {
        self.system_key.clone()
    }

    fn system_admin(&self) -> SocketAddr {
        self.system_ports.admin
    }

    fn storage_admins(&self) -> Vec<(String, SocketAddr)> {
        self.storage_ports
            .iter()
            .map(|s| (s.id.clone(), s.admin))
            .collect()
    }

    fn mail_messages(&self, address: &str) -> Result<Vec<String>, HarnessError> {
        Ok(self.mailbox.messages(address)?)
    }

    fn mutation(&self) -> Option<Mutation> {
        self.config.mutation
    }

    fn health(&self) -> Vec<(String, bool)> {
        let mut out = vec![
            ("system".to_string(), ping(self.system_ports.listen)),
            ("system admin".to_string(), ping(self.system_ports.admin)),
        ];
        for s in &self.storage_ports {
            out.push((s.id.clone(), ping(s.listen)));
            out.push((format!("{} admin", s.id), ping(s.admin)));
        }
        out
    }
}
