use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use splitvault::config::{load_toml, StorageConfig};
use splitvault::storage::{StorageNode, StorageServer};

/// Storage server: holds ciphertext blobs and the placement table.
#[derive(Parser)]
#[command(version)]
struct Args {
    #[arg(long, env = "SPLITVAULT_CONFIG")]
    config: PathBuf,
}

fn run(args: Args) -> Result<(), String> {
    let cfg: StorageConfig = load_toml(&args.config).map_err(|e| e.to_string())?;
    let server = StorageServer::open(&cfg.data_dir, cfg.seed)
        .map_err(|e| format!("{}: {e}", e.code().as_str()))?;
    let data = TcpListener::bind(cfg.listen).map_err(|e| format!("bind {}: {e}", cfg.listen))?;
    let admin = TcpListener::bind(cfg.admin).map_err(|e| format!("bind {}: {e}", cfg.admin))?;
    let _node = StorageNode::start(Arc::new(server), data, admin, cfg.allowed_peers.clone())
        .map_err(|e| e.to_string())?;
    log::info!(
        "storage {} serving on {} (admin {})",
        cfg.id,
        cfg.listen,
        cfg.admin
    );
    loop {
        std::thread::park();
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("splitvault-storage: {e}");
            ExitCode::FAILURE
        }
    }
}
