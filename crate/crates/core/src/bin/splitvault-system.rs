use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::Parser;
use splitvault::config::{load_toml, SystemConfig};
use splitvault::mail::FileMailbox;
use splitvault::system::{
    load_or_create_keypair, public_key_path, SystemNode, SystemOptions, SystemServer,
};

/// System server: accounts, one-time passwords and per-file keys.
#[derive(Parser)]
#[command(version)]
struct Args {
    #[arg(long, env = "SPLITVAULT_CONFIG")]
    config: PathBuf,
}

fn run(args: Args) -> Result<(), String> {
    let cfg: SystemConfig = load_toml(&args.config).map_err(|e| e.to_string())?;
    let keypair = load_or_create_keypair(&cfg.keypair, cfg.rsa_bits).map_err(|e| e.to_string())?;
    let mail =
        FileMailbox::new(&cfg.mail_dir).map_err(|e| format!("{}: {e}", cfg.mail_dir.display()))?;
    let opts = SystemOptions {
        session_idle: Duration::from_secs(cfg.session_idle_secs),
        mutation: cfg.mutation,
        ..SystemOptions::default()
    };
    if let Some(m) = cfg.mutation {
        log::warn!("running deliberately broken build: {m:?}");
    }
    let server = SystemServer::open(
        &cfg.data_dir,
        keypair,
        cfg.storage.clone(),
        Arc::new(mail),
        opts,
    )
    .map_err(|e| format!("{}: {e}", e.code().as_str()))?;
    let client = TcpListener::bind(cfg.listen).map_err(|e| format!("bind {}: {e}", cfg.listen))?;
    let admin = TcpListener::bind(cfg.admin).map_err(|e| format!("bind {}: {e}", cfg.admin))?;
    let _node = SystemNode::start(Arc::new(server), client, admin).map_err(|e| e.to_string())?;
    log::info!(
        "system serving on {} (admin {}), public key at {}",
        cfg.listen,
        cfg.admin,
        public_key_path(&cfg.keypair).display()
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
            eprintln!("splitvault-system: {e}");
            ExitCode::FAILURE
        }
    }
}
