use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use splitvault::client::{
    clear_token, load_token, restrict_permissions, save_token, Client, ClientError,
};
use splitvault::config::{load_toml, ClientConfig};
use splitvault::crypto::{rsa_generate, PublicKey, RsaKeyPair, DEFAULT_RSA_BITS};
use splitvault::mail::FileMailbox;
use splitvault::persist::atomic_write;
use splitvault::protocol::SessionToken;

/// Client for the split key/blob encrypted file store.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// Client configuration file.
    #[arg(long, global = true, env = "SPLITVAULT_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create this client's RSA key pair.
    Keygen {
        #[arg(long, default_value_t = DEFAULT_RSA_BITS)]
        bits: u64,
        /// Replace an existing key pair.
        #[arg(long)]
        force: bool,
    },
    /// Create an account; the first one-time password is mailed.
    Register {
        #[arg(long)]
        user: String,
        #[arg(long)]
        mail: String,
    },
    /// Log in with the latest one-time password.
    Login {
        #[arg(long)]
        user: String,
        /// Defaults to the newest message in the configured mailbox.
        #[arg(long)]
        otp: Option<String>,
    },
    Logout,
    /// Encrypt and store a file.
    Upload {
        path: PathBuf,
        /// Defaults to the file name.
        #[arg(long)]
        label: Option<String>,
    },
    /// Fetch and decrypt a stored file.
    Download {
        label: String,
        /// Output path; `-` writes to stdout.
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Labels stored by the logged-in user.
    List,
}

#[derive(Debug)]
struct CliError {
    code: &'static str,
    message: String,
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        Self {
            code: e.code_name(),
            message: e.to_string(),
        }
    }
}

fn local(code: &'static str, message: impl Into<String>) -> CliError {
    CliError {
        code,
        message: message.into(),
    }
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| local("IO_ERROR", format!("{}: {e}", path.display()))
}

fn load_config(path: Option<&Path>) -> Result<ClientConfig, CliError> {
    let path = path.ok_or_else(|| {
        local(
            "CONFIG_ERROR",
            "no --config given and SPLITVAULT_CONFIG unset",
        )
    })?;
    load_toml(path).map_err(|e| local("CONFIG_ERROR", e.to_string()))
}

fn client(cfg: &ClientConfig) -> Result<Client, CliError> {
    let text = fs::read_to_string(&cfg.keypair).map_err(|e| {
        local(
            "NO_KEYPAIR",
            format!("{}: {e} (run `splitvault keygen`)", cfg.keypair.display()),
        )
    })?;
    let keypair = RsaKeyPair::from_text(&text).map_err(|e| local("NO_KEYPAIR", e.to_string()))?;
    let text =
        fs::read_to_string(&cfg.system_public_key).map_err(io_err(&cfg.system_public_key))?;
    let system_key =
        PublicKey::from_text(&text).map_err(|e| local("CONFIG_ERROR", e.to_string()))?;
    Ok(Client::new(cfg.system_addr, system_key, keypair)
        .with_timeout(Duration::from_secs(cfg.timeout_secs)))
}

fn session(cfg: &ClientConfig) -> Result<SessionToken, CliError> {
    match load_token(&cfg.token_cache).map_err(io_err(&cfg.token_cache))? {
        Some((_, token)) => Ok(token),
        None => Err(local(
            "NOT_LOGGED_IN",
            "no cached session (run `splitvault login`)",
        )),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Keygen { bits, force } => {
            if cfg.keypair.exists() && !force {
                return Err(local(
                    "KEYPAIR_EXISTS",
                    format!(
                        "{} exists; pass --force to replace it",
                        cfg.keypair.display()
                    ),
                ));
            }
            let kp = rsa_generate(bits).map_err(|e| local("CRYPTO_ERROR", e.to_string()))?;
            kp.self_test(8)
                .map_err(|e| local("CRYPTO_ERROR", e.to_string()))?;
            if let Some(dir) = cfg.keypair.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(io_err(dir))?;
            }
            atomic_write(&cfg.keypair, kp.to_text().as_bytes()).map_err(io_err(&cfg.keypair))?;
            restrict_permissions(&cfg.keypair).map_err(io_err(&cfg.keypair))?;
            println!("wrote {}-bit key pair to {}", bits, cfg.keypair.display());
        }
        Command::Register { user, mail } => {
            client(&cfg)?.register(&user, &mail)?;
            println!("registered {user}; a one-time password was mailed to {mail}");
        }
        Command::Login { user, otp } => {
            let otp = match otp {
                Some(o) => o,
                None => {
                    let (Some(dir), Some(addr)) = (&cfg.mailbox_dir, &cfg.mail_address) else {
                        return Err(local(
                            "NO_OTP",
                            "pass --otp or configure mailbox_dir and mail_address",
                        ));
                    };
                    FileMailbox::new(dir)
                        .map_err(io_err(dir))?
                        .latest(addr)
                        .map_err(|e| local("NO_OTP", e.to_string()))?
                        .ok_or_else(|| local("NO_OTP", format!("no mail for {addr}")))?
                }
            };
            let token = client(&cfg)?.login(&user, &otp)?;
            save_token(&cfg.token_cache, &user, &token).map_err(io_err(&cfg.token_cache))?;
            println!("logged in as {user}; the next one-time password has been mailed");
        }
        Command::Logout => {
            let token = session(&cfg)?;
            let result = client(&cfg)?.logout(&token);
            clear_token(&cfg.token_cache).map_err(io_err(&cfg.token_cache))?;
            result?;
            println!("logged out");
        }
        Command::Upload { path, label } => {
            let label = match label {
                Some(l) => l,
                None => path
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .ok_or_else(|| local("BAD_REQUEST", "cannot derive a label; pass --label"))?,
            };
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            let token = session(&cfg)?;
            client(&cfg)?.upload(&token, &label, &bytes)?;
            println!(
                "uploaded {} ({} bytes) as {label}",
                path.display(),
                bytes.len()
            );
        }
        Command::Download { label, out, force } => {
            let token = session(&cfg)?;
            let bytes = client(&cfg)?.download(&token, &label)?;
            let out = out.unwrap_or_else(|| PathBuf::from(&label));
            if out.as_os_str() == "-" {
                io::stdout()
                    .write_all(&bytes)
                    .map_err(|e| local("IO_ERROR", e.to_string()))?;
            } else {
                if out.exists() && !force {
                    return Err(local(
                        "OUTPUT_EXISTS",
                        format!("{} exists; pass --force to overwrite", out.display()),
                    ));
                }
                fs::write(&out, &bytes).map_err(io_err(&out))?;
                eprintln!("wrote {} bytes to {}", bytes.len(), out.display());
            }
        }
        Command::List => {
            let token = session(&cfg)?;
            for label in client(&cfg)?.list(&token)? {
                println!("{label}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.code, e.message);
            ExitCode::FAILURE
        }
    }
}
