use std::io::{self, BufRead};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use splitvault::config::load_toml;
use splitvault::harness::{
    leakage_audit, run_workload, timing_benchmark, Binaries, CaptureProxy, Deployment,
    HarnessError, LocalCluster, ProcessCluster, RunMode, Summary, TopologyConfig, WorkloadSpec,
    DEFAULT_SIZES,
};
use splitvault::system::Mutation;

/// Topology runner, leakage audit and latency benchmark.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// Write a JSON summary here.
    #[arg(long, global = true)]
    summary: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MutationArg {
    KeysOnStorage,
    PlaintextChannel,
}

#[derive(Subcommand)]
enum Command {
    /// Start a topology, health-check every server, then tear it down.
    Run {
        config: PathBuf,
        /// Keep running until stdin closes.
        #[arg(long)]
        hold: bool,
    },
    /// Run the sentinel workload and the five leakage checks.
    Audit {
        /// Topology file; defaults to one system and two storage servers on loopback.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Audit a deliberately broken build instead of the honest one.
        #[arg(long, value_enum)]
        mutation: Option<MutationArg>,
    },
    /// Median upload/download latency per file size.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Byte counts, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SIZES)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
}

fn topology(config: Option<&PathBuf>) -> Result<TopologyConfig, HarnessError> {
    match config {
        Some(p) => Ok(load_toml(p)?),
        None => Ok(TopologyConfig::loopback(
            std::env::temp_dir().join("splitvault-harness"),
            2,
            100,
            2048,
        )),
    }
}

fn start(cfg: TopologyConfig) -> Result<Box<dyn Deployment>, HarnessError> {
    Ok(match cfg.mode {
        RunMode::InProcess => Box::new(LocalCluster::start(cfg)?),
        RunMode::Processes => Box::new(ProcessCluster::start(
            cfg,
            &Binaries::beside_current_exe()?,
        )?),
    })
}

fn print_health(health: &[(String, bool)]) {
    for (component, ok) in health {
        println!(
            "{component:<16} {}",
            if *ok { "healthy" } else { "UNREACHABLE" }
        );
    }
}

fn run(cli: &Cli) -> Result<Summary, HarnessError> {
    let mut summary = Summary::default();
    match &cli.command {
        Command::Run { config, hold } => {
            summary.command = "run".into();
            let dep = start(load_toml(config)?)?;
            summary.health = dep.health();
            print_health(&summary.health);
            println!("system listening on {}", dep.system_addr());
            if *hold {
                println!("holding; close stdin to stop");
                for _ in io::stdin().lock().lines() {}
            }
            summary.passed = summary.health.iter().all(|(_, ok)| *ok);
        }
        Command::Audit { config, mutation } => {
            summary.command = "audit".into();
            let mut cfg = topology(config.as_ref())?;
            cfg.mutation = mutation.map(|m| match m {
                MutationArg::KeysOnStorage => Mutation::KeysOnStorage,
                MutationArg::PlaintextChannel => Mutation::PlaintextChannel,
            });
            let dep = start(cfg)?;
            summary.health = dep.health();
            let proxy = CaptureProxy::start(dep.system_addr())?;
            let outcome = run_workload(dep.as_ref(), proxy.addr(), &WorkloadSpec::default())?;
            let report = leakage_audit(dep.as_ref(), &proxy, &outcome)?;
            print!("{}", report.render_text());
            summary.passed = report.all_passed();
            summary.audit = Some(report);
        }
        Command::Bench {
            config,
            sizes,
            trials,
        } => {
            summary.command = "bench".into();
            let dep = start(topology(config.as_ref())?)?;
            summary.health = dep.health();
            let table = timing_benchmark(dep.as_ref(), sizes, *trials)?;
            print!("{}", table.render_text());
            let inv = table.upload_inversions();
            println!("upload median inversions: {inv}");
            summary.passed = inv <= 1;
            summary.upload_inversions = Some(inv);
            summary.bench = Some(table);
        }
    }
    Ok(summary)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            if let Some(path) = &cli.summary {
                if let Err(e) = summary.write_json(path) {
                    eprintln!("splitvault-harness: {}: {e}", path.display());
                    return ExitCode::FAILURE;
                }
            }
            if summary.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("splitvault-harness: {e}");
            ExitCode::FAILURE
        }
    }
}
