use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use tracing::info;

use icn_dl::consumer::{fetch_object, fetch_to_file};
use icn_dl::fileserver::{FileserverNode, ProducerTransport};
use icn_dl::forwarder::mgmt::MgmtClient;
use icn_dl::forwarder::{ForwarderNode, DEFAULT_UDP_PORT};
use icn_dl::harness::{BenchOptions, BenchVia};
use icn_dl::loader::{compute_range, hostname, replica_id_from_hostname, run_loader, SourceFetcher};
use icn_dl::{FetchOptions, ForwarderConfig, Manifest, Name, StoreMount};

mod supervisor;

#[derive(Parser)]
#[command(name = "icn-dl", version, about = "Named-data distribution of sequence archives")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a forwarder until killed.
    Forwarder {
        #[arg(long)]
        config: PathBuf,
    },
    /// Serve a directory tree under a name prefix.
    Serve {
        #[arg(long)]
        prefix: Name,
        #[arg(long)]
        root: PathBuf,
        /// Management address of the forwarder to register with.
        #[arg(long)]
        forwarder: SocketAddr,
        /// Local UDP address to serve from.
        #[arg(long, default_value = "127.0.0.1:0")]
        udp: SocketAddr,
    },
    /// Fetch one object through a gateway.
    Get {
        name: Name,
        #[arg(long, default_value_t = SocketAddr::from(([127, 0, 0, 1], DEFAULT_UDP_PORT)))]
        gateway: SocketAddr,
        #[arg(long, default_value_t = 16)]
        window: usize,
        #[arg(long, default_value_t = 1000)]
        rto_ms: u64,
        /// Write the object here; defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the transfer report as JSON on stderr.
        #[arg(long)]
        json_report: bool,
    },
    /// Pull this replica's share of a manifest into a store.
    Load {
        #[arg(long)]
        manifest: PathBuf,
        /// 1-based replica id; taken from the hostname when absent.
        #[arg(long)]
        replica_id: Option<u64>,
        #[arg(long)]
        replica_count: u64,
        #[arg(long)]
        dest: PathBuf,
        #[arg(long, default_value_t = 4)]
        jobs: usize,
    },
    /// Manage a local cluster.
    Cluster {
        #[command(subcommand)]
        action: ClusterAction,
        /// Where the running cluster is recorded.
        #[arg(long, global = true)]
        state: Option<PathBuf>,
    },
    /// Fetch an object repeatedly through the running cluster.
    Bench {
        name: Name,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long, default_value_t = 16)]
        window: usize,
        #[arg(long, default_value_t = 1000)]
        rto_ms: u64,
        /// Run the warm fetches concurrently.
        #[arg(long)]
        parallel: bool,
        /// Fetch over an in-process face with this one-way delay instead of UDP.
        #[arg(long)]
        memory_delay_ms: Option<u64>,
        #[arg(long)]
        state: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ClusterAction {
    /// Start every node of a topology in a background supervisor.
    Up {
        #[arg(short = 'f', long = "file")]
        file: PathBuf,
    },
    /// Stop the running cluster. Does nothing if none is running.
    Down,
    /// Stop one node of the running cluster.
    Kill { node: String },
    /// Print node stats of the running cluster.
    Status,
    #[command(hide = true)]
    Supervise {
        #[arg(short = 'f', long = "file")]
        file: PathBuf,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("icn-dl: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Forwarder { config } => {
            let cfg = ForwarderConfig::load(&config).with_context(|| format!("reading {}", config.display()))?;
            let node = ForwarderNode::spawn(&cfg).context("starting forwarder")?;
            let handle = node.handle();
            if let Some(addr) = handle.udp_addr() {
                println!("udp {addr}");
            }
            if let Some(addr) = handle.mgmt_addr() {
                println!("mgmt {addr}");
            }
            wait_while(|| node.is_running());
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve {
            prefix,
            root,
            forwarder,
            udp,
        } => {
            let mount = StoreMount::new(prefix, &root)?;
            let mut mgmt = MgmtClient::connect(forwarder)
                .with_context(|| format!("connecting to forwarder management at {forwarder}"))?;
            let node = FileserverNode::spawn(mount, ProducerTransport::Udp { bind: udp }, &mut mgmt)?;
            info!(face = node.face().0, "serving");
            if let Some(addr) = node.udp_addr() {
                println!("udp {addr} face {}", node.face().0);
            }
            wait_while(|| node.is_running());
            Ok(ExitCode::SUCCESS)
        }
        Command::Get {
            name,
            gateway,
            window,
            rto_ms,
            out,
            json_report,
        } => {
            let opts = FetchOptions {
                rto_ms,
                ..FetchOptions::with_gateway(gateway).window(window)
            };
            let report = match &out {
                Some(path) => fetch_to_file(&name, &opts, path)?,
                None => {
                    let (bytes, report) = fetch_object(&name, &opts)?;
                    write_stdout(&bytes)?;
                    report
                }
            };
            if json_report {
                eprintln!("{}", serde_json::to_string(&report)?);
            } else {
                eprintln!(
                    "{} bytes in {} ms ({:.2} Mbit/s, {} retransmits)",
                    report.bytes, report.elapsed_ms, report.throughput_mbps, report.retransmits
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Load {
            manifest,
            replica_id,
            replica_count,
            dest,
            jobs,
        } => {
            let id = match replica_id {
                Some(id) => id,
                None => {
                    let host = hostname().context("no --replica-id and no hostname")?;
                    replica_id_from_hostname(&host)
                        .with_context(|| format!("no --replica-id and hostname {host:?} has no trailing number"))?
                }
            };
            let parsed = Manifest::load(&manifest)?;
            let range = compute_range(id, replica_count, parsed.len())?;
            let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
            let report = run_loader(&parsed, &range, &SourceFetcher::new(base), &dest, jobs)?;
            emit(&report.to_json_lines());
            for e in report.entries.iter().filter(|e| e.error.is_some()) {
                eprintln!("entry {}: {}", e.entry, e.error.as_deref().unwrap_or_default());
            }
            Ok(if report.is_success() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Cluster { action, state } => {
            let state = state.unwrap_or_else(supervisor::default_state_path);
            match action {
                ClusterAction::Up { file } => supervisor::up(&file, &state)?,
                ClusterAction::Down => supervisor::down(&state)?,
                ClusterAction::Kill { node } => emit_line(&supervisor::request(&state, &format!("kill {node}"))?),
                ClusterAction::Status => emit_line(&supervisor::request(&state, "status")?),
                ClusterAction::Supervise { file } => supervisor::supervise(&file, &state)?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench {
            name,
            runs,
            window,
            rto_ms,
            parallel,
            memory_delay_ms,
            state,
        } => {
            if runs == 0 {
                bail!("--runs must be at least 1");
            }
            let state = state.unwrap_or_else(supervisor::default_state_path);
            let opts = BenchOptions {
                runs,
                window,
                rto_ms,
                parallel,
                via: memory_delay_ms.map_or(BenchVia::Udp, |delay_ms| BenchVia::Memory { delay_ms }),
            };
            let line = format!("bench {name} {}", serde_json::to_string(&opts)?);
            emit_line(&supervisor::request(&state, &line)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn wait_while(running: impl Fn() -> bool) {
    while running() {
        std::thread::sleep(Duration::from_millis(200));
    }
}

/// Writes to stdout, treating a closed pipe as success.
fn write_stdout(bytes: &[u8]) -> std::io::Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(bytes).and_then(|_| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => other,
    }
}

fn emit(text: &str) {
    if let Err(e) = write_stdout(text.as_bytes()) {
        eprintln!("icn-dl: writing output: {e}");
    }
}

fn emit_line(text: &str) {
    emit(&format!("{text}\n"));
}
