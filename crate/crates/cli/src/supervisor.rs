//! Background supervisor that owns a running cluster.
//!
//! `cluster up` re-executes this binary as `cluster supervise`, which brings
//! the topology up, listens on a loopback control socket and records that
//! socket in a state file. Later commands find the supervisor through the
//! state file and send it one request line each; every reply is one JSON
//! line of the form `{"ok":true,"body":...}` or `{"ok":false,"error":"..."}`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tracing::{info, warn};

use icn_dl::harness::{bench, BenchOptions, ClusterHandle};
use icn_dl::{Name, Topology};

const STARTUP_TIMEOUT: Duration = Duration::from_secs(20);
const REQUEST_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, Serialize, Deserialize)]
struct State {
    pid: u32,
    control: SocketAddr,
    gateway: String,
    gateway_udp: Option<SocketAddr>,
    topology: PathBuf,
}

pub fn default_state_path() -> PathBuf {
    std::env::temp_dir().join("icn-dl-cluster.json")
}

fn log_path(state: &Path) -> PathBuf {
    state.with_extension("log")
}

fn read_state(path: &Path) -> Result<Option<State>> {
    match fs::read_to_string(path) {
        Ok(text) => Ok(Some(serde_json::from_str(&text).with_context(|| format!("corrupt state file {}", path.display()))?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn write_state(path: &Path, state: &State) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, serde_json::to_vec_pretty(state)?)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn send(control: SocketAddr, line: &str) -> std::io::Result<Value> {
    let mut stream = TcpStream::connect_timeout(&control, Duration::from_secs(2))?;
    stream.set_read_timeout(Some(REQUEST_TIMEOUT))?;
    stream.write_all(format!("{line}\n").as_bytes())?;
    let mut reply = String::new();
    BufReader::new(stream).read_line(&mut reply)?;
    serde_json::from_str(&reply).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

/// Sends one request to the running supervisor and returns the reply body.
pub fn request(state: &Path, line: &str) -> Result<String> {
    let st = read_state(state)?.ok_or_else(|| anyhow!("no cluster running (no {})", state.display()))?;
    let reply = send(st.control, line).with_context(|| format!("supervisor at {} not answering", st.control))?;
    if reply["ok"] == true {
        Ok(match &reply["body"] {
            Value::String(s) => s.clone(),
            other => serde_json::to_string_pretty(other)?,
        })
    } else {
        bail!("{}", reply["error"].as_str().unwrap_or("request failed"))
    }
}

pub fn up(file: &Path, state: &Path) -> Result<()> {
    if let Some(st) = read_state(state)? {
        if send(st.control, "ping").is_ok() {
            bail!("a cluster is already running (pid {}, {})", st.pid, state.display());
        }
        fs::remove_file(state)?;
    }
    // Fail fast on a bad document before detaching.
    Topology::load(file)?;
    let file = fs::canonicalize(file)?;
    let log = File::create(log_path(state))?;
    let mut child = Command::new(std::env::current_exe()?)
        .arg("cluster")
        .arg("--state")
        .arg(state)
        .arg("supervise")
        .arg("-f")
        .arg(&file)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(log)
        .spawn()
        .context("starting supervisor")?;
    let started = Instant::now();
    loop {
        if let Some(st) = read_state(state)? {
            if st.pid == child.id() {
                match st.gateway_udp {
                    Some(addr) => println!("cluster up: gateway {} on udp {addr} (pid {})", st.gateway, st.pid),
                    None => println!("cluster up: gateway {} (pid {})", st.gateway, st.pid),
                }
                return Ok(());
            }
        }
        if let Some(status) = child.try_wait()? {
            let log = fs::read_to_string(log_path(state)).unwrap_or_default();
            bail!("supervisor exited with {status}: {}", log.trim());
        }
        if started.elapsed() > STARTUP_TIMEOUT {
            let _ = child.kill();
            bail!("cluster did not come up within {STARTUP_TIMEOUT:?}");
        }
        std::thread::sleep(Duration::from_millis(50));
    }
}

pub fn down(state: &Path) -> Result<()> {
    let Some(st) = read_state(state)? else {
        println!("no cluster running");
        return Ok(());
    };
    match send(st.control, "down") {
        Ok(_) => println!("cluster down"),
        Err(e) => {
            warn!("supervisor at {} unreachable ({e}); removing stale state", st.control);
            println!("no cluster running");
        }
    }
    let _ = fs::remove_file(state);
    Ok(())
}

fn handle(cluster: &mut ClusterHandle, line: &str) -> Result<Value> {
    let (verb, rest) = line.split_once(' ').unwrap_or((line, ""));
    match verb {
        "ping" => Ok(json!("pong")),
        "status" => Ok(serde_json::to_value(cluster.stats())?),
        "kill" => {
            let node = rest.trim();
            cluster.kill(node)?;
            Ok(json!(format!("killed {node}")))
        }
        "bench" => {
            let (name, opts) = rest.split_once(' ').unwrap_or((rest, "{}"));
            let name: Name = name.parse()?;
            let opts: BenchOptions = serde_json::from_str(opts)?;
            Ok(serde_json::to_value(bench(cluster, &name, &opts))?)
        }
        other => bail!("unknown request {other:?}"),
    }
}

/// Runs in the detached child until a `down` request arrives.
pub fn supervise(file: &Path, state: &Path) -> Result<()> {
    let topology = Topology::load(file)?;
    let mut cluster = ClusterHandle::up(&topology)?;
    let listener = TcpListener::bind(("127.0.0.1", 0))?;
    write_state(
        state,
        &State {
            pid: std::process::id(),
            control: listener.local_addr()?,
            gateway: cluster.gateway().to_string(),
            gateway_udp: cluster.gateway_udp_addr(),
            topology: file.to_path_buf(),
        },
    )?;
    info!(control = %listener.local_addr()?, "supervising");
    for stream in listener.incoming() {
        let Ok(stream) = stream else { continue };
        let mut reader = BufReader::new(&stream);
        let mut line = String::new();
        if reader.read_line(&mut line).is_err() {
            continue;
        }
        let line = line.trim();
        if line == "down" {
            cluster.down();
            let _ = fs::remove_file(state);
            let _ = (&stream).write_all(b"{\"ok\":true,\"body\":\"down\"}\n");
            return Ok(());
        }
        let reply = match handle(&mut cluster, line) {
            Ok(body) => json!({ "ok": true, "body": body }),
            Err(e) => json!({ "ok": false, "error": format!("{e:#}") }),
        };
        let _ = (&stream).write_all(format!("{reply}\n").as_bytes());
    }
    Ok(())
}
