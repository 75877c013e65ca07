use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_icn-dl");

fn icn(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("run icn-dl")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A background daemon that is killed when dropped.
struct Daemon(Child);

impl Daemon {
    /// Starts `icn-dl args` and returns it with its first `lines` stdout lines.
    fn start(args: &[&str], lines: usize) -> (Self, Vec<String>) {
        let mut child = Command::new(BIN)
            .args(args)
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .unwrap();
        let mut reader = BufReader::new(child.stdout.take().unwrap());
        let mut out = Vec::new();
        for _ in 0..lines {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            out.push(line.trim().to_string());
        }
        (Daemon(child), out)
    }
}

impl Drop for Daemon {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn field<'a>(line: &'a str, key: &str) -> &'a str {
    let mut words = line.split_whitespace();
    while let Some(w) = words.next() {
        if w == key {
            return words.next().unwrap();
        }
    }
    panic!("{key} missing from {line:?}")
}

#[test]
fn forwarder_serve_and_get_as_separate_processes() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("fwd.json");
    fs::write(&cfg, r#"{"listen_udp":"127.0.0.1:0","mgmt_socket":"127.0.0.1:0"}"#).unwrap();
    let store = dir.path().join("store");
    fs::create_dir_all(store.join("runs")).unwrap();
    let body: Vec<u8> = (0..30_000u32).map(|i| (i % 251) as u8).collect();
    fs::write(store.join("runs/r1.fastq"), &body).unwrap();

    let (_fwd, lines) = Daemon::start(&["forwarder", "--config", cfg.to_str().unwrap()], 2);
    let udp = field(&lines[0], "udp").to_string();
    let mgmt = field(&lines[1], "mgmt").to_string();
    let (_srv, served) = Daemon::start(
        &["serve", "--prefix", "/lab/x", "--root", store.to_str().unwrap(), "--forwarder", &mgmt],
        1,
    );
    assert!(served[0].starts_with("udp 127.0.0.1:"), "{served:?}");

    let out = dir.path().join("r1.fastq");
    let o = icn(&[
        "get",
        "/lab/x/runs/r1.fastq",
        "--gateway",
        &udp,
        "--window",
        "4",
        "--out",
        out.to_str().unwrap(),
        "--json-report",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(&out).unwrap(), body);
    let report: serde_json::Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(report["bytes"], 30_000);
    assert_eq!(report["segments"], 4);
    assert_eq!(report["object_name"], "/lab/x/runs/r1.fastq");

    let to_stdout = icn(&["get", "/lab/x/runs/r1.fastq", "--gateway", &udp]);
    assert!(to_stdout.status.success());
    assert_eq!(to_stdout.stdout, body);

    let missing = icn(&["get", "/lab/x/runs/none", "--gateway", &udp, "--rto-ms", "100"]);
    assert!(!missing.status.success());
    assert!(stderr(&missing).contains("/lab/x/runs/none"), "{}", stderr(&missing));
}

#[test]
fn forwarder_rejects_a_bad_config() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("fwd.json");
    fs::write(&cfg, r#"{"listen_udp":"127.0.0.1:0","bogus":1}"#).unwrap();
    let o = icn(&["forwarder", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
}

fn write_manifest(dir: &Path, count: usize) -> std::path::PathBuf {
    let src = dir.join("src");
    fs::create_dir_all(&src).unwrap();
    let mut text = String::new();
    for i in 1..=count {
        fs::write(src.join(format!("f{i}")), vec![i as u8; i * 10]).unwrap();
        text.push_str(&format!("src/f{i}\n"));
    }
    let manifest = dir.join("manifest.txt");
    fs::write(&manifest, text).unwrap();
    manifest
}

#[test]
fn load_reports_json_lines_and_resumes() {
    let dir = TempDir::new().unwrap();
    let manifest = write_manifest(dir.path(), 10);
    let dest = dir.path().join("dest");
    let args = [
        "load",
        "--manifest",
        manifest.to_str().unwrap(),
        "--replica-id",
        "2",
        "--replica-count",
        "3",
        "--dest",
        dest.to_str().unwrap(),
        "--jobs",
        "2",
    ];
    let o = icn(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let entries: Vec<u64> = lines.iter().map(|l| l["entry"].as_u64().unwrap()).collect();
    assert_eq!(entries, [5, 6, 7, 8]);
    assert!(lines.iter().all(|l| l["status"] == "fetched"));
    assert_eq!(lines[0]["bytes"], 50);
    assert_eq!(fs::read(dest.join("f7")).unwrap(), vec![7u8; 70]);
    assert!(!dest.join("f4").exists());

    let again = icn(&args);
    assert!(again.status.success());
    assert!(stdout(&again).lines().all(|l| l.contains("\"skipped\"")), "{}", stdout(&again));
}

#[test]
fn load_exits_nonzero_when_an_entry_fails() {
    let dir = TempDir::new().unwrap();
    let manifest = write_manifest(dir.path(), 3);
    fs::remove_file(dir.path().join("src/f2")).unwrap();
    let dest = dir.path().join("dest");
    let o = icn(&[
        "load",
        "--manifest",
        manifest.to_str().unwrap(),
        "--replica-id",
        "1",
        "--replica-count",
        "1",
        "--dest",
        dest.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    let out = stdout(&o);
    assert!(out.contains(r#"{"entry":2,"status":"failed","bytes":0}"#), "{out}");
    assert!(out.contains(r#""entry":3,"status":"fetched""#), "{out}");

    let bad_id = icn(&[
        "load",
        "--manifest",
        manifest.to_str().unwrap(),
        "--replica-id",
        "0",
        "--replica-count",
        "2",
        "--dest",
        dest.to_str().unwrap(),
    ]);
    assert!(!bad_id.status.success());
}

#[test]
fn cluster_lifecycle_through_the_supervisor() {
    let dir = TempDir::new().unwrap();
    for (store, file, body) in [("store-a", "a.bin", "alpha ".repeat(3000)), ("store-b", "b.bin", "beta".into())] {
        fs::create_dir_all(dir.path().join(store)).unwrap();
        fs::write(dir.path().join(store).join(file), body).unwrap();
    }
    let topo = dir.path().join("topo.json");
    fs::write(
        &topo,
        r#"{
          "nodes": [
            {"name": "gw", "kind": "forwarder", "config": {"listen_udp": "127.0.0.1:0"}},
            {"name": "pa", "kind": "fileserver", "config": {"prefix": "/t/a", "root": "store-a"}},
            {"name": "pb", "kind": "fileserver", "config": {"prefix": "/t/b", "root": "store-b"}}
          ],
          "links": [{"a": "gw", "b": "pa"}, {"a": "gw", "b": "pb", "kind": "udp"}],
          "routes": [],
          "gateway": "gw"
        }"#,
    )
    .unwrap();
    let state = dir.path().join("cluster.json");
    let st = state.to_str().unwrap();

    let up = icn(&["cluster", "--state", st, "up", "-f", topo.to_str().unwrap()]);
    assert!(up.status.success(), "{}", stderr(&up));
    let gw = field(&stdout(&up), "udp").to_string();
    let twice = icn(&["cluster", "--state", st, "up", "-f", topo.to_str().unwrap()]);
    assert!(!twice.status.success());

    for (name, expect) in [("/t/a/a.bin", "alpha ".repeat(3000)), ("/t/b/b.bin", "beta".into())] {
        let o = icn(&["get", name, "--gateway", &gw]);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
        assert_eq!(stdout(&o), expect);
    }

    let b = icn(&["bench", "/t/a/a.bin", "--runs", "3", "--window", "4", "--state", st]);
    assert!(b.status.success(), "{}", stderr(&b));
    let report: serde_json::Value = serde_json::from_str(&stdout(&b)).unwrap();
    assert_eq!(report["runs"].as_array().unwrap().len(), 3);
    assert_eq!(report["failed_runs"], 0);
    assert_eq!(report["runs"][0]["cold"], true);
    assert_eq!(report["runs"][2]["producer_interests"], 0);
    assert!(report["cold_warm_ratio"].as_f64().unwrap() > 0.0);

    let kill = icn(&["cluster", "--state", st, "kill", "pb"]);
    assert!(kill.status.success(), "{}", stderr(&kill));
    let unknown = icn(&["cluster", "--state", st, "kill", "nobody"]);
    assert!(!unknown.status.success());

    let down = icn(&["cluster", "--state", st, "down"]);
    assert!(down.status.success());
    assert!(!state.exists());
    let again = icn(&["cluster", "--state", st, "down"]);
    assert!(again.status.success());

    let after = icn(&["get", "/t/a/a.bin", "--gateway", &gw, "--rto-ms", "100"]);
    assert!(!after.status.success());
    assert!(stderr(&after).contains("meta"), "{}", stderr(&after));
}

#[test]
fn cluster_up_reports_a_bad_topology() {
    let dir = TempDir::new().unwrap();
    let topo = dir.path().join("topo.json");
    fs::write(&topo, r#"{"nodes": [], "links": [], "routes": [], "gateway": "gw"}"#).unwrap();
    let state = dir.path().join("cluster.json");
    let o = icn(&["cluster", "--state", state.to_str().unwrap(), "up", "-f", topo.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("topology"), "{}", stderr(&o));
    assert!(!state.exists());
}
