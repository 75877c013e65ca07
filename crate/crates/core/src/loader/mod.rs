//! Manifest sharding and ingestion into a store directory.
//!
//! Every replica reads the same manifest, computes its own contiguous range
//! of entries from its id and the replica count, and pulls exactly those
//! entries into its destination directory.

mod fetch;

use std::fs;
use std::io::{self, BufRead};
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;
use thiserror::Error;

use crate::fileserver::digest_reader;

pub use fetch::{Fetcher, HttpFetcher, LocalFetcher, SourceFetcher};

/// Retries per entry after the first failed attempt.
pub const ENTRY_RETRIES: u32 = 2;

#[derive(Debug, Error)]
pub enum LoaderError {
    #[error("replica id {id} is outside 1..={count}")]
    InvalidReplica { id: u64, count: u64 },
    #[error("manifest line {line}: {reason}")]
    BadEntry { line: usize, reason: String },
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    /// 1-based position among the non-blank lines.
    pub index: u64,
    pub source: String,
    /// Destination relative to the store directory.
    pub dest: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

fn is_plain_relative(p: &Path) -> bool {
    p.components().count() > 0 && p.components().all(|c| matches!(c, Component::Normal(_)))
}

fn basename(source: &str) -> Option<&str> {
    let path = match source.find("://") {
        Some(i) => {
            let rest = &source[i + 3..];
            let end = rest.find(['?', '#']).unwrap_or(rest.len());
            rest[..end].split_once('/').map(|(_, p)| p).unwrap_or("")
        }
        None => source.strip_prefix("file:").unwrap_or(source),
    };
    path.rsplit('/').find(|s| !s.is_empty())
}

impl Manifest {
    /// Lines are `<source> [<relative-dest>]`; blank lines are skipped and do
    /// not count towards the numbering.
    pub fn parse(text: &str) -> Result<Self, LoaderError> {
        let mut entries = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |reason: String| LoaderError::BadEntry {
                line: lineno + 1,
                reason,
            };
            let mut fields = line.split_whitespace();
            let source = fields.next().expect("non-empty line").to_string();
            let dest = match fields.next() {
                Some(d) => PathBuf::from(d),
                None => PathBuf::from(
                    basename(&source).ok_or_else(|| bad(format!("cannot derive a file name from {source:?}")))?,
                ),
            };
            if fields.next().is_some() {
                return Err(bad("expected `<source> [<dest>]`".into()));
            }
            if !is_plain_relative(&dest) {
                return Err(bad(format!("destination {} must be a plain relative path", dest.display())));
            }
            if !seen.insert(dest.clone()) {
                return Err(bad(format!("destination {} appears twice", dest.display())));
            }
            entries.push(ManifestEntry {
                index: entries.len() as u64 + 1,
                source,
                dest,
            });
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, LoaderError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn len(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries inside `range`.
    pub fn select(&self, range: &ShardRange) -> &[ManifestEntry] {
        if range.is_empty() {
            return &[];
        }
        &self.entries[(range.start - 1) as usize..range.end as usize]
    }
}

/// Inclusive, 1-based range of manifest entries; `start > end` is empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ShardRange {
    pub replica_id: u64,
    pub replica_count: u64,
    pub start: u64,
    pub end: u64,
}

impl ShardRange {
    pub fn is_empty(&self) -> bool {
        self.start > self.end
    }

    pub fn len(&self) -> u64 {
        if self.is_empty() {
            0
        } else {
            self.end - self.start + 1
        }
    }

    pub fn contains(&self, index: u64) -> bool {
        self.start <= index && index <= self.end
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<u64> {
        self.start..=self.end
    }
}

/// Range of `total` entries owned by replica `id` of `count`.
///
/// Each replica gets `ceil(total / count)` entries, the last ones possibly
/// fewer or none.
pub fn compute_range(id: u64, count: u64, total: u64) -> Result<ShardRange, LoaderError> {
    if count == 0 || id == 0 || id > count {
        return Err(LoaderError::InvalidReplica { id, count });
    }
    let per = total.div_ceil(count);
    let start = (id - 1) * per + 1;
    let end = (id * per).min(total);
    Ok(ShardRange {
        replica_id: id,
        replica_count: count,
        start,
        end,
    })
}

/// Trailing integer of a host name such as `loader-3`.
pub fn replica_id_from_hostname(hostname: &str) -> Option<u64> {
    let digits = hostname.len() - hostname.trim_end_matches(|c: char| c.is_ascii_digit()).len();
    hostname[hostname.len() - digits..].parse().ok()
}

/// This machine's host name, if it can be determined.
pub fn hostname() -> Option<String> {
    if let Ok(h) = std::env::var("HOSTNAME") {
        if !h.trim().is_empty() {
            return Some(h.trim().to_string());
        }
    }
    fs::read_to_string("/proc/sys/kernel/hostname")
        .or_else(|_| fs::read_to_string("/etc/hostname"))
        .ok()
        .map(|h| h.trim().to_string())
        .filter(|h| !h.is_empty())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryStatus {
    Fetched,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EntryReport {
    pub entry: u64,
    pub status: EntryStatus,
    pub bytes: u64,
    #[serde(skip)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub entries: Vec<EntryReport>,
}

impl LoadReport {
    pub fn is_success(&self) -> bool {
        self.entries.iter().all(|e| e.status != EntryStatus::Failed)
    }

    pub fn count(&self, status: EntryStatus) -> usize {
        self.entries.iter().filter(|e| e.status == status).count()
    }

    /// One JSON object per line, in entry order.
    pub fn to_json_lines(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("plain struct") + "\n")
            .collect()
    }
}

fn sidecar(dest: &Path) -> PathBuf {
    let mut s = dest.as_os_str().to_owned();
    s.push(".sha256");
    PathBuf::from(s)
}

fn part(dest: &Path) -> PathBuf {
    let mut s = dest.as_os_str().to_owned();
    s.push(".part");
    PathBuf::from(s)
}

// `<hex digest>  <size>`
fn read_sidecar(path: &Path) -> Option<(String, u64)> {
    let file = fs::File::open(path).ok()?;
    let line = io::BufReader::new(file).lines().next()?.ok()?;
    let mut it = line.split_whitespace();
    let digest = it.next()?.to_string();
    let size = it.next()?.parse().ok()?;
    Some((digest, size))
}

/// True if `dest` is complete according to its digest sidecar.
pub fn is_intact(dest: &Path) -> bool {
    let Some((digest, size)) = read_sidecar(&sidecar(dest)) else {
        return false;
    };
    match fs::metadata(dest) {
        Ok(m) if m.is_file() && m.len() == size => {}
        _ => return false,
    }
    match fs::File::open(dest).and_then(digest_reader) {
        Ok((n, d)) => n == size && hex::encode(d) == digest,
        Err(_) => false,
    }
}

fn load_entry(entry: &ManifestEntry, fetcher: &dyn Fetcher, dest_dir: &Path) -> EntryReport {
    let dest = dest_dir.join(&entry.dest);
    if is_intact(&dest) {
        let bytes = fs::metadata(&dest).map(|m| m.len()).unwrap_or(0);
        return EntryReport {
            entry: entry.index,
            status: EntryStatus::Skipped,
            bytes,
            error: None,
        };
    }
    let mut last_err = String::new();
    for attempt in 0..=ENTRY_RETRIES {
        match fetch_one(&entry.source, fetcher, &dest) {
            Ok(bytes) => {
                return EntryReport {
                    entry: entry.index,
                    status: EntryStatus::Fetched,
                    bytes,
                    error: None,
                }
            }
            Err(e) => {
                tracing::warn!(entry = entry.index, attempt, source = %entry.source, error = %e, "fetch failed");
                last_err = e.to_string();
            }
        }
    }
    EntryReport {
        entry: entry.index,
        status: EntryStatus::Failed,
        bytes: 0,
        error: Some(last_err),
    }
}

fn fetch_one(source: &str, fetcher: &dyn Fetcher, dest: &Path) -> io::Result<u64> {
    if let Some(parent) = dest.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = part(dest);
    let result = (|| {
        let mut file = fs::File::create(&tmp)?;
        fetcher.fetch(source, &mut file)?;
        file.sync_all()?;
        drop(file);
        let (size, digest) = digest_reader(fs::File::open(&tmp)?)?;
        fs::rename(&tmp, dest)?;
        fs::write(sidecar(dest), format!("{}  {size}\n", hex::encode(digest)))?;
        Ok(size)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Pulls every entry of `range` into `dest_dir`, `jobs` at a time. Failures
/// are recorded per entry and do not stop the run.
pub fn run_loader(
    manifest: &Manifest,
    range: &ShardRange,
    fetcher: &(dyn Fetcher + Sync),
    dest_dir: &Path,
    jobs: usize,
) -> Result<LoadReport, LoaderError> {
    fs::create_dir_all(dest_dir)?;
    let selected = manifest.select(range);
    let jobs = jobs.clamp(1, selected.len().max(1));
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::with_capacity(selected.len()));
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(entry) = selected.get(i) else {
                    break;
                };
                let report = load_entry(entry, fetcher, dest_dir);
                results.lock().unwrap().push(report);
            });
        }
    });
    let mut entries = results.into_inner().unwrap();
    entries.sort_by_key(|e| e.entry);
    Ok(LoadReport { entries })
}
