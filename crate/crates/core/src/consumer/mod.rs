//! Windowed object fetcher.
//!
//! A fetch first retrieves the object's meta Data, then keeps up to `window`
//! segment Interests in flight, retransmitting each on timeout with a fresh
//! nonce. Segments are verified, reassembled in order and checked against the
//! meta digest before the fetch is reported successful.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use bytes::Bytes;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fileserver::{meta_name, segment_name, ObjectMeta};
use crate::transport::{Link, UdpLink};
use crate::wire::{Data, Interest, Name, Packet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchOptions {
    /// Segment Interests allowed in flight at once.
    pub window: usize,
    pub rto_ms: u64,
    pub max_retries: u32,
    /// Interest lifetime; half the RTO when unset.
    pub lifetime_ms: Option<u32>,
    pub gateway: Option<SocketAddr>,
}

impl Default for FetchOptions {
    fn default() -> Self {
        Self {
            window: 16,
            rto_ms: 1000,
            max_retries: 3,
            lifetime_ms: None,
            gateway: None,
        }
    }
}

impl FetchOptions {
    pub fn with_gateway(gateway: SocketAddr) -> Self {
        Self {
            gateway: Some(gateway),
            ..Self::default()
        }
    }

    pub fn window(mut self, window: usize) -> Self {
        self.window = window;
        self
    }

    fn lifetime(&self) -> u32 {
        self.lifetime_ms
            .unwrap_or_else(|| (self.rto_ms / 2).clamp(1, u32::MAX as u64) as u32)
    }

    fn rto(&self) -> Duration {
        Duration::from_millis(self.rto_ms.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FetchReport {
    pub object_name: Name,
    pub bytes: u64,
    pub elapsed_ms: u64,
    pub segments: u64,
    pub retransmits: u64,
    pub interests_sent: u64,
    /// Data that arrived but failed verification and was ignored.
    pub verify_failures: u64,
    pub digest: String,
    pub throughput_mbps: f64,
}

impl FetchReport {
    /// `8 * bytes / (1000 * elapsed_ms)`.
    pub fn throughput(bytes: u64, elapsed_ms: u64) -> f64 {
        8.0 * bytes as f64 / (1000.0 * elapsed_ms as f64)
    }
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("no meta for {name} after {attempts} attempts")]
    MetaTimeout { name: Name, attempts: u32 },
    #[error("segment {segment} of {name} unanswered after {attempts} attempts")]
    SegmentTimeout {
        name: Name,
        segment: u64,
        attempts: u32,
    },
    #[error("{name}: reassembled bytes do not match the meta digest")]
    DigestMismatch { name: Name },
    #[error("{name}: every Data received for {what} failed verification")]
    VerifyFailed { name: Name, what: String },
    #[error("no gateway configured")]
    NoGateway,
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

struct Pending {
    seg: u64,
    deadline: Instant,
    attempts: u32,
    nonce: u32,
    bad: bool,
}

struct Session<'a> {
    link: &'a mut dyn Link,
    opts: &'a FetchOptions,
    interests_sent: u64,
    retransmits: u64,
    verify_failures: u64,
}

fn fresh_nonce(previous: Option<u32>) -> u32 {
    loop {
        let n = rand::random::<u32>();
        if Some(n) != previous {
            return n;
        }
    }
}

impl Session<'_> {
    fn send(&mut self, name: &Name, nonce: u32) -> io::Result<()> {
        let interest = Interest::new(name.clone(), nonce).with_lifetime(self.opts.lifetime());
        self.interests_sent += 1;
        self.link.send(&interest.encode())
    }

    /// Waits for the next decodable Data; `Ok(None)` on timeout.
    fn next_data(&mut self, until: Instant) -> io::Result<Option<Data>> {
        loop {
            let left = until.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Ok(None);
            }
            let Some(frame) = self.link.recv_timeout(left)? else {
                return Ok(None);
            };
            if let Ok(Packet::Data(d)) = Packet::decode(&frame) {
                return Ok(Some(d));
            }
        }
    }

    fn fetch_meta(&mut self, object: &Name) -> Result<ObjectMeta, FetchError> {
        let name = meta_name(object).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
        let mut nonce = None;
        let mut bad = false;
        for attempt in 0..=self.opts.max_retries {
            if attempt > 0 {
                self.retransmits += 1;
            }
            let n = fresh_nonce(nonce);
            nonce = Some(n);
            self.send(&name, n)?;
            let deadline = Instant::now() + self.opts.rto();
            while let Some(data) = self.next_data(deadline)? {
                if data.name != name {
                    continue;
                }
                if !data.verify() {
                    self.verify_failures += 1;
                    bad = true;
                    continue;
                }
                return match ObjectMeta::decode(object.clone(), &data.content) {
                    Some(meta) if meta.is_consistent() => Ok(meta),
                    _ => Err(FetchError::VerifyFailed {
                        name: object.clone(),
                        what: "meta".into(),
                    }),
                };
            }
        }
        if bad {
            return Err(FetchError::VerifyFailed {
                name: object.clone(),
                what: "meta".into(),
            });
        }
        Err(FetchError::MetaTimeout {
            name: object.clone(),
            attempts: self.opts.max_retries + 1,
        })
    }

    fn fetch_segments(
        &mut self,
        meta: &ObjectMeta,
        sink: &mut dyn Write,
    ) -> Result<(u64, [u8; 32]), FetchError> {
        let object = &meta.object_name;
        let window = self.opts.window.max(1);
        let mut next: u64 = 0;
        let mut flushed: u64 = 0;
        let mut written: u64 = 0;
        let mut hasher = Sha256::new();
        let mut pending: HashMap<Name, Pending> = HashMap::new();
        let mut parked: BTreeMap<u64, Bytes> = BTreeMap::new();
        let seg_name = |k| {
            segment_name(object, k).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))
        };

        while flushed <= meta.final_segment {
            while pending.len() < window && next <= meta.final_segment {
                let name = seg_name(next)?;
                let nonce = fresh_nonce(None);
                self.send(&name, nonce)?;
                pending.insert(
                    name,
                    Pending {
                        seg: next,
                        deadline: Instant::now() + self.opts.rto(),
                        attempts: 1,
                        nonce,
                        bad: false,
                    },
                );
                next += 1;
            }

            let soonest = pending
                .values()
                .map(|p| p.deadline)
                .min()
                .unwrap_or_else(Instant::now);
            if let Some(data) = self.next_data(soonest)? {
                let Some(p) = pending.get_mut(&data.name) else {
                    continue;
                };
                if !data.verify() {
                    self.verify_failures += 1;
                    p.bad = true;
                    continue;
                }
                let p = pending.remove(&data.name).expect("present");
                parked.insert(p.seg, data.content);
                while let Some(content) = parked.remove(&flushed) {
                    hasher.update(&content);
                    sink.write_all(&content)?;
                    written += content.len() as u64;
                    flushed += 1;
                }
                continue;
            }

            let now = Instant::now();
            let expired: Vec<Name> = pending
                .iter()
                .filter(|(_, p)| p.deadline <= now)
                .map(|(n, _)| n.clone())
                .collect();
            for name in expired {
                let p = pending.get_mut(&name).expect("present");
                if p.attempts > self.opts.max_retries {
                    if p.bad {
                        return Err(FetchError::VerifyFailed {
                            name: object.clone(),
                            what: format!("segment {}", p.seg),
                        });
                    }
                    return Err(FetchError::SegmentTimeout {
                        name: object.clone(),
                        segment: p.seg,
                        attempts: p.attempts,
                    });
                }
                p.nonce = fresh_nonce(Some(p.nonce));
                p.attempts += 1;
                p.deadline = Instant::now() + self.opts.rto();
                let nonce = p.nonce;
                self.retransmits += 1;
                self.send(&name, nonce)?;
            }
        }
        Ok((written, hasher.finalize().into()))
    }
}

/// Fetches `name` over `link`, streaming the object into `sink` in order.
pub fn fetch_into(
    link: &mut dyn Link,
    name: &Name,
    opts: &FetchOptions,
    sink: &mut dyn Write,
) -> Result<FetchReport, FetchError> {
    let started = Instant::now();
    let mut session = Session {
        link,
        opts,
        interests_sent: 0,
        retransmits: 0,
        verify_failures: 0,
    };
    let meta = session.fetch_meta(name)?;
    let (bytes, digest) = session.fetch_segments(&meta, sink)?;
    if bytes != meta.size_bytes || digest != meta.content_digest {
        return Err(FetchError::DigestMismatch { name: name.clone() });
    }
    sink.flush()?;
    let elapsed_ms = (started.elapsed().as_millis() as u64).max(1);
    let report = FetchReport {
        object_name: name.clone(),
        bytes,
        elapsed_ms,
        segments: meta.final_segment + 1,
        retransmits: session.retransmits,
        interests_sent: session.interests_sent,
        verify_failures: session.verify_failures,
        digest: hex::encode(digest),
        throughput_mbps: FetchReport::throughput(bytes, elapsed_ms),
    };
    tracing::debug!(name = %name, bytes, elapsed_ms, retransmits = report.retransmits, "fetched");
    Ok(report)
}

/// Fetches `name` over `link` into memory.
pub fn fetch_via(
    link: &mut dyn Link,
    name: &Name,
    opts: &FetchOptions,
) -> Result<(Vec<u8>, FetchReport), FetchError> {
    let mut out = Vec::new();
    let report = fetch_into(link, name, opts, &mut out)?;
    Ok((out, report))
}

fn gateway_link(opts: &FetchOptions) -> Result<UdpLink, FetchError> {
    let gateway = opts.gateway.ok_or(FetchError::NoGateway)?;
    Ok(UdpLink::connect(gateway)?)
}

/// Fetches `name` from the UDP gateway in `opts`.
pub fn fetch_object(name: &Name, opts: &FetchOptions) -> Result<(Vec<u8>, FetchReport), FetchError> {
    fetch_via(&mut gateway_link(opts)?, name, opts)
}

fn part_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".part");
    PathBuf::from(s)
}

/// Streams `name` into `<out>.part` and renames it to `out` once the digest
/// has been checked. A failed fetch leaves only the `.part` file behind.
pub fn fetch_to_file_via(
    link: &mut dyn Link,
    name: &Name,
    opts: &FetchOptions,
    out: &Path,
) -> Result<FetchReport, FetchError> {
    let part = part_path(out);
    let mut sink = BufWriter::new(File::create(&part)?);
    let report = fetch_into(link, name, opts, &mut sink)?;
    sink.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    fs::rename(&part, out)?;
    Ok(report)
}

pub fn fetch_to_file(name: &Name, opts: &FetchOptions, out: &Path) -> Result<FetchReport, FetchError> {
    fetch_to_file_via(&mut gateway_link(opts)?, name, opts, out)
}
