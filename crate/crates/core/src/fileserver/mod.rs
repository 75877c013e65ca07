//! Producer serving a store directory under a name prefix.
//!
//! An object `<prefix>/<rel/path>` is published as
//!
//! * `<prefix>/<rel/path>/32=meta`: one Data carrying [`ObjectMeta`], and
//! * `<prefix>/<rel/path>/seg=<k>`: fixed-size segments `0..=final_segment`.
//!
//! Files are read on every request; caching is the network's job.

mod node;

use std::fs::File;
use std::io::{self, Read, Seek, SeekFrom};
use std::path::{Component as PathComponent, Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::wire::{Data, Interest, Name, NameError, Packet, SEGMENT_SIZE};

pub use node::{FileserverNode, MgmtChannel, ProducerTransport};

pub const META_COMPONENT: &str = "32=meta";
pub const SEGMENT_PREFIX: &str = "seg=";
/// Size of the encoded [`ObjectMeta`] payload.
pub const META_LEN: usize = 48;

#[derive(Debug, Error)]
pub enum FileserverError {
    #[error("store root {0} is not a readable directory")]
    BadRoot(PathBuf),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("forwarder refused registration: {0}")]
    Registration(String),
}

/// One store directory mounted under one name prefix.
#[derive(Debug, Clone)]
pub struct StoreMount {
    pub prefix: Name,
    root: PathBuf,
}

impl StoreMount {
    pub fn new(prefix: Name, root: impl AsRef<Path>) -> Result<Self, FileserverError> {
        let root = root.as_ref();
        let canonical = root
            .canonicalize()
            .map_err(|_| FileserverError::BadRoot(root.to_path_buf()))?;
        if !canonical.is_dir() {
            return Err(FileserverError::BadRoot(root.to_path_buf()));
        }
        Ok(Self {
            prefix,
            root: canonical,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Name of the object stored at `rel` (a relative path under the root).
    pub fn object_name(&self, rel: &Path) -> Result<Name, NameError> {
        let mut name = self.prefix.clone();
        for part in rel.components() {
            let PathComponent::Normal(os) = part else {
                return Err(NameError::MalformedUri(format!("{} is not a plain relative path", rel.display())));
            };
            name = name.child(os.as_encoded_bytes().to_vec())?;
        }
        Ok(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolved {
    Meta(PathBuf),
    Segment(PathBuf, u64),
    NotServed,
}

/// Maps a name onto the store, rejecting anything that could leave the root.
pub fn resolve_name(name: &Name, mount: &StoreMount) -> Resolved {
    if !mount.prefix.is_prefix_of(name) || name.len() < mount.prefix.len() + 2 {
        return Resolved::NotServed;
    }
    let middle = &name.components()[mount.prefix.len()..name.len() - 1];
    let mut path = mount.root.clone();
    for c in middle {
        match c.as_str() {
            Some(part) if is_safe_path_part(part) => path.push(part),
            _ => return Resolved::NotServed,
        }
    }
    match name.last().and_then(|c| c.as_str()) {
        Some(META_COMPONENT) => Resolved::Meta(path),
        Some(last) => match last.strip_prefix(SEGMENT_PREFIX).and_then(parse_decimal) {
            Some(seg) => Resolved::Segment(path, seg),
            None => Resolved::NotServed,
        },
        None => Resolved::NotServed,
    }
}

fn is_safe_path_part(part: &str) -> bool {
    !part.is_empty()
        && part != "."
        && part != ".."
        && !part.contains(['/', '\\', '\0'])
}

// Canonical decimal only, so every segment has exactly one name.
fn parse_decimal(s: &str) -> Option<u64> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) || (s.len() > 1 && s.starts_with('0')) {
        return None;
    }
    s.parse().ok()
}

pub fn meta_name(object: &Name) -> Result<Name, NameError> {
    object.child(META_COMPONENT)
}

pub fn segment_name(object: &Name, seg: u64) -> Result<Name, NameError> {
    object.child(format!("{SEGMENT_PREFIX}{seg}"))
}

/// Number of the last segment of an object of `size` bytes.
pub fn final_segment_for(size: u64) -> u64 {
    if size == 0 {
        0
    } else {
        size.div_ceil(SEGMENT_SIZE as u64) - 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ObjectMeta {
    pub object_name: Name,
    pub size_bytes: u64,
    pub final_segment: u64,
    #[serde(serialize_with = "hex_digest")]
    pub content_digest: [u8; 32],
}

fn hex_digest<S: serde::Serializer>(d: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&hex::encode(d))
}

impl ObjectMeta {
    /// `size (8) ‖ final_segment (8) ‖ digest (32)`, big-endian.
    pub fn encode(&self) -> [u8; META_LEN] {
        let mut out = [0u8; META_LEN];
        out[..8].copy_from_slice(&self.size_bytes.to_be_bytes());
        out[8..16].copy_from_slice(&self.final_segment.to_be_bytes());
        out[16..].copy_from_slice(&self.content_digest);
        out
    }

    pub fn decode(object_name: Name, bytes: &[u8]) -> Option<Self> {
        if bytes.len() != META_LEN {
            return None;
        }
        Some(Self {
            object_name,
            size_bytes: u64::from_be_bytes(bytes[..8].try_into().ok()?),
            final_segment: u64::from_be_bytes(bytes[8..16].try_into().ok()?),
            content_digest: bytes[16..].try_into().ok()?,
        })
    }

    /// Reads and hashes the whole file.
    pub fn of_file(object_name: Name, path: &Path) -> io::Result<Self> {
        Self::of_reader(object_name, File::open(path)?)
    }

    fn of_reader(object_name: Name, reader: impl Read) -> io::Result<Self> {
        let (size, digest) = digest_reader(reader)?;
        Ok(Self {
            object_name,
            size_bytes: size,
            final_segment: final_segment_for(size),
            content_digest: digest,
        })
    }

    /// Consistent with the segment arithmetic.
    pub fn is_consistent(&self) -> bool {
        self.final_segment == final_segment_for(self.size_bytes)
    }
}

/// Byte count and SHA-256 of everything `reader` yields.
pub fn digest_reader(mut reader: impl Read) -> io::Result<(u64, [u8; 32])> {
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 64 * 1024];
    let mut size = 0u64;
    loop {
        let n = match reader.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        };
        hasher.update(&buf[..n]);
        size += n as u64;
    }
    Ok((size, hasher.finalize().into()))
}

// The file must exist, be regular, and stay inside the root after resolving symlinks.
fn open_inside(path: &Path, mount: &StoreMount) -> io::Result<File> {
    let canonical = path.canonicalize()?;
    if !canonical.starts_with(&mount.root) || canonical == mount.root {
        return Err(io::Error::new(io::ErrorKind::PermissionDenied, "outside store root"));
    }
    let file = File::open(&canonical)?;
    if !file.metadata()?.is_file() {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "not a regular file"));
    }
    Ok(file)
}

/// Answers one Interest from the store, or `None` when it cannot be served.
pub fn serve_interest(interest: &Interest, mount: &StoreMount) -> Option<Data> {
    let result = match resolve_name(&interest.name, mount) {
        Resolved::NotServed => return None,
        Resolved::Meta(path) => serve_meta(interest, &path, mount),
        Resolved::Segment(path, seg) => serve_segment(interest, &path, seg, mount),
    };
    match result {
        Ok(data) => data,
        Err(e) => {
            if e.kind() != io::ErrorKind::NotFound {
                tracing::warn!(name = %interest.name, error = %e, "cannot serve");
            }
            None
        }
    }
}

fn serve_meta(interest: &Interest, path: &Path, mount: &StoreMount) -> io::Result<Option<Data>> {
    let file = open_inside(path, mount)?;
    let object = interest.name.prefix(interest.name.len() - 1);
    let meta = ObjectMeta::of_reader(object, file)?;
    Ok(Some(
        Data::new(interest.name.clone(), meta.encode().to_vec()).signed(),
    ))
}

fn serve_segment(
    interest: &Interest,
    path: &Path,
    seg: u64,
    mount: &StoreMount,
) -> io::Result<Option<Data>> {
    let mut file = open_inside(path, mount)?;
    let size = file.metadata()?.len();
    let last = final_segment_for(size);
    if seg > last {
        return Ok(None);
    }
    let start = seg * SEGMENT_SIZE as u64;
    let len = (size - start).min(SEGMENT_SIZE as u64) as usize;
    let mut content = vec![0u8; len];
    file.seek(SeekFrom::Start(start))?;
    file.read_exact(&mut content)?;
    Ok(Some(
        Data::new(interest.name.clone(), content)
            .with_final_segment(last)
            .signed(),
    ))
}

#[derive(Debug, Default)]
pub struct FileserverCounters {
    interests: AtomicU64,
    meta_interests: AtomicU64,
    segment_interests: AtomicU64,
    data_sent: AtomicU64,
    unanswered: AtomicU64,
    drops: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FileserverStats {
    /// Every decoded Interest that reached the producer.
    pub interests: u64,
    pub meta_interests: u64,
    pub segment_interests: u64,
    pub data_sent: u64,
    pub unanswered: u64,
    /// Undecodable frames and stray Data.
    pub drops: u64,
}

impl FileserverCounters {
    pub fn snapshot(&self) -> FileserverStats {
        FileserverStats {
            interests: self.interests.load(Ordering::Relaxed),
            meta_interests: self.meta_interests.load(Ordering::Relaxed),
            segment_interests: self.segment_interests.load(Ordering::Relaxed),
            data_sent: self.data_sent.load(Ordering::Relaxed),
            unanswered: self.unanswered.load(Ordering::Relaxed),
            drops: self.drops.load(Ordering::Relaxed),
        }
    }
}

/// Frame-level producer logic shared by every transport.
#[derive(Debug)]
pub struct Fileserver {
    mount: StoreMount,
    counters: std::sync::Arc<FileserverCounters>,
}

impl Fileserver {
    pub fn new(mount: StoreMount) -> Self {
        Self {
            mount,
            counters: Default::default(),
        }
    }

    pub fn mount(&self) -> &StoreMount {
        &self.mount
    }

    pub fn counters(&self) -> std::sync::Arc<FileserverCounters> {
        self.counters.clone()
    }

    /// Handles one received frame and returns the reply frame, if any.
    pub fn handle_frame(&self, frame: &[u8]) -> Option<Vec<u8>> {
        let c = &self.counters;
        let interest = match Packet::decode(frame) {
            Ok(Packet::Interest(i)) => i,
            _ => {
                c.drops.fetch_add(1, Ordering::Relaxed);
                return None;
            }
        };
        c.interests.fetch_add(1, Ordering::Relaxed);
        match resolve_name(&interest.name, &self.mount) {
            Resolved::Meta(_) => c.meta_interests.fetch_add(1, Ordering::Relaxed),
            Resolved::Segment(..) => c.segment_interests.fetch_add(1, Ordering::Relaxed),
            Resolved::NotServed => 0,
        };
        match serve_interest(&interest, &self.mount) {
            Some(data) => {
                c.data_sent.fetch_add(1, Ordering::Relaxed);
                Some(data.encode())
            }
            None => {
                c.unanswered.fetch_add(1, Ordering::Relaxed);
                None
            }
        }
    }
}
