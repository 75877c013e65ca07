//! The forwarding pipeline.
//!
//! [`Forwarder`] is a pure, event-driven state machine: it is fed
//! `(face, packet, now)` events and returns the packets to emit. It owns the
//! FIB, PIT and Content Store and the per-face counters. [`node`] wraps it in
//! a single event-loop thread with memory and UDP transports and the text
//! management socket.

mod config;
pub mod mgmt;
pub mod node;

use std::collections::BTreeMap;
use std::fmt;
use std::net::{SocketAddr, ToSocketAddrs};

use serde::Serialize;

use crate::clock::Millis;
use crate::wire::{Data, Interest, Name, Packet};

pub use crate::tables::FaceId;
use crate::tables::{ContentStore, Fib, InsertOutcome, Pit};
pub use config::{ConfigError, FaceSpec, ForwarderConfig, RouteConfig, DEFAULT_UDP_PORT};
pub use node::{ForwarderHandle, ForwarderNode};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FaceKind {
    Memory,
    Udp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FaceRemote {
    /// Free-form label of the in-process peer.
    Memory(String),
    Udp(SocketAddr),
}

impl fmt::Display for FaceRemote {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaceRemote::Memory(label) => write!(f, "mem:{label}"),
            FaceRemote::Udp(addr) => write!(f, "udp:{addr}"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FaceCounters {
    pub in_interests: u64,
    pub in_data: u64,
    pub out_interests: u64,
    pub out_data: u64,
    pub drops: u64,
}

#[derive(Debug, Clone)]
pub struct Face {
    pub id: FaceId,
    pub remote: FaceRemote,
    pub counters: FaceCounters,
}

impl Face {
    pub fn kind(&self) -> FaceKind {
        match self.remote {
            FaceRemote::Memory(_) => FaceKind::Memory,
            FaceRemote::Udp(_) => FaceKind::Udp,
        }
    }
}

/// One packet the pipeline wants sent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Egress {
    pub face: FaceId,
    pub packet: Packet,
}

pub struct Forwarder {
    fib: Fib,
    pit: Pit,
    cs: ContentStore,
    faces: BTreeMap<FaceId, Face>,
    next_face: u32,
    udp_enabled: bool,
}

impl Forwarder {
    pub fn new(cs_capacity: usize) -> Self {
        Self {
            fib: Fib::new(),
            pit: Pit::new(),
            cs: ContentStore::new(cs_capacity),
            faces: BTreeMap::new(),
            next_face: 1,
            udp_enabled: false,
        }
    }

    /// Allows `face add udp` management commands.
    pub fn enable_udp(&mut self) {
        self.udp_enabled = true;
    }

    pub fn add_face(&mut self, remote: FaceRemote) -> FaceId {
        let id = FaceId(self.next_face);
        self.next_face += 1;
        self.faces.insert(
            id,
            Face {
                id,
                remote,
                counters: FaceCounters::default(),
            },
        );
        id
    }

    /// Existing UDP face for `addr`, or a new one.
    pub fn udp_face(&mut self, addr: SocketAddr) -> FaceId {
        match self.face_by_udp(addr) {
            Some(id) => id,
            None => self.add_face(FaceRemote::Udp(addr)),
        }
    }

    pub fn face_by_udp(&self, addr: SocketAddr) -> Option<FaceId> {
        self.faces
            .values()
            .find(|f| f.remote == FaceRemote::Udp(addr))
            .map(|f| f.id)
    }

    /// Removes the face and every route through it. Its id is not reused.
    pub fn remove_face(&mut self, id: FaceId) -> Option<Face> {
        self.fib.remove_face(id);
        self.faces.remove(&id)
    }

    pub fn face(&self, id: FaceId) -> Option<&Face> {
        self.faces.get(&id)
    }

    pub fn faces(&self) -> impl Iterator<Item = &Face> {
        self.faces.values()
    }

    pub fn fib(&self) -> &Fib {
        &self.fib
    }

    pub fn pit(&self) -> &Pit {
        &self.pit
    }

    pub fn cs(&self) -> &ContentStore {
        &self.cs
    }

    /// Installs a route; `false` if the face does not exist.
    pub fn add_route(&mut self, prefix: &Name, face: FaceId, cost: u32) -> bool {
        if !self.faces.contains_key(&face) {
            return false;
        }
        self.fib.insert(prefix, face, cost);
        true
    }

    pub fn remove_route(&mut self, prefix: &Name, face: FaceId) {
        self.fib.remove(prefix, face);
    }

    /// Decodes and dispatches one received frame.
    pub fn on_frame(&mut self, face: FaceId, frame: &[u8], now: Millis) -> Vec<Egress> {
        match Packet::decode(frame) {
            Ok(Packet::Interest(i)) => self.on_interest(face, i, now),
            Ok(Packet::Data(d)) => self.on_data(face, d, now),
            Err(e) => {
                tracing::debug!(%face, error = %e, "undecodable frame");
                self.count(face, |c| c.drops += 1);
                Vec::new()
            }
        }
    }

    pub fn on_interest(&mut self, face: FaceId, mut interest: Interest, now: Millis) -> Vec<Egress> {
        if !self.faces.contains_key(&face) {
            return Vec::new();
        }
        interest.hop_limit = interest.hop_limit.saturating_sub(1);
        if interest.hop_limit == 0 {
            self.count(face, |c| c.drops += 1);
            return Vec::new();
        }
        if let Some(data) = self.cs.lookup(&interest.name, now) {
            let data = data.clone();
            self.count(face, |c| c.in_interests += 1);
            return vec![self.emit(face, Packet::Data(data))];
        }
        match self.pit.insert_or_aggregate(&interest, face, now) {
            InsertOutcome::DuplicateNonce => {
                self.count(face, |c| c.drops += 1);
                Vec::new()
            }
            InsertOutcome::Aggregated => {
                self.count(face, |c| c.in_interests += 1);
                Vec::new()
            }
            InsertOutcome::New => {
                let nexthop = self
                    .fib
                    .longest_prefix_match(&interest.name)
                    .and_then(|e| e.best_nexthop(face))
                    .filter(|nh| self.faces.contains_key(&nh.face));
                let Some(nexthop) = nexthop else {
                    self.pit.remove(&interest.name);
                    self.count(face, |c| c.drops += 1);
                    return Vec::new();
                };
                self.count(face, |c| c.in_interests += 1);
                self.pit.add_upstream(&interest.name, nexthop.face);
                vec![self.emit(nexthop.face, Packet::Interest(interest))]
            }
        }
    }

    pub fn on_data(&mut self, face: FaceId, data: Data, now: Millis) -> Vec<Egress> {
        if !self.faces.contains_key(&face) {
            return Vec::new();
        }
        if !data.verify() {
            tracing::debug!(%face, name = %data.name, "data failed verification");
            self.count(face, |c| c.drops += 1);
            return Vec::new();
        }
        let downstreams = self.pit.satisfy(&data.name, now);
        if downstreams.is_empty() {
            self.count(face, |c| c.drops += 1);
            return Vec::new();
        }
        self.count(face, |c| c.in_data += 1);
        self.cs.insert(data.clone(), now);
        let mut out = Vec::with_capacity(downstreams.len());
        for f in downstreams {
            if self.faces.contains_key(&f) {
                out.push(self.emit(f, Packet::Data(data.clone())));
            }
        }
        out
    }

    /// Periodic housekeeping; returns the number of PIT entries reaped.
    pub fn tick(&mut self, now: Millis) -> usize {
        self.pit.expire(now)
    }

    /// Sum of every face's counters.
    pub fn totals(&self) -> FaceCounters {
        self.faces.values().fold(FaceCounters::default(), |mut t, f| {
            t.in_interests += f.counters.in_interests;
            t.in_data += f.counters.in_data;
            t.out_interests += f.counters.out_interests;
            t.out_data += f.counters.out_data;
            t.drops += f.counters.drops;
            t
        })
    }

    /// Executes one management command line and returns the full reply.
    ///
    /// Replies end with a line starting with `ok` or `err`; `face list` and
    /// `stats` put one line per face before it.
    pub fn mgmt(&mut self, line: &str) -> String {
        match mgmt::Command::parse(line) {
            Err(reason) => format!("err {reason}"),
            Ok(cmd) => self.run_command(cmd),
        }
    }

    fn run_command(&mut self, cmd: mgmt::Command) -> String {
        use mgmt::Command;
        match cmd {
            Command::FaceAddUdp(target) => {
                if !self.udp_enabled {
                    return "err no-udp-listener".into();
                }
                let Some(addr) = target.to_socket_addrs().ok().and_then(|mut a| a.next()) else {
                    return "err bad-address".into();
                };
                format!("ok {}", self.udp_face(addr))
            }
            Command::FaceList => {
                let mut out = String::new();
                for f in self.faces.values() {
                    out.push_str(&format!("face={} kind={} remote={}\n", f.id, kind_str(f), f.remote));
                }
                out.push_str("ok");
                out
            }
            Command::RouteAdd { prefix, face, cost } => {
                if self.add_route(&prefix, face, cost) {
                    "ok".into()
                } else {
                    "err unknown-face".into()
                }
            }
            Command::RouteDel { prefix, face } => {
                if !self.faces.contains_key(&face) {
                    return "err unknown-face".into();
                }
                self.remove_route(&prefix, face);
                "ok".into()
            }
            Command::Stats => {
                let mut out = String::new();
                for f in self.faces.values() {
                    let c = &f.counters;
                    out.push_str(&format!(
                        "face={} kind={} in_interests={} in_data={} out_interests={} out_data={} drops={}\n",
                        f.id, kind_str(f), c.in_interests, c.in_data, c.out_interests, c.out_data, c.drops
                    ));
                }
                out.push_str("ok");
                out
            }
        }
    }

    fn emit(&mut self, face: FaceId, packet: Packet) -> Egress {
        match &packet {
            Packet::Interest(_) => self.count(face, |c| c.out_interests += 1),
            Packet::Data(_) => self.count(face, |c| c.out_data += 1),
        }
        Egress { face, packet }
    }

    fn count(&mut self, face: FaceId, f: impl FnOnce(&mut FaceCounters)) {
        if let Some(face) = self.faces.get_mut(&face) {
            f(&mut face.counters);
        }
    }
}

fn kind_str(f: &Face) -> &'static str {
    match f.kind() {
        FaceKind::Memory => "memory",
        FaceKind::Udp => "udp",
    }
}
