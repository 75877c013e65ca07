use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use super::FaceId;
use crate::clock::Millis;
use crate::wire::{Interest, Name};

/// Nonces remembered per entry for loop suppression.
pub const NONCE_HISTORY: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Downstream {
    pub face: FaceId,
    pub nonce: u32,
    pub expiry: Millis,
}

#[derive(Debug, Clone)]
pub struct PitEntry {
    pub name: Name,
    downstreams: Vec<Downstream>,
    upstreams: Vec<FaceId>,
    expiry: Millis,
    nonces: VecDeque<u32>,
}

impl PitEntry {
    pub fn downstreams(&self) -> &[Downstream] {
        &self.downstreams
    }

    pub fn upstreams(&self) -> &[FaceId] {
        &self.upstreams
    }

    /// Latest deadline over all downstream records.
    pub fn expiry(&self) -> Millis {
        self.expiry
    }

    fn remember(&mut self, nonce: u32) {
        if self.nonces.len() == NONCE_HISTORY {
            self.nonces.pop_front();
        }
        self.nonces.push_back(nonce);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    /// A fresh entry; the caller forwards the Interest.
    New,
    /// Joined a live entry; the caller must not forward.
    Aggregated,
    /// The nonce was already seen for this name; the caller drops.
    DuplicateNonce,
}

/// Pending Interest Table with exact-name entries.
///
/// Expiry is tracked in a min-heap with lazy deletion, so `expire` only
/// touches entries whose deadline has passed. An entry whose deadline has
/// passed but has not been reaped yet is treated as absent by every other
/// operation.
#[derive(Debug, Default)]
pub struct Pit {
    entries: HashMap<Name, PitEntry>,
    deadlines: BinaryHeap<Reverse<(Millis, Name)>>,
    records: usize,
}

impl Pit {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total downstream records across all entries.
    pub fn downstream_records(&self) -> usize {
        self.records
    }

    /// Live entry for `name` at `now`.
    pub fn get(&self, name: &Name, now: Millis) -> Option<&PitEntry> {
        self.entries.get(name).filter(|e| e.expiry > now)
    }

    pub fn insert_or_aggregate(
        &mut self,
        interest: &Interest,
        face: FaceId,
        now: Millis,
    ) -> InsertOutcome {
        let deadline = now.saturating_add(interest.lifetime_ms as Millis);
        self.reap_if_stale(&interest.name, now);
        let record = Downstream {
            face,
            nonce: interest.nonce,
            expiry: deadline,
        };
        match self.entries.get_mut(&interest.name) {
            Some(entry) => {
                if entry.nonces.contains(&interest.nonce)
                    || entry
                        .downstreams
                        .iter()
                        .any(|d| d.face == face && d.nonce == interest.nonce)
                {
                    return InsertOutcome::DuplicateNonce;
                }
                entry.remember(interest.nonce);
                entry.downstreams.push(record);
                self.records += 1;
                if deadline > entry.expiry {
                    entry.expiry = deadline;
                    self.deadlines
                        .push(Reverse((deadline, interest.name.clone())));
                }
                InsertOutcome::Aggregated
            }
            None => {
                let mut entry = PitEntry {
                    name: interest.name.clone(),
                    downstreams: vec![record],
                    upstreams: Vec::new(),
                    expiry: deadline,
                    nonces: VecDeque::with_capacity(NONCE_HISTORY),
                };
                entry.remember(interest.nonce);
                self.entries.insert(interest.name.clone(), entry);
                self.records += 1;
                self.deadlines
                    .push(Reverse((deadline, interest.name.clone())));
                InsertOutcome::New
            }
        }
    }

    /// Notes that the entry for `name` was forwarded out of `face`.
    pub fn add_upstream(&mut self, name: &Name, face: FaceId) {
        if let Some(entry) = self.entries.get_mut(name) {
            if !entry.upstreams.contains(&face) {
                entry.upstreams.push(face);
            }
        }
    }

    /// Drops the entry for `name` without satisfying it.
    pub fn remove(&mut self, name: &Name) -> Option<PitEntry> {
        let entry = self.entries.remove(name)?;
        self.records -= entry.downstreams.len();
        Some(entry)
    }

    /// Consumes the live entry for `name` and returns its distinct downstream
    /// faces in arrival order. Empty means the Data was unsolicited.
    pub fn satisfy(&mut self, name: &Name, now: Millis) -> Vec<FaceId> {
        self.reap_if_stale(name, now);
        let Some(entry) = self.remove(name) else {
            return Vec::new();
        };
        let mut faces: Vec<FaceId> = Vec::with_capacity(entry.downstreams.len());
        for d in &entry.downstreams {
            if !faces.contains(&d.face) {
                faces.push(d.face);
            }
        }
        faces
    }

    /// Reaps every entry whose deadline is `<= now`; returns how many.
    pub fn expire(&mut self, now: Millis) -> usize {
        let mut reaped = 0;
        while let Some(Reverse((deadline, _))) = self.deadlines.peek() {
            if *deadline > now {
                break;
            }
            let Reverse((deadline, name)) = self.deadlines.pop().expect("peeked");
            // Stale heap items (entry gone, or deadline since extended) are skipped.
            if self.entries.get(&name).is_some_and(|e| e.expiry == deadline) {
                self.remove(&name);
                reaped += 1;
            }
        }
        reaped
    }

    fn reap_if_stale(&mut self, name: &Name, now: Millis) {
        if self.entries.get(name).is_some_and(|e| e.expiry <= now) {
            self.remove(name);
        }
    }
}
