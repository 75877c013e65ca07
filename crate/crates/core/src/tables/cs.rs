use std::collections::{BTreeMap, HashMap};

use crate::clock::Millis;
use crate::wire::{Data, Name};

pub const DEFAULT_CS_CAPACITY: usize = 4096;

#[derive(Debug, Clone)]
pub struct CsEntry {
    pub data: Data,
    pub inserted_at: Millis,
    stamp: u64,
}

impl CsEntry {
    pub fn is_fresh(&self, now: Millis) -> bool {
        now.saturating_sub(self.inserted_at) < self.data.freshness_ms as Millis
    }
}

/// Exact-name Data cache with strict LRU eviction.
///
/// Stale entries stay until evicted but are never returned.
#[derive(Debug)]
pub struct ContentStore {
    capacity: usize,
    entries: HashMap<Name, CsEntry>,
    recency: BTreeMap<u64, Name>,
    next_stamp: u64,
}

impl ContentStore {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: HashMap::new(),
            recency: BTreeMap::new(),
            next_stamp: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, data: Data, now: Millis) {
        if self.capacity == 0 {
            return;
        }
        let stamp = self.bump();
        let name = data.name.clone();
        let entry = CsEntry {
            data,
            inserted_at: now,
            stamp,
        };
        if let Some(old) = self.entries.insert(name.clone(), entry) {
            self.recency.remove(&old.stamp);
        }
        self.recency.insert(stamp, name);
        while self.entries.len() > self.capacity {
            let (_, victim) = self.recency.pop_first().expect("non-empty");
            self.entries.remove(&victim);
        }
    }

    /// Fresh Data for exactly `name`; a hit becomes most recently used.
    pub fn lookup(&mut self, name: &Name, now: Millis) -> Option<&Data> {
        if !self.entries.get(name)?.is_fresh(now) {
            return None;
        }
        let stamp = self.bump();
        let entry = self.entries.get_mut(name)?;
        self.recency.remove(&entry.stamp);
        entry.stamp = stamp;
        self.recency.insert(stamp, name.clone());
        Some(&entry.data)
    }

    /// Looks without touching recency.
    pub fn peek(&self, name: &Name) -> Option<&CsEntry> {
        self.entries.get(name)
    }

    fn bump(&mut self) -> u64 {
        self.next_stamp += 1;
        self.next_stamp
    }
}

impl Default for ContentStore {
    fn default() -> Self {
        Self::new(DEFAULT_CS_CAPACITY)
    }
}
