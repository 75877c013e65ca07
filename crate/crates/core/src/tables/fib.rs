use std::collections::HashMap;

use super::FaceId;
use crate::wire::{Component, Name};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NextHop {
    pub face: FaceId,
    pub cost: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FibEntry {
    pub prefix: Name,
    nexthops: Vec<NextHop>,
}

impl FibEntry {
    pub fn nexthops(&self) -> &[NextHop] {
        &self.nexthops
    }

    /// Lowest cost nexthop other than `except`; ties go to the lowest face id.
    pub fn best_nexthop(&self, except: FaceId) -> Option<NextHop> {
        self.nexthops
            .iter()
            .filter(|nh| nh.face != except)
            .min_by_key(|nh| (nh.cost, nh.face))
            .copied()
    }
}

#[derive(Debug, Default)]
struct Node {
    children: HashMap<Component, Node>,
    entry: Option<FibEntry>,
}

/// Name-prefix routing table backed by a component trie.
#[derive(Debug, Default)]
pub struct Fib {
    root: Node,
    len: usize,
}

impl Fib {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of distinct prefixes.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Adds a nexthop, or updates its cost if `(prefix, face)` already exists.
    pub fn insert(&mut self, prefix: &Name, face: FaceId, cost: u32) {
        let mut node = &mut self.root;
        for c in prefix.components() {
            node = node.children.entry(c.clone()).or_default();
        }
        let entry = node.entry.get_or_insert_with(|| {
            self.len += 1;
            FibEntry {
                prefix: prefix.clone(),
                nexthops: Vec::new(),
            }
        });
        match entry.nexthops.iter_mut().find(|nh| nh.face == face) {
            Some(nh) => nh.cost = cost,
            None => entry.nexthops.push(NextHop { face, cost }),
        }
    }

    /// Removes one nexthop; the entry disappears with its last nexthop.
    pub fn remove(&mut self, prefix: &Name, face: FaceId) {
        if Self::remove_at(&mut self.root, prefix.components(), face) {
            self.len -= 1;
        }
    }

    // Returns true when an entry was dropped. Prunes empty trie nodes on the way back.
    fn remove_at(node: &mut Node, rest: &[Component], face: FaceId) -> bool {
        match rest.split_first() {
            None => {
                let Some(entry) = node.entry.as_mut() else {
                    return false;
                };
                entry.nexthops.retain(|nh| nh.face != face);
                if entry.nexthops.is_empty() {
                    node.entry = None;
                    true
                } else {
                    false
                }
            }
            Some((head, tail)) => {
                let Some(child) = node.children.get_mut(head) else {
                    return false;
                };
                let dropped = Self::remove_at(child, tail, face);
                if child.entry.is_none() && child.children.is_empty() {
                    node.children.remove(head);
                }
                dropped
            }
        }
    }

    /// Removes `face` from every entry.
    pub fn remove_face(&mut self, face: FaceId) {
        let prefixes: Vec<Name> = self
            .entries()
            .filter(|e| e.nexthops.iter().any(|nh| nh.face == face))
            .map(|e| e.prefix.clone())
            .collect();
        for p in prefixes {
            self.remove(&p, face);
        }
    }

    pub fn longest_prefix_match(&self, name: &Name) -> Option<&FibEntry> {
        let mut node = &self.root;
        let mut best = node.entry.as_ref();
        for c in name.components() {
            match node.children.get(c) {
                Some(child) => {
                    node = child;
                    if node.entry.is_some() {
                        best = node.entry.as_ref();
                    }
                }
                None => break,
            }
        }
        best
    }

    pub fn get(&self, prefix: &Name) -> Option<&FibEntry> {
        let mut node = &self.root;
        for c in prefix.components() {
            node = node.children.get(c)?;
        }
        node.entry.as_ref()
    }

    pub fn entries(&self) -> impl Iterator<Item = &FibEntry> {
        let mut stack = vec![&self.root];
        std::iter::from_fn(move || {
            while let Some(node) = stack.pop() {
                stack.extend(node.children.values());
                if node.entry.is_some() {
                    return node.entry.as_ref();
                }
            }
            None
        })
    }
}
