//! The forwarder's three tables, each usable on its own: [`Fib`] for
//! longest-prefix routing, [`Pit`] for pending demand and aggregation, and
//! [`ContentStore`] for cached Data.
//!
//! All three are single-owner containers without internal locking.

mod cs;
mod fib;
mod pit;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use cs::{ContentStore, CsEntry, DEFAULT_CS_CAPACITY};
pub use fib::{Fib, FibEntry, NextHop};
pub use pit::{Downstream, InsertOutcome, Pit, PitEntry, NONCE_HISTORY};

/// Face identifier, unique for the lifetime of one forwarder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FaceId(pub u32);

impl fmt::Display for FaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
