//! Simulated message-passing fabric.
//!
//! Every virtual rank runs the same program on its own thread and talks to
//! the others only through blocking collectives on [`Comm`]. Each collective
//! charges the sending ranks according to a fixed algorithm (ring, binomial
//! tree, flat, pairwise) so that the resulting [`CommLedger`] is an exact,
//! closed-form function of the payload sizes. Reductions always combine
//! contributions in ascending group order, which makes results independent of
//! thread scheduling.

mod comm;
pub mod counting;
mod grid;
mod ledger;

pub use comm::{run_ranks, Comm, RunOutput, Schedule};
pub use grid::{GroupHandle, GroupKind, Grid, Layout};
pub use ledger::{CollectiveKind, CommLedger, LedgerEvent, Tally};

use thiserror::Error;

/// Something that travels over the fabric. `WORDS` is its size in ledger
/// words: one per scalar or index.
pub trait Word: Clone + Send + Sync + 'static {
    const WORDS: usize = 1;
}

impl Word for f32 {}
impl Word for f64 {}
impl Word for u32 {}
impl Word for u64 {}
impl Word for usize {}

/// `(value, index)` pair reduced by minimum value, lowest index on ties.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinLoc<T> {
    pub value: T,
    pub index: u32,
}

impl<T: Clone + Send + Sync + 'static> Word for MinLoc<T> {
    const WORDS: usize = 2;
}

impl<T: PartialOrd + Copy> MinLoc<T> {
    /// Keeps `self` unless `other` is strictly smaller, or equal with a
    /// lower index.
    pub fn combine(&mut self, other: &Self) {
        if other.value < self.value || (other.value == self.value && other.index < self.index) {
            *self = *other;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FabricError {
    #[error("deadlock in phase '{phase}': {detail}")]
    Deadlock { phase: String, detail: String },

    #[error("collective mismatch in phase '{phase}': {detail}")]
    Mismatch { phase: String, detail: String },

    #[error("payload length mismatch in {kind} (phase '{phase}'): {detail}")]
    LengthMismatch {
        kind: &'static str,
        phase: String,
        detail: String,
    },

    #[error("rank {rank} is not a member of group {members:?}")]
    NotMember { rank: usize, members: Vec<usize> },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("aborted because rank {rank} failed")]
    Aborted { rank: usize },
}
