use std::fmt;

use crate::fabric::GroupKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CollectiveKind {
    Barrier,
    Allgatherv,
    Broadcast,
    Gather,
    AllreduceSum,
    AllreduceMinLoc,
    ReduceScatterBlock,
    Alltoallv,
}

impl CollectiveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CollectiveKind::Barrier => "barrier",
            CollectiveKind::Allgatherv => "allgatherv",
            CollectiveKind::Broadcast => "broadcast",
            CollectiveKind::Gather => "gather",
            CollectiveKind::AllreduceSum => "allreduce(sum)",
            CollectiveKind::AllreduceMinLoc => "allreduce(minloc)",
            CollectiveKind::ReduceScatterBlock => "reduce_scatter_block",
            CollectiveKind::Alltoallv => "alltoallv",
        }
    }
}

impl fmt::Display for CollectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One rank's participation in one collective call.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedgerEvent {
    pub phase: &'static str,
    pub kind: CollectiveKind,
    pub group: Vec<usize>,
    pub group_kind: GroupKind,
    /// Per-group call counter; `(group, seq)` identifies the call.
    pub seq: u64,
    pub rank: usize,
    pub position: usize,
    pub root: Option<usize>,
    /// Word counts describing the call, by kind:
    /// allgatherv / gather: every member's contribution in group order;
    /// broadcast: `[m]`; allreduce: `[elements, words_per_element]`;
    /// reduce-scatter: `[block]`; alltoallv: this rank's per-destination sizes.
    pub sizes: Vec<usize>,
    pub messages: usize,
    pub words: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Tally {
    pub messages: usize,
    pub words: usize,
}

impl std::ops::AddAssign for Tally {
    fn add_assign(&mut self, rhs: Self) {
        self.messages += rhs.messages;
        self.words += rhs.words;
    }
}

/// Every send charged during a run, kept per rank in program order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CommLedger {
    ranks: usize,
    events: Vec<LedgerEvent>,
}

impl CommLedger {
    pub(crate) fn from_rank_events(per_rank: Vec<Vec<LedgerEvent>>) -> Self {
        Self {
            ranks: per_rank.len(),
            events: per_rank.into_iter().flatten().collect(),
        }
    }

    /// Ledger of a run that sent nothing.
    pub fn empty(ranks: usize) -> Self {
        Self {
            ranks,
            events: Vec::new(),
        }
    }

    pub fn ranks(&self) -> usize {
        self.ranks
    }

    pub fn events(&self) -> &[LedgerEvent] {
        &self.events
    }

    /// Phase labels in order of first appearance (rank 0 first).
    pub fn phases(&self) -> Vec<&'static str> {
        let mut seen = Vec::new();
        for e in &self.events {
            if !seen.contains(&e.phase) {
                seen.push(e.phase);
            }
        }
        seen
    }

    pub fn per_rank(&self) -> Vec<Tally> {
        let mut t = vec![Tally::default(); self.ranks];
        for e in &self.events {
            t[e.rank] += Tally {
                messages: e.messages,
                words: e.words,
            };
        }
        t
    }

    /// Tally of one rank restricted to the given phases.
    pub fn rank_tally(&self, rank: usize, phases: &[&str]) -> Tally {
        let mut t = Tally::default();
        for e in self
            .events
            .iter()
            .filter(|e| e.rank == rank && phases.contains(&e.phase))
        {
            t += Tally {
                messages: e.messages,
                words: e.words,
            };
        }
        t
    }

    /// Group-wide tally of one phase.
    pub fn phase_total(&self, phase: &str) -> Tally {
        let mut t = Tally::default();
        for e in self.events.iter().filter(|e| e.phase == phase) {
            t += Tally {
                messages: e.messages,
                words: e.words,
            };
        }
        t
    }

    pub fn per_phase(&self) -> Vec<(&'static str, Tally)> {
        self.phases()
            .into_iter()
            .map(|p| (p, self.phase_total(p)))
            .collect()
    }

    /// Largest per-rank word count over the union of `phases`.
    pub fn max_rank_words(&self, phases: &[&str]) -> usize {
        (0..self.ranks)
            .map(|r| self.rank_tally(r, phases).words)
            .max()
            .unwrap_or(0)
    }

    pub fn total(&self) -> Tally {
        let mut t = Tally::default();
        for e in &self.events {
            t += Tally {
                messages: e.messages,
                words: e.words,
            };
        }
        t
    }

    /// Events grouped by collective call, calls in order of first appearance.
    pub fn calls(&self) -> Vec<Vec<&LedgerEvent>> {
        let mut keys: Vec<(&[usize], u64)> = Vec::new();
        let mut calls: Vec<Vec<&LedgerEvent>> = Vec::new();
        for e in &self.events {
            let key = (e.group.as_slice(), e.seq);
            match keys.iter().position(|k| *k == key) {
                Some(i) => calls[i].push(e),
                None => {
                    keys.push(key);
                    calls.push(vec![e]);
                }
            }
        }
        calls
    }

    /// CSV with columns `phase,rank,messages,words`, one row per phase and
    /// rank. `phases` are always emitted (zero-filled) and come first; any
    /// other phase follows in order of first appearance.
    pub fn to_csv(&self, phases: &[&str]) -> String {
        let mut order: Vec<&str> = phases.to_vec();
        for p in self.phases() {
            if !order.contains(&p) {
                order.push(p);
            }
        }
        let mut out = String::from("phase,rank,messages,words\n");
        for p in order {
            for r in 0..self.ranks {
                let t = self.rank_tally(r, &[p]);
                out.push_str(&format!("{p},{r},{},{}\n", t.messages, t.words));
            }
        }
        out
    }
}
