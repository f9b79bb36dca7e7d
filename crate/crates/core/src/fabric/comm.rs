use std::any::Any;
use std::collections::HashMap;
use std::ops::AddAssign;
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::thread;

use num_traits::Zero;
use parking_lot::{Condvar, Mutex, MutexGuard};

use crate::fabric::counting;
use crate::fabric::{
    CollectiveKind, CommLedger, FabricError, Grid, GroupHandle, LedgerEvent, MinLoc, Word,
};

type Contribution = Arc<dyn Any + Send + Sync>;

/// How rank threads are interleaved.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Schedule {
    /// All ranks compute at the same time.
    #[default]
    Concurrent,
    /// At most one rank computes at a time; a rank yields only while it
    /// waits inside a collective.
    Serialized,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct CallKey {
    group: Vec<usize>,
    seq: u64,
}

#[derive(Clone, Debug)]
enum Status {
    Running,
    Blocked(CallKey),
    Done,
}

struct Slot {
    kind: CollectiveKind,
    phase: &'static str,
    root: Option<usize>,
    contributions: Vec<Option<Contribution>>,
    arrived: usize,
    taken: usize,
}

struct State {
    slots: HashMap<CallKey, Slot>,
    status: Vec<Status>,
    failure: Option<FabricError>,
    /// Rank whose own program failed first, if any.
    origin: Option<usize>,
}

impl State {
    /// Flags a deadlock once no rank can make progress: nobody is running
    /// and at least one rank waits in a collective that cannot complete.
    fn detect_deadlock(&mut self) {
        if self.failure.is_some() || self.status.iter().any(|s| matches!(s, Status::Running)) {
            return;
        }
        let Some((rank, key)) = self.status.iter().enumerate().find_map(|(r, s)| match s {
            Status::Blocked(k) => Some((r, k.clone())),
            _ => None,
        }) else {
            return;
        };
        let slot = &self.slots[&key];
        let missing: Vec<String> = key
            .group
            .iter()
            .enumerate()
            .filter(|(pos, _)| slot.contributions[*pos].is_none())
            .map(|(_, &m)| match &self.status[m] {
                Status::Done => format!("rank {m} (finished)"),
                Status::Blocked(other) => {
                    let o = &self.slots[other];
                    format!(
                        "rank {m} (waiting in {} on group {:?}, phase '{}')",
                        o.kind, other.group, o.phase
                    )
                }
                Status::Running => format!("rank {m}"),
            })
            .collect();
        self.failure = Some(FabricError::Deadlock {
            phase: slot.phase.to_string(),
            detail: format!(
                "rank {rank} waits in {} call #{} on group {:?}; never entered by {}",
                slot.kind,
                key.seq,
                key.group,
                missing.join(", ")
            ),
        });
    }
}

struct Shared {
    state: Mutex<State>,
    cv: Condvar,
    token: Mutex<()>,
    schedule: Schedule,
}

/// A rank's handle on the fabric.
pub struct Comm<'f> {
    rank: usize,
    grid: &'f Grid,
    shared: &'f Shared,
    seqs: HashMap<Vec<usize>, u64>,
    phase: &'static str,
    events: Vec<LedgerEvent>,
    token: Option<MutexGuard<'f, ()>>,
}

impl<'f> Comm<'f> {
    fn new(rank: usize, grid: &'f Grid, shared: &'f Shared) -> Self {
        let mut comm = Self {
            rank,
            grid,
            shared,
            seqs: HashMap::new(),
            phase: "unlabelled",
            events: Vec::new(),
            token: None,
        };
        comm.acquire_token();
        comm
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn grid(&self) -> &Grid {
        self.grid
    }

    /// Label charged to subsequent collectives.
    pub fn set_phase(&mut self, phase: &'static str) {
        self.phase = phase;
    }

    pub fn phase(&self) -> &'static str {
        self.phase
    }

    fn acquire_token(&mut self) {
        if self.shared.schedule == Schedule::Serialized && self.token.is_none() {
            self.token = Some(self.shared.token.lock());
        }
    }

    fn finish(&mut self, failed: bool) {
        self.token = None;
        let mut st = self.shared.state.lock();
        st.status[self.rank] = Status::Done;
        if failed && st.failure.is_none() {
            st.failure = Some(FabricError::Aborted { rank: self.rank });
            st.origin = Some(self.rank);
        }
        st.detect_deadlock();
        self.shared.cv.notify_all();
    }

    /// Deposits this rank's contribution and blocks until every member of
    /// `group` has deposited theirs. Returns all contributions in group order.
    fn rendezvous(
        &mut self,
        group: &GroupHandle,
        kind: CollectiveKind,
        root: Option<usize>,
        payload: Contribution,
    ) -> Result<(usize, u64, Vec<Contribution>), FabricError> {
        let pos = group.position(self.rank).ok_or_else(|| FabricError::NotMember {
            rank: self.rank,
            members: group.members().to_vec(),
        })?;
        let counter = self.seqs.entry(group.members().to_vec()).or_insert(0);
        let seq = *counter;
        *counter += 1;
        let key = CallKey {
            group: group.members().to_vec(),
            seq,
        };
        let g = group.len();
        let phase = self.phase;

        let mut st = self.shared.state.lock();
        if let Some(f) = &st.failure {
            return Err(f.clone());
        }
        let slot = st.slots.entry(key.clone()).or_insert_with(|| Slot {
            kind,
            phase,
            root,
            contributions: vec![None; g],
            arrived: 0,
            taken: 0,
        });
        if slot.kind != kind || slot.root != root || slot.phase != phase {
            let err = FabricError::Mismatch {
                phase: phase.to_string(),
                detail: format!(
                    "rank {} entered {kind} (root {root:?}) as call #{seq} on group {:?}, \
                     which was opened as {} (root {:?}) in phase '{}'",
                    self.rank, key.group, slot.kind, slot.root, slot.phase
                ),
            };
            st.failure = Some(err.clone());
            self.shared.cv.notify_all();
            return Err(err);
        }
        slot.contributions[pos] = Some(payload);
        slot.arrived += 1;

        if slot.arrived == g {
            for &m in &key.group {
                if m != self.rank {
                    st.status[m] = Status::Running;
                }
            }
            self.shared.cv.notify_all();
        } else {
            st.status[self.rank] = Status::Blocked(key.clone());
            st.detect_deadlock();
            if st.failure.is_some() {
                self.shared.cv.notify_all();
            }
            self.token = None;
            loop {
                if let Some(f) = &st.failure {
                    let err = f.clone();
                    drop(st);
                    self.acquire_token();
                    return Err(err);
                }
                if st.slots[&key].arrived == g {
                    break;
                }
                self.shared.cv.wait(&mut st);
            }
        }

        let slot = st.slots.get_mut(&key).expect("completed slot is present");
        let all: Vec<Contribution> = slot
            .contributions
            .iter()
            .map(|c| c.clone().expect("every member contributed"))
            .collect();
        slot.taken += 1;
        if slot.taken == g {
            st.slots.remove(&key);
        }
        st.status[self.rank] = Status::Running;
        drop(st);
        self.acquire_token();
        Ok((pos, seq, all))
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        kind: CollectiveKind,
        group: &GroupHandle,
        seq: u64,
        pos: usize,
        root: Option<usize>,
        sizes: Vec<usize>,
        (messages, words): (usize, usize),
    ) {
        self.events.push(LedgerEvent {
            phase: self.phase,
            kind,
            group: group.members().to_vec(),
            group_kind: group.kind(),
            seq,
            rank: self.rank,
            position: pos,
            root,
            sizes,
            messages,
            words,
        });
    }

    fn downcast<X: Any + Send + Sync>(&self, parts: Vec<Contribution>) -> Result<Vec<Arc<X>>, FabricError> {
        parts
            .into_iter()
            .map(|p| {
                p.downcast::<X>().map_err(|_| FabricError::Mismatch {
                    phase: self.phase.to_string(),
                    detail: "members contributed different element types".into(),
                })
            })
            .collect()
    }

    fn length_error(&self, kind: CollectiveKind, detail: String) -> FabricError {
        FabricError::LengthMismatch {
            kind: kind.as_str(),
            phase: self.phase.to_string(),
            detail,
        }
    }

    pub fn barrier(&mut self, group: &GroupHandle) -> Result<(), FabricError> {
        let kind = CollectiveKind::Barrier;
        let (pos, seq, _) = self.rendezvous(group, kind, None, Arc::new(()))?;
        self.record(kind, group, seq, pos, None, Vec::new(), (0, 0));
        Ok(())
    }

    /// Every member receives the concatenation of all payloads in group order.
    pub fn allgatherv<W: Word>(&mut self, group: &GroupHandle, local: Vec<W>) -> Result<Vec<W>, FabricError> {
        let kind = CollectiveKind::Allgatherv;
        let (pos, seq, parts) = self.rendezvous(group, kind, None, Arc::new(local))?;
        let parts = self.downcast::<Vec<W>>(parts)?;
        let sizes: Vec<usize> = parts.iter().map(|p| p.len() * W::WORDS).collect();
        let charge = counting::ring_allgather(&sizes, pos);
        self.record(kind, group, seq, pos, None, sizes, charge);
        Ok(parts.iter().flat_map(|p| p.iter().cloned()).collect())
    }

    /// `root` (a global rank) supplies `Some(payload)`; everyone receives it.
    pub fn broadcast<W: Word>(
        &mut self,
        group: &GroupHandle,
        root: usize,
        payload: Option<Vec<W>>,
    ) -> Result<Vec<W>, FabricError> {
        let kind = CollectiveKind::Broadcast;
        let root_pos = self.root_position(group, root)?;
        let (pos, seq, parts) = self.rendezvous(group, kind, Some(root_pos), Arc::new(payload))?;
        let parts = self.downcast::<Option<Vec<W>>>(parts)?;
        let data = parts[root_pos]
            .as_ref()
            .clone()
            .ok_or_else(|| self.length_error(kind, format!("root rank {root} supplied no payload")))?;
        let m = data.len() * W::WORDS;
        let charge = counting::binomial_broadcast(group.len(), root_pos, pos, m);
        self.record(kind, group, seq, pos, Some(root_pos), vec![m], charge);
        Ok(data)
    }

    /// `root` receives the group-ordered concatenation; others receive `None`.
    pub fn gather<W: Word>(
        &mut self,
        group: &GroupHandle,
        root: usize,
        local: Vec<W>,
    ) -> Result<Option<Vec<W>>, FabricError> {
        let kind = CollectiveKind::Gather;
        let root_pos = self.root_position(group, root)?;
        let (pos, seq, parts) = self.rendezvous(group, kind, Some(root_pos), Arc::new(local))?;
        let parts = self.downcast::<Vec<W>>(parts)?;
        let sizes: Vec<usize> = parts.iter().map(|p| p.len() * W::WORDS).collect();
        let charge = counting::flat_gather(root_pos, pos, sizes[pos]);
        self.record(kind, group, seq, pos, Some(root_pos), sizes, charge);
        Ok((pos == root_pos).then(|| parts.iter().flat_map(|p| p.iter().cloned()).collect()))
    }

    /// Elementwise sum, combined in ascending group order.
    pub fn allreduce_sum<T>(&mut self, group: &GroupHandle, local: Vec<T>) -> Result<Vec<T>, FabricError>
    where
        T: Word + Copy + Zero + AddAssign,
    {
        self.allreduce_with(group, CollectiveKind::AllreduceSum, local, |a, b| *a += *b)
    }

    /// Elementwise minimum value with its index; ties keep the lower index.
    pub fn allreduce_minloc<T>(
        &mut self,
        group: &GroupHandle,
        local: Vec<MinLoc<T>>,
    ) -> Result<Vec<MinLoc<T>>, FabricError>
    where
        T: PartialOrd + Copy + Send + Sync + 'static,
    {
        self.allreduce_with(group, CollectiveKind::AllreduceMinLoc, local, MinLoc::combine)
    }

    fn allreduce_with<X: Word + Copy>(
        &mut self,
        group: &GroupHandle,
        kind: CollectiveKind,
        local: Vec<X>,
        combine: impl Fn(&mut X, &X),
    ) -> Result<Vec<X>, FabricError> {
        let (pos, seq, parts) = self.rendezvous(group, kind, None, Arc::new(local))?;
        let parts = self.downcast::<Vec<X>>(parts)?;
        let m = parts[0].len();
        if parts.iter().any(|p| p.len() != m) {
            let lens: Vec<usize> = parts.iter().map(|p| p.len()).collect();
            return Err(self.length_error(kind, format!("member payload lengths {lens:?}")));
        }
        let mut acc = parts[0].as_ref().clone();
        for p in &parts[1..] {
            for (a, b) in acc.iter_mut().zip(p.iter()) {
                combine(a, b);
            }
        }
        let charge = counting::ring_allreduce(m, X::WORDS, group.len(), pos);
        self.record(kind, group, seq, pos, None, vec![m, X::WORDS], charge);
        Ok(acc)
    }

    /// Every member supplies `g·m` elements; the member at group position
    /// `l` receives the ascending-order sum of everyone's `l`-th block.
    pub fn reduce_scatter_block<T>(&mut self, group: &GroupHandle, payload: Vec<T>) -> Result<Vec<T>, FabricError>
    where
        T: Word + Copy + Zero + AddAssign,
    {
        let kind = CollectiveKind::ReduceScatterBlock;
        let g = group.len();
        let (pos, seq, parts) = self.rendezvous(group, kind, None, Arc::new(payload))?;
        let parts = self.downcast::<Vec<T>>(parts)?;
        let len = parts[0].len();
        if parts.iter().any(|p| p.len() != len) || len % g != 0 {
            let lens: Vec<usize> = parts.iter().map(|p| p.len()).collect();
            return Err(self.length_error(
                kind,
                format!("member payload lengths {lens:?} must be equal and divisible by {g}"),
            ));
        }
        let m = len / g;
        let span = pos * m..(pos + 1) * m;
        let mut acc = parts[0][span.clone()].to_vec();
        for p in &parts[1..] {
            for (a, b) in acc.iter_mut().zip(&p[span.clone()]) {
                *a += *b;
            }
        }
        let block = m * T::WORDS;
        let charge = counting::ring_reduce_scatter_block(g, block);
        self.record(kind, group, seq, pos, None, vec![block], charge);
        Ok(acc)
    }

    /// `per_dest[d]` goes to group position `d`; the result holds what each
    /// source sent to this rank, in group order.
    pub fn alltoallv<W: Word>(
        &mut self,
        group: &GroupHandle,
        per_dest: Vec<Vec<W>>,
    ) -> Result<Vec<Vec<W>>, FabricError> {
        let kind = CollectiveKind::Alltoallv;
        let g = group.len();
        let (pos, seq, parts) = self.rendezvous(group, kind, None, Arc::new(per_dest))?;
        let parts = self.downcast::<Vec<Vec<W>>>(parts)?;
        if parts.iter().any(|p| p.len() != g) {
            let lens: Vec<usize> = parts.iter().map(|p| p.len()).collect();
            return Err(self.length_error(kind, format!("destination counts {lens:?}, expected {g}")));
        }
        let sizes: Vec<usize> = parts[pos].iter().map(|d| d.len() * W::WORDS).collect();
        let charge = counting::pairwise_alltoallv(&sizes, pos);
        self.record(kind, group, seq, pos, None, sizes, charge);
        Ok(parts.iter().map(|p| p[pos].clone()).collect())
    }

    fn root_position(&self, group: &GroupHandle, root: usize) -> Result<usize, FabricError> {
        group.position(root).ok_or_else(|| FabricError::NotMember {
            rank: root,
            members: group.members().to_vec(),
        })
    }
}

/// Per-rank program results together with the merged ledger.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput<R> {
    pub results: Vec<R>,
    pub ledger: CommLedger,
}

/// A rank's result (or panic payload) and the events it recorded.
type RankOutcome<R, E> = (thread::Result<Result<R, E>>, Vec<LedgerEvent>);

/// Runs `program` once per rank of `grid`, each on its own thread.
///
/// If any rank fails, the error of the rank whose own program failed first
/// is returned; ranks stuck in collectives are released with
/// [`FabricError::Aborted`]. A collective that can never complete is
/// reported as [`FabricError::Deadlock`] naming its phase. A panicking rank
/// re-raises its panic here.
pub fn run_ranks<R, E, F>(grid: &Grid, schedule: Schedule, program: F) -> Result<RunOutput<R>, E>
where
    R: Send,
    E: From<FabricError> + Send,
    F: Fn(&mut Comm<'_>) -> Result<R, E> + Sync,
{
    let p = grid.ranks();
    let shared = Shared {
        state: Mutex::new(State {
            slots: HashMap::new(),
            status: vec![Status::Running; p],
            failure: None,
            origin: None,
        }),
        cv: Condvar::new(),
        token: Mutex::new(()),
        schedule,
    };

    let outcomes: Vec<RankOutcome<R, E>> = thread::scope(|s| {
        let handles: Vec<_> = (0..p)
            .map(|rank| {
                let shared = &shared;
                let program = &program;
                s.spawn(move || {
                    let mut comm = Comm::new(rank, grid, shared);
                    let out = catch_unwind(AssertUnwindSafe(|| program(&mut comm)));
                    comm.finish(!matches!(out, Ok(Ok(_))));
                    (out, std::mem::take(&mut comm.events))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("rank thread does not unwind past catch_unwind"))
            .collect()
    });

    let origin = shared.state.lock().origin;
    let mut results = Vec::with_capacity(p);
    let mut events = Vec::with_capacity(p);
    let mut errors: Vec<Option<E>> = Vec::with_capacity(p);
    let mut panic = None;
    for (out, ev) in outcomes {
        events.push(ev);
        match out {
            Ok(Ok(r)) => {
                results.push(r);
                errors.push(None);
            }
            Ok(Err(e)) => errors.push(Some(e)),
            Err(payload) => {
                errors.push(None);
                panic.get_or_insert(payload);
            }
        }
    }
    if let Some(payload) = panic {
        resume_unwind(payload);
    }
    if results.len() == p {
        return Ok(RunOutput {
            results,
            ledger: CommLedger::from_rank_events(events),
        });
    }
    if let Some(r) = origin {
        if let Some(e) = errors[r].take() {
            return Err(e);
        }
    }
    Err(errors
        .into_iter()
        .flatten()
        .next()
        .expect("a failed run has at least one rank error"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::Tally;

    fn world(p: usize) -> Grid {
        Grid::one_d(p).unwrap()
    }

    fn run<R: Send>(
        p: usize,
        program: impl Fn(&mut Comm<'_>) -> Result<R, FabricError> + Sync,
    ) -> Result<RunOutput<R>, FabricError> {
        run_ranks(&world(p), Schedule::Concurrent, program)
    }

    #[test]
    fn allgatherv_ring_counts() {
        let out = run(4, |c| {
            let g = c.grid().world();
            let r = c.rank() as u32;
            c.allgatherv(&g, vec![2 * r, 2 * r + 1])
        })
        .unwrap();
        for res in &out.results {
            assert_eq!(res, &(0..8).collect::<Vec<u32>>());
        }
        for t in out.ledger.per_rank() {
            assert_eq!(t.messages, 3);
        }
        assert_eq!(out.ledger.total().words, 24);

        let out = run(2, |c| {
            let g = c.grid().world();
            let len = if c.rank() == 0 { 5 } else { 3 };
            c.allgatherv(&g, vec![1.0f64; len])
        })
        .unwrap();
        assert_eq!(out.results[1].len(), 8);
        assert!(out.ledger.per_rank().iter().all(|t| t.messages == 1));
        assert_eq!(out.ledger.total().words, 8);

        let out = run(1, |c| c.allgatherv(&c.grid().world(), vec![7u32])).unwrap();
        assert_eq!(out.results[0], vec![7]);
        assert_eq!(out.ledger.total(), Tally::default());
    }

    #[test]
    fn broadcast_binomial_counts() {
        for (g, m, msgs, words) in [(4, 10, 3, 30), (1, 4, 0, 0), (3, 1, 2, 2)] {
            let out = run(g, |c| {
                let grp = c.grid().world();
                let root = g - 1;
                let payload = (c.rank() == root).then(|| vec![3u64; m]);
                c.broadcast(&grp, root, payload)
            })
            .unwrap();
            assert!(out.results.iter().all(|r| r == &vec![3u64; m]));
            let t = out.ledger.total();
            assert_eq!((t.messages, t.words), (msgs, words), "g={g}");
        }
    }

    #[test]
    fn gather_flat_counts() {
        let out = run(4, |c| {
            let r = c.rank() as u32;
            c.gather(&c.grid().world(), 0, vec![r, r])
        })
        .unwrap();
        assert_eq!(out.results[0], Some(vec![0, 0, 1, 1, 2, 2, 3, 3]));
        assert!(out.results[1..].iter().all(Option::is_none));
        assert_eq!((out.ledger.total().messages, out.ledger.total().words), (3, 6));

        let out = run(2, |c| {
            let len = if c.rank() == 0 { 0 } else { 4 };
            c.gather(&c.grid().world(), 0, vec![1.5f32; len])
        })
        .unwrap();
        assert_eq!(out.results[0].as_ref().unwrap().len(), 4);
        assert_eq!((out.ledger.total().messages, out.ledger.total().words), (1, 4));
    }

    #[test]
    fn allreduce_counts_and_minloc_ties() {
        let out = run(4, |c| {
            let r = c.rank() as f64;
            c.allreduce_sum(&c.grid().world(), vec![r; 8])
        })
        .unwrap();
        assert!(out.results.iter().all(|v| v == &vec![6.0; 8]));
        for t in out.ledger.per_rank() {
            assert_eq!((t.messages, t.words), (6, 12));
        }
        assert_eq!(out.ledger.total().words, 48);

        let out = run(2, |c| {
            let idx = c.rank() as u32 + 10;
            let local = vec![MinLoc { value: 1.0f64, index: idx }; 3];
            c.allreduce_minloc(&c.grid().world(), local)
        })
        .unwrap();
        assert!(out.results.iter().all(|v| v.iter().all(|m| m.index == 10)));
        assert_eq!(out.ledger.total().words, 12);

        let out = run(1, |c| c.allreduce_sum(&c.grid().world(), vec![2u64, 3])).unwrap();
        assert_eq!(out.results[0], vec![2, 3]);
        assert_eq!(out.ledger.total(), Tally::default());
    }

    #[test]
    fn allreduce_length_mismatch_is_an_error() {
        let err = run(2, |c| {
            let len = 2 + c.rank();
            c.allreduce_sum(&c.grid().world(), vec![1u64; len])
        })
        .unwrap_err();
        assert!(matches!(err, FabricError::LengthMismatch { .. }), "{err}");
    }

    #[test]
    fn reduce_scatter_block_counts() {
        let out = run(2, |c| {
            let payload = if c.rank() == 0 {
                vec![1.0, 2.0, 3.0, 4.0]
            } else {
                vec![10.0, 20.0, 30.0, 40.0]
            };
            c.reduce_scatter_block(&c.grid().world(), payload)
        })
        .unwrap();
        assert_eq!(out.results, vec![vec![11.0, 22.0], vec![33.0, 44.0]]);
        for t in out.ledger.per_rank() {
            assert_eq!((t.messages, t.words), (1, 2));
        }

        let out = run(4, |c| c.reduce_scatter_block(&c.grid().world(), vec![1u64; 20])).unwrap();
        assert!(out.results.iter().all(|v| v == &vec![4u64; 5]));
        for t in out.ledger.per_rank() {
            assert_eq!((t.messages, t.words), (3, 15));
        }

        let err = run(2, |c| c.reduce_scatter_block(&c.grid().world(), vec![1u64; 3])).unwrap_err();
        assert!(matches!(err, FabricError::LengthMismatch { .. }));
    }

    #[test]
    fn alltoallv_counts() {
        let out = run(2, |c| {
            let r = c.rank() as u32;
            let other = 1 - c.rank();
            let mut per = vec![Vec::new(), Vec::new()];
            per[other] = vec![r; 3];
            c.alltoallv(&c.grid().world(), per)
        })
        .unwrap();
        assert_eq!(out.results[0], vec![vec![], vec![1, 1, 1]]);
        assert_eq!((out.ledger.total().messages, out.ledger.total().words), (2, 6));

        let out = run(3, |c| {
            let mut per = vec![Vec::new(); 3];
            per[c.rank()] = vec![1u32; 4];
            c.alltoallv(&c.grid().world(), per)
        })
        .unwrap();
        assert_eq!(out.ledger.total(), Tally::default());

        let out = run(4, |c| {
            let per = (0..4)
                .map(|d| if c.rank() == 0 && d != 0 { vec![9u32; 2] } else { Vec::new() })
                .collect();
            c.alltoallv(&c.grid().world(), per)
        })
        .unwrap();
        assert_eq!(out.ledger.rank_tally(0, &["unlabelled"]), Tally { messages: 3, words: 6 });
        assert_eq!(out.ledger.total(), Tally { messages: 3, words: 6 });
    }

    #[test]
    fn barrier_only_program_charges_nothing() {
        let out = run(5, |c| {
            c.set_phase("sync");
            c.barrier(&c.grid().world())?;
            c.barrier(&c.grid().world())
        })
        .unwrap();
        assert_eq!(out.ledger.total(), Tally::default());
        assert_eq!(out.ledger.events().len(), 10);
    }

    #[test]
    fn skipped_collective_deadlocks_with_phase() {
        for schedule in [Schedule::Concurrent, Schedule::Serialized] {
            let err = run_ranks(&world(3), schedule, |c| {
                c.set_phase("V-exchange");
                if c.rank() != 0 {
                    c.allgatherv(&c.grid().world(), vec![1u32])?;
                }
                Ok::<_, FabricError>(())
            })
            .unwrap_err();
            match err {
                FabricError::Deadlock { phase, detail } => {
                    assert_eq!(phase, "V-exchange");
                    assert!(detail.contains("rank 0"), "{detail}");
                }
                other => panic!("expected deadlock, got {other}"),
            }
        }
    }

    #[test]
    fn crossed_groups_deadlock() {
        let grid = Grid::two_d(4).unwrap();
        let err = run_ranks(&grid, Schedule::Concurrent, |c| {
            c.set_phase("E-reduce");
            let (i, j) = c.grid().coords(c.rank());
            // Diagonal ranks go row-first, the others column-first: a cycle.
            if i == j {
                c.allreduce_sum(&c.grid().row_group(i), vec![1.0f64])?;
                c.allreduce_sum(&c.grid().col_group(j), vec![1.0f64])?;
            } else {
                c.allreduce_sum(&c.grid().col_group(j), vec![1.0f64])?;
                c.allreduce_sum(&c.grid().row_group(i), vec![1.0f64])?;
            }
            Ok::<_, FabricError>(())
        })
        .unwrap_err();
        assert!(matches!(err, FabricError::Deadlock { .. }), "{err}");
    }

    #[test]
    fn kind_mismatch_is_reported() {
        let err = run(2, |c| {
            let g = c.grid().world();
            if c.rank() == 0 {
                c.allreduce_sum(&g, vec![1u64])
            } else {
                c.allgatherv(&g, vec![1u64])
            }
        })
        .unwrap_err();
        assert!(matches!(err, FabricError::Mismatch { .. }), "{err}");
    }

    #[derive(Debug, PartialEq)]
    struct Boom(usize);

    impl From<FabricError> for Boom {
        fn from(_: FabricError) -> Self {
            Boom(usize::MAX)
        }
    }

    #[test]
    fn failing_rank_error_wins_and_peers_are_released() {
        let err = run_ranks(&world(4), Schedule::Concurrent, |c| {
            if c.rank() == 2 {
                return Err(Boom(2));
            }
            c.barrier(&c.grid().world())?;
            Ok(())
        })
        .unwrap_err();
        assert_eq!(err, Boom(2));
    }

    #[test]
    #[should_panic(expected = "rank 1 exploded")]
    fn panics_propagate() {
        let _ = run(2, |c| {
            if c.rank() == 1 {
                panic!("rank 1 exploded");
            }
            c.barrier(&c.grid().world())
        });
    }

    fn mixed_program(c: &mut Comm<'_>) -> Result<Vec<f64>, FabricError> {
        let grid = c.grid().clone();
        let (i, j) = grid.coords(c.rank());
        let r = c.rank() as f64;
        c.set_phase("a");
        let row = c.allgatherv(&grid.row_group(i), vec![r.sin(), r.cos()])?;
        c.set_phase("b");
        let col = c.allreduce_sum(&grid.col_group(j), row.clone())?;
        let root = grid.rank_at(0, j);
        let b = c.broadcast(&grid.col_group(j), root, (c.rank() == root).then(|| col.clone()))?;
        let rs = c.reduce_scatter_block(&grid.world(), vec![r * 0.1 + 0.3; 2 * grid.ranks()])?;
        Ok([row, col, b, rs].concat())
    }

    #[test]
    fn repeated_runs_are_bitwise_identical() {
        let grid = Grid::two_d(9).unwrap();
        let a = run_ranks(&grid, Schedule::Concurrent, mixed_program).unwrap();
        for schedule in [Schedule::Concurrent, Schedule::Serialized, Schedule::Concurrent] {
            let b = run_ranks(&grid, schedule, mixed_program).unwrap();
            assert_eq!(a.ledger, b.ledger);
            for (x, y) in a.results.iter().zip(&b.results) {
                let xb: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
                let yb: Vec<u64> = y.iter().map(|v| v.to_bits()).collect();
                assert_eq!(xb, yb);
            }
        }
    }

    #[test]
    fn every_call_matches_its_closed_form() {
        let grid = Grid::two_d(9).unwrap();
        let out = run_ranks(&grid, Schedule::Concurrent, mixed_program).unwrap();
        for call in out.ledger.calls() {
            let g = call.len();
            for e in call {
                let expect = match e.kind {
                    CollectiveKind::Allgatherv => counting::ring_allgather(&e.sizes, e.position),
                    CollectiveKind::AllreduceSum => counting::ring_allreduce(e.sizes[0], e.sizes[1], g, e.position),
                    CollectiveKind::Broadcast => counting::binomial_broadcast(g, e.root.unwrap(), e.position, e.sizes[0]),
                    CollectiveKind::ReduceScatterBlock => counting::ring_reduce_scatter_block(g, e.sizes[0]),
                    _ => unreachable!(),
                };
                assert_eq!((e.messages, e.words), expect);
            }
        }
    }

    #[test]
    fn sum_uses_ascending_rank_parenthesization() {
        // Values chosen so that floating-point addition order matters.
        let vals: [f64; 4] = [1e16, 1.0, -1e16, 1.0];
        let out = run(4, |c| c.allreduce_sum(&c.grid().world(), vec![vals[c.rank()]])).unwrap();
        let expect = ((vals[0] + vals[1]) + vals[2]) + vals[3];
        for r in &out.results {
            assert_eq!(r[0].to_bits(), expect.to_bits());
        }
    }
}
