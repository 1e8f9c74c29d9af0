//! Rank locks and the per-rank transfer protocol state machine.
//!
//! A rank walks its work list one peer at a time and holds at most one
//! outgoing lock. If it obtains a lock on `peer` while being locked itself
//! by `holder`, it releases `peer` immediately when `holder <= peer` and
//! re-appends `peer` to its work list. Otherwise it waits for its own lock
//! to be released before running the transfer session. This keeps the
//! wait-for relation acyclic.

use std::collections::{BTreeSet, VecDeque};

use serde::Serialize;

use crate::error::{CcmError, Result};
use crate::ids::RankId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LockOutcome {
    Granted,
    Queued,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CycleDecision {
    Keep,
    ReleaseAndRequeue,
}

/// The release rule on its own: a rank locked by `holder` that just
/// acquired `acquired` gives it back iff `holder <= acquired`.
pub fn must_release(holder: RankId, acquired: RankId) -> bool {
    holder <= acquired
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LockTable {
    /// Who holds the lock on each rank.
    owner: Vec<Option<RankId>>,
    /// Requesters waiting for each rank, served in ascending order.
    pending: Vec<BTreeSet<RankId>>,
}

impl LockTable {
    pub fn new(rank_count: usize) -> Self {
        LockTable {
            owner: vec![None; rank_count],
            pending: vec![BTreeSet::new(); rank_count],
        }
    }

    fn check(&self, r: RankId) -> Result<()> {
        if r.0 < self.owner.len() {
            Ok(())
        } else {
            Err(CcmError::UnknownRank(r))
        }
    }

    /// Rank currently holding the lock on `r`.
    pub fn locker_of(&self, r: RankId) -> Option<RankId> {
        self.owner[r.0]
    }

    /// Lock `r` currently holds on some other rank, if any.
    pub fn held_by(&self, r: RankId) -> Option<RankId> {
        self.owner.iter().position(|o| *o == Some(r)).map(RankId)
    }

    pub fn pending(&self, target: RankId) -> impl Iterator<Item = RankId> + '_ {
        self.pending[target.0].iter().copied()
    }

    pub fn try_lock(&mut self, requester: RankId, target: RankId) -> Result<LockOutcome> {
        self.check(requester)?;
        self.check(target)?;
        if requester == target {
            return Err(CcmError::Protocol(format!("{requester} cannot lock itself")));
        }
        if self.owner[target.0] == Some(requester) {
            return Err(CcmError::Protocol(format!(
                "{requester} already holds the lock on {target}"
            )));
        }
        if let Some(held) = self.held_by(requester) {
            return Err(CcmError::Protocol(format!(
                "{requester} already holds a lock on {held}"
            )));
        }
        if self.pending.iter().any(|q| q.contains(&requester)) {
            return Err(CcmError::Protocol(format!("{requester} already has a pending request")));
        }
        match self.owner[target.0] {
            None => {
                self.owner[target.0] = Some(requester);
                Ok(LockOutcome::Granted)
            }
            Some(_) => {
                self.pending[target.0].insert(requester);
                Ok(LockOutcome::Queued)
            }
        }
    }

    /// Releases `target`; the smallest pending requester, if any, is granted
    /// the lock and returned.
    pub fn unlock(&mut self, owner: RankId, target: RankId) -> Result<Option<RankId>> {
        self.check(target)?;
        if self.owner[target.0] != Some(owner) {
            return Err(CcmError::Protocol(format!(
                "{owner} does not hold the lock on {target}"
            )));
        }
        let next = self.pending[target.0].pop_first();
        self.owner[target.0] = next;
        Ok(next)
    }

    /// Applies the release rule for `rank`, which holds `acquired` and is
    /// locked by `holder`.
    pub fn cycle_avoid(&self, rank: RankId, holder: RankId, acquired: RankId) -> Result<CycleDecision> {
        if self.owner[acquired.0] != Some(rank) {
            return Err(CcmError::Protocol(format!(
                "{rank} does not hold the lock on {acquired}"
            )));
        }
        if self.owner[rank.0] != Some(holder) {
            return Err(CcmError::Protocol(format!("{rank} is not locked by {holder}")));
        }
        Ok(if must_release(holder, acquired) {
            CycleDecision::ReleaseAndRequeue
        } else {
            CycleDecision::Keep
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    /// Will take the next work list entry.
    Ready,
    /// Lock request queued at the given peer.
    Awaiting(RankId),
    /// Holds the lock on the given peer.
    Holding(RankId),
    Done,
}

/// Observable protocol actions, in the order they happen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtocolEvent {
    Lock {
        requester: RankId,
        target: RankId,
        outcome: LockOutcome,
    },
    /// A queued request was granted when `target` got unlocked.
    Grant {
        requester: RankId,
        target: RankId,
    },
    /// Cycle-avoidance release.
    Release {
        rank: RankId,
        target: RankId,
        holder: RankId,
    },
    Session {
        rank: RankId,
        peer: RankId,
    },
    Unlock {
        rank: RankId,
        target: RankId,
    },
    Finished {
        rank: RankId,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepResult {
    Progress,
    Blocked,
}

/// Lock protocol state for all ranks; cheap to clone and hash so all
/// interleavings can be explored.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProtocolState {
    pub table: LockTable,
    phases: Vec<Phase>,
    work: Vec<VecDeque<RankId>>,
}

impl ProtocolState {
    pub fn new(work_lists: Vec<Vec<RankId>>) -> Self {
        let n = work_lists.len();
        ProtocolState {
            table: LockTable::new(n),
            phases: vec![Phase::Ready; n],
            work: work_lists.into_iter().map(VecDeque::from).collect(),
        }
    }

    pub fn rank_count(&self) -> usize {
        self.phases.len()
    }

    pub fn phase(&self, r: RankId) -> Phase {
        self.phases[r.0]
    }

    pub fn is_done(&self) -> bool {
        self.phases.iter().all(|p| *p == Phase::Done)
    }

    fn release(&mut self, rank: RankId, target: RankId, events: &mut Vec<ProtocolEvent>) -> Result<()> {
        events.push(ProtocolEvent::Unlock { rank, target });
        if let Some(next) = self.table.unlock(rank, target)? {
            self.phases[next.0] = Phase::Holding(target);
            events.push(ProtocolEvent::Grant {
                requester: next,
                target,
            });
        }
        Ok(())
    }

    /// Advances `rank` by one atomic action. `session` runs the transfer
    /// between the rank and the peer it holds.
    pub fn step<F>(&mut self, rank: RankId, events: &mut Vec<ProtocolEvent>, mut session: F) -> Result<StepResult>
    where
        F: FnMut(RankId, RankId) -> Result<()>,
    {
        match self.phases[rank.0] {
            Phase::Done | Phase::Awaiting(_) => Ok(StepResult::Blocked),
            Phase::Ready => {
                match self.work[rank.0].pop_front() {
                    None => {
                        self.phases[rank.0] = Phase::Done;
                        events.push(ProtocolEvent::Finished { rank });
                    }
                    Some(peer) => {
                        let outcome = self.table.try_lock(rank, peer)?;
                        events.push(ProtocolEvent::Lock {
                            requester: rank,
                            target: peer,
                            outcome,
                        });
                        self.phases[rank.0] = match outcome {
                            LockOutcome::Granted => Phase::Holding(peer),
                            LockOutcome::Queued => Phase::Awaiting(peer),
                        };
                    }
                }
                Ok(StepResult::Progress)
            }
            Phase::Holding(peer) => match self.table.locker_of(rank) {
                Some(holder) => match self.table.cycle_avoid(rank, holder, peer)? {
                    CycleDecision::ReleaseAndRequeue => {
                        events.push(ProtocolEvent::Release {
                            rank,
                            target: peer,
                            holder,
                        });
                        self.release(rank, peer, events)?;
                        self.work[rank.0].push_back(peer);
                        self.phases[rank.0] = Phase::Ready;
                        Ok(StepResult::Progress)
                    }
                    CycleDecision::Keep => Ok(StepResult::Blocked),
                },
                None => {
                    events.push(ProtocolEvent::Session { rank, peer });
                    session(rank, peer)?;
                    self.release(rank, peer, events)?;
                    self.phases[rank.0] = Phase::Ready;
                    Ok(StepResult::Progress)
                }
            },
        }
    }

    /// Edges `waiter -> waited_on` of the current wait-for relation.
    pub fn wait_for_edges(&self) -> Vec<(RankId, RankId)> {
        let mut edges = Vec::new();
        for (i, phase) in self.phases.iter().enumerate() {
            let r = RankId(i);
            match *phase {
                Phase::Awaiting(peer) => {
                    if let Some(owner) = self.table.locker_of(peer) {
                        edges.push((r, owner));
                    }
                }
                Phase::Holding(peer) => {
                    if let Some(holder) = self.table.locker_of(r) {
                        if !must_release(holder, peer) {
                            edges.push((r, holder));
                        }
                    }
                }
                Phase::Ready | Phase::Done => {}
            }
        }
        edges
    }

    pub fn has_wait_cycle(&self) -> bool {
        let n = self.rank_count();
        let mut next: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (a, b) in self.wait_for_edges() {
            next[a.0].push(b.0);
        }
        // colours: 0 unvisited, 1 on stack, 2 finished
        let mut colour = vec![0u8; n];
        fn visit(v: usize, next: &[Vec<usize>], colour: &mut [u8]) -> bool {
            colour[v] = 1;
            for &w in &next[v] {
                if colour[w] == 1 || (colour[w] == 0 && visit(w, next, colour)) {
                    return true;
                }
            }
            colour[v] = 2;
            false
        }
        (0..n).any(|v| colour[v] == 0 && visit(v, &next, &mut colour))
    }
}

/// Runs every rank round-robin in ascending order until all are done.
///
/// Returns an error if a full sweep makes no progress, which the release rule
/// rules out.
pub fn run_round_robin<F>(state: &mut ProtocolState, events: &mut Vec<ProtocolEvent>, mut session: F) -> Result<usize>
where
    F: FnMut(RankId, RankId) -> Result<()>,
{
    let mut sweeps = 0;
    while !state.is_done() {
        let mut progressed = false;
        for r in 0..state.rank_count() {
            if state.step(RankId(r), events, &mut session)? == StepResult::Progress {
                progressed = true;
            }
        }
        sweeps += 1;
        if !progressed {
            return Err(CcmError::Protocol("no rank can make progress".into()));
        }
    }
    Ok(sweeps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(i: usize) -> RankId {
        RankId(i)
    }

    #[test]
    fn grant_then_queue_then_handoff() {
        let mut t = LockTable::new(3);
        assert_eq!(t.try_lock(r(0), r(2)).unwrap(), LockOutcome::Granted);
        assert_eq!(t.try_lock(r(1), r(2)).unwrap(), LockOutcome::Queued);
        assert_eq!(t.unlock(r(0), r(2)).unwrap(), Some(r(1)));
        assert_eq!(t.locker_of(r(2)), Some(r(1)));
    }

    #[test]
    fn protocol_errors() {
        let mut t = LockTable::new(3);
        assert!(t.try_lock(r(0), r(0)).is_err());
        t.try_lock(r(0), r(1)).unwrap();
        assert!(matches!(t.try_lock(r(0), r(1)), Err(CcmError::Protocol(_))));
        assert!(matches!(t.try_lock(r(0), r(2)), Err(CcmError::Protocol(_))));
        assert!(t.unlock(r(2), r(1)).is_err());
    }

    #[test]
    fn release_rule() {
        let mut t = LockTable::new(8);
        t.try_lock(r(4), r(5)).unwrap();
        t.try_lock(r(3), r(4)).unwrap();
        assert_eq!(
            t.cycle_avoid(r(4), r(3), r(5)).unwrap(),
            CycleDecision::ReleaseAndRequeue
        );
        let mut t = LockTable::new(8);
        t.try_lock(r(4), r(5)).unwrap();
        t.try_lock(r(7), r(4)).unwrap();
        assert_eq!(t.cycle_avoid(r(4), r(7), r(5)).unwrap(), CycleDecision::Keep);
    }

    #[test]
    fn crossed_requests_resolve() {
        // r0 and r1 both want each other first
        let mut s = ProtocolState::new(vec![vec![r(1)], vec![r(0)]]);
        let mut events = Vec::new();
        let mut sessions = Vec::new();
        run_round_robin(&mut s, &mut events, |a, b| {
            sessions.push((a, b));
            Ok(())
        })
        .unwrap();
        assert_eq!(sessions.len(), 2);
        assert!(s.is_done());
    }

    #[test]
    fn simultaneous_mutual_locks_release_the_smaller_holder() {
        // each holds the rank that locks it, so holder == acquired and the
        // first to step releases
        let mut s = ProtocolState::new(vec![vec![r(1)], vec![r(0)]]);
        let mut ev = Vec::new();
        s.step(r(0), &mut ev, |_, _| Ok(())).unwrap();
        s.step(r(1), &mut ev, |_, _| Ok(())).unwrap();
        assert_eq!(s.phase(r(0)), Phase::Holding(r(1)));
        assert_eq!(s.phase(r(1)), Phase::Holding(r(0)));
        assert!(!s.has_wait_cycle());
        s.step(r(0), &mut ev, |_, _| Ok(())).unwrap();
        assert_eq!(s.phase(r(0)), Phase::Ready);
        assert!(ev
            .iter()
            .any(|e| matches!(e, ProtocolEvent::Release { rank, .. } if *rank == r(0))));
    }
}
