//! Line-oriented event log of a balancing run.
//!
//! Every record renders to one line `iter=<i> <kind> key=value ...`. The
//! `transfer` lines carry the moved task sets, which is all that is needed
//! to replay a run from its initial assignment.

use std::fmt;

use crate::error::{CcmError, Result};
use crate::gossip::MessageRecord;
use crate::ids::{RankId, TaskId};
use crate::model::{Assignment, PhaseSpec};
use crate::transfer::lock::LockOutcome;

#[derive(Debug, Clone, PartialEq)]
pub enum TraceEvent {
    /// End of the inform stage for one rank.
    Inform {
        rank: RankId,
        known: Vec<RankId>,
    },
    /// A single gossip message (verbose runs only).
    Message(MessageRecord),
    /// Work-list entry built from possibly stale gossip.
    Evaluate {
        rank: RankId,
        peer: RankId,
        estimate: Option<f64>,
    },
    Lock {
        requester: RankId,
        target: RankId,
        outcome: LockOutcome,
    },
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
    Unlock {
        rank: RankId,
        target: RankId,
    },
    Transfer(TransferRecord),
    /// Fresh evaluation found no improving move.
    Skip {
        rank: RankId,
        peer: RankId,
    },
}

/// One executed give or swap.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferRecord {
    pub rank: RankId,
    pub peer: RankId,
    /// Tasks moved from `rank` to `peer`.
    pub give: Vec<TaskId>,
    /// Tasks moved from `peer` to `rank`.
    pub take: Vec<TaskId>,
    pub gain: f64,
    /// Pairwise maximum work before and after.
    pub max_before: f64,
    pub max_after: f64,
}

impl TransferRecord {
    pub fn apply(&self, spec: &PhaseSpec, a: &mut Assignment) -> Result<()> {
        a.apply_transfer(spec, &self.give, self.rank, self.peer)?;
        a.apply_transfer(spec, &self.take, self.peer, self.rank)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub event: TraceEvent,
}

fn ranks(list: &[RankId]) -> String {
    list.iter().map(|r| r.0.to_string()).collect::<Vec<_>>().join(",")
}

fn tasks(list: &[TaskId]) -> String {
    list.iter().map(|t| t.0.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "iter={} ", self.iteration)?;
        match &self.event {
            TraceEvent::Inform { rank, known } => {
                write!(f, "inform rank={} known={}", rank.0, ranks(known))
            }
            TraceEvent::Message(m) => write!(f, "message {m}"),
            TraceEvent::Evaluate { rank, peer, estimate } => match estimate {
                Some(g) => write!(f, "evaluate rank={} peer={} estimate={g:?}", rank.0, peer.0),
                None => write!(f, "evaluate rank={} peer={} estimate=none", rank.0, peer.0),
            },
            TraceEvent::Lock {
                requester,
                target,
                outcome,
            } => {
                let o = match outcome {
                    LockOutcome::Granted => "granted",
                    LockOutcome::Queued => "queued",
                };
                write!(f, "lock rank={} target={} {o}", requester.0, target.0)
            }
            TraceEvent::Grant { requester, target } => {
                write!(f, "lock rank={} target={} granted-from-queue", requester.0, target.0)
            }
            TraceEvent::Release { rank, target, holder } => write!(
                f,
                "unlock rank={} target={} cycle-avoid holder={}",
                rank.0, target.0, holder.0
            ),
            TraceEvent::Unlock { rank, target } => {
                write!(f, "unlock rank={} target={}", rank.0, target.0)
            }
            TraceEvent::Transfer(t) => write!(
                f,
                "transfer rank={} peer={} give={} take={} gain={:?} max_before={:?} max_after={:?}",
                t.rank.0,
                t.peer.0,
                tasks(&t.give),
                tasks(&t.take),
                t.gain,
                t.max_before,
                t.max_after
            ),
            TraceEvent::Skip { rank, peer } => write!(f, "skip rank={} peer={}", rank.0, peer.0),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransferTrace {
    pub records: Vec<TraceRecord>,
}

impl TransferTrace {
    pub fn push(&mut self, iteration: usize, event: TraceEvent) {
        self.records.push(TraceRecord { iteration, event });
    }

    pub fn transfers(&self) -> impl Iterator<Item = &TransferRecord> {
        self.records.iter().filter_map(|r| match &r.event {
            TraceEvent::Transfer(t) => Some(t),
            _ => None,
        })
    }

    /// Renders the trace; `header` lines are emitted first as `# ` comments.
    pub fn to_text(&self, header: &[String]) -> String {
        let mut out = String::new();
        for h in header {
            out.push_str("# ");
            out.push_str(h);
            out.push('\n');
        }
        for r in &self.records {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }

    /// Replays the executed transfers on a fresh initial assignment.
    pub fn replay(&self, spec: &PhaseSpec) -> Result<Assignment> {
        let mut a = Assignment::initial(spec);
        for t in self.transfers() {
            t.apply(spec, &mut a)?;
        }
        Ok(a)
    }
}

fn parse_list<T>(s: &str, f: impl Fn(usize) -> T) -> Result<Vec<T>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|x| {
            x.parse::<usize>()
                .map(&f)
                .map_err(|e| CcmError::InvalidSpec(format!("bad id {x:?}: {e}")))
        })
        .collect()
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|e| CcmError::InvalidSpec(format!("bad number {s:?}: {e}")))
}

/// Extracts the transfer records from trace text, in order.
pub fn parse_transfers(text: &str) -> Result<Vec<(usize, TransferRecord)>> {
    let mut out = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let iter = match fields.next().and_then(|f| f.strip_prefix("iter=")) {
            Some(i) => i,
            None => continue,
        };
        if fields.next() != Some("transfer") {
            continue;
        }
        let iteration = iter
            .parse::<usize>()
            .map_err(|e| CcmError::InvalidSpec(format!("bad iteration: {e}")))?;
        let mut rec = TransferRecord {
            rank: RankId(0),
            peer: RankId(0),
            give: vec![],
            take: vec![],
            gain: 0.0,
            max_before: 0.0,
            max_after: 0.0,
        };
        for kv in fields {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CcmError::InvalidSpec(format!("bad field {kv:?}")))?;
            match k {
                "rank" => rec.rank = RankId(parse_list(v, |x| x)?.first().copied().unwrap_or(0)),
                "peer" => rec.peer = RankId(parse_list(v, |x| x)?.first().copied().unwrap_or(0)),
                "give" => rec.give = parse_list(v, TaskId)?,
                "take" => rec.take = parse_list(v, TaskId)?,
                "gain" => rec.gain = parse_f64(v)?,
                "max_before" => rec.max_before = parse_f64(v)?,
                "max_after" => rec.max_after = parse_f64(v)?,
                _ => return Err(CcmError::InvalidSpec(format!("unknown field {k:?}"))),
            }
        }
        out.push((iteration, rec));
    }
    Ok(out)
}
