//! Task-to-rank mapping with incrementally maintained per-rank aggregates.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{CcmError, Result};
use crate::ids::{BlockId, RankId, TaskId};
use crate::model::spec::PhaseSpec;

/// Cached per-rank quantities of the work model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RankAggregates {
    /// Sum of resident task loads, seconds.
    pub load: f64,
    /// Volume of edges with both endpoints on this rank.
    pub on_volume: u64,
    /// Volume sent to other ranks.
    pub out_volume: u64,
    /// Volume received from other ranks.
    pub in_volume: u64,
    /// Sum of resident task footprints.
    pub base_mem: u64,
    /// Multiset of resident task overheads (value -> multiplicity).
    overheads: BTreeMap<u64, usize>,
    /// Resident shared blocks with the number of resident tasks using each.
    blocks: BTreeMap<BlockId, usize>,
    pub shared_mem: u64,
    /// Bytes of resident blocks homed elsewhere.
    pub homing: u64,
}

impl RankAggregates {
    /// Off-rank volume: incoming and outgoing traffic overlap, so the larger
    /// of the two is charged.
    pub fn off_volume(&self) -> u64 {
        self.out_volume.max(self.in_volume)
    }

    pub fn max_overhead(&self) -> u64 {
        self.overheads.keys().next_back().copied().unwrap_or(0)
    }

    pub fn task_mem(&self) -> u64 {
        self.base_mem + self.max_overhead()
    }

    pub fn shared_blocks(&self) -> impl Iterator<Item = BlockId> + '_ {
        self.blocks.keys().copied()
    }

    pub fn has_block(&self, b: BlockId) -> bool {
        self.blocks.contains_key(&b)
    }

    pub fn block_users(&self, b: BlockId) -> usize {
        self.blocks.get(&b).copied().unwrap_or(0)
    }

    /// Equality up to a relative tolerance on the floating point load; all
    /// byte quantities must match exactly.
    pub fn matches(&self, other: &RankAggregates, rel_tol: f64) -> bool {
        let scale = self.load.abs().max(other.load.abs()).max(1.0);
        (self.load - other.load).abs() <= rel_tol * scale
            && self.on_volume == other.on_volume
            && self.out_volume == other.out_volume
            && self.in_volume == other.in_volume
            && self.base_mem == other.base_mem
            && self.overheads == other.overheads
            && self.blocks == other.blocks
            && self.shared_mem == other.shared_mem
            && self.homing == other.homing
    }

    fn push_overhead(&mut self, v: u64) {
        *self.overheads.entry(v).or_insert(0) += 1;
    }

    fn pop_overhead(&mut self, v: u64) {
        match self.overheads.get_mut(&v) {
            Some(n) if *n > 1 => *n -= 1,
            Some(_) => {
                self.overheads.remove(&v);
            }
            None => unreachable!("overhead {v} not tracked"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Assignment {
    rank_of_task: Vec<RankId>,
    tasks_of_rank: Vec<BTreeSet<TaskId>>,
    aggregates: Vec<RankAggregates>,
}

impl Assignment {
    /// Assignment from an explicit rank vector indexed by task.
    pub fn new(spec: &PhaseSpec, ranks: &[RankId]) -> Result<Self> {
        if ranks.len() != spec.task_count() {
            return Err(CcmError::InvalidSpec(format!(
                "assignment has {} entries for {} tasks",
                ranks.len(),
                spec.task_count()
            )));
        }
        for &r in ranks {
            spec.check_rank(r)?;
        }
        let mut tasks_of_rank = vec![BTreeSet::new(); spec.rank_count()];
        for (t, r) in ranks.iter().enumerate() {
            tasks_of_rank[r.0].insert(TaskId(t));
        }
        let aggregates = spec
            .ranks()
            .map(|r| recompute_aggregates(spec, ranks, &tasks_of_rank[r.0], r))
            .collect();
        Ok(Assignment {
            rank_of_task: ranks.to_vec(),
            tasks_of_rank,
            aggregates,
        })
    }

    pub fn initial(spec: &PhaseSpec) -> Self {
        Self::new(spec, spec.initial_assignment()).expect("validated spec")
    }

    pub fn rank_count(&self) -> usize {
        self.tasks_of_rank.len()
    }

    pub fn rank_of(&self, t: TaskId) -> RankId {
        self.rank_of_task[t.0]
    }

    pub fn tasks_on(&self, r: RankId) -> &BTreeSet<TaskId> {
        &self.tasks_of_rank[r.0]
    }

    pub fn aggregates(&self, r: RankId) -> &RankAggregates {
        &self.aggregates[r.0]
    }

    pub fn as_ranks(&self) -> &[RankId] {
        &self.rank_of_task
    }

    /// Moves `tasks` from `from` to `to`, updating only the aggregates that
    /// change. Third ranks keep their aggregates: an edge between a moved task
    /// and a third rank stays off-rank for that rank.
    pub fn apply_transfer(&mut self, spec: &PhaseSpec, tasks: &[TaskId], from: RankId, to: RankId) -> Result<()> {
        spec.check_rank(from)?;
        spec.check_rank(to)?;
        if from == to {
            return Err(CcmError::Protocol(format!(
                "transfer source and destination are both {from}"
            )));
        }
        let mut seen = BTreeSet::new();
        for &t in tasks {
            if t.0 >= spec.task_count() || self.rank_of(t) != from || !seen.insert(t) {
                return Err(CcmError::TaskNotOnRank { task: t, rank: from });
            }
        }
        for &t in tasks {
            self.move_task(spec, t, to);
        }
        Ok(())
    }

    fn move_task(&mut self, spec: &PhaseSpec, t: TaskId, to: RankId) {
        let from = self.rank_of(t);
        let task = spec.task(t);

        // Communication: retract each incident edge's contribution under the
        // old placement and add it back under the new one.
        // Self-edges sit in both lists and are handled once, as outgoing.
        let incident = spec
            .out_edges(t)
            .iter()
            .chain(spec.in_edges(t).iter().filter(|&&c| spec.comm(c).from != t));
        for &c in incident {
            let comm = spec.comm(c);
            let src_before = self.rank_of(comm.from);
            let dst_before = self.rank_of(comm.to);
            let src_after = if comm.from == t { to } else { src_before };
            let dst_after = if comm.to == t { to } else { dst_before };
            self.edge_contribution(src_before, dst_before, comm.volume, false);
            self.edge_contribution(src_after, dst_after, comm.volume, true);
        }
        self.rank_of_task[t.0] = to;

        let src = &mut self.aggregates[from.0];
        src.load -= task.load;
        src.base_mem -= task.base_mem;
        src.pop_overhead(task.overhead_mem);
        let dst = &mut self.aggregates[to.0];
        dst.load += task.load;
        dst.base_mem += task.base_mem;
        dst.push_overhead(task.overhead_mem);

        if let Some(b) = task.block {
            let block = spec.block(b);
            // Source: the block leaves S(from) only when its last user leaves;
            // only then does an off-home block stop costing homing bytes.
            let src = &mut self.aggregates[from.0];
            let users = src.blocks.get_mut(&b).expect("block tracked on source rank");
            *users -= 1;
            if *users == 0 {
                src.blocks.remove(&b);
                src.shared_mem -= block.size;
                if block.home != from {
                    src.homing -= block.size;
                }
            }
            // Destination: a block not yet present enters S(to).
            let dst = &mut self.aggregates[to.0];
            let users = dst.blocks.entry(b).or_insert(0);
            if *users == 0 {
                dst.shared_mem += block.size;
                if block.home != to {
                    dst.homing += block.size;
                }
            }
            *users += 1;
        }

        self.tasks_of_rank[from.0].remove(&t);
        self.tasks_of_rank[to.0].insert(t);
    }

    fn edge_contribution(&mut self, src: RankId, dst: RankId, volume: u64, add: bool) {
        let apply = |v: &mut u64| {
            if add {
                *v += volume
            } else {
                *v -= volume
            }
        };
        if src == dst {
            apply(&mut self.aggregates[src.0].on_volume);
        } else {
            apply(&mut self.aggregates[src.0].out_volume);
            apply(&mut self.aggregates[dst.0].in_volume);
        }
    }

    /// From-scratch aggregates of rank `r`, independent of the cache.
    pub fn recompute(&self, spec: &PhaseSpec, r: RankId) -> RankAggregates {
        recompute_aggregates(spec, &self.rank_of_task, &self.tasks_of_rank[r.0], r)
    }

    /// Checks every cached aggregate and the two-way map consistency.
    pub fn audit(&self, spec: &PhaseSpec, rel_tol: f64) -> std::result::Result<(), String> {
        for r in spec.ranks() {
            for &t in &self.tasks_of_rank[r.0] {
                if self.rank_of(t) != r {
                    return Err(format!("{t} listed on {r} but mapped to {}", self.rank_of(t)));
                }
            }
            let fresh = self.recompute(spec, r);
            if !self.aggregates[r.0].matches(&fresh, rel_tol) {
                return Err(format!(
                    "cached aggregates of {r} diverged: cached {:?}, fresh {:?}",
                    self.aggregates[r.0], fresh
                ));
            }
        }
        let placed: usize = self.tasks_of_rank.iter().map(BTreeSet::len).sum();
        if placed != spec.task_count() {
            return Err(format!("{placed} tasks placed out of {}", spec.task_count()));
        }
        Ok(())
    }
}

fn recompute_aggregates(
    spec: &PhaseSpec,
    rank_of_task: &[RankId],
    tasks: &BTreeSet<TaskId>,
    r: RankId,
) -> RankAggregates {
    let mut agg = RankAggregates::default();
    for &t in tasks {
        let task = spec.task(t);
        agg.load += task.load;
        agg.base_mem += task.base_mem;
        agg.push_overhead(task.overhead_mem);
        if let Some(b) = task.block {
            *agg.blocks.entry(b).or_insert(0) += 1;
        }
    }
    for &b in agg.blocks.keys() {
        let block = spec.block(b);
        agg.shared_mem += block.size;
        if block.home != r {
            agg.homing += block.size;
        }
    }
    for comm in spec.comms() {
        let src = rank_of_task[comm.from.0];
        let dst = rank_of_task[comm.to.0];
        match (src == r, dst == r) {
            (true, true) => agg.on_volume += comm.volume,
            (true, false) => agg.out_volume += comm.volume,
            (false, true) => agg.in_volume += comm.volume,
            (false, false) => {}
        }
    }
    agg
}
