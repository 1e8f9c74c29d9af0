//! Migration clusters: groups of co-resident tasks moved as a unit.
//!
//! Tasks on a rank that share a shared block always end up in the same
//! cluster. Clusters are further merged along communication edges whose
//! volume reaches a threshold, transitively.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{CcmError, Result};
use crate::ids::{BlockId, RankId, TaskId};
use crate::model::{Assignment, PhaseSpec};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cluster {
    /// Smallest member task; unique across the phase.
    pub id: TaskId,
    pub rank: RankId,
    /// Members in ascending order.
    pub tasks: Vec<TaskId>,
    pub load: f64,
    pub shared_sizes: BTreeMap<BlockId, u64>,
    /// Volume of edges with both endpoints in the cluster.
    pub intra_volume: u64,
    /// Volume of edges with exactly one endpoint in the cluster.
    pub inter_volume: u64,
    /// Part of `inter_volume` whose other endpoint lives on another rank.
    pub off_rank_volume: u64,
    pub base_footprint: u64,
    pub max_overhead: u64,
}

impl Cluster {
    fn bare(rank: RankId, tasks: Vec<TaskId>) -> Cluster {
        Cluster {
            id: tasks[0],
            rank,
            tasks,
            load: 0.0,
            shared_sizes: BTreeMap::new(),
            intra_volume: 0,
            inter_volume: 0,
            off_rank_volume: 0,
            base_footprint: 0,
            max_overhead: 0,
        }
    }

    pub fn contains(&self, t: TaskId) -> bool {
        self.tasks.binary_search(&t).is_ok()
    }
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller index as root so roots are deterministic
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Partitions the tasks of `rank` into summarized clusters ordered by their
/// smallest task.
///
/// An edge merges its endpoints when its volume is positive and at least
/// `comm_threshold`.
pub fn build_clusters(spec: &PhaseSpec, a: &Assignment, rank: RankId, comm_threshold: u64) -> Result<Vec<Cluster>> {
    spec.check_rank(rank)?;
    let members: Vec<TaskId> = a.tasks_on(rank).iter().copied().collect();
    let local: BTreeMap<TaskId, usize> = members.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let mut sets = DisjointSets::new(members.len());

    let mut first_user: BTreeMap<BlockId, usize> = BTreeMap::new();
    for (i, &t) in members.iter().enumerate() {
        if let Some(b) = spec.task(t).block {
            match first_user.get(&b) {
                Some(&j) => sets.union(i, j),
                None => {
                    first_user.insert(b, i);
                }
            }
        }
        for &c in spec.out_edges(t) {
            let comm = spec.comm(c);
            if comm.volume > 0 && comm.volume >= comm_threshold {
                if let Some(&j) = local.get(&comm.to) {
                    sets.union(i, j);
                }
            }
        }
    }

    let mut groups: BTreeMap<usize, Vec<TaskId>> = BTreeMap::new();
    for (i, &t) in members.iter().enumerate() {
        groups.entry(sets.find(i)).or_default().push(t);
    }
    // roots are the smallest local index, i.e. the smallest task id
    groups
        .into_values()
        .map(|tasks| summarize_cluster(spec, a, &Cluster::bare(rank, tasks)))
        .collect()
}

/// Recomputes every summary field of `cluster` from the current assignment.
pub fn summarize_cluster(spec: &PhaseSpec, a: &Assignment, cluster: &Cluster) -> Result<Cluster> {
    if cluster.tasks.is_empty() {
        return Err(CcmError::StaleCluster("cluster has no tasks".into()));
    }
    let mut tasks = cluster.tasks.clone();
    tasks.sort_unstable();
    tasks.dedup();
    for &t in &tasks {
        if t.0 >= spec.task_count() || a.rank_of(t) != cluster.rank {
            return Err(CcmError::StaleCluster(format!("{t} is not on {}", cluster.rank)));
        }
    }
    let mut out = Cluster::bare(cluster.rank, tasks);
    for &t in &out.tasks {
        let task = spec.task(t);
        out.load += task.load;
        out.base_footprint += task.base_mem;
        out.max_overhead = out.max_overhead.max(task.overhead_mem);
        if let Some(b) = task.block {
            out.shared_sizes.insert(b, spec.block(b).size);
        }
    }
    for &t in &out.tasks {
        for &c in spec.out_edges(t) {
            let comm = spec.comm(c);
            if out.contains(comm.to) {
                out.intra_volume += comm.volume;
            } else {
                out.inter_volume += comm.volume;
                if a.rank_of(comm.to) != cluster.rank {
                    out.off_rank_volume += comm.volume;
                }
            }
        }
        for &c in spec.in_edges(t) {
            let comm = spec.comm(c);
            if !out.contains(comm.from) {
                out.inter_volume += comm.volume;
                if a.rank_of(comm.from) != cluster.rank {
                    out.off_rank_volume += comm.volume;
                }
            }
        }
    }
    Ok(out)
}
