//! Rank-level views of the work model.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{CcmError, Result};
use crate::ids::{NodeId, RankId};
use crate::model::assignment::Assignment;
use crate::model::coeffs::WorkCoefficients;
use crate::model::spec::PhaseSpec;

pub fn rank_load(spec: &PhaseSpec, a: &Assignment, r: RankId) -> Result<f64> {
    spec.check_rank(r)?;
    Ok(a.aggregates(r).load)
}

/// `(on_rank, off_rank)` volumes in bytes.
pub fn rank_volumes(spec: &PhaseSpec, a: &Assignment, r: RankId) -> Result<(u64, u64)> {
    spec.check_rank(r)?;
    let agg = a.aggregates(r);
    Ok((agg.on_volume, agg.off_volume()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MemoryUsage {
    /// Footprints plus the largest overhead.
    pub task_mem: u64,
    /// Sizes of distinct resident shared blocks.
    pub shared_mem: u64,
    /// Baseline + task + shared memory.
    pub max_mem: u64,
}

pub fn rank_memory(spec: &PhaseSpec, a: &Assignment, r: RankId) -> Result<MemoryUsage> {
    spec.check_rank(r)?;
    let agg = a.aggregates(r);
    let task_mem = agg.task_mem();
    Ok(MemoryUsage {
        task_mem,
        shared_mem: agg.shared_mem,
        max_mem: spec.rank_base_mem(r) + task_mem + agg.shared_mem,
    })
}

pub fn homing_cost(spec: &PhaseSpec, a: &Assignment, r: RankId) -> Result<u64> {
    spec.check_rank(r)?;
    Ok(a.aggregates(r).homing)
}

/// Bytes by which rank `r` exceeds its memory share (0 when within).
pub fn memory_overage(spec: &PhaseSpec, a: &Assignment, r: RankId) -> f64 {
    let agg = a.aggregates(r);
    let used = (spec.rank_base_mem(r) + agg.task_mem() + agg.shared_mem) as f64;
    (used - spec.rank_avail_mem(r)).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankSlack {
    pub rank: RankId,
    pub max_mem: u64,
    pub available: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeSlack {
    pub node: NodeId,
    pub used: u64,
    pub available: u64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    /// Per-rank condition holds everywhere.
    pub feasible: bool,
    pub ranks: Vec<RankSlack>,
    /// Node-level sums, informational: the per-rank condition implies them.
    pub nodes: Vec<NodeSlack>,
}

pub fn memory_feasible(spec: &PhaseSpec, a: &Assignment) -> FeasibilityReport {
    let ranks: Vec<RankSlack> = spec
        .ranks()
        .map(|r| {
            let max_mem = rank_memory(spec, a, r).expect("rank in range").max_mem;
            let available = spec.rank_avail_mem(r);
            RankSlack {
                rank: r,
                max_mem,
                available,
                slack: available - max_mem as f64,
            }
        })
        .collect();
    let nodes = spec
        .nodes()
        .iter()
        .map(|n| {
            let used: u64 = n.ranks.iter().map(|r| ranks[r.0].max_mem).sum();
            NodeSlack {
                node: n.id,
                used,
                available: n.mem,
                holds: used <= n.mem,
            }
        })
        .collect();
    FeasibilityReport {
        feasible: ranks.iter().all(|s| s.slack >= 0.0),
        ranks,
        nodes,
    }
}

/// Finite part of the work of rank `r`, without the memory penalty.
pub fn finite_work(_spec: &PhaseSpec, a: &Assignment, coeffs: &WorkCoefficients, r: RankId) -> f64 {
    let agg = a.aggregates(r);
    coeffs.alpha * agg.load
        + coeffs.beta * agg.off_volume() as f64
        + coeffs.gamma * agg.on_volume as f64
        + coeffs.delta * agg.homing as f64
}

/// Work of rank `r` in seconds; `+inf` when memory is enforced and the rank
/// exceeds its share.
pub fn work(spec: &PhaseSpec, a: &Assignment, coeffs: &WorkCoefficients, r: RankId) -> Result<f64> {
    spec.check_rank(r)?;
    if coeffs.enforce_memory && memory_overage(spec, a, r) > 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(finite_work(spec, a, coeffs, r))
}

pub fn max_work(spec: &PhaseSpec, a: &Assignment, coeffs: &WorkCoefficients) -> f64 {
    spec.ranks()
        .map(|r| work(spec, a, coeffs, r).expect("rank in range"))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Work ordered first by memory overage, then by its finite part.
///
/// With memory enforced every violating rank has infinite work; comparing
/// overage first still ranks infeasible states so a run can leave them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorkLevel {
    pub overage: f64,
    pub work: f64,
}

impl WorkLevel {
    pub fn of(spec: &PhaseSpec, a: &Assignment, coeffs: &WorkCoefficients, r: RankId) -> Self {
        let overage = if coeffs.enforce_memory {
            memory_overage(spec, a, r)
        } else {
            0.0
        };
        WorkLevel {
            overage,
            work: finite_work(spec, a, coeffs, r),
        }
    }

    /// The scalar work value, `+inf` when over memory.
    pub fn value(&self) -> f64 {
        if self.overage > 0.0 {
            f64::INFINITY
        } else {
            self.work
        }
    }

    pub fn max(self, other: Self) -> Self {
        if other.total_cmp(&self) == Ordering::Greater {
            other
        } else {
            self
        }
    }

    pub fn total_cmp(&self, other: &Self) -> Ordering {
        self.overage
            .total_cmp(&other.overage)
            .then(self.work.total_cmp(&other.work))
    }
}

/// Relative load imbalance: `max / mean - 1`.
pub fn imbalance(loads: &[f64]) -> Result<f64> {
    if loads.is_empty() {
        return Err(CcmError::Domain("imbalance of an empty rank set".into()));
    }
    let mean = loads.iter().sum::<f64>() / loads.len() as f64;
    if !(mean > 0.0) {
        return Err(CcmError::Domain(format!("imbalance undefined for mean load {mean}")));
    }
    let max = loads.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(max / mean - 1.0)
}
