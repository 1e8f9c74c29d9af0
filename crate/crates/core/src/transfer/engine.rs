//! The balancing iteration: inform, rank peers, lock, re-evaluate, transfer.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::sync::Arc;

use serde::Serialize;

use crate::cluster::{build_clusters, Cluster};
use crate::error::{CcmError, Result};
use crate::gossip::{build_peer_network, check_gossip_params, RankInfo};
use crate::ids::{BlockId, RankId, TaskId};
use crate::model::work::{imbalance, work};
use crate::model::{Assignment, PhaseSpec, WorkCoefficients, WorkLevel};
use crate::transfer::lock::{run_round_robin, LockTable, ProtocolEvent, ProtocolState};
use crate::transfer::trace::{TraceEvent, TransferRecord, TransferTrace};

/// Relative slack below which a work decrease is treated as rounding noise.
pub const GAIN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LbParams {
    pub n_iter: usize,
    pub k_rounds: usize,
    pub fanout: usize,
    pub seed: u64,
    /// Minimum edge volume that ties two tasks into one cluster.
    pub comm_threshold: u64,
    /// Log every gossip message in the trace.
    pub verbose: bool,
}

impl Default for LbParams {
    fn default() -> Self {
        LbParams {
            n_iter: 8,
            k_rounds: 2,
            fanout: 4,
            seed: 0,
            comm_threshold: 0,
            verbose: false,
        }
    }
}

impl LbParams {
    pub fn validate(&self, rank_count: usize) -> Result<()> {
        if rank_count < 2 {
            // nothing to balance; gossip parameters are irrelevant
            return Ok(());
        }
        check_gossip_params(rank_count, self.k_rounds, self.fanout)
    }
}

/// Improvement of the pairwise maximum work, compared overage first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gain {
    pub overage: f64,
    pub work: f64,
}

impl Gain {
    /// Scalar view: infinite when the move removes a memory overage.
    pub fn value(&self) -> f64 {
        if self.overage > 0.0 {
            f64::INFINITY
        } else {
            self.work
        }
    }

    pub fn total_cmp(&self, other: &Gain) -> Ordering {
        self.overage
            .total_cmp(&other.overage)
            .then(self.work.total_cmp(&other.work))
    }
}

/// Gain of moving from `before` to `after` levels of a rank pair, if the move
/// is acceptable: no rank's memory overage grows and the pairwise maximum
/// strictly drops.
pub fn pair_gain(before: (WorkLevel, WorkLevel), after: (WorkLevel, WorkLevel)) -> Option<Gain> {
    if after.0.overage > before.0.overage || after.1.overage > before.1.overage {
        return None;
    }
    let b = before.0.max(before.1);
    let a = after.0.max(after.1);
    let gain = Gain {
        overage: b.overage - a.overage,
        work: b.work - a.work,
    };
    let tol = GAIN_TOLERANCE * b.work.abs().max(1.0);
    if gain.overage > 0.0 || (gain.overage == 0.0 && gain.work > tol) {
        Some(gain)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferCandidate {
    /// Cluster leaving the evaluating rank.
    pub self_cluster: Option<Cluster>,
    /// Cluster leaving the peer.
    pub peer_cluster: Option<Cluster>,
    pub peer: RankId,
    pub predicted_work_diff: f64,
    pub gain: Gain,
}

impl TransferCandidate {
    pub fn give(&self) -> Vec<TaskId> {
        self.self_cluster.as_ref().map_or_else(Vec::new, |c| c.tasks.clone())
    }

    pub fn take(&self) -> Vec<TaskId> {
        self.peer_cluster.as_ref().map_or_else(Vec::new, |c| c.tasks.clone())
    }
}

fn levels(spec: &PhaseSpec, a: &Assignment, coeffs: &WorkCoefficients, r: RankId, p: RankId) -> (WorkLevel, WorkLevel) {
    (WorkLevel::of(spec, a, coeffs, r), WorkLevel::of(spec, a, coeffs, p))
}

/// Every give, take and swap between two cluster lists; the empty side is
/// `None`.
fn cluster_pairs<'a>(
    own: &'a [Cluster],
    peer: &'a [Cluster],
) -> impl Iterator<Item = (Option<&'a Cluster>, Option<&'a Cluster>)> + 'a {
    let own_opts = std::iter::once(None).chain(own.iter().map(Some));
    own_opts
        .flat_map(move |c_r| {
            std::iter::once(None)
                .chain(peer.iter().map(Some))
                .map(move |c_p| (c_r, c_p))
        })
        .filter(|(a, b)| a.is_some() || b.is_some())
}

/// Best exact give or swap between `rank` and the peer described by the
/// up-to-date `peer_info`.
///
/// Every candidate is applied to a scratch copy of the assignment and the
/// resulting work of both ranks is read back, so the predicted difference is
/// exact.
pub fn find_best_ccm(
    spec: &PhaseSpec,
    coeffs: &WorkCoefficients,
    a: &Assignment,
    rank: RankId,
    peer_info: &RankInfo,
    comm_threshold: u64,
) -> Result<Option<TransferCandidate>> {
    let peer = peer_info.rank;
    spec.check_rank(rank)?;
    spec.check_rank(peer)?;
    if peer == rank {
        return Err(CcmError::Config(format!("{rank} cannot evaluate itself")));
    }
    for c in &peer_info.clusters {
        if c.rank != peer || c.tasks.iter().any(|&t| a.rank_of(t) != peer) {
            return Err(CcmError::StaleCluster(format!("cluster {} no longer on {peer}", c.id)));
        }
    }
    let own = build_clusters(spec, a, rank, comm_threshold)?;
    let mut scratch = a.clone();
    let before = levels(spec, a, coeffs, rank, peer);

    let mut best: Option<TransferCandidate> = None;
    for (c_r, c_p) in cluster_pairs(&own, &peer_info.clusters) {
        let give = c_r.map_or(&[][..], |c| &c.tasks[..]);
        let take = c_p.map_or(&[][..], |c| &c.tasks[..]);
        scratch.apply_transfer(spec, give, rank, peer)?;
        scratch.apply_transfer(spec, take, peer, rank)?;
        let after = levels(spec, &scratch, coeffs, rank, peer);
        scratch.apply_transfer(spec, take, rank, peer)?;
        scratch.apply_transfer(spec, give, peer, rank)?;

        if let Some(gain) = pair_gain(before, after) {
            let better = best
                .as_ref()
                .is_none_or(|b| gain.total_cmp(&b.gain) == Ordering::Greater);
            if better {
                best = Some(TransferCandidate {
                    self_cluster: c_r.cloned(),
                    peer_cluster: c_p.cloned(),
                    peer,
                    predicted_work_diff: gain.value(),
                    gain,
                });
            }
        }
    }
    Ok(best)
}

/// Rank state as predicted from a published summary after swapping clusters.
fn project(
    spec: &PhaseSpec,
    coeffs: &WorkCoefficients,
    info: &RankInfo,
    remove: Option<&Cluster>,
    add: Option<&Cluster>,
) -> WorkLevel {
    let mut blocks: BTreeSet<BlockId> = info
        .clusters
        .iter()
        .flat_map(|c| c.shared_sizes.keys().copied())
        .collect();
    let mut load = info.load;
    let mut on = info.on_volume as f64;
    let mut off = info.off_volume as f64;
    let mut task_base = info.task_base_mem as f64;
    let mut max_overhead = info.max_overhead;
    if let Some(c) = remove {
        // block users on one rank always share a cluster
        for b in c.shared_sizes.keys() {
            blocks.remove(b);
        }
        load -= c.load;
        on -= c.intra_volume as f64;
        // edges to the rest of the rank turn remote, remote ones leave
        off += (c.inter_volume - c.off_rank_volume) as f64 - c.off_rank_volume as f64;
        task_base -= c.base_footprint as f64;
    }
    if let Some(c) = add {
        blocks.extend(c.shared_sizes.keys().copied());
        load += c.load;
        on += c.intra_volume as f64;
        off += c.off_rank_volume as f64;
        task_base += c.base_footprint as f64;
        max_overhead = max_overhead.max(c.max_overhead);
    }
    let (mut shared, mut homing) = (0.0, 0.0);
    for b in blocks {
        let block = spec.block(b);
        shared += block.size as f64;
        if block.home != info.rank {
            homing += block.size as f64;
        }
    }
    let mem = info.base_mem as f64 + task_base + max_overhead as f64 + shared;
    let overage = if coeffs.enforce_memory {
        (mem - spec.rank_avail_mem(info.rank)).max(0.0)
    } else {
        0.0
    };
    WorkLevel {
        overage,
        work: coeffs.alpha * load.max(0.0)
            + coeffs.beta * off.max(0.0)
            + coeffs.gamma * on.max(0.0)
            + coeffs.delta * homing,
    }
}

/// Best gain predicted from summaries alone, used to order the work list.
pub fn estimate_gain(spec: &PhaseSpec, coeffs: &WorkCoefficients, own: &RankInfo, peer: &RankInfo) -> Option<Gain> {
    let before = (
        project(spec, coeffs, own, None, None),
        project(spec, coeffs, peer, None, None),
    );
    cluster_pairs(&own.clusters, &peer.clusters)
        .filter_map(|(c_r, c_p)| {
            let after = (
                project(spec, coeffs, own, c_r, c_p),
                project(spec, coeffs, peer, c_p, c_r),
            );
            pair_gain(before, after)
        })
        .max_by(|a, b| a.total_cmp(b))
}

/// Current snapshot of `rank` as it would be sent to a lock holder.
pub fn refresh_info(
    spec: &PhaseSpec,
    a: &Assignment,
    rank: RankId,
    version: u64,
    comm_threshold: u64,
) -> Result<RankInfo> {
    RankInfo::snapshot(spec, a, rank, comm_threshold, version)
}

/// Re-evaluates `rank`/`peer` on up-to-date information and executes the
/// best move, if any. `rank` must hold the lock on `peer`.
pub fn try_transfer(
    spec: &PhaseSpec,
    coeffs: &WorkCoefficients,
    a: &mut Assignment,
    locks: &LockTable,
    rank: RankId,
    peer: RankId,
    comm_threshold: u64,
) -> Result<Option<TransferRecord>> {
    if locks.locker_of(peer) != Some(rank) {
        return Err(CcmError::Protocol(format!("{rank} does not hold the lock on {peer}")));
    }
    session(spec, coeffs, a, rank, peer, 0, comm_threshold)
}

fn session(
    spec: &PhaseSpec,
    coeffs: &WorkCoefficients,
    a: &mut Assignment,
    rank: RankId,
    peer: RankId,
    peer_version: u64,
    comm_threshold: u64,
) -> Result<Option<TransferRecord>> {
    let info = refresh_info(spec, a, peer, peer_version, comm_threshold)?;
    let Some(best) = find_best_ccm(spec, coeffs, a, rank, &info, comm_threshold)? else {
        return Ok(None);
    };
    let before = levels(spec, a, coeffs, rank, peer);
    let mut record = TransferRecord {
        rank,
        peer,
        give: best.give(),
        take: best.take(),
        gain: best.predicted_work_diff,
        max_before: before.0.max(before.1).value(),
        max_after: 0.0,
    };
    record.apply(spec, a)?;
    let after = levels(spec, a, coeffs, rank, peer);
    record.max_after = after.0.max(after.1).value();
    Ok(Some(record))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationStats {
    pub max_work_s: f64,
    pub total_work_s: f64,
    /// Load imbalance; absent when every rank is idle.
    pub imbalance: Option<f64>,
    pub transfers: usize,
}

impl IterationStats {
    pub fn measure(spec: &PhaseSpec, coeffs: &WorkCoefficients, a: &Assignment, transfers: usize) -> Self {
        let works: Vec<f64> = spec
            .ranks()
            .map(|r| work(spec, a, coeffs, r).expect("rank in range"))
            .collect();
        let loads: Vec<f64> = spec.ranks().map(|r| a.aggregates(r).load).collect();
        IterationStats {
            max_work_s: works.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            total_work_s: works.iter().sum(),
            imbalance: imbalance(&loads).ok(),
            transfers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LbStats {
    pub initially_feasible: bool,
    pub initial: IterationStats,
    pub per_iteration: Vec<IterationStats>,
    #[serde(rename = "final")]
    pub final_: IterationStats,
}

#[derive(Debug, Clone)]
pub struct LbOutcome {
    pub assignment: Assignment,
    pub trace: TransferTrace,
    pub stats: LbStats,
}

/// Runs `params.n_iter` balancing iterations from the spec's initial
/// assignment.
pub fn ccm_lb(spec: &PhaseSpec, coeffs: &WorkCoefficients, params: &LbParams) -> Result<LbOutcome> {
    coeffs.validate()?;
    params.validate(spec.rank_count())?;
    let mut a = Assignment::initial(spec);
    let initially_feasible = crate::model::memory_feasible(spec, &a).feasible;
    let initial = IterationStats::measure(spec, coeffs, &a, 0);
    let mut trace = TransferTrace::default();
    let mut per_iteration = Vec::with_capacity(params.n_iter);
    let mut versions = vec![0u64; spec.rank_count()];

    if spec.rank_count() < 2 {
        for _ in 0..params.n_iter {
            per_iteration.push(IterationStats::measure(spec, coeffs, &a, 0));
        }
    } else {
        for it in 0..params.n_iter {
            let transfers = iterate(spec, coeffs, params, it, &mut a, &mut versions, &mut trace)?;
            per_iteration.push(IterationStats::measure(spec, coeffs, &a, transfers));
        }
    }
    let final_ = IterationStats::measure(spec, coeffs, &a, per_iteration.iter().map(|s| s.transfers).sum());
    Ok(LbOutcome {
        assignment: a,
        trace,
        stats: LbStats {
            initially_feasible,
            initial,
            per_iteration,
            final_,
        },
    })
}

fn iterate(
    spec: &PhaseSpec,
    coeffs: &WorkCoefficients,
    params: &LbParams,
    it: usize,
    a: &mut Assignment,
    versions: &mut [u64],
    trace: &mut TransferTrace,
) -> Result<usize> {
    let infos: Vec<Arc<RankInfo>> = spec
        .ranks()
        .map(|r| RankInfo::snapshot(spec, a, r, params.comm_threshold, versions[r.0]).map(Arc::new))
        .collect::<Result<_>>()?;
    let network = build_peer_network(&infos, params.k_rounds, params.fanout, params.seed, it as u64)?;
    if params.verbose {
        for m in &network.messages {
            trace.push(it, TraceEvent::Message(m.clone()));
        }
    }

    let mut work_lists = Vec::with_capacity(spec.rank_count());
    for knowledge in &network.knowledge {
        let rank = knowledge.owner;
        trace.push(
            it,
            TraceEvent::Inform {
                rank,
                known: knowledge.ranks().collect(),
            },
        );
        let own = &infos[rank.0];
        let mut entries: Vec<(Option<Gain>, RankId)> = knowledge
            .peers()
            .map(|p| {
                let info = knowledge.get(p).expect("known peer");
                (estimate_gain(spec, coeffs, own, info), p)
            })
            .collect();
        // best predicted gain first, then ascending peer id
        entries.sort_by(|(ga, pa), (gb, pb)| match (ga, gb) {
            (Some(x), Some(y)) => y.total_cmp(x).then(pa.cmp(pb)),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => pa.cmp(pb),
        });
        for (g, p) in &entries {
            trace.push(
                it,
                TraceEvent::Evaluate {
                    rank,
                    peer: *p,
                    estimate: g.map(|g| g.value()),
                },
            );
        }
        work_lists.push(entries.into_iter().map(|(_, p)| p).collect());
    }

    let mut protocol = ProtocolState::new(work_lists);
    let mut events = Vec::new();
    let mut outcomes: Vec<(RankId, RankId, Option<TransferRecord>)> = Vec::new();
    run_round_robin(&mut protocol, &mut events, |rank, peer| {
        let rec = session(spec, coeffs, a, rank, peer, versions[peer.0], params.comm_threshold)?;
        if rec.is_some() {
            versions[rank.0] += 1;
            versions[peer.0] += 1;
        }
        outcomes.push((rank, peer, rec));
        Ok(())
    })?;

    // interleave session outcomes with the protocol events in order
    let mut outcomes = outcomes.into_iter();
    let mut transfers = 0;
    for ev in events {
        let event = match ev {
            ProtocolEvent::Lock {
                requester,
                target,
                outcome,
            } => TraceEvent::Lock {
                requester,
                target,
                outcome,
            },
            ProtocolEvent::Grant { requester, target } => TraceEvent::Grant { requester, target },
            ProtocolEvent::Release { rank, target, holder } => TraceEvent::Release { rank, target, holder },
            ProtocolEvent::Unlock { rank, target } => TraceEvent::Unlock { rank, target },
            ProtocolEvent::Finished { .. } => continue,
            ProtocolEvent::Session { .. } => {
                let (rank, peer, rec) = outcomes.next().expect("one outcome per session");
                match rec {
                    Some(r) => {
                        transfers += 1;
                        TraceEvent::Transfer(r)
                    }
                    None => TraceEvent::Skip { rank, peer },
                }
            }
        };
        trace.push(it, event);
    }
    Ok(transfers)
}
