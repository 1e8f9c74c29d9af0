//! Epidemic inform stage.
//!
//! Every rank starts by sending its own summary to `fanout` random peers.
//! A recipient merges what it receives into its knowledge map and, while the
//! message round is below `k_rounds`, forwards the whole map to `fanout`
//! random ranks absent from that map. Delivery runs on a single event queue
//! ordered by `(round, sender, sequence)`, so a seed fixes the outcome.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::sync::Arc;

use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cluster::{build_clusters, Cluster};
use crate::error::{CcmError, Result};
use crate::ids::RankId;
use crate::model::{Assignment, PhaseSpec};
use crate::rng;

/// Summary a rank publishes about itself.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankInfo {
    pub rank: RankId,
    pub load: f64,
    pub on_volume: u64,
    pub off_volume: u64,
    pub out_volume: u64,
    pub in_volume: u64,
    pub homing: u64,
    /// Baseline rank memory.
    pub base_mem: u64,
    pub task_base_mem: u64,
    pub max_overhead: u64,
    pub shared_mem: u64,
    pub clusters: Vec<Cluster>,
    /// Epoch of the owner's assignment when the snapshot was taken.
    pub version: u64,
}

impl RankInfo {
    pub fn snapshot(
        spec: &PhaseSpec,
        a: &Assignment,
        rank: RankId,
        comm_threshold: u64,
        version: u64,
    ) -> Result<RankInfo> {
        let agg = a.aggregates(rank);
        Ok(RankInfo {
            rank,
            load: agg.load,
            on_volume: agg.on_volume,
            off_volume: agg.off_volume(),
            out_volume: agg.out_volume,
            in_volume: agg.in_volume,
            homing: agg.homing,
            base_mem: spec.rank_base_mem(rank),
            task_base_mem: agg.base_mem,
            max_overhead: agg.max_overhead(),
            shared_mem: agg.shared_mem,
            clusters: build_clusters(spec, a, rank, comm_threshold)?,
            version,
        })
    }
}

/// What one rank knows about its peers after the inform stage.
#[derive(Debug, Clone)]
pub struct PeerKnowledge {
    pub owner: RankId,
    entries: BTreeMap<RankId, Arc<RankInfo>>,
}

impl PeerKnowledge {
    fn new(own: Arc<RankInfo>) -> Self {
        PeerKnowledge {
            owner: own.rank,
            entries: BTreeMap::from([(own.rank, own)]),
        }
    }

    /// Keeps the newest version of every entry.
    fn merge(&mut self, other: &BTreeMap<RankId, Arc<RankInfo>>) {
        for (&r, info) in other {
            match self.entries.get(&r) {
                Some(mine) if mine.version >= info.version => {}
                _ => {
                    self.entries.insert(r, Arc::clone(info));
                }
            }
        }
    }

    pub fn get(&self, r: RankId) -> Option<&Arc<RankInfo>> {
        self.entries.get(&r)
    }

    pub fn contains(&self, r: RankId) -> bool {
        self.entries.contains_key(&r)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ranks(&self) -> impl Iterator<Item = RankId> + '_ {
        self.entries.keys().copied()
    }

    /// Known ranks other than the owner.
    pub fn peers(&self) -> impl Iterator<Item = RankId> + '_ {
        let owner = self.owner;
        self.entries.keys().copied().filter(move |&r| r != owner)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&RankId, &Arc<RankInfo>)> {
        self.entries.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MessageRecord {
    pub round: usize,
    pub sender: RankId,
    pub receiver: RankId,
    /// Keys of the knowledge map the message carried.
    pub carried: Vec<RankId>,
}

impl fmt::Display for MessageRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let carried: Vec<String> = self.carried.iter().map(|r| r.0.to_string()).collect();
        write!(
            f,
            "{} {}→{} [{}]",
            self.round,
            self.sender.0,
            self.receiver.0,
            carried.join(",")
        )
    }
}

#[derive(Debug, Clone)]
pub struct PeerNetwork {
    pub knowledge: Vec<PeerKnowledge>,
    pub messages: Vec<MessageRecord>,
}

impl PeerNetwork {
    pub fn message_count(&self) -> usize {
        self.messages.len()
    }

    pub fn mean_coverage(&self) -> f64 {
        let total: usize = self.knowledge.iter().map(PeerKnowledge::len).sum();
        total as f64 / self.knowledge.len() as f64
    }
}

/// Upper bound on messages: every rank roots a fanout tree of depth `k`.
pub fn message_bound(rank_count: usize, k_rounds: usize, fanout: usize) -> u128 {
    let mut per_rank: u128 = 0;
    let mut level: u128 = 1;
    for _ in 0..k_rounds {
        level = level.saturating_mul(fanout as u128);
        per_rank = per_rank.saturating_add(level);
    }
    per_rank.saturating_mul(rank_count as u128)
}

pub fn check_gossip_params(rank_count: usize, k_rounds: usize, fanout: usize) -> Result<()> {
    if k_rounds == 0 {
        return Err(CcmError::Config("k_rounds must be at least 1".into()));
    }
    if fanout == 0 || fanout >= rank_count {
        return Err(CcmError::Config(format!(
            "fanout must lie in [1, {}), got {fanout}",
            rank_count
        )));
    }
    Ok(())
}

struct Pending {
    round: usize,
    sender: RankId,
    receiver: RankId,
    payload: BTreeMap<RankId, Arc<RankInfo>>,
}

/// Runs the inform stage over `infos` (one per rank, indexed by rank).
///
/// `iteration` keys the per-rank random streams together with `seed`.
pub fn build_peer_network(
    infos: &[Arc<RankInfo>],
    k_rounds: usize,
    fanout: usize,
    seed: u64,
    iteration: u64,
) -> Result<PeerNetwork> {
    let rank_count = infos.len();
    check_gossip_params(rank_count, k_rounds, fanout)?;
    for (i, info) in infos.iter().enumerate() {
        if info.rank != RankId(i) {
            return Err(CcmError::Config(format!(
                "info at position {i} belongs to {}",
                info.rank
            )));
        }
    }

    let mut knowledge: Vec<PeerKnowledge> = infos.iter().map(|i| PeerKnowledge::new(Arc::clone(i))).collect();
    let mut rngs: Vec<ChaCha8Rng> = (0..rank_count)
        .map(|r| rng::stream(seed, &[0x601_5519, r as u64, iteration]))
        .collect();
    let mut queue: BinaryHeap<Reverse<(usize, RankId, u64)>> = BinaryHeap::new();
    let mut in_flight: BTreeMap<u64, Pending> = BTreeMap::new();
    let mut seq: u64 = 0;
    let mut messages = Vec::new();

    let mut spread = |from: RankId,
                      round: usize,
                      knowledge: &[PeerKnowledge],
                      rngs: &mut [ChaCha8Rng],
                      queue: &mut BinaryHeap<Reverse<(usize, RankId, u64)>>,
                      in_flight: &mut BTreeMap<u64, Pending>| {
        let known = &knowledge[from.0];
        let fresh: Vec<RankId> = (0..rank_count).map(RankId).filter(|r| !known.contains(*r)).collect();
        let picks = fanout.min(fresh.len());
        let mut chosen: Vec<RankId> = index::sample(&mut rngs[from.0], fresh.len(), picks)
            .into_iter()
            .map(|i| fresh[i])
            .collect();
        chosen.sort_unstable();
        for to in chosen {
            queue.push(Reverse((round, from, seq)));
            in_flight.insert(
                seq,
                Pending {
                    round,
                    sender: from,
                    receiver: to,
                    payload: known.entries.clone(),
                },
            );
            seq += 1;
        }
    };

    for r in 0..rank_count {
        spread(RankId(r), 1, &knowledge, &mut rngs, &mut queue, &mut in_flight);
    }

    while let Some(Reverse((_, _, id))) = queue.pop() {
        let msg = in_flight.remove(&id).expect("queued message is in flight");
        messages.push(MessageRecord {
            round: msg.round,
            sender: msg.sender,
            receiver: msg.receiver,
            carried: msg.payload.keys().copied().collect(),
        });
        knowledge[msg.receiver.0].merge(&msg.payload);
        if msg.round < k_rounds {
            spread(
                msg.receiver,
                msg.round + 1,
                &knowledge,
                &mut rngs,
                &mut queue,
                &mut in_flight,
            );
        }
    }

    Ok(PeerNetwork { knowledge, messages })
}
