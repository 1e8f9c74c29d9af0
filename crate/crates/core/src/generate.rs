//! Seeded random phases for tests, benchmarks and the comparison reports.

use rand::Rng;

use crate::model::spec::{BlockDoc, CommDoc, NodeDoc, PhaseSpecDoc, TaskDoc};
use crate::model::PhaseSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// Every task on a uniformly drawn rank.
    Random,
    /// Every task on rank 0.
    SingleRank,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSpecParams {
    pub ranks: usize,
    pub tasks: usize,
    pub blocks: usize,
    pub comms: usize,
    pub max_volume: u64,
    /// Allow communications from a task to itself.
    pub self_edges: bool,
    /// Node memory as a fraction of what holding every task on one rank needs.
    pub mem_fraction: f64,
    pub placement: Placement,
}

impl Default for RandomSpecParams {
    fn default() -> Self {
        RandomSpecParams {
            ranks: 3,
            tasks: 6,
            blocks: 2,
            comms: 6,
            max_volume: 100,
            self_edges: false,
            mem_fraction: 1.0,
            placement: Placement::Random,
        }
    }
}

pub fn random_spec(rng: &mut impl Rng, p: &RandomSpecParams) -> PhaseSpec {
    assert!(p.ranks >= 1, "at least one rank");
    let rank_base_mem: Vec<u64> = (0..p.ranks).map(|_| rng.gen_range(0..100)).collect();
    let tasks: Vec<TaskDoc> = (0..p.tasks)
        .map(|id| TaskDoc {
            id,
            load_s: rng.gen_range(0.1..2.0),
            base_mem: rng.gen_range(1..100),
            overhead_mem: rng.gen_range(0..50),
            block: (p.blocks > 0 && rng.gen_bool(0.6)).then(|| rng.gen_range(0..p.blocks)),
        })
        .collect();
    let blocks: Vec<BlockDoc> = (0..p.blocks)
        .map(|id| BlockDoc {
            id,
            size_bytes: rng.gen_range(100..1000),
            home: rng.gen_range(0..p.ranks),
        })
        .collect();
    let mut comms = Vec::with_capacity(p.comms);
    if p.tasks > 0 {
        while comms.len() < p.comms {
            let (from, to) = (rng.gen_range(0..p.tasks), rng.gen_range(0..p.tasks));
            if from == to && !(p.self_edges || p.tasks == 1) {
                continue;
            }
            comms.push(CommDoc {
                id: comms.len(),
                from,
                to,
                bytes: rng.gen_range(0..=p.max_volume),
            });
        }
    }

    let worst_rank = rank_base_mem.iter().max().copied().unwrap_or(0)
        + tasks.iter().map(|t| t.base_mem).sum::<u64>()
        + tasks.iter().map(|t| t.overhead_mem).max().unwrap_or(0)
        + blocks.iter().map(|b| b.size_bytes).sum::<u64>();
    let mut nodes = Vec::new();
    let mut next = 0;
    while next < p.ranks {
        let size = rng.gen_range(1..=2).min(p.ranks - next);
        nodes.push(NodeDoc {
            id: nodes.len(),
            mem_bytes: (worst_rank as f64 * size as f64 * p.mem_fraction).ceil() as u64,
            ranks: (next..next + size).collect(),
        });
        next += size;
    }

    let initial_assignment = (0..p.tasks)
        .map(|_| match p.placement {
            Placement::Random => rng.gen_range(0..p.ranks),
            Placement::SingleRank => 0,
        })
        .collect();

    PhaseSpec::try_from(PhaseSpecDoc {
        ranks: p.ranks,
        nodes,
        rank_base_mem,
        tasks,
        blocks,
        comms,
        initial_assignment,
    })
    .expect("generated phase is well formed")
}
