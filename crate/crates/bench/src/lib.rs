//! Instance generators shared by the benchmarks.

use ccm_core::generate::{random_spec, Placement, RandomSpecParams};
use ccm_core::rng::stream;
use ccm_core::PhaseSpec;

/// Phase with every task on rank 0, a few shared blocks and sparse communication.
pub fn skewed_phase(ranks: usize, tasks: usize, seed: u64) -> PhaseSpec {
    let params = RandomSpecParams {
        ranks,
        tasks,
        blocks: (tasks / 8).max(1),
        comms: 2 * tasks,
        max_volume: 1000,
        self_edges: false,
        mem_fraction: 1.0,
        placement: Placement::SingleRank,
    };
    random_spec(&mut stream(seed, &[ranks as u64, tasks as u64]), &params)
}

/// Phase with tasks spread uniformly at random over the ranks.
pub fn random_phase(ranks: usize, tasks: usize, blocks: usize, comms: usize, seed: u64) -> PhaseSpec {
    let params = RandomSpecParams {
        ranks,
        tasks,
        blocks,
        comms,
        max_volume: 1000,
        self_edges: false,
        mem_fraction: 1.0,
        placement: Placement::Random,
    };
    random_spec(&mut stream(seed, &[ranks as u64, tasks as u64]), &params)
}
