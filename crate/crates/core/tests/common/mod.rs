//! Shared helpers: seeded generators and a naive from-scratch work oracle.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use ccm_core::generate::{random_spec, Placement, RandomSpecParams};
use ccm_core::{PhaseSpec, RankId, WorkCoefficients};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixture(name: &str) -> PhaseSpec {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name);
    PhaseSpec::from_path(path).expect("fixture parses")
}

pub fn small_spec(
    rng: &mut ChaCha8Rng,
    max_ranks: usize,
    max_tasks: usize,
    max_blocks: usize,
    max_comms: usize,
) -> PhaseSpec {
    let params = RandomSpecParams {
        ranks: rng.gen_range(1..=max_ranks),
        tasks: rng.gen_range(1..=max_tasks),
        blocks: rng.gen_range(0..=max_blocks),
        comms: rng.gen_range(0..=max_comms),
        max_volume: 50,
        self_edges: true,
        mem_fraction: rng.gen_range(0.3..1.5),
        placement: if rng.gen_bool(0.3) {
            Placement::SingleRank
        } else {
            Placement::Random
        },
    };
    random_spec(rng, &params)
}

pub fn random_coeffs(rng: &mut ChaCha8Rng) -> WorkCoefficients {
    WorkCoefficients::new(
        if rng.gen_bool(0.8) { 1.0 } else { 0.0 },
        rng.gen_range(0.0..0.05),
        rng.gen_range(0.0..0.01),
        rng.gen_range(0.0..0.005),
        rng.gen_bool(0.5),
    )
    .unwrap()
}

/// Per-rank quantities computed directly from definitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Naive {
    pub load: f64,
    pub on: u64,
    pub out: u64,
    pub inc: u64,
    pub base_mem: u64,
    pub max_overhead: u64,
    pub shared: u64,
    pub homing: u64,
    pub mem: f64,
    pub avail: f64,
}

pub fn naive(spec: &PhaseSpec, ranks: &[RankId], r: RankId) -> Naive {
    let mine: Vec<usize> = (0..ranks.len()).filter(|&k| ranks[k] == r).collect();
    let load = mine.iter().map(|&k| spec.tasks()[k].load).sum();
    let base_mem = mine.iter().map(|&k| spec.tasks()[k].base_mem).sum();
    let max_overhead = mine.iter().map(|&k| spec.tasks()[k].overhead_mem).max().unwrap_or(0);
    let blocks: BTreeSet<usize> = mine
        .iter()
        .filter_map(|&k| spec.tasks()[k].block.map(|b| b.0))
        .collect();
    let shared = blocks.iter().map(|&b| spec.blocks()[b].size).sum();
    let homing = blocks
        .iter()
        .filter(|&&b| spec.blocks()[b].home != r)
        .map(|&b| spec.blocks()[b].size)
        .sum();
    let (mut on, mut out, mut inc) = (0, 0, 0);
    for c in spec.comms() {
        let (f, t) = (ranks[c.from.0], ranks[c.to.0]);
        if f == r && t == r {
            on += c.volume;
        } else if f == r {
            out += c.volume;
        } else if t == r {
            inc += c.volume;
        }
    }
    let node = spec.nodes().iter().find(|n| n.ranks.contains(&r)).unwrap();
    Naive {
        load,
        on,
        out,
        inc,
        base_mem,
        max_overhead,
        shared,
        homing,
        mem: (spec.rank_base_mem(r) + base_mem + max_overhead + shared) as f64,
        avail: node.mem as f64 / node.ranks.len() as f64,
    }
}

pub fn naive_work(spec: &PhaseSpec, ranks: &[RankId], c: &WorkCoefficients, r: RankId) -> f64 {
    let n = naive(spec, ranks, r);
    if c.enforce_memory && n.mem > n.avail {
        return f64::INFINITY;
    }
    c.alpha * n.load + c.beta * n.out.max(n.inc) as f64 + c.gamma * n.on as f64 + c.delta * n.homing as f64
}

pub fn naive_max_work(spec: &PhaseSpec, ranks: &[RankId], c: &WorkCoefficients) -> f64 {
    spec.ranks()
        .map(|r| naive_work(spec, ranks, c, r))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}
