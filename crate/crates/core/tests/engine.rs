mod common;

use std::collections::{HashMap, HashSet};

use ccm_core::generate::{random_spec, Placement, RandomSpecParams};
use ccm_core::transfer::lock::{ProtocolEvent, ProtocolState, StepResult};
use ccm_core::transfer::{parse_transfers, refresh_info};
use ccm_core::{build_clusters, ccm_lb, find_best_ccm, Assignment, LbParams, PhaseSpec, RankId, WorkCoefficients};
use common::{close, naive, naive_work, rng};
use proptest::prelude::*;
use rand::Rng;

/// (overage, finite work) of a rank computed from definitions.
fn level(spec: &PhaseSpec, ranks: &[RankId], c: &WorkCoefficients, r: RankId) -> (f64, f64) {
    let n = naive(spec, ranks, r);
    let over = if c.enforce_memory {
        (n.mem - n.avail).max(0.0)
    } else {
        0.0
    };
    let finite = WorkCoefficients {
        enforce_memory: false,
        ..*c
    };
    (over, naive_work(spec, ranks, &finite, r))
}

fn lex_max(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    if b.0 > a.0 || (b.0 == a.0 && b.1 > a.1) {
        b
    } else {
        a
    }
}

fn balanced_params(ranks: usize, tasks: usize, rng: &mut impl Rng) -> RandomSpecParams {
    RandomSpecParams {
        ranks,
        tasks,
        blocks: rng.gen_range(0..4),
        comms: rng.gen_range(0..2 * tasks),
        max_volume: 100,
        self_edges: false,
        mem_fraction: rng.gen_range(0.5..1.2),
        placement: if rng.gen_bool(0.5) {
            Placement::SingleRank
        } else {
            Placement::Random
        },
    }
}

#[test]
fn best_candidate_matches_exhaustive_pairs() {
    let mut r = rng(41);
    for _ in 0..300 {
        let p = balanced_params(r.gen_range(2..5), r.gen_range(1..12), &mut r);
        let spec = random_spec(&mut r, &p);
        let coeffs = common::random_coeffs(&mut r);
        let a = Assignment::initial(&spec);
        let rank = RankId(r.gen_range(0..spec.rank_count()));
        let peer = RankId((rank.0 + 1) % spec.rank_count());
        let info = refresh_info(&spec, &a, peer, 0, 0).unwrap();
        let best = find_best_ccm(&spec, &coeffs, &a, rank, &info, 0).unwrap();

        let own = build_clusters(&spec, &a, rank, 0).unwrap();
        let before_r = level(&spec, a.as_ranks(), &coeffs, rank);
        let before_p = level(&spec, a.as_ranks(), &coeffs, peer);
        let before = lex_max(before_r, before_p);
        let mut oracle: Option<(f64, f64)> = None;
        let own_opts: Vec<Option<&ccm_core::Cluster>> = std::iter::once(None).chain(own.iter().map(Some)).collect();
        let peer_opts: Vec<Option<&ccm_core::Cluster>> =
            std::iter::once(None).chain(info.clusters.iter().map(Some)).collect();
        for cr in &own_opts {
            for cp in &peer_opts {
                if cr.is_none() && cp.is_none() {
                    continue;
                }
                let mut ranks = a.as_ranks().to_vec();
                for t in cr.map_or(&[][..], |c| &c.tasks[..]) {
                    ranks[t.0] = peer;
                }
                for t in cp.map_or(&[][..], |c| &c.tasks[..]) {
                    ranks[t.0] = rank;
                }
                let ar = level(&spec, &ranks, &coeffs, rank);
                let ap = level(&spec, &ranks, &coeffs, peer);
                if ar.0 > before_r.0 || ap.0 > before_p.0 {
                    continue;
                }
                let after = lex_max(ar, ap);
                let gain = (before.0 - after.0, before.1 - after.1);
                let tol = 1e-12 * before.1.abs().max(1.0);
                if gain.0 > 0.0 || (gain.0 == 0.0 && gain.1 > tol) {
                    oracle = Some(match oracle {
                        Some(o) if o.0 > gain.0 || (o.0 == gain.0 && o.1 >= gain.1) => o,
                        _ => gain,
                    });
                }
            }
        }
        match (best, oracle) {
            (None, None) => {}
            (Some(b), Some(o)) => {
                assert!(close(b.gain.overage, o.0, 1e-9));
                assert!(close(b.gain.work, o.1, 1e-9), "{} vs {}", b.gain.work, o.1);
            }
            (b, o) => panic!("engine {b:?} vs oracle {o:?}"),
        }
    }
}

#[test]
fn transfers_improve_pairs_and_spare_third_ranks() {
    let mut r = rng(42);
    for run in 0..100 {
        let ranks = r.gen_range(3..7);
        let p = balanced_params(ranks, r.gen_range(4..30), &mut r);
        let spec = random_spec(&mut r, &p);
        let coeffs = common::random_coeffs(&mut r);
        let params = LbParams {
            n_iter: 4,
            k_rounds: 2,
            fanout: r.gen_range(1..ranks),
            seed: run,
            comm_threshold: r.gen_range(0..60),
            verbose: false,
        };
        let out = ccm_lb(&spec, &coeffs, &params).unwrap();
        let mut cur = spec.initial_assignment().to_vec();
        for t in out.trace.transfers() {
            let mut next = cur.clone();
            for task in &t.give {
                assert_eq!(cur[task.0], t.rank);
                next[task.0] = t.peer;
            }
            for task in &t.take {
                assert_eq!(cur[task.0], t.peer);
                next[task.0] = t.rank;
            }
            let b = lex_max(level(&spec, &cur, &coeffs, t.rank), level(&spec, &cur, &coeffs, t.peer));
            let a = lex_max(
                level(&spec, &next, &coeffs, t.rank),
                level(&spec, &next, &coeffs, t.peer),
            );
            assert!(a.0 < b.0 || (a.0 == b.0 && a.1 < b.1), "{a:?} !< {b:?}");
            for other in spec.ranks().filter(|&x| x != t.rank && x != t.peer) {
                assert_eq!(level(&spec, &cur, &coeffs, other), level(&spec, &next, &coeffs, other));
            }
            cur = next;
        }
        assert_eq!(out.assignment.as_ranks(), &cur[..]);
        out.assignment.audit(&spec, 1e-9).unwrap();
        let final_max = spec
            .ranks()
            .map(|x| naive_work(&spec, &cur, &coeffs, x))
            .fold(0.0, f64::max);
        assert!(close(out.stats.final_.max_work_s, final_max, 1e-9));
    }
}

#[test]
fn memory_feasibility_is_preserved() {
    let mut r = rng(43);
    let mut runs = 0;
    while runs < 100 {
        let ranks = r.gen_range(2..6);
        let mut p = balanced_params(ranks, r.gen_range(4..24), &mut r);
        p.placement = Placement::Random;
        p.mem_fraction = r.gen_range(0.3..0.8);
        let spec = random_spec(&mut r, &p);
        let fits = |assign: &[RankId]| {
            spec.ranks().all(|x| {
                let n = naive(&spec, assign, x);
                n.mem <= n.avail
            })
        };
        if !fits(spec.initial_assignment()) {
            continue;
        }
        let mut coeffs = common::random_coeffs(&mut r);
        coeffs.enforce_memory = true;
        let params = LbParams {
            fanout: r.gen_range(1..ranks),
            seed: runs,
            ..LbParams::default()
        };
        let out = ccm_lb(&spec, &coeffs, &params).unwrap();
        assert!(out.stats.initially_feasible);
        let mut cur = spec.initial_assignment().to_vec();
        for t in out.trace.transfers() {
            t.give.iter().for_each(|task| cur[task.0] = t.peer);
            t.take.iter().for_each(|task| cur[task.0] = t.rank);
            assert!(fits(&cur));
        }
        assert!(out.stats.final_.max_work_s.is_finite());
        runs += 1;
    }
}

#[test]
fn runs_are_deterministic_and_traces_replay() {
    let mut r = rng(44);
    for seed in 0..20 {
        let p = balanced_params(5, 25, &mut r);
        let spec = random_spec(&mut r, &p);
        let coeffs = common::random_coeffs(&mut r);
        let params = LbParams {
            fanout: 2,
            seed,
            verbose: seed % 2 == 0,
            ..LbParams::default()
        };
        let a = ccm_lb(&spec, &coeffs, &params).unwrap();
        let b = ccm_lb(&spec, &coeffs, &params).unwrap();
        let text = a.trace.to_text(&[]);
        assert_eq!(text, b.trace.to_text(&[]));
        assert_eq!(a.stats, b.stats);
        let parsed = parse_transfers(&text).unwrap();
        let mut replay = Assignment::initial(&spec);
        for (_, t) in &parsed {
            t.apply(&spec, &mut replay).unwrap();
        }
        assert_eq!(replay.as_ranks(), a.assignment.as_ranks());
        let worst = a.stats.per_iteration.iter().map(|s| s.max_work_s);
        let mut prev = a.stats.initial.max_work_s;
        for w in worst {
            assert!(w <= prev * (1.0 + 1e-12) || prev.is_infinite());
            prev = w;
        }
    }
}

#[test]
fn single_rank_phase_is_left_alone() {
    let mut r = rng(45);
    let spec = random_spec(
        &mut r,
        &RandomSpecParams {
            ranks: 1,
            tasks: 4,
            ..Default::default()
        },
    );
    let out = ccm_lb(&spec, &WorkCoefficients::default(), &LbParams::default()).unwrap();
    assert_eq!(out.stats.final_.transfers, 0);
    assert_eq!(out.assignment.as_ranks(), spec.initial_assignment());
}

/// Every ordered list of distinct peers of `rank` among `n` ranks.
fn work_lists(rank: usize, n: usize) -> Vec<Vec<RankId>> {
    let peers: Vec<usize> = (0..n).filter(|&p| p != rank).collect();
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    while let Some(prefix) = frontier.pop() {
        for &p in &peers {
            if !prefix.contains(&RankId(p)) {
                let mut next: Vec<RankId> = prefix.clone();
                next.push(RankId(p));
                out.push(next.clone());
                frontier.push(next);
            }
        }
    }
    out
}

fn explore(start: ProtocolState) -> (usize, bool) {
    let n = start.rank_count();
    let mut index: HashMap<ProtocolState, usize> = HashMap::new();
    let mut states = vec![start.clone()];
    let mut succ: Vec<Vec<usize>> = vec![];
    index.insert(start, 0);
    let mut i = 0;
    while i < states.len() {
        let s = states[i].clone();
        assert!(!s.has_wait_cycle(), "wait-for cycle in {s:?}");
        let mut next = Vec::new();
        for rank in 0..n {
            let mut t = s.clone();
            let mut events = Vec::new();
            let res = t.step(RankId(rank), &mut events, |_, _| Ok(())).unwrap();
            if res == StepResult::Blocked {
                assert_eq!(t, s, "blocked step mutated state");
                continue;
            }
            for e in &events {
                if let ProtocolEvent::Session { rank: a, peer } = e {
                    assert_eq!(s.table.locker_of(*peer), Some(*a));
                }
            }
            let id = *index.entry(t.clone()).or_insert_with(|| {
                states.push(t);
                states.len() - 1
            });
            next.push(id);
        }
        if !s.is_done() {
            assert!(!next.is_empty(), "stuck state {s:?}");
        }
        succ.push(next);
        i += 1;
    }
    // backward fixed point: which states can still finish
    let mut can_finish: Vec<bool> = states.iter().map(ProtocolState::is_done).collect();
    loop {
        let mut changed = false;
        for v in 0..states.len() {
            if !can_finish[v] && succ[v].iter().any(|&w| can_finish[w]) {
                can_finish[v] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (states.len(), can_finish.iter().all(|&b| b))
}

#[test]
fn lock_protocol_model_check_three_ranks() {
    let lists: Vec<Vec<Vec<RankId>>> = (0..3).map(|r| work_lists(r, 3)).collect();
    let mut explored = 0;
    let mut seen = HashSet::new();
    for a in &lists[0] {
        for b in &lists[1] {
            for c in &lists[2] {
                let start = ProtocolState::new(vec![a.clone(), b.clone(), c.clone()]);
                assert!(seen.insert(start.clone()));
                let (count, all_finish) = explore(start);
                assert!(all_finish, "{a:?} {b:?} {c:?}");
                explored += count;
            }
        }
    }
    assert_eq!(seen.len(), 125);
    assert!(explored > 125);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_schedules_finish_without_cycles(
        lists in proptest::collection::vec(proptest::collection::vec(0usize..6, 0..8), 6),
        schedule in proptest::collection::vec(0usize..6, 0..400),
    ) {
        let work: Vec<Vec<RankId>> = lists
            .iter()
            .enumerate()
            .map(|(r, l)| {
                let mut seen = Vec::new();
                for &p in l {
                    if p != r && !seen.contains(&RankId(p)) {
                        seen.push(RankId(p));
                    }
                }
                seen
            })
            .collect();
        let mut state = ProtocolState::new(work);
        let mut events = Vec::new();
        for &r in &schedule {
            state.step(RankId(r), &mut events, |_, _| Ok(())).unwrap();
            prop_assert!(!state.has_wait_cycle());
        }
        ccm_core::transfer::lock::run_round_robin(&mut state, &mut events, |_, _| Ok(())).unwrap();
        prop_assert!(state.is_done());
    }
}
