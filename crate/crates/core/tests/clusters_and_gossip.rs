mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use ccm_core::gossip::message_bound;
use ccm_core::{build_clusters, build_peer_network, Assignment, RankId, RankInfo};
use common::{rng, small_spec};
use rand::Rng;

/// Components by breadth-first search over an explicit adjacency list.
fn bfs_components(spec: &ccm_core::PhaseSpec, a: &Assignment, r: RankId, threshold: u64) -> Vec<Vec<usize>> {
    let mine: Vec<usize> = a.tasks_on(r).iter().map(|t| t.0).collect();
    let set: BTreeSet<usize> = mine.iter().copied().collect();
    let mut adj = vec![Vec::new(); spec.task_count()];
    for &x in &mine {
        for &y in &mine {
            let (bx, by) = (spec.tasks()[x].block, spec.tasks()[y].block);
            if x != y && bx.is_some() && bx == by {
                adj[x].push(y);
            }
        }
    }
    for c in spec.comms() {
        let (f, t) = (c.from.0, c.to.0);
        if set.contains(&f) && set.contains(&t) && c.volume > 0 && c.volume >= threshold {
            adj[f].push(t);
            adj[t].push(f);
        }
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &s in &mine {
        if !seen.insert(s) {
            continue;
        }
        let mut comp = vec![s];
        let mut i = 0;
        while i < comp.len() {
            for &n in &adj[comp[i]] {
                if seen.insert(n) {
                    comp.push(n);
                }
            }
            i += 1;
        }
        comp.sort();
        out.push(comp);
    }
    out.sort();
    out
}

#[test]
fn clusters_match_connected_components() {
    let mut r = rng(5);
    for _ in 0..300 {
        let spec = small_spec(&mut r, 4, 24, 5, 40);
        let a = Assignment::initial(&spec);
        let threshold = r.gen_range(0..40);
        for rank in spec.ranks() {
            let clusters = build_clusters(&spec, &a, rank, threshold).unwrap();
            let got: Vec<Vec<usize>> = clusters.iter().map(|c| c.tasks.iter().map(|t| t.0).collect()).collect();
            assert_eq!(got, bfs_components(&spec, &a, rank, threshold));
            for c in &clusters {
                assert_eq!(c.id, c.tasks[0]);
                let load: f64 = c.tasks.iter().map(|t| spec.task(*t).load).sum();
                assert!((c.load - load).abs() < 1e-9);
                assert!(c.off_rank_volume <= c.inter_volume);
            }
        }
    }
}

#[test]
fn raising_threshold_only_splits() {
    let mut r = rng(6);
    for _ in 0..100 {
        let spec = small_spec(&mut r, 3, 16, 3, 30);
        let a = Assignment::initial(&spec);
        for rank in spec.ranks() {
            let coarse = build_clusters(&spec, &a, rank, 5).unwrap();
            let fine = build_clusters(&spec, &a, rank, 25).unwrap();
            assert!(fine.len() >= coarse.len());
            for f in &fine {
                assert!(coarse.iter().any(|c| f.tasks.iter().all(|t| c.contains(*t))));
            }
        }
    }
}

fn infos(spec: &ccm_core::PhaseSpec) -> Vec<Arc<RankInfo>> {
    let a = Assignment::initial(spec);
    spec.ranks()
        .map(|r| Arc::new(RankInfo::snapshot(spec, &a, r, 0, 0).unwrap()))
        .collect()
}

fn spec_with_ranks(seed: u64, ranks: usize) -> ccm_core::PhaseSpec {
    let mut r = rng(seed);
    let params = ccm_core::generate::RandomSpecParams {
        ranks,
        tasks: 2 * ranks,
        ..Default::default()
    };
    ccm_core::generate::random_spec(&mut r, &params)
}

#[test]
fn full_fanout_single_round_is_complete() {
    for ranks in 2..12 {
        let spec = spec_with_ranks(ranks as u64, ranks);
        let net = build_peer_network(&infos(&spec), 1, ranks - 1, 9, 0).unwrap();
        for k in &net.knowledge {
            assert_eq!(k.len(), ranks);
        }
    }
}

#[test]
fn message_count_respects_tree_bound() {
    for seed in 0..40 {
        let ranks = 3 + (seed as usize % 14);
        let spec = spec_with_ranks(seed, ranks);
        for k in 1..4 {
            for f in 1..ranks.min(5) {
                let net = build_peer_network(&infos(&spec), k, f, seed, 0).unwrap();
                assert!(net.message_count() as u128 <= message_bound(ranks, k, f));
                for m in &net.messages {
                    assert!(m.round <= k);
                }
            }
        }
    }
}

#[test]
fn coverage_grows_with_rounds() {
    for ranks in [8, 16, 32] {
        let spec = spec_with_ranks(ranks as u64, ranks);
        let info = infos(&spec);
        let mean = |k: usize| -> f64 {
            (0..10u64)
                .map(|s| build_peer_network(&info, k, 2, s, 0).unwrap().mean_coverage())
                .sum::<f64>()
        };
        let c: Vec<f64> = (1..5).map(mean).collect();
        assert!(c.windows(2).all(|w| w[0] <= w[1]), "{c:?}");
    }
}

#[test]
fn knowledge_holds_true_snapshots() {
    let spec = spec_with_ranks(4, 6);
    let info = infos(&spec);
    let net = build_peer_network(&info, 2, 2, 1, 3).unwrap();
    for k in &net.knowledge {
        assert!(k.contains(k.owner));
        for (r, i) in k.entries() {
            assert_eq!(**i, *info[r.0]);
        }
        let peers: Vec<RankId> = k.peers().collect();
        assert!(!peers.contains(&k.owner));
    }
}
