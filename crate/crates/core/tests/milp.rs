mod common;

use std::collections::BTreeMap;

use ccm_core::milp::matrix::{chi_of, comm_tensors};
use ccm_core::milp::{
    build_comcp, build_fwmp, export_lp, to_lp_text, verify_theorems, BinMatrix, MilpInstance, RowKind, Sense,
};
use ccm_core::{PhaseSpec, RankId, WorkCoefficients};
use common::{fixture, naive, rng, small_spec};
use rand::Rng;

fn example_chi() -> BinMatrix {
    BinMatrix::from_rows(&[vec![1, 1, 0], vec![0, 0, 1]]).unwrap()
}

/// Every rank vector of a phase, lexicographic.
fn all_assignments(ranks: usize, tasks: usize) -> Vec<Vec<RankId>> {
    let mut out = vec![vec![]];
    for _ in 0..tasks {
        out = out
            .into_iter()
            .flat_map(|p: Vec<RankId>| {
                (0..ranks).map(move |r| {
                    let mut q = p.clone();
                    q.push(RankId(r));
                    q
                })
            })
            .collect();
    }
    out
}

#[test]
fn block_example_matrices_and_equalities() {
    let spec = fixture("fig2.json");
    let report = verify_theorems(&spec, &example_chi()).unwrap();
    assert_eq!(report.matrices.chi.to_rows(), vec![vec![1, 1, 0], vec![0, 0, 1]]);
    assert_eq!(report.matrices.u.to_rows(), vec![vec![1, 0], vec![1, 0], vec![0, 1]]);
    assert_eq!(report.matrices.phi.to_rows(), vec![vec![1, 0], vec![0, 1]]);

    let inst = build_comcp(&spec, &WorkCoefficients::compute_only()).unwrap();
    let a = inst.dense_equalities();
    let expected_a = vec![
        vec![1., 0., 0., 1., 0., 0., 0., 0., 0., 0., 0.],
        vec![0., 1., 0., 0., 1., 0., 0., 0., 0., 0., 0.],
        vec![0., 0., 1., 0., 0., 1., 0., 0., 0., 0., 0.],
    ];
    assert_eq!(a, expected_a);

    // exactly I^K binary chi satisfy the equalities
    let mut consistent = 0;
    for bits in 0u32..64 {
        let mut x = vec![0.0; 11];
        for (v, slot) in x.iter_mut().take(6).enumerate() {
            *slot = f64::from((bits >> v) & 1);
        }
        if inst.eq_rows.iter().all(|r| r.satisfied(&x, 0.0)) {
            consistent += 1;
        }
    }
    assert_eq!(consistent, 8);
}

#[test]
fn block_example_inequality_matrix() {
    let spec = fixture("fig2.json");
    let inst = build_comcp(&spec, &WorkCoefficients::compute_only()).unwrap();
    let (b_mat, b_vec) = inst.dense_inequalities();
    assert_eq!((b_mat.len(), b_mat[0].len()), (24, 11));

    let (d, e, f, g) = (-100.0, -10.0, -1000.0, -1.0);
    let cap = 1_000_000.0 - 500.0;
    let tail = [
        vec![d + e, d, d, 0., 0., 0., f, f, 0., 0., 0.],
        vec![d, d + e, d, 0., 0., 0., f, f, 0., 0., 0.],
        vec![d, d, d + e, 0., 0., 0., f, f, 0., 0., 0.],
        vec![0., 0., 0., d + e, d, d, 0., 0., f, f, 0.],
        vec![0., 0., 0., d, d + e, d, 0., 0., f, f, 0.],
        vec![0., 0., 0., d, d, d + e, 0., 0., f, f, 0.],
        vec![g, g, g, 0., 0., 0., 0., 0., 0., 0., 1.],
        vec![0., 0., 0., g, g, g, 0., 0., 0., 0., 1.],
    ];
    assert_eq!(&b_mat[16..], &tail[..]);
    assert_eq!(&b_vec[16..], &[cap, cap, cap, cap, cap, cap, 0.0, 0.0]);
    assert!(b_vec[..16].iter().all(|&b| b == 0.0));

    // first 12 rows are lower bounds phi_in - u_kn chi_ik, then 4 upper bounds
    let u = [[1., 0.], [1., 0.], [0., 1.]];
    let mut row = 0;
    for i in 0..2 {
        for n in 0..2 {
            for k in 0..3 {
                let mut want = vec![0.0; 11];
                want[6 + 2 * i + n] = 1.0;
                want[3 * i + k] = -u[k][n];
                assert_eq!(
                    b_mat[row].iter().map(|x| x + 0.0).collect::<Vec<_>>(),
                    want,
                    "row {row}"
                );
                row += 1;
            }
        }
    }
    for i in 0..2 {
        for n in 0..2 {
            let mut want = vec![0.0; 11];
            want[6 + 2 * i + n] = -1.0;
            for k in 0..3 {
                want[3 * i + k] = u[k][n];
            }
            assert_eq!(b_mat[row].iter().map(|x| x + 0.0).collect::<Vec<_>>(), want);
            row += 1;
        }
    }
}

#[test]
fn block_example_bound_compliance() {
    let spec = fixture("fig2.json");
    let report = verify_theorems(&spec, &example_chi()).unwrap();
    assert!(report.holds());
    // (u, chi, tight) per k, then phi, upper bound, upper tight
    type Row = ([(u8, u8, bool); 3], u8, u64, bool);
    let table: [Row; 4] = [
        ([(1, 1, true), (1, 1, true), (0, 0, false)], 1, 2, false),
        ([(0, 1, true), (0, 1, true), (1, 0, true)], 0, 0, true),
        ([(1, 0, true), (1, 0, true), (0, 1, true)], 0, 0, true),
        ([(0, 0, false), (0, 0, false), (1, 1, true)], 1, 1, true),
    ];
    assert_eq!(report.compliance.len(), 4);
    for (row, want) in report.compliance.iter().zip(&table) {
        for (b, &(u, chi, tight)) in row.lower.iter().zip(&want.0) {
            assert_eq!((b.u, b.chi, b.tight), (u, chi, tight), "({}, {})", row.i, row.n);
        }
        assert_eq!((row.phi, row.upper, row.upper_tight), (want.1, want.2, want.3));
    }
}

#[test]
fn communication_example_tensors_and_row_count() {
    let spec = fixture("fig3.json");
    let chi = example_chi();
    let tensors = comm_tensors(&spec, &chi);
    // slices listed with the receiver as row index
    let printed_slices = [[[0, 0], [1, 0]], [[0, 0], [1, 0]], [[0, 1], [0, 0]], [[1, 0], [0, 0]]];
    for (m, (slice, printed)) in tensors.psi.iter().zip(&printed_slices).enumerate() {
        for (j, printed_row) in printed.iter().enumerate() {
            for (i, &bit) in printed_row.iter().enumerate() {
                assert_eq!(u8::from(slice.get(i, j)), bit, "slice {m}");
            }
        }
    }
    let inst = build_fwmp(&spec, &WorkCoefficients::default()).unwrap();
    assert_eq!(inst.ineq_rows.len(), 74);
    assert_eq!(inst.layout.len(), 2 * 5 + 16 + 1);
    assert!(verify_theorems(&spec, &chi).unwrap().holds());
}

#[test]
fn row_counts_follow_closed_forms() {
    let mut r = rng(21);
    for _ in 0..100 {
        let spec = small_spec(&mut r, 4, 8, 3, 10);
        let (i, k, n) = (spec.rank_count(), spec.task_count(), spec.block_count());
        let comcp = build_comcp(&spec, &WorkCoefficients::compute_only()).unwrap();
        assert_eq!(comcp.eq_rows.len(), k);
        assert_eq!(comcp.ineq_rows.len(), i * (k + 1) * (n + 1));
        assert_eq!(comcp.layout.len(), i * (k + n) + 1);
        let fwmp = build_fwmp(&spec, &common::random_coeffs(&mut r)).unwrap();
        let m = spec.comms().iter().filter(|c| c.volume > 0).count();
        assert_eq!(fwmp.ineq_rows.len(), i * ((k + 1) * (n + 1) + 3 * i * m + 1));
        assert_eq!(fwmp.layout.len(), i * (k + n) + i * i * m + 1);
        for _ in 0..5 {
            let x: Vec<f64> = (0..fwmp.layout.len()).map(|_| r.gen_range(-5.0..5.0)).collect();
            assert_eq!(fwmp.objective_value(&x), x[fwmp.layout.w_max()]);
        }
    }
}

/// Naive rank-level edge indicator from a rank vector.
fn naive_psi(spec: &PhaseSpec, ranks: &[RankId], m_comm: usize, i: usize, j: usize) -> bool {
    let c = &spec.comms()[m_comm];
    ranks[c.from.0].0 == i && ranks[c.to.0].0 == j
}

fn rows_hold(inst: &MilpInstance, kinds: &[RowKind], x: &[f64]) -> bool {
    inst.rows()
        .filter(|r| kinds.contains(&r.kind))
        .all(|r| r.satisfied(x, 1e-9))
}

#[test]
fn boolean_products_are_unique_integer_solutions() {
    let mut r = rng(22);
    let mut checked = 0;
    while checked < 60 {
        let spec = small_spec(&mut r, 3, 6, 3, 8);
        let (ni, nn) = (spec.rank_count(), spec.block_count());
        let inst = build_fwmp(&spec, &WorkCoefficients::default()).unwrap();
        let l = inst.layout;
        let all = all_assignments(ni, spec.task_count());
        let ranks = &all[r.gen_range(0..all.len())];
        let chi = chi_of(ni, ranks);
        let report = verify_theorems(&spec, &chi).unwrap();
        assert!(report.holds());

        let base = inst.vector(&chi, &report.matrices.phi, Some(&report.tensors.psi), 0.0);
        // every binary phi: only the naive block-presence matrix survives
        let mut survivors = 0;
        for bits in 0u32..(1 << (ni * nn)) {
            let mut x = base.clone();
            let mut matches_naive = true;
            for i in 0..ni {
                for n in 0..nn {
                    let bit = (bits >> (i * nn + n)) & 1 == 1;
                    x[l.phi(i, n)] = f64::from(u8::from(bit));
                    let present = (0..spec.task_count())
                        .any(|k| ranks[k].0 == i && spec.tasks()[k].block.map(|b| b.0) == Some(n));
                    matches_naive &= bit == present;
                }
            }
            if rows_hold(&inst, &[RowKind::Thm3Lb, RowKind::Thm3Ub], &x) {
                survivors += 1;
                assert!(matches_naive);
            }
        }
        assert_eq!(survivors, 1);

        // every binary slice of psi, one communication at a time
        for (m, &c) in inst.comms.iter().enumerate() {
            let mut survivors = 0;
            for bits in 0u32..(1 << (ni * ni)) {
                let mut x = base.clone();
                let mut matches_naive = true;
                for i in 0..ni {
                    for j in 0..ni {
                        let bit = (bits >> (i * ni + j)) & 1 == 1;
                        x[l.psi(i, j, m)] = f64::from(u8::from(bit));
                        matches_naive &= bit == naive_psi(&spec, ranks, c.0, i, j);
                    }
                }
                let slice_ok = inst
                    .rows()
                    .filter(|row| matches!(row.kind, RowKind::Thm5a | RowKind::Thm5b | RowKind::Thm5c))
                    .filter(|row| row.name.ends_with(&format!("_{m}")))
                    .all(|row| row.satisfied(&x, 1e-9));
                if slice_ok {
                    survivors += 1;
                    assert!(matches_naive);
                }
            }
            assert_eq!(survivors, 1);
        }
        checked += 1;
    }
}

#[test]
fn work_rows_reproduce_rank_work() {
    let mut r = rng(23);
    for _ in 0..200 {
        let spec = small_spec(&mut r, 3, 6, 3, 8);
        let coeffs = common::random_coeffs(&mut r);
        let inst = build_fwmp(&spec, &coeffs).unwrap();
        let all = all_assignments(spec.rank_count(), spec.task_count());
        let ranks = &all[r.gen_range(0..all.len())];
        let chi = chi_of(spec.rank_count(), ranks);
        let report = verify_theorems(&spec, &chi).unwrap();
        let x = inst.vector(&chi, &report.matrices.phi, Some(&report.tensors.psi), 0.0);
        let mut lhs: BTreeMap<usize, f64> = BTreeMap::new();
        for row in inst.rows_of(RowKind::Work) {
            let rank: usize = row.name.split('_').nth(1).unwrap().parse().unwrap();
            let e = lhs.entry(rank).or_insert(f64::NEG_INFINITY);
            *e = e.max(row.lhs(&x));
        }
        for rank in spec.ranks() {
            let n = naive(&spec, ranks, rank);
            let want = coeffs.alpha * n.load
                + coeffs.beta * n.out.max(n.inc) as f64
                + coeffs.gamma * n.on as f64
                + coeffs.delta * n.homing as f64;
            assert!(common::close(lhs[&rank.0], want, 1e-12), "{} vs {want}", lhs[&rank.0]);
        }
        // memory rows hold exactly when every rank fits
        let fits = spec.ranks().all(|rk| {
            let n = naive(&spec, ranks, rk);
            n.mem <= n.avail
        });
        assert_eq!(rows_hold(&inst, &[RowKind::Mem], &x), fits);
    }
}

#[test]
fn builder_rejections() {
    let spec = fixture("fig3.json");
    let c = WorkCoefficients::new(1.0, 1e-9, 0.0, 0.0, true).unwrap();
    assert!(matches!(build_comcp(&spec, &c), Err(ccm_core::CcmError::Config(_))));
    let mut doc = spec.to_doc();
    doc.tasks.clear();
    doc.comms.clear();
    doc.initial_assignment.clear();
    let empty = PhaseSpec::try_from(doc).unwrap();
    assert!(build_fwmp(&empty, &WorkCoefficients::default()).is_err());
    assert!(build_comcp(&empty, &WorkCoefficients::compute_only()).is_err());
}

/// Minimal reader for the exported LP subset, independent of the writer.
#[derive(Debug, Default)]
struct ParsedLp {
    objective: Vec<String>,
    rows: BTreeMap<String, (BTreeMap<String, f64>, String, f64)>,
    row_order: Vec<String>,
    bounds: Vec<String>,
    binaries: Vec<String>,
}

fn parse_lp(text: &str) -> ParsedLp {
    let mut out = ParsedLp::default();
    let mut section = "";
    let mut pending = String::new();
    let flush = |pending: &mut String, out: &mut ParsedLp| {
        if pending.trim().is_empty() {
            return;
        }
        let (name, body) = pending.split_once(':').unwrap();
        let toks: Vec<&str> = body.split_whitespace().collect();
        let op_at = toks.iter().position(|t| matches!(*t, "<=" | ">=" | "=")).unwrap();
        let mut terms = BTreeMap::new();
        let mut i = 0;
        while i < op_at {
            let sign = match toks[i] {
                "+" => 1.0,
                "-" => -1.0,
                t => panic!("unexpected token {t}"),
            };
            let coef: f64 = toks[i + 1].parse().unwrap();
            *terms.entry(toks[i + 2].to_string()).or_insert(0.0) += sign * coef;
            i += 3;
        }
        let rhs: f64 = toks[op_at + 1].parse().unwrap();
        let name = name.trim().to_string();
        out.row_order.push(name.clone());
        out.rows.insert(name, (terms, toks[op_at].to_string(), rhs));
        pending.clear();
    };
    for line in text.lines() {
        if line.starts_with('\\') {
            continue;
        }
        match line.trim() {
            "Minimize" | "Subject To" | "Bounds" | "Binaries" | "End" => {
                flush(&mut pending, &mut out);
                section = line.trim();
                continue;
            }
            _ => {}
        }
        match section {
            "Minimize" => out.objective.push(line.trim().to_string()),
            "Subject To" => {
                if line.starts_with("   ") {
                    pending.push(' ');
                    pending.push_str(line.trim());
                } else {
                    flush(&mut pending, &mut out);
                    pending.push_str(line.trim());
                }
            }
            "Bounds" => out.bounds.push(line.trim().to_string()),
            "Binaries" => out.binaries.push(line.trim().to_string()),
            _ => {}
        }
    }
    out
}

fn check_round_trip(inst: &MilpInstance, text: &str) {
    let lp = parse_lp(text);
    assert_eq!(lp.objective, vec!["obj: W_max".to_string()]);
    assert_eq!(lp.bounds, vec!["W_max >= 0".to_string()]);
    assert_eq!(lp.binaries.len(), inst.layout.binary_count());
    assert!(!lp.binaries.contains(&"W_max".to_string()));
    let meta = inst.metadata();
    let eqs = lp.rows.values().filter(|r| r.1 == "=").count();
    assert_eq!(eqs, meta.rows_eq);
    assert_eq!(lp.rows.len() - eqs, meta.rows_ineq);
    for row in inst.rows() {
        let (terms, op, rhs) = &lp.rows[&row.name];
        let want_op = match row.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        assert_eq!(op, want_op);
        assert_eq!(*rhs, row.rhs);
        let nonzero: BTreeMap<String, f64> = terms
            .iter()
            .filter(|(_, c)| **c != 0.0)
            .map(|(k, c)| (k.clone(), *c))
            .collect();
        let want: BTreeMap<String, f64> = row.terms.iter().map(|&(v, c)| (inst.layout.name(v), c)).collect();
        assert_eq!(nonzero, want, "{}", row.name);
    }
    for name in &lp.row_order {
        let prefix = name.split('_').next().unwrap();
        assert!(
            ["eqK", "thm3lb", "thm3ub", "mem", "span", "thm5a", "thm5b", "thm5c", "work"].contains(&prefix),
            "{name}"
        );
    }
}

#[test]
fn lp_export_round_trips() {
    let spec = fixture("fig2.json");
    let inst = build_comcp(&spec, &WorkCoefficients::compute_only()).unwrap();
    let text = to_lp_text(&inst, &["fig2".to_string()]);
    let lp = parse_lp(&text);
    assert_eq!(lp.rows.values().filter(|r| r.1 == "=").count(), 3);
    assert_eq!(lp.rows.len(), 27);
    assert_eq!(lp.binaries.len(), 10);
    check_round_trip(&inst, &text);

    let mut r = rng(24);
    for _ in 0..40 {
        let spec = small_spec(&mut r, 4, 10, 3, 20);
        let inst = build_fwmp(&spec, &common::random_coeffs(&mut r)).unwrap();
        check_round_trip(&inst, &to_lp_text(&inst, &[]));
    }
}

#[test]
fn lp_files_and_sidecar() {
    let dir = std::env::temp_dir().join(format!("ccm-milp-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("fig3.lp");
    let inst = build_fwmp(&fixture("fig3.json"), &WorkCoefficients::default()).unwrap();
    export_lp(&inst, &path, &[]).unwrap();
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("fig3.lp.json")).unwrap()).unwrap();
    assert_eq!(meta["rows_ineq"], 74);
    assert_eq!(meta["kind"], "FWMP");
    assert_eq!(
        (
            meta["I"].as_u64(),
            meta["K"].as_u64(),
            meta["M"].as_u64(),
            meta["N"].as_u64()
        ),
        (Some(2), Some(3), Some(4), Some(2))
    );
    check_round_trip(&inst, &std::fs::read_to_string(&path).unwrap());
    std::fs::remove_dir_all(&dir).unwrap();
    assert!(export_lp(&inst, dir.join("missing").join("x.lp"), &[]).is_err());
}
