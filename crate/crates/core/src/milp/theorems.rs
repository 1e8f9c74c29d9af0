//! Checks that the Boolean products are the unique binary solutions of the
//! integer linking constraints.

use serde::Serialize;

use crate::error::Result;
use crate::milp::builder::{build_fwmp, MilpInstance, RowKind};
use crate::milp::matrix::{assignment_matrices, comm_tensors, AssignmentMatrices, BinMatrix, CommTensors};
use crate::model::{PhaseSpec, WorkCoefficients};

const TOL: f64 = 1e-9;

/// One lower-bound row `u_kn * chi_ik <= phi_in`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LowerBound {
    pub k: usize,
    pub u: u8,
    pub chi: u8,
    pub product: u8,
    /// Whether the bound holds with equality.
    pub tight: bool,
}

/// Bound compliance of one block-presence entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComplianceRow {
    pub i: usize,
    pub n: usize,
    pub lower: Vec<LowerBound>,
    pub phi: u8,
    /// `sum_k u_kn * chi_ik`.
    pub upper: u64,
    pub upper_tight: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremReport {
    pub matrices: AssignmentMatrices,
    pub tensors: CommTensors,
    /// The Boolean products satisfy every linking row.
    pub phi_feasible: bool,
    pub psi_feasible: bool,
    /// Flipping any single entry breaks a linking row.
    pub phi_unique: bool,
    pub psi_unique: bool,
    pub compliance: Vec<ComplianceRow>,
}

impl TheoremReport {
    pub fn holds(&self) -> bool {
        self.phi_feasible && self.psi_feasible && self.phi_unique && self.psi_unique
    }
}

fn rows_hold(inst: &MilpInstance, kinds: &[RowKind], x: &[f64]) -> bool {
    inst.rows()
        .filter(|r| kinds.contains(&r.kind))
        .all(|r| r.satisfied(x, TOL))
}

/// Every linking row involves exactly one `phi` or `psi` entry, so flipping
/// entries one at a time decides uniqueness of the whole binary solution.
fn unique_under_flips(inst: &MilpInstance, kinds: &[RowKind], x: &[f64], vars: &[usize]) -> bool {
    let mut y = x.to_vec();
    vars.iter().all(|&v| {
        y[v] = 1.0 - y[v];
        let broken = !rows_hold(inst, kinds, &y);
        y[v] = x[v];
        broken
    })
}

/// Derives `phi` and `psi` from `chi` by Boolean products and checks them
/// against the integer constraints of the full model.
pub fn verify_theorems(spec: &PhaseSpec, chi: &BinMatrix) -> Result<TheoremReport> {
    let matrices = assignment_matrices(spec, chi)?;
    let tensors = comm_tensors(spec, chi);
    let inst = build_fwmp(spec, &WorkCoefficients::default())?;
    let l = inst.layout;
    let x = inst.vector(chi, &matrices.phi, Some(&tensors.psi), 0.0);

    let thm3 = [RowKind::Thm3Lb, RowKind::Thm3Ub];
    let thm5 = [RowKind::Thm5a, RowKind::Thm5b, RowKind::Thm5c];
    let phi_vars: Vec<usize> = (0..l.ranks)
        .flat_map(|i| (0..l.blocks).map(move |n| l.phi(i, n)))
        .collect();
    let psi_vars: Vec<usize> = (0..l.ranks)
        .flat_map(|i| (0..l.ranks).flat_map(move |j| (0..l.comms).map(move |m| l.psi(i, j, m))))
        .collect();

    let u = &matrices.u;
    let mut compliance = Vec::new();
    for i in 0..l.ranks {
        for n in 0..l.blocks {
            let phi = u8::from(matrices.phi.get(i, n));
            let lower = (0..l.tasks)
                .map(|k| {
                    let (uk, ck) = (u8::from(u.get(k, n)), u8::from(chi.get(i, k)));
                    LowerBound {
                        k,
                        u: uk,
                        chi: ck,
                        product: uk * ck,
                        tight: uk * ck == phi,
                    }
                })
                .collect::<Vec<_>>();
            let upper: u64 = lower.iter().map(|b| u64::from(b.product)).sum();
            compliance.push(ComplianceRow {
                i,
                n,
                lower,
                phi,
                upper,
                upper_tight: upper == u64::from(phi),
            });
        }
    }

    Ok(TheoremReport {
        phi_feasible: rows_hold(&inst, &thm3, &x),
        psi_feasible: rows_hold(&inst, &thm5, &x),
        phi_unique: unique_under_flips(&inst, &thm3, &x, &phi_vars),
        psi_unique: unique_under_flips(&inst, &thm5, &x, &psi_vars),
        matrices,
        tensors,
        compliance,
    })
}
