//! Assembly of the compute-only (COMCP) and full work model (FWMP) MILPs.
//!
//! The decision vector is row-major `chi` (I×K), row-major `phi` (I×N), then
//! `psi` by (i, j, m) for the full model, then the continuous `W_max`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{CcmError, Result};
use crate::ids::{CommId, RankId, TaskId};
use crate::milp::matrix::{active_comms, block_home_matrix, task_block_matrix, BinMatrix};
use crate::model::{PhaseSpec, WorkCoefficients};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum MilpKind {
    #[serde(rename = "COMCP")]
    Comcp,
    #[serde(rename = "FWMP")]
    Fwmp,
}

/// Index arithmetic of the decision vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VarLayout {
    pub ranks: usize,
    pub tasks: usize,
    pub blocks: usize,
    pub comms: usize,
    pub has_psi: bool,
}

impl VarLayout {
    pub fn chi(&self, i: usize, k: usize) -> usize {
        i * self.tasks + k
    }

    pub fn phi(&self, i: usize, n: usize) -> usize {
        self.ranks * self.tasks + i * self.blocks + n
    }

    pub fn psi(&self, i: usize, j: usize, m: usize) -> usize {
        assert!(self.has_psi, "layout has no communication variables");
        self.ranks * (self.tasks + self.blocks) + (i * self.ranks + j) * self.comms + m
    }

    pub fn binary_count(&self) -> usize {
        let psi = if self.has_psi {
            self.ranks * self.ranks * self.comms
        } else {
            0
        };
        self.ranks * (self.tasks + self.blocks) + psi
    }

    pub fn w_max(&self) -> usize {
        self.binary_count()
    }

    pub fn len(&self) -> usize {
        self.binary_count() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Deterministic name of variable `idx`.
    pub fn name(&self, idx: usize) -> String {
        let chi_end = self.ranks * self.tasks;
        let phi_end = chi_end + self.ranks * self.blocks;
        if idx < chi_end {
            format!("chi_{}_{}", idx / self.tasks, idx % self.tasks)
        } else if idx < phi_end {
            let j = idx - chi_end;
            format!("phi_{}_{}", j / self.blocks, j % self.blocks)
        } else if idx < self.binary_count() {
            let j = idx - phi_end;
            let m = j % self.comms;
            let pair = j / self.comms;
            format!("psi_{}_{}_{}", pair / self.ranks, pair % self.ranks, m)
        } else {
            "W_max".to_string()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum RowKind {
    /// Each task on exactly one rank.
    EqK,
    /// Block presence bounded below by each user's placement.
    Thm3Lb,
    /// Block presence bounded above by the count of placed users.
    Thm3Ub,
    Mem,
    /// Compute-only makespan row.
    Span,
    /// Rank-level edge bounded by the sender placement.
    Thm5a,
    /// Rank-level edge bounded by the receiver placement.
    Thm5b,
    /// Rank-level edge forced by both placements.
    Thm5c,
    /// Full work row for one index permutation.
    Work,
}

impl RowKind {
    pub fn prefix(&self) -> &'static str {
        match self {
            RowKind::EqK => "eqK",
            RowKind::Thm3Lb => "thm3lb",
            RowKind::Thm3Ub => "thm3ub",
            RowKind::Mem => "mem",
            RowKind::Span => "span",
            RowKind::Thm5a => "thm5a",
            RowKind::Thm5b => "thm5b",
            RowKind::Thm5c => "thm5c",
            RowKind::Work => "work",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearRow {
    pub name: String,
    pub kind: RowKind,
    /// Nonzero coefficients by ascending variable index.
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearRow {
    fn new(kind: RowKind, suffix: &[usize], terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> Self {
        let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
        for (v, c) in terms {
            *merged.entry(v).or_insert(0.0) += c;
        }
        let name = std::iter::once(kind.prefix().to_string())
            .chain(suffix.iter().map(usize::to_string))
            .collect::<Vec<_>>()
            .join("_");
        LinearRow {
            name,
            kind,
            terms: merged.into_iter().filter(|&(_, c)| c != 0.0).collect(),
            sense,
            rhs,
        }
    }

    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * x[v]).sum()
    }

    /// Whether `x` satisfies the row up to `tol` absolute slack.
    pub fn satisfied(&self, x: &[f64], tol: f64) -> bool {
        let lhs = self.lhs(x);
        match self.sense {
            Sense::Le => lhs <= self.rhs + tol,
            Sense::Ge => lhs >= self.rhs - tol,
            Sense::Eq => (lhs - self.rhs).abs() <= tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MilpMetadata {
    #[serde(rename = "I")]
    pub i: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub kind: MilpKind,
    pub rows_eq: usize,
    pub rows_ineq: usize,
    pub binaries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MilpInstance {
    pub kind: MilpKind,
    pub layout: VarLayout,
    pub objective: Vec<f64>,
    pub eq_rows: Vec<LinearRow>,
    pub ineq_rows: Vec<LinearRow>,
    /// Communications behind the `psi` slices.
    pub comms: Vec<CommId>,
}

impl MilpInstance {
    pub fn metadata(&self) -> MilpMetadata {
        MilpMetadata {
            i: self.layout.ranks,
            k: self.layout.tasks,
            m: self.layout.comms,
            n: self.layout.blocks,
            kind: self.kind,
            rows_eq: self.eq_rows.len(),
            rows_ineq: self.ineq_rows.len(),
            binaries: self.layout.binary_count(),
        }
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn rows(&self) -> impl Iterator<Item = &LinearRow> {
        self.eq_rows.iter().chain(&self.ineq_rows)
    }

    pub fn rows_of(&self, kind: RowKind) -> impl Iterator<Item = &LinearRow> {
        self.rows().filter(move |r| r.kind == kind)
    }

    pub fn feasible(&self, x: &[f64], tol: f64) -> bool {
        self.rows().all(|r| r.satisfied(x, tol))
    }

    fn dense(row: &LinearRow, width: usize, sign: f64) -> Vec<f64> {
        let mut out = vec![0.0; width];
        for &(v, c) in &row.terms {
            out[v] = sign * c;
        }
        out
    }

    /// Dense `A` of `A x = 1`.
    pub fn dense_equalities(&self) -> Vec<Vec<f64>> {
        self.eq_rows
            .iter()
            .map(|r| Self::dense(r, self.layout.len(), 1.0))
            .collect()
    }

    /// Dense `(B, b)` of `B x + b >= 0`.
    pub fn dense_inequalities(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        self.ineq_rows
            .iter()
            .map(|r| match r.sense {
                Sense::Le => (Self::dense(r, self.layout.len(), -1.0), r.rhs),
                _ => (Self::dense(r, self.layout.len(), 1.0), -r.rhs),
            })
            .unzip()
    }

    /// Decision vector for binary matrices and a makespan value.
    pub fn vector(&self, chi: &BinMatrix, phi: &BinMatrix, psi: Option<&[BinMatrix]>, w_max: f64) -> Vec<f64> {
        let l = &self.layout;
        let mut x = vec![0.0; l.len()];
        for i in 0..l.ranks {
            for k in 0..l.tasks {
                x[l.chi(i, k)] = f64::from(u8::from(chi.get(i, k)));
            }
            for n in 0..l.blocks {
                x[l.phi(i, n)] = f64::from(u8::from(phi.get(i, n)));
            }
        }
        if let (true, Some(psi)) = (l.has_psi, psi) {
            for (m, slice) in psi.iter().enumerate() {
                for i in 0..l.ranks {
                    for j in 0..l.ranks {
                        x[l.psi(i, j, m)] = f64::from(u8::from(slice.get(i, j)));
                    }
                }
            }
        }
        x[l.w_max()] = w_max;
        x
    }
}

fn common_rows(spec: &PhaseSpec, l: &VarLayout) -> (Vec<LinearRow>, Vec<LinearRow>) {
    let u = task_block_matrix(spec);
    let (ni, nk, nn) = (l.ranks, l.tasks, l.blocks);

    let eq = (0..nk)
        .map(|k| {
            LinearRow::new(
                RowKind::EqK,
                &[k],
                (0..ni).map(|i| (l.chi(i, k), 1.0)).collect(),
                Sense::Eq,
                1.0,
            )
        })
        .collect();

    let mut ineq = Vec::new();
    for i in 0..ni {
        for n in 0..nn {
            for k in 0..nk {
                let coef = if u.get(k, n) { -1.0 } else { 0.0 };
                ineq.push(LinearRow::new(
                    RowKind::Thm3Lb,
                    &[i, n, k],
                    vec![(l.phi(i, n), 1.0), (l.chi(i, k), coef)],
                    Sense::Ge,
                    0.0,
                ));
            }
        }
    }
    for i in 0..ni {
        for n in 0..nn {
            let mut terms = vec![(l.phi(i, n), 1.0)];
            terms.extend((0..nk).filter(|&k| u.get(k, n)).map(|k| (l.chi(i, k), -1.0)));
            ineq.push(LinearRow::new(RowKind::Thm3Ub, &[i, n], terms, Sense::Le, 0.0));
        }
    }
    for i in 0..ni {
        let r = RankId(i);
        let cap = spec.rank_avail_mem(r) - spec.rank_base_mem(r) as f64;
        for k in 0..nk {
            let mut terms: Vec<(usize, f64)> = spec
                .tasks()
                .iter()
                .map(|t| (l.chi(i, t.id.0), t.base_mem as f64))
                .collect();
            terms.push((l.chi(i, k), spec.task(TaskId(k)).overhead_mem as f64));
            terms.extend(spec.blocks().iter().map(|b| (l.phi(i, b.id.0), b.size as f64)));
            ineq.push(LinearRow::new(RowKind::Mem, &[i, k], terms, Sense::Le, cap));
        }
    }
    (eq, ineq)
}

fn layout(spec: &PhaseSpec, comms: usize, has_psi: bool) -> Result<VarLayout> {
    if spec.task_count() == 0 {
        return Err(CcmError::Domain("phase has no tasks".into()));
    }
    Ok(VarLayout {
        ranks: spec.rank_count(),
        tasks: spec.task_count(),
        blocks: spec.block_count(),
        comms,
        has_psi,
    })
}

fn objective(l: &VarLayout) -> Vec<f64> {
    let mut c = vec![0.0; l.len()];
    c[l.w_max()] = 1.0;
    c
}

/// Compute-only memory-constrained problem.
pub fn build_comcp(spec: &PhaseSpec, coeffs: &WorkCoefficients) -> Result<MilpInstance> {
    coeffs.validate()?;
    if !coeffs.is_compute_only() {
        return Err(CcmError::Config(
            "the compute-only problem requires alpha=1 and beta=gamma=delta=0".into(),
        ));
    }
    let l = layout(spec, 0, false)?;
    let (eq_rows, mut ineq_rows) = common_rows(spec, &l);
    for i in 0..l.ranks {
        let mut terms: Vec<(usize, f64)> = spec.tasks().iter().map(|t| (l.chi(i, t.id.0), t.load)).collect();
        terms.push((l.w_max(), -1.0));
        ineq_rows.push(LinearRow::new(RowKind::Span, &[i], terms, Sense::Le, 0.0));
    }
    Ok(MilpInstance {
        kind: MilpKind::Comcp,
        objective: objective(&l),
        layout: l,
        eq_rows,
        ineq_rows,
        comms: Vec::new(),
    })
}

/// Full work model problem.
pub fn build_fwmp(spec: &PhaseSpec, coeffs: &WorkCoefficients) -> Result<MilpInstance> {
    coeffs.validate()?;
    let comms = active_comms(spec);
    let l = layout(spec, comms.len(), true)?;
    let v = block_home_matrix(spec);
    let (eq_rows, mut ineq_rows) = common_rows(spec, &l);
    let ni = l.ranks;
    let endpoints: Vec<(usize, usize)> = comms
        .iter()
        .map(|&c| (spec.comm(c).from.0, spec.comm(c).to.0))
        .collect();

    for (kind, a, b) in [
        (RowKind::Thm5a, true, false),
        (RowKind::Thm5b, false, true),
        (RowKind::Thm5c, true, true),
    ] {
        for i in 0..ni {
            for j in 0..ni {
                for (m, &(k0, l0)) in endpoints.iter().enumerate() {
                    let mut terms = vec![(l.psi(i, j, m), 1.0)];
                    if a {
                        terms.push((l.chi(i, k0), -1.0));
                    }
                    if b {
                        terms.push((l.chi(j, l0), -1.0));
                    }
                    let (sense, rhs) = if kind == RowKind::Thm5c {
                        (Sense::Ge, -1.0)
                    } else {
                        (Sense::Le, 0.0)
                    };
                    ineq_rows.push(LinearRow::new(kind, &[i, j, m], terms, sense, rhs));
                }
            }
        }
    }

    for i in 0..ni {
        for sigma in 0..2 {
            let mut terms: Vec<(usize, f64)> = spec
                .tasks()
                .iter()
                .map(|t| (l.chi(i, t.id.0), coeffs.alpha * t.load))
                .collect();
            for (m, &c) in comms.iter().enumerate() {
                let vol = spec.comm(c).volume as f64;
                for j in (0..ni).filter(|&j| j != i) {
                    let var = if sigma == 0 { l.psi(i, j, m) } else { l.psi(j, i, m) };
                    terms.push((var, coeffs.beta * vol));
                }
                terms.push((l.psi(i, i, m), coeffs.gamma * vol));
            }
            for b in spec.blocks() {
                let away = if v.get(i, b.id.0) { 0.0 } else { 1.0 };
                terms.push((l.phi(i, b.id.0), coeffs.delta * b.size as f64 * away));
            }
            terms.push((l.w_max(), -1.0));
            ineq_rows.push(LinearRow::new(RowKind::Work, &[i, sigma], terms, Sense::Le, 0.0));
        }
    }

    Ok(MilpInstance {
        kind: MilpKind::Fwmp,
        objective: objective(&l),
        layout: l,
        eq_rows,
        ineq_rows,
        comms,
    })
}

/// Relative gap between an integral value and a lower bound.
pub fn gap(w_int: f64, w_lower: f64) -> Result<f64> {
    if !(w_lower > 0.0) || !w_lower.is_finite() {
        return Err(CcmError::Domain(format!("lower bound must be positive, got {w_lower}")));
    }
    Ok((w_int - w_lower) / w_lower)
}
