//! Binary assignment matrices and tensors with Boolean-semiring products.

use std::fmt;

use serde::Serialize;

use crate::error::{CcmError, Result};
use crate::ids::{CommId, RankId, TaskId};
use crate::model::PhaseSpec;

/// Dense row-major 0/1 matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct BinMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl BinMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        BinMatrix {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    /// Builds from nested rows; every entry must be 0 or 1.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = BinMatrix::zeros(rows.len(), cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(CcmError::InvalidSpec(format!(
                    "row {i} has {} entries, expected {cols}",
                    row.len()
                )));
            }
            for (j, &x) in row.iter().enumerate() {
                if x > 1 {
                    return Err(CcmError::InvalidSpec(format!("entry ({i},{j}) is not binary")));
                }
                m.set(i, j, x == 1);
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.cols + j] == 1
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.data[i * self.cols + j] = u8::from(value);
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        self.data
            .chunks(self.cols.max(1))
            .take(self.rows)
            .map(<[u8]>::to_vec)
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = BinMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Product over the (OR, AND) semiring.
    pub fn bool_product(&self, other: &BinMatrix) -> BinMatrix {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = BinMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                if self.get(i, k) {
                    for j in 0..other.cols {
                        if other.get(k, j) {
                            out.set(i, j, true);
                        }
                    }
                }
            }
        }
        out
    }

    pub fn row_sum(&self, i: usize) -> usize {
        (0..self.cols).filter(|&j| self.get(i, j)).count()
    }

    pub fn col_sum(&self, j: usize) -> usize {
        (0..self.rows).filter(|&i| self.get(i, j)).count()
    }
}

impl fmt::Display for BinMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| u8::from(self.get(i, j)).to_string()).collect();
            writeln!(f, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Task/block/rank indicator matrices of one assignment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssignmentMatrices {
    /// K×N: task k uses block n.
    pub u: BinMatrix,
    /// I×N: block n is homed on rank i.
    pub v: BinMatrix,
    /// I×K: task k runs on rank i.
    pub chi: BinMatrix,
    /// I×N: block n is resident on rank i.
    pub phi: BinMatrix,
}

/// Communication indicator tensors, one K×K / I×I slice per communication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommTensors {
    /// Communications kept, in slice order.
    pub comms: Vec<CommId>,
    /// `w[m]` has entry (k, l) set when communication m goes from task k to task l.
    pub w: Vec<BinMatrix>,
    /// `psi[m]` has entry (i, j) set when communication m goes from rank i to rank j.
    pub psi: Vec<BinMatrix>,
}

pub fn task_block_matrix(spec: &PhaseSpec) -> BinMatrix {
    let mut u = BinMatrix::zeros(spec.task_count(), spec.block_count());
    for t in spec.tasks() {
        if let Some(b) = t.block {
            u.set(t.id.0, b.0, true);
        }
    }
    u
}

pub fn block_home_matrix(spec: &PhaseSpec) -> BinMatrix {
    let mut v = BinMatrix::zeros(spec.rank_count(), spec.block_count());
    for b in spec.blocks() {
        v.set(b.home.0, b.id.0, true);
    }
    v
}

pub fn chi_of(rank_count: usize, ranks: &[RankId]) -> BinMatrix {
    let mut chi = BinMatrix::zeros(rank_count, ranks.len());
    for (k, r) in ranks.iter().enumerate() {
        chi.set(r.0, k, true);
    }
    chi
}

/// Rank of every task encoded by a consistent `chi`.
pub fn ranks_of_chi(chi: &BinMatrix) -> Result<Vec<RankId>> {
    (0..chi.cols())
        .map(|k| {
            let holders: Vec<usize> = (0..chi.rows()).filter(|&i| chi.get(i, k)).collect();
            match holders[..] {
                [i] => Ok(RankId(i)),
                _ => Err(CcmError::InvalidSpec(format!(
                    "{} is assigned to {} ranks",
                    TaskId(k),
                    holders.len()
                ))),
            }
        })
        .collect()
}

/// Checks the consistency constraints: each task on exactly one rank, at
/// most one block per task, each block homed exactly once.
pub fn check_consistency(u: &BinMatrix, v: &BinMatrix, chi: &BinMatrix) -> Result<()> {
    if chi.cols() != u.rows() || chi.rows() != v.rows() || u.cols() != v.cols() {
        return Err(CcmError::InvalidSpec("matrix dimensions disagree".into()));
    }
    ranks_of_chi(chi)?;
    for k in 0..u.rows() {
        if u.row_sum(k) > 1 {
            return Err(CcmError::InvalidSpec(format!("{} uses several blocks", TaskId(k))));
        }
    }
    for n in 0..v.cols() {
        if v.col_sum(n) != 1 {
            return Err(CcmError::InvalidSpec(format!("block {n} is not homed exactly once")));
        }
    }
    Ok(())
}

/// Communications with a positive volume, in id order.
pub fn active_comms(spec: &PhaseSpec) -> Vec<CommId> {
    spec.comms().iter().filter(|c| c.volume > 0).map(|c| c.id).collect()
}

pub fn task_comm_tensor(spec: &PhaseSpec, comms: &[CommId]) -> Vec<BinMatrix> {
    comms
        .iter()
        .map(|&c| {
            let comm = spec.comm(c);
            let mut w = BinMatrix::zeros(spec.task_count(), spec.task_count());
            w.set(comm.from.0, comm.to.0, true);
            w
        })
        .collect()
}

pub fn assignment_matrices(spec: &PhaseSpec, chi: &BinMatrix) -> Result<AssignmentMatrices> {
    let u = task_block_matrix(spec);
    let v = block_home_matrix(spec);
    check_consistency(&u, &v, chi)?;
    let phi = chi.bool_product(&u);
    Ok(AssignmentMatrices {
        u,
        v,
        chi: chi.clone(),
        phi,
    })
}

pub fn comm_tensors(spec: &PhaseSpec, chi: &BinMatrix) -> CommTensors {
    let comms = active_comms(spec);
    let w = task_comm_tensor(spec, &comms);
    let chi_t = chi.transpose();
    let psi = w.iter().map(|wm| chi.bool_product(wm).bool_product(&chi_t)).collect();
    CommTensors { comms, w, psi }
}
