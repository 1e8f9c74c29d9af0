//! Mixed-integer formulations of the placement problem.

pub mod builder;
pub mod lp;
pub mod matrix;
pub mod theorems;

pub use builder::{
    build_comcp, build_fwmp, gap, LinearRow, MilpInstance, MilpKind, MilpMetadata, RowKind, Sense, VarLayout,
};
pub use lp::{export_lp, to_lp_text};
pub use matrix::{AssignmentMatrices, BinMatrix, CommTensors};
pub use theorems::{verify_theorems, ComplianceRow, LowerBound, TheoremReport};
