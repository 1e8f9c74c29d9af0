//! Phase description, assignments and the work model arithmetic.

pub mod assignment;
pub mod coeffs;
pub mod spec;
pub mod work;

pub use assignment::{Assignment, RankAggregates};
pub use coeffs::WorkCoefficients;
pub use spec::{Communication, Node, PhaseSpec, PhaseSpecDoc, SharedBlock, Task};
pub use work::{
    homing_cost, imbalance, max_work, memory_feasible, memory_overage, rank_load, rank_memory, rank_volumes, work,
    FeasibilityReport, MemoryUsage, WorkLevel,
};
