//! Lock-protected cluster transfers driven by gossip.

pub mod engine;
pub mod lock;
pub mod trace;

pub use engine::{
    ccm_lb, estimate_gain, find_best_ccm, refresh_info, try_transfer, Gain, IterationStats, LbOutcome, LbParams,
    LbStats, TransferCandidate,
};
pub use lock::{LockOutcome, LockTable, ProtocolState};
pub use trace::{parse_transfers, TraceEvent, TraceRecord, TransferRecord, TransferTrace};
