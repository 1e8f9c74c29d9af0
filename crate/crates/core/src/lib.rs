//! Computation–communication–memory (CCM) work model for task placement.
//!
//! The crate provides
//! - the phase model and its incremental update arithmetic ([`model`]),
//! - task clustering for migration ([`cluster`]),
//! - a deterministic simulation of the gossip-based balancer ([`gossip`],
//!   [`transfer`]),
//! - MILP builders with LP export ([`milp`]) and a brute-force exact solver
//!   ([`exact`]) for gap measurement on small phases,
//! - data reduction and the under-penalized loss used when training task
//!   duration predictors ([`dataprep`]),
//! - seeded random phases ([`generate`]) and summary statistics ([`stats`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cluster;
pub mod dataprep;
pub mod error;
pub mod exact;
pub mod generate;
pub mod gossip;
pub mod ids;
pub mod milp;
pub mod model;
pub mod rng;
pub mod stats;
pub mod transfer;

pub use cluster::{build_clusters, summarize_cluster, Cluster};
pub use error::{CcmError, Result};
pub use gossip::{build_peer_network, PeerKnowledge, PeerNetwork, RankInfo};
pub use ids::{BlockId, CommId, NodeId, RankId, TaskId};
pub use model::{Assignment, PhaseSpec, PhaseSpecDoc, WorkCoefficients, WorkLevel};
pub use transfer::{ccm_lb, find_best_ccm, LbOutcome, LbParams, LbStats, TransferTrace};
