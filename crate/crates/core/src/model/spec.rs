//! Immutable phase description and its JSON document form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CcmError, Result};
use crate::ids::{BlockId, CommId, NodeId, RankId, TaskId};

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: TaskId,
    /// Predicted compute time in seconds.
    pub load: f64,
    /// Memory footprint always held by the task, in bytes.
    pub base_mem: u64,
    /// Working overhead while the task executes, in bytes.
    pub overhead_mem: u64,
    pub block: Option<BlockId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharedBlock {
    pub id: BlockId,
    /// Maximum working memory of the block, in bytes.
    pub size: u64,
    pub home: RankId,
}

/// Directed task-to-task communication.
#[derive(Debug, Clone, PartialEq)]
pub struct Communication {
    pub id: CommId,
    pub from: TaskId,
    pub to: TaskId,
    pub volume: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub mem: u64,
    pub ranks: Vec<RankId>,
}

/// Everything that stays fixed while a phase is balanced.
///
/// Built from a [`PhaseSpecDoc`] and validated once; all ids are dense and
/// every cross reference resolves.
#[derive(Debug, Clone)]
pub struct PhaseSpec {
    tasks: Vec<Task>,
    blocks: Vec<SharedBlock>,
    comms: Vec<Communication>,
    rank_count: usize,
    rank_base_mem: Vec<u64>,
    nodes: Vec<Node>,
    node_of_rank: Vec<NodeId>,
    initial_assignment: Vec<RankId>,
    out_edges: Vec<Vec<CommId>>,
    in_edges: Vec<Vec<CommId>>,
    rank_avail: Vec<f64>,
}

impl PhaseSpec {
    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn blocks(&self) -> &[SharedBlock] {
        &self.blocks
    }

    pub fn comms(&self) -> &[Communication] {
        &self.comms
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn task(&self, t: TaskId) -> &Task {
        &self.tasks[t.0]
    }

    pub fn block(&self, b: BlockId) -> &SharedBlock {
        &self.blocks[b.0]
    }

    pub fn comm(&self, c: CommId) -> &Communication {
        &self.comms[c.0]
    }

    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn comm_count(&self) -> usize {
        self.comms.len()
    }

    pub fn rank_count(&self) -> usize {
        self.rank_count
    }

    pub fn ranks(&self) -> impl Iterator<Item = RankId> + Clone {
        (0..self.rank_count).map(RankId)
    }

    pub fn rank_base_mem(&self, r: RankId) -> u64 {
        self.rank_base_mem[r.0]
    }

    pub fn node_of_rank(&self, r: RankId) -> NodeId {
        self.node_of_rank[r.0]
    }

    /// Per-rank share of its node's memory: node memory divided evenly among
    /// the ranks living on that node.
    pub fn rank_avail_mem(&self, r: RankId) -> f64 {
        self.rank_avail[r.0]
    }

    pub fn initial_assignment(&self) -> &[RankId] {
        &self.initial_assignment
    }

    /// Communications sent by `t`.
    pub fn out_edges(&self, t: TaskId) -> &[CommId] {
        &self.out_edges[t.0]
    }

    /// Communications received by `t`.
    pub fn in_edges(&self, t: TaskId) -> &[CommId] {
        &self.in_edges[t.0]
    }

    pub fn check_rank(&self, r: RankId) -> Result<()> {
        if r.0 < self.rank_count {
            Ok(())
        } else {
            Err(CcmError::UnknownRank(r))
        }
    }

    pub fn total_load(&self) -> f64 {
        self.tasks.iter().map(|t| t.load).sum()
    }

    /// Same spec with a different starting assignment.
    pub fn with_initial_assignment(&self, assignment: Vec<RankId>) -> Result<PhaseSpec> {
        let mut doc = self.to_doc();
        doc.initial_assignment = assignment.into_iter().map(|r| r.0).collect();
        PhaseSpec::try_from(doc)
    }

    pub fn from_json_str(s: &str) -> Result<PhaseSpec> {
        let doc: PhaseSpecDoc = serde_json::from_str(s).map_err(|e| CcmError::InvalidSpec(e.to_string()))?;
        PhaseSpec::try_from(doc)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<PhaseSpec> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_doc(&self) -> PhaseSpecDoc {
        PhaseSpecDoc {
            ranks: self.rank_count,
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeDoc {
                    id: n.id.0,
                    mem_bytes: n.mem,
                    ranks: n.ranks.iter().map(|r| r.0).collect(),
                })
                .collect(),
            rank_base_mem: self.rank_base_mem.clone(),
            tasks: self
                .tasks
                .iter()
                .map(|t| TaskDoc {
                    id: t.id.0,
                    load_s: t.load,
                    base_mem: t.base_mem,
                    overhead_mem: t.overhead_mem,
                    block: t.block.map(|b| b.0),
                })
                .collect(),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockDoc {
                    id: b.id.0,
                    size_bytes: b.size,
                    home: b.home.0,
                })
                .collect(),
            comms: self
                .comms
                .iter()
                .map(|c| CommDoc {
                    id: c.id.0,
                    from: c.from.0,
                    to: c.to.0,
                    bytes: c.volume,
                })
                .collect(),
            initial_assignment: self.initial_assignment.iter().map(|r| r.0).collect(),
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("spec documents always serialize")
    }
}

// ── JSON document ──────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpecDoc {
    pub ranks: usize,
    pub nodes: Vec<NodeDoc>,
    pub rank_base_mem: Vec<u64>,
    pub tasks: Vec<TaskDoc>,
    #[serde(default)]
    pub blocks: Vec<BlockDoc>,
    #[serde(default)]
    pub comms: Vec<CommDoc>,
    pub initial_assignment: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub id: usize,
    pub mem_bytes: u64,
    pub ranks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDoc {
    pub id: usize,
    pub load_s: f64,
    pub base_mem: u64,
    pub overhead_mem: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockDoc {
    pub id: usize,
    pub size_bytes: u64,
    pub home: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommDoc {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    pub bytes: u64,
}

fn invalid(msg: impl Into<String>) -> CcmError {
    CcmError::InvalidSpec(msg.into())
}

impl TryFrom<PhaseSpecDoc> for PhaseSpec {
    type Error = CcmError;

    fn try_from(doc: PhaseSpecDoc) -> Result<Self> {
        let rank_count = doc.ranks;
        if rank_count == 0 {
            return Err(invalid("at least one rank is required"));
        }
        if doc.rank_base_mem.len() != rank_count {
            return Err(invalid(format!(
                "rank_base_mem has {} entries for {} ranks",
                doc.rank_base_mem.len(),
                rank_count
            )));
        }

        let mut node_of_rank: Vec<Option<NodeId>> = vec![None; rank_count];
        let mut nodes = Vec::with_capacity(doc.nodes.len());
        for (i, n) in doc.nodes.iter().enumerate() {
            if n.id != i {
                return Err(invalid(format!("node ids must be dense, found {} at {i}", n.id)));
            }
            if n.ranks.is_empty() {
                return Err(invalid(format!("node {i} hosts no rank")));
            }
            for &r in &n.ranks {
                if r >= rank_count {
                    return Err(invalid(format!("node {i} lists unknown rank {r}")));
                }
                if node_of_rank[r].replace(NodeId(i)).is_some() {
                    return Err(invalid(format!("rank {r} belongs to more than one node")));
                }
            }
            nodes.push(Node {
                id: NodeId(i),
                mem: n.mem_bytes,
                ranks: n.ranks.iter().copied().map(RankId).collect(),
            });
        }
        let node_of_rank: Vec<NodeId> = node_of_rank
            .into_iter()
            .enumerate()
            .map(|(r, n)| n.ok_or_else(|| invalid(format!("rank {r} belongs to no node"))))
            .collect::<Result<_>>()?;

        let mut blocks = Vec::with_capacity(doc.blocks.len());
        for (i, b) in doc.blocks.iter().enumerate() {
            if b.id != i {
                return Err(invalid(format!("block ids must be dense, found {} at {i}", b.id)));
            }
            if b.home >= rank_count {
                return Err(invalid(format!("block {i} homed at unknown rank {}", b.home)));
            }
            blocks.push(SharedBlock {
                id: BlockId(i),
                size: b.size_bytes,
                home: RankId(b.home),
            });
        }

        let mut tasks = Vec::with_capacity(doc.tasks.len());
        for (i, t) in doc.tasks.iter().enumerate() {
            if t.id != i {
                return Err(invalid(format!("task ids must be dense, found {} at {i}", t.id)));
            }
            if !(t.load_s.is_finite() && t.load_s >= 0.0) {
                return Err(invalid(format!("task {i} has invalid load {}", t.load_s)));
            }
            if let Some(b) = t.block {
                if b >= blocks.len() {
                    return Err(invalid(format!("task {i} references unknown block {b}")));
                }
            }
            tasks.push(Task {
                id: TaskId(i),
                load: t.load_s,
                base_mem: t.base_mem,
                overhead_mem: t.overhead_mem,
                block: t.block.map(BlockId),
            });
        }

        let mut comms = Vec::with_capacity(doc.comms.len());
        let mut out_edges = vec![Vec::new(); tasks.len()];
        let mut in_edges = vec![Vec::new(); tasks.len()];
        for (i, c) in doc.comms.iter().enumerate() {
            if c.id != i {
                return Err(invalid(format!("comm ids must be dense, found {} at {i}", c.id)));
            }
            if c.from >= tasks.len() || c.to >= tasks.len() {
                return Err(invalid(format!("comm {i} has an unknown endpoint")));
            }
            out_edges[c.from].push(CommId(i));
            in_edges[c.to].push(CommId(i));
            comms.push(Communication {
                id: CommId(i),
                from: TaskId(c.from),
                to: TaskId(c.to),
                volume: c.bytes,
            });
        }

        if doc.initial_assignment.len() != tasks.len() {
            return Err(invalid(format!(
                "initial_assignment has {} entries for {} tasks",
                doc.initial_assignment.len(),
                tasks.len()
            )));
        }
        let mut initial_assignment = Vec::with_capacity(tasks.len());
        for (t, &r) in doc.initial_assignment.iter().enumerate() {
            if r >= rank_count {
                return Err(invalid(format!("task {t} assigned to unknown rank {r}")));
            }
            initial_assignment.push(RankId(r));
        }

        let rank_avail = node_of_rank
            .iter()
            .map(|n| {
                let node = &nodes[n.0];
                node.mem as f64 / node.ranks.len() as f64
            })
            .collect();

        Ok(PhaseSpec {
            tasks,
            blocks,
            comms,
            rank_count,
            rank_base_mem: doc.rank_base_mem,
            nodes,
            node_of_rank,
            initial_assignment,
            out_edges,
            in_edges,
            rank_avail,
        })
    }
}
