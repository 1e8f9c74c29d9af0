//! Brute-force optimum over every task-to-rank assignment of a tiny phase.
//!
//! Work is evaluated from the indicator matrices alone: block presence is
//! `chi ⊙ u` and rank-level edges are `chi ⊙ w_m ⊙ chiᵀ`, so the evaluation
//! shares no state with the incremental aggregates of [`crate::model`].

use serde::Serialize;

use crate::error::{CcmError, Result};
use crate::ids::RankId;
use crate::model::{PhaseSpec, WorkCoefficients};

pub const DEFAULT_ENUMERATION_LIMIT: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExactLimits {
    pub max_enumeration: u128,
    /// Enumerate one labeling per rank permutation class. Only takes effect
    /// when every rank is interchangeable.
    pub symmetry_pruning: bool,
}

impl Default for ExactLimits {
    fn default() -> Self {
        ExactLimits {
            max_enumeration: DEFAULT_ENUMERATION_LIMIT,
            symmetry_pruning: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactResult {
    /// Infinite when no assignment is memory-feasible under enforcement.
    pub w_max_s: f64,
    /// Rank of every task.
    pub assignment: Vec<usize>,
    pub evaluated: u128,
    /// Number of memory-feasible assignments seen.
    #[serde(rename = "feasible")]
    pub feasible_count: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub work: Vec<f64>,
    pub w_max: f64,
    pub memory_feasible: bool,
}

/// Reusable evaluator holding the phase parameters as flat arrays.
struct Evaluator<'a> {
    spec: &'a PhaseSpec,
    coeffs: &'a WorkCoefficients,
    ranks: usize,
    /// Block of each task, as the single set column of `u`.
    block_of: Vec<Option<usize>>,
    /// (from task, to task, volume) of each nonzero communication slice.
    edges: Vec<(usize, usize, f64)>,
    phi: Vec<bool>,
}

impl<'a> Evaluator<'a> {
    fn new(spec: &'a PhaseSpec, coeffs: &'a WorkCoefficients) -> Self {
        Evaluator {
            spec,
            coeffs,
            ranks: spec.rank_count(),
            block_of: spec.tasks().iter().map(|t| t.block.map(|b| b.0)).collect(),
            edges: spec
                .comms()
                .iter()
                .filter(|c| c.volume > 0)
                .map(|c| (c.from.0, c.to.0, c.volume as f64))
                .collect(),
            phi: vec![false; spec.rank_count() * spec.block_count()],
        }
    }

    fn evaluate(&mut self, ranks_of: &[usize]) -> Evaluation {
        let spec = self.spec;
        let c = self.coeffs;
        let ni = self.ranks;
        let nn = spec.block_count();

        let mut load = vec![0.0; ni];
        let mut base = vec![0.0; ni];
        let mut overhead = vec![0.0f64; ni];
        self.phi.iter_mut().for_each(|p| *p = false);
        for (k, &i) in ranks_of.iter().enumerate() {
            let t = &spec.tasks()[k];
            load[i] += t.load;
            base[i] += t.base_mem as f64;
            overhead[i] = overhead[i].max(t.overhead_mem as f64);
            if let Some(n) = self.block_of[k] {
                self.phi[i * nn + n] = true;
            }
        }

        // psi_m has its single entry at (rank of sender, rank of receiver)
        let mut out = vec![0.0; ni];
        let mut inc = vec![0.0; ni];
        let mut on = vec![0.0; ni];
        for &(from, to, vol) in &self.edges {
            let (i, j) = (ranks_of[from], ranks_of[to]);
            if i == j {
                on[i] += vol;
            } else {
                out[i] += vol;
                inc[j] += vol;
            }
        }

        let mut work = Vec::with_capacity(ni);
        let mut feasible = true;
        for i in 0..ni {
            let (mut shared, mut homing) = (0.0, 0.0);
            for n in 0..nn {
                if self.phi[i * nn + n] {
                    let b = &spec.blocks()[n];
                    shared += b.size as f64;
                    if b.home.0 != i {
                        homing += b.size as f64;
                    }
                }
            }
            let r = RankId(i);
            let mem = spec.rank_base_mem(r) as f64 + base[i] + overhead[i] + shared;
            let over = mem > spec.rank_avail_mem(r);
            feasible &= !over;
            work.push(if over && c.enforce_memory {
                f64::INFINITY
            } else {
                c.alpha * load[i] + c.beta * out[i].max(inc[i]) + c.gamma * on[i] + c.delta * homing
            });
        }
        let w_max = work.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Evaluation {
            work,
            w_max,
            memory_feasible: feasible,
        }
    }
}

/// Per-rank work of `assignment` (rank index per task) computed from scratch.
pub fn evaluate_assignment(spec: &PhaseSpec, coeffs: &WorkCoefficients, assignment: &[RankId]) -> Result<Evaluation> {
    if assignment.len() != spec.task_count() {
        return Err(CcmError::InvalidSpec(format!(
            "assignment covers {} tasks, phase has {}",
            assignment.len(),
            spec.task_count()
        )));
    }
    for &r in assignment {
        spec.check_rank(r)?;
    }
    let ranks: Vec<usize> = assignment.iter().map(|r| r.0).collect();
    Ok(Evaluator::new(spec, coeffs).evaluate(&ranks))
}

/// Whether relabeling ranks never changes the work vector up to permutation.
pub fn ranks_interchangeable(spec: &PhaseSpec, coeffs: &WorkCoefficients) -> bool {
    let first = RankId(0);
    let same_mem = spec.ranks().all(|r| {
        spec.rank_base_mem(r) == spec.rank_base_mem(first) && spec.rank_avail_mem(r) == spec.rank_avail_mem(first)
    });
    same_mem && (spec.block_count() == 0 || coeffs.delta == 0.0)
}

pub fn assignment_count(ranks: usize, tasks: usize) -> u128 {
    (0..tasks).fold(1u128, |acc, _| acc.saturating_mul(ranks as u128))
}

/// Minimizes the maximum rank work over every assignment, keeping the
/// lexicographically smallest optimum (first task most significant).
pub fn solve_exact(spec: &PhaseSpec, coeffs: &WorkCoefficients, limits: &ExactLimits) -> Result<ExactResult> {
    coeffs.validate()?;
    let (ni, nk) = (spec.rank_count(), spec.task_count());
    let required = assignment_count(ni, nk);
    if required > limits.max_enumeration {
        return Err(CcmError::EnumerationLimit {
            required,
            limit: limits.max_enumeration,
        });
    }
    let prune = limits.symmetry_pruning && ranks_interchangeable(spec, coeffs);
    let mut eval = Evaluator::new(spec, coeffs);
    let mut digits = vec![0usize; nk];
    let mut best: Option<(f64, Vec<usize>)> = None;
    let (mut evaluated, mut feasible_count) = (0u128, 0u128);

    loop {
        let e = eval.evaluate(&digits);
        evaluated += 1;
        if e.memory_feasible {
            feasible_count += 1;
        }
        if best.as_ref().is_none_or(|(w, _)| e.w_max < *w) {
            best = Some((e.w_max, digits.clone()));
        }
        if !advance(&mut digits, ni, prune) {
            break;
        }
    }

    let (w_max_s, assignment) = best.expect("at least one assignment");
    Ok(ExactResult {
        w_max_s,
        assignment,
        evaluated,
        feasible_count,
    })
}

/// Next assignment in lexicographic order; with `restricted`, only labelings
/// where each task uses at most one rank beyond those already used.
fn advance(digits: &mut [usize], radix: usize, restricted: bool) -> bool {
    for pos in (0..digits.len()).rev() {
        let cap = if restricted {
            let used = digits[..pos].iter().copied().max().map_or(0, |m| m + 1);
            radix.min(used + 1)
        } else {
            radix
        };
        if digits[pos] + 1 < cap {
            digits[pos] += 1;
            digits[pos + 1..].iter_mut().for_each(|d| *d = 0);
            return true;
        }
    }
    false
}
