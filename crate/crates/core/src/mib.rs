//! Branch-and-bound over conic relaxations for the binary columns of a
//! flattened graph, plus exhaustive enumeration as a reference.

use crate::conic::{solve_quadratic, ConicProgram, SolveError, Solution, SolverConfig, Status};
use crate::exec::Execution;
use crate::graph::Flattened;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use thiserror::Error;

/// Binary values within this distance of 0 or 1 count as integral.
pub const INTEGRALITY_TOL: f64 = 1e-6;

/// Nodes solved per round. Fixed so that parallel and sequential runs
/// explore the same tree.
const BATCH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BnbConfig {
    /// Absolute gap between incumbent and bound at which a node is pruned.
    pub gap_tol: f64,
    pub node_limit: usize,
    pub solver: SolverConfig,
    pub execution: Execution,
}

impl Default for BnbConfig {
    fn default() -> Self {
        Self {
            gap_tol: 1e-4,
            node_limit: 10_000,
            solver: SolverConfig::default(),
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum MibError {
    #[error("gap tolerance must be positive, got {0}")]
    Config(f64),
    #[error("{binaries} binaries give {count} fixings, above the limit {limit}")]
    TooManyBinaries { binaries: usize, count: u128, limit: u128 },
    #[error("relaxation failed: {0}")]
    Solve(#[from] SolveError),
    #[error("relaxation did not converge (status {0})")]
    NotConverged(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MibStatus {
    Optimal,
    /// Node limit reached with an incumbent whose gap is still open.
    GapNotClosed,
    Infeasible,
    /// Node limit reached before any integral solution was found.
    NoIncumbent,
}

impl MibStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            MibStatus::Optimal => "optimal",
            MibStatus::GapNotClosed => "gap-not-closed",
            MibStatus::Infeasible => "infeasible",
            MibStatus::NoIncumbent => "no-incumbent",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MibSolution {
    pub status: MibStatus,
    /// Incumbent, with binaries exactly 0 or 1.
    pub solution: Option<Solution>,
    /// Lower bound on the optimal value.
    pub bound: f64,
    pub nodes: usize,
    /// Root relaxation value and the largest distance of a binary from
    /// {0, 1} there.
    pub root_objective: f64,
    pub root_fractionality: f64,
    /// Nodes whose relaxation stopped short of the tolerances; when
    /// nonzero the bound is not a proof.
    pub unconverged: usize,
}

impl MibSolution {
    pub fn objective(&self) -> Option<f64> {
        self.solution.as_ref().map(|s| s.objective)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Relaxed {
    pub solution: Solution,
    /// `min(z, 1 - z)` per binary, in `Flattened::binaries` order.
    pub fractionality: Vec<f64>,
}

impl Relaxed {
    pub fn max_fractionality(&self) -> f64 {
        self.fractionality.iter().fold(0.0, |m, f| m.max(*f))
    }
}

fn fractionality(flat: &Flattened, x: &[f64]) -> Vec<f64> {
    flat.binaries.iter().map(|&c| x[c].min(1.0 - x[c]).max(0.0)).collect()
}

fn fixed_program(flat: &Flattened, fixings: &[(usize, f64)]) -> ConicProgram {
    let mut p = flat.program.clone();
    for &(col, v) in fixings {
        p = flat.with_bounds(&p, col, v, v);
    }
    p
}

/// Solves the continuous relaxation (binaries in [0, 1]).
pub fn solve_relaxed(flat: &Flattened, solver: &SolverConfig) -> Result<Relaxed, MibError> {
    let solution = solve_quadratic(&flat.program, solver)?;
    let fractionality = if solution.status == Status::Optimal {
        fractionality(flat, &solution.x)
    } else {
        vec![0.0; flat.binaries.len()]
    };
    Ok(Relaxed { solution, fractionality })
}

enum Outcome {
    Solved(Solution),
    Infeasible,
    Unconverged,
}

fn classify(result: Result<Solution, SolveError>) -> Result<Outcome, MibError> {
    let sol = result?;
    Ok(match sol.status {
        Status::Optimal => Outcome::Solved(sol),
        Status::InfeasibleDetected => Outcome::Infeasible,
        Status::MaxIterations | Status::UnboundedDetected => {
            log::warn!("relaxation stopped with status {}", sol.status.as_str());
            Outcome::Unconverged
        }
    })
}

#[derive(Debug, Clone)]
struct Node {
    id: usize,
    bound: f64,
    fixings: Vec<(usize, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Max-heap on reversed (bound, id): lowest bound first, oldest on ties.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(other.id.cmp(&self.id))
    }
}

/// Best-first branch-and-bound on the most fractional binary; ties go to
/// the earliest entry of `Flattened::binaries`.
pub fn branch_and_bound(flat: &Flattened, config: &BnbConfig) -> Result<MibSolution, MibError> {
    if !(config.gap_tol > 0.0) {
        return Err(MibError::Config(config.gap_tol));
    }
    let solver = &config.solver;
    let root = solve_relaxed(flat, solver)?;
    let mut out = MibSolution {
        status: MibStatus::Infeasible,
        solution: None,
        bound: f64::INFINITY,
        nodes: 1,
        root_objective: root.solution.objective,
        root_fractionality: root.max_fractionality(),
        unconverged: 0,
    };
    let root_sol = match classify(Ok(root.solution))? {
        Outcome::Solved(s) => s,
        Outcome::Infeasible => return Ok(out),
        Outcome::Unconverged => return Err(MibError::NotConverged("max-iterations")),
    };
    out.bound = root_sol.objective;

    let mut incumbent: Option<Solution> = None;

    // Seed with the rounded root.
    let rounded: Vec<(usize, f64)> = flat
        .binaries
        .iter()
        .map(|&c| (c, if root_sol.x[c] >= 0.5 { 1.0 } else { 0.0 }))
        .collect();
    if let Outcome::Solved(s) = classify(solve_quadratic(&fixed_program(flat, &rounded), solver))? {
        offer(snap(flat, s), &mut incumbent);
    }

    let mut heap = BinaryHeap::new();
    let mut next_id = 1;
    let mut pending = vec![(Vec::new(), root_sol)];
    loop {
        for (fixings, sol) in pending.drain(..) {
            let inc = incumbent.as_ref().map_or(f64::INFINITY, |s| s.objective);
            if sol.objective >= inc - config.gap_tol {
                continue;
            }
            let frac = fractionality(flat, &sol.x);
            let pick = frac
                .iter()
                .enumerate()
                .filter(|(_, f)| **f > INTEGRALITY_TOL)
                .fold(None, |best: Option<(usize, f64)>, (k, f)| match best {
                    Some((_, bf)) if bf >= *f => best,
                    _ => Some((k, *f)),
                });
            match pick {
                None => {
                    let exact: Vec<(usize, f64)> =
                        flat.binaries.iter().map(|&c| (c, sol.x[c].round())).collect();
                    match classify(solve_quadratic(&fixed_program(flat, &exact), solver))? {
                        Outcome::Solved(s) => offer(snap(flat, s), &mut incumbent),
                        Outcome::Infeasible => {}
                        Outcome::Unconverged => out.unconverged += 1,
                    }
                }
                Some((k, _)) => {
                    let col = flat.binaries[k];
                    for v in [0.0, 1.0] {
                        let mut f = fixings.clone();
                        f.push((col, v));
                        heap.push(Node {
                            id: next_id,
                            bound: sol.objective,
                            fixings: f,
                        });
                        next_id += 1;
                    }
                }
            }
        }

        let inc = incumbent.as_ref().map_or(f64::INFINITY, |s| s.objective);
        if heap.peek().is_some_and(|n| n.bound >= inc - config.gap_tol) {
            heap.clear();
        }
        if heap.is_empty() || out.nodes >= config.node_limit {
            break;
        }
        let take = BATCH.min(config.node_limit - out.nodes);
        let batch: Vec<Node> = (0..take).map_while(|_| heap.pop()).collect();
        out.nodes += batch.len();
        let results = config
            .execution
            .map(&batch, |n| solve_quadratic(&fixed_program(flat, &n.fixings), solver));
        for (node, result) in batch.into_iter().zip(results) {
            match classify(result)? {
                Outcome::Solved(s) => pending.push((node.fixings, s)),
                Outcome::Infeasible => {}
                Outcome::Unconverged => out.unconverged += 1,
            }
        }
    }

    let open_bound = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    out.solution = incumbent;
    match &out.solution {
        Some(s) => {
            out.bound = open_bound.min(s.objective).max(out.bound);
            out.status = if heap.is_empty() && out.unconverged == 0 {
                MibStatus::Optimal
            } else {
                MibStatus::GapNotClosed
            };
        }
        None => {
            out.bound = open_bound.max(out.bound);
            out.status = if heap.is_empty() && out.unconverged == 0 {
                MibStatus::Infeasible
            } else {
                MibStatus::NoIncumbent
            };
        }
    }
    Ok(out)
}

fn offer(cand: Solution, incumbent: &mut Option<Solution>) {
    if incumbent.as_ref().map_or(true, |inc| cand.objective < inc.objective) {
        *incumbent = Some(cand);
    }
}

/// Replaces binary entries by their exact rounded values.
fn snap(flat: &Flattened, mut s: Solution) -> Solution {
    for &c in &flat.binaries {
        s.x[c] = s.x[c].round();
    }
    s
}

/// Solves every 0/1 assignment of the binaries and keeps the best; ties go
/// to the lowest assignment index.
pub fn enumerate_exact(flat: &Flattened, limit: u128, config: &BnbConfig) -> Result<MibSolution, MibError> {
    let b = flat.binaries.len();
    let count: u128 = if b >= 127 { u128::MAX } else { 1u128 << b };
    if count > limit {
        return Err(MibError::TooManyBinaries {
            binaries: b,
            count,
            limit,
        });
    }
    let masks: Vec<u128> = (0..count).collect();
    let results = config.execution.map(&masks, |&mask| {
        let fixings: Vec<(usize, f64)> = flat
            .binaries
            .iter()
            .enumerate()
            .map(|(k, &c)| (c, ((mask >> k) & 1) as f64))
            .collect();
        solve_quadratic(&fixed_program(flat, &fixings), &config.solver)
    });
    let mut best: Option<Solution> = None;
    let mut unconverged = 0;
    for r in results {
        match classify(r)? {
            Outcome::Solved(s) => {
                if best.as_ref().map_or(true, |b| s.objective < b.objective) {
                    best = Some(snap(flat, s));
                }
            }
            Outcome::Infeasible => {}
            Outcome::Unconverged => unconverged += 1,
        }
    }
    let status = match (&best, unconverged) {
        (Some(_), 0) => MibStatus::Optimal,
        (Some(_), _) => MibStatus::GapNotClosed,
        (None, 0) => MibStatus::Infeasible,
        (None, _) => MibStatus::NoIncumbent,
    };
    let bound = best.as_ref().map_or(f64::INFINITY, |s| s.objective);
    Ok(MibSolution {
        status,
        solution: best,
        bound,
        nodes: count as usize,
        root_objective: f64::NAN,
        root_fractionality: f64::NAN,
        unconverged,
    })
}
