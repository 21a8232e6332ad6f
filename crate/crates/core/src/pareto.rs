//! Two-objective fronts of the co-design problem: weighted-sum grid sweeps,
//! the gradient weight update, and non-dominated filtering.

use crate::conic::project_simplex;
use crate::exec::Execution;
use crate::grid::{check_weights, evaluate_objectives, solve_case, CaseData, GridError, OperatingSolution, SizingMode};
use crate::mib::{BnbConfig, MibStatus};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// Weights rounded to this grid share one solve in the gradient sweep.
pub const WEIGHT_CACHE_GRID: f64 = 1e-10;

/// Iteration counts shipped as presets.
pub const K_PRESETS: [usize; 3] = [10, 30, 100];

#[derive(Debug, Error)]
pub enum ParetoError {
    #[error("weights {0:?} are not on the 2-simplex")]
    Weights(Vec<f64>),
    #[error("invalid sweep configuration: {0}")]
    Config(String),
    #[error("solve at weights ({}, {}) failed: {source}", weights[0], weights[1])]
    Solve {
        weights: [f64; 2],
        #[source]
        source: GridError,
    },
    #[error("no integral solution at weights ({}, {}): search ended {}", weights[0], weights[1], status.as_str())]
    NoSolution { weights: [f64; 2], status: MibStatus },
}

/// A point of the 2-simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightVector([f64; 2]);

impl WeightVector {
    pub fn new(w1: f64, w2: f64) -> Result<Self, ParetoError> {
        check_weights(&[w1, w2]).map_err(|_| ParetoError::Weights(vec![w1, w2]))?;
        Ok(Self([w1.max(0.0), w2.max(0.0)]))
    }

    /// `(w1, 1 - w1)`.
    pub fn from_first(w1: f64) -> Result<Self, ParetoError> {
        Self::new(w1, 1.0 - w1)
    }

    pub fn cost_vertex() -> Self {
        Self([1.0, 0.0])
    }

    pub fn loss_vertex() -> Self {
        Self([0.0, 1.0])
    }

    pub fn get(&self) -> [f64; 2] {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    fn cache_key(&self) -> [i64; 2] {
        self.0.map(|w| (w / WEIGHT_CACHE_GRID).round() as i64)
    }
}

impl Default for WeightVector {
    fn default() -> Self {
        Self([0.5, 0.5])
    }
}

/// Sizing mode and search settings shared by every solve of a sweep.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub mode: SizingMode,
    pub bnb: BnbConfig,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            mode: SizingMode::Codesign,
            bnb: BnbConfig::default(),
        }
    }
}

impl SolveOptions {
    fn execution(&self) -> Execution {
        self.bnb.execution
    }
}

#[derive(Debug, Clone)]
pub struct ParetoPoint {
    pub weights: WeightVector,
    /// Total cost, recomputed from the operating point.
    pub cost: f64,
    /// Total loss in p.u. summed over hours, recomputed.
    pub loss: f64,
    /// Installed battery sizes (MWh).
    pub sizes: Vec<f64>,
    /// Search status; gap-not-closed points are kept and flagged.
    pub status: MibStatus,
    pub nodes: usize,
    pub operating: OperatingSolution,
}

impl ParetoPoint {
    pub fn objectives(&self) -> [f64; 2] {
        [self.cost, self.loss]
    }

    /// Battery throughput `sum (P_ch + P_dis)` over batteries and hours (MWh).
    pub fn throughput(&self) -> f64 {
        let op = &self.operating;
        op.bat_ch.iter().chain(&op.bat_dis).flatten().sum()
    }

    /// `w1 cost / s1 + w2 loss / s2` for the case objective scales.
    pub fn scalarized(&self, w: WeightVector, scales: [f64; 2]) -> f64 {
        scalarize(self.objectives(), w, scales)
    }
}

pub fn scalarize(objectives: [f64; 2], w: WeightVector, scales: [f64; 2]) -> f64 {
    let w = w.get();
    w[0] * objectives[0] / scales[0] + w[1] * objectives[1] / scales[1]
}

/// One weighted-sum solve; objectives are recomputed from the extracted
/// operating point.
pub fn scalarized_solve(case: &CaseData, w: WeightVector, opts: &SolveOptions) -> Result<ParetoPoint, ParetoError> {
    let weights = w.get();
    let solve = solve_case(case, w.as_slice(), &opts.mode, &opts.bnb).map_err(|source| ParetoError::Solve { weights, source })?;
    let status = solve.search.status;
    let Some(operating) = solve.operating else {
        return Err(ParetoError::NoSolution { weights, status });
    };
    let (cost, loss) = evaluate_objectives(case, &operating).map_err(|source| ParetoError::Solve { weights, source })?;
    Ok(ParetoPoint {
        weights: w,
        cost,
        loss,
        sizes: operating.bat_size.clone(),
        status,
        nodes: solve.search.nodes,
        operating,
    })
}

#[derive(Debug, Clone)]
pub struct Anchors {
    pub cost: ParetoPoint,
    pub loss: ParetoPoint,
}

impl Anchors {
    /// Best attainable value of each objective.
    pub fn utopia(&self) -> [f64; 2] {
        [self.cost.cost, self.loss.loss]
    }
}

/// Solves at both simplex vertices.
pub fn anchor_points(case: &CaseData, opts: &SolveOptions) -> Result<Anchors, ParetoError> {
    let mut pts = opts
        .execution()
        .map(&[WeightVector::cost_vertex(), WeightVector::loss_vertex()], |w| scalarized_solve(case, *w, opts))
        .into_iter();
    let cost = pts.next().unwrap()?;
    let loss = pts.next().unwrap()?;
    Ok(Anchors { cost, loss })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepFailure {
    pub index: usize,
    pub weights: WeightVector,
    pub message: String,
}

/// Points of a sweep in solve order, with the solves that failed.
#[derive(Debug, Clone, Default)]
pub struct Sweep {
    pub points: Vec<ParetoPoint>,
    pub failures: Vec<SweepFailure>,
}

/// Weighted-sum solves at `w1 = 0, 1/(M-1), .., 1`, run independently.
pub fn grid_sweep(case: &CaseData, m: usize, opts: &SolveOptions) -> Result<Sweep, ParetoError> {
    if m < 2 {
        return Err(ParetoError::Config(format!("grid sweep needs at least 2 points, got {m}")));
    }
    let weights: Vec<WeightVector> = (0..m)
        .map(|i| {
            let w1 = i as f64 / (m - 1) as f64;
            WeightVector([w1, 1.0 - w1])
        })
        .collect();
    let results = opts.execution().map(&weights, |w| scalarized_solve(case, *w, opts));
    let mut out = Sweep::default();
    for (index, (w, r)) in weights.iter().zip(results).enumerate() {
        match r {
            Ok(p) => out.points.push(p),
            Err(e) => {
                log::warn!("grid point {index}: {e}");
                out.failures.push(SweepFailure {
                    index,
                    weights: *w,
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Number of iterations K.
    pub iterations: usize,
    /// Step size of the weight update.
    pub step: f64,
    pub initial: WeightVector,
    /// Per-objective normalization; the anchor values when `None`.
    pub utopia: Option<[f64; 2]>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            iterations: K_PRESETS[0],
            step: 0.05,
            initial: WeightVector::default(),
            utopia: None,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), ParetoError> {
        if self.iterations == 0 {
            return Err(ParetoError::Config("iteration count must be at least 1".into()));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(ParetoError::Config(format!("step size must be positive, got {}", self.step)));
        }
        if let Some(u) = self.utopia {
            if !u.iter().all(|v| *v > 0.0 && v.is_finite()) {
                return Err(ParetoError::Config(format!("utopia values must be positive, got {u:?}")));
            }
        }
        WeightVector::new(self.initial.0[0], self.initial.0[1]).map(|_| ())
    }
}

/// One iteration of the gradient sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub iteration: usize,
    pub weights: WeightVector,
    /// Objectives at `weights`, absent when the solve failed.
    pub objectives: Option<[f64; 2]>,
    /// Normalized objectives used as the update direction.
    pub direction: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default)]
pub struct GradientSweep {
    pub trajectory: Vec<Step>,
    pub utopia: [f64; 2],
    /// One point per successful iteration, repeats included.
    pub sweep: Sweep,
    /// Distinct weights actually solved.
    pub solves: usize,
}

/// Gradient weight update: solve at `w_k`, take the objective values
/// normalized by the utopia point as the weight gradient, and move to
/// `proj(w_k + step h_k)`. After a failed solve the weights stay put.
pub fn gradient_sweep(case: &CaseData, config: &SweepConfig, opts: &SolveOptions) -> Result<GradientSweep, ParetoError> {
    config.validate()?;
    let utopia = match config.utopia {
        Some(u) => u,
        None => {
            let u = anchor_points(case, opts)?.utopia();
            if !u.iter().all(|v| *v > 0.0) {
                return Err(ParetoError::Config(format!(
                    "anchor values {u:?} cannot normalize the update; pass positive utopia values"
                )));
            }
            u
        }
    };
    let mut out = GradientSweep {
        utopia,
        ..GradientSweep::default()
    };
    let mut cache: HashMap<[i64; 2], Result<ParetoPoint, String>> = HashMap::new();
    let mut w = config.initial;
    for iteration in 0..config.iterations {
        let result = cache.entry(w.cache_key()).or_insert_with(|| {
            out.solves += 1;
            scalarized_solve(case, w, opts).map_err(|e| e.to_string())
        });
        let mut step = Step {
            iteration,
            weights: w,
            objectives: None,
            direction: None,
        };
        match result {
            Ok(p) => {
                let h = [p.cost / utopia[0], p.loss / utopia[1]];
                step.objectives = Some(p.objectives());
                step.direction = Some(h);
                let mut q = p.clone();
                q.weights = w;
                out.sweep.points.push(q);
                let next = project_simplex(&[w.0[0] + config.step * h[0], w.0[1] + config.step * h[1]])
                    .map_err(|e| ParetoError::Config(e.to_string()))?;
                w = WeightVector([next[0], next[1]]);
            }
            Err(message) => {
                log::warn!("gradient iteration {iteration}: {message}");
                out.sweep.failures.push(SweepFailure {
                    index: iteration,
                    weights: w,
                    message: message.clone(),
                });
            }
        }
        out.trajectory.push(step);
    }
    Ok(out)
}

/// `a` dominates `b`: no worse in both objectives beyond `rel` and better by
/// more than `rel` in one.
pub fn dominates(a: [f64; 2], b: [f64; 2], rel: f64) -> bool {
    let slack = |v: f64| rel * v.abs();
    (0..2).all(|i| a[i] <= b[i] + slack(b[i])) && (0..2).any(|i| a[i] < b[i] - slack(b[i]))
}

/// Indices of the non-dominated entries sorted by cost ascending; of equal
/// points the first is kept. Non-finite entries are dropped.
pub fn nondominated_indices(objectives: &[[f64; 2]]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..objectives.len())
        .filter(|&i| objectives[i].iter().all(|v| v.is_finite()))
        .collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (objectives[i], objectives[j]);
        a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])).then(i.cmp(&j))
    });
    let mut best_loss = f64::INFINITY;
    let mut keep = Vec::new();
    for i in order {
        if objectives[i][1] < best_loss {
            best_loss = objectives[i][1];
            keep.push(i);
        }
    }
    keep
}

/// Mutually non-dominated subset of `points`, sorted by cost.
pub fn nondominated_filter(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let objs: Vec<[f64; 2]> = points.iter().map(ParetoPoint::objectives).collect();
    nondominated_indices(&objs).into_iter().map(|i| points[i].clone()).collect()
}

/// Hausdorff distance between two point sets after dividing each objective
/// by `scale`. Infinite when exactly one set is empty.
pub fn hausdorff(a: &[[f64; 2]], b: &[[f64; 2]], scale: [f64; 2]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    let dist = |p: &[f64; 2], q: &[f64; 2]| ((p[0] - q[0]) / scale[0]).hypot((p[1] - q[1]) / scale[1]);
    let directed = |x: &[[f64; 2]], y: &[[f64; 2]]| {
        x.iter()
            .map(|p| y.iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}
