//! Battery co-design model of an AC grid with an offshore multi-terminal DC
//! network: case data, graph construction, objective evaluation and
//! relaxation diagnostics.

mod build;
mod case;
mod eval;

pub use build::{build_graph, check_weights, GridError, GridModel, GridVars, SizingMode, SIMPLEX_TOL};
pub use case::{
    AcBranch, AcBus, Battery, CaseData, CaseError, Converter, Costs, DcBranch, DcBus, Generator, Schedule, WindFarm,
};
pub use eval::{
    balance_residuals, battery_schedule, evaluate_objectives, recover_voltages, BalanceResiduals, BatteryRow,
    ExactnessReport, OperatingSolution, VoltageProfile, EXACTNESS_THRESHOLD,
};

use crate::graph::Flattened;
use crate::mib::{branch_and_bound, BnbConfig, MibSolution};

/// One scalarized solve of a case, with the search result and, when an
/// incumbent exists, the recovered operating point.
#[derive(Debug, Clone)]
pub struct GridSolve {
    pub model: GridModel,
    pub flat: Flattened,
    pub search: MibSolution,
    pub operating: Option<OperatingSolution>,
}

impl GridSolve {
    /// Scalarized objective as seen by the program.
    pub fn scalarized(&self) -> Option<f64> {
        self.search.objective()
    }
}

/// Builds, flattens and solves a case. Binaries are branched on in
/// (battery, hour) order.
pub fn solve_case(
    case: &CaseData,
    weights: &[f64],
    mode: &SizingMode,
    config: &BnbConfig,
) -> Result<GridSolve, GridError> {
    let mut model = build_graph(case, weights, mode)?;
    let mut flat = model.flatten()?;
    flat.binaries = model
        .vars
        .bat_z
        .iter()
        .flatten()
        .map(|z| flat.column_of(*z))
        .collect();
    let search = branch_and_bound(&flat, config)?;
    let operating = match &search.solution {
        Some(sol) => Some(OperatingSolution::extract(case, &model, &flat, &sol.x)?),
        None => None,
    };
    Ok(GridSolve {
        model,
        flat,
        search,
        operating,
    })
}

/// Largest `min(P_ch, P_dis)` over battery-hours (MW).
pub fn exclusivity_violation(sol: &OperatingSolution) -> f64 {
    sol.bat_ch
        .iter()
        .zip(&sol.bat_dis)
        .flat_map(|(c, d)| c.iter().zip(d).map(|(a, b)| a.min(*b)))
        .fold(0.0, f64::max)
}
