//! Command line and its validation into a [`RunSpec`].

use ccd_core::conic::SolverConfig;
use ccd_core::exec::Execution;
use ccd_core::grid::{CaseData, SizingMode};
use ccd_core::mib::BnbConfig;
use ccd_core::pareto::{SolveOptions, SweepConfig, WeightVector};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "ccd", version, about = "Battery sizing and dispatch co-design for an MTDC-connected offshore wind grid")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Case file (JSON).
    #[arg(long)]
    pub case: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Solver primal, dual and gap tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Solver iteration limit per relaxation.
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,
    /// Skip SVG plots.
    #[arg(long = "no-svg")]
    pub no_svg: bool,
    /// Worker threads; 1 runs every solve sequentially.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One scalarized co-design solve.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Objective weights `cost,loss` on the simplex.
        #[arg(long, value_delimiter = ',', default_value = "1,0")]
        weights: Vec<f64>,
        /// Fix the battery sizes (MWh): one value for all or one per battery.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<f64>>,
    },
    /// Fixed-size solves, the same size installed at every battery.
    SizeSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "1,0")]
        weights: Vec<f64>,
        /// Sizes to sweep (MWh); 20 to 120 in steps of 10 by default.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<f64>>,
    },
    /// Fixed-size sweep repeated for scaled nominal demand.
    DemandSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "1,0")]
        weights: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<f64>>,
        #[arg(long = "scale-from", default_value_t = 0.98)]
        scale_from: f64,
        #[arg(long = "scale-to", default_value_t = 1.04)]
        scale_to: f64,
        #[arg(long = "scale-step", default_value_t = 0.01)]
        scale_step: f64,
    },
    /// Weighted-sum front on M evenly spaced weights.
    ParetoGrid {
        #[command(flatten)]
        common: Common,
        #[arg(long = "M", default_value_t = 11)]
        m: usize,
        /// Fixed sizes (MWh) whose fronts are drawn next to the co-design front.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<f64>>,
    },
    /// Front traced by the gradient weight update over K iterations.
    ParetoGrad {
        #[command(flatten)]
        common: Common,
        #[arg(long = "K", default_value_t = 10)]
        k: usize,
        /// Step size of the weight update.
        #[arg(long, default_value_t = 0.05)]
        step: f64,
        /// Initial weights `cost,loss`.
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.5")]
        weights: Vec<f64>,
        /// Fix the battery sizes (MWh): one value for all or one per battery.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<f64>>,
    },
    /// Hourly battery operation of one solve.
    Schedule {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "1,0")]
        weights: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone)]
pub enum Task {
    Solve { weights: WeightVector, schedule: bool },
    SizeSweep { weights: WeightVector, sizes: Vec<f64> },
    DemandSweep { weights: WeightVector, sizes: Vec<f64>, factors: Vec<f64> },
    ParetoGrid { m: usize, fixed: Vec<f64> },
    ParetoGrad { config: SweepConfig },
}

/// A validated run: the loaded case, solver settings and the task.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub command: &'static str,
    pub case_path: PathBuf,
    pub case: CaseData,
    pub out: PathBuf,
    pub svg: bool,
    pub jobs: Option<usize>,
    /// Sizing mode of single solves; sweeps override it per item.
    pub opts: SolveOptions,
    pub task: Task,
}

pub const DEFAULT_SIZES: [f64; 11] = [20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0, 110.0, 120.0];

fn weights(w: &[f64]) -> Result<WeightVector, String> {
    match w {
        [a, b] => WeightVector::new(*a, *b).map_err(|e| format!("--weights: {e}")),
        _ => Err(format!("--weights takes two values, got {}", w.len())),
    }
}

fn size_list(sizes: Option<Vec<f64>>) -> Result<Vec<f64>, String> {
    let sizes = sizes.unwrap_or_else(|| DEFAULT_SIZES.to_vec());
    if sizes.is_empty() || sizes.iter().any(|s| !s.is_finite()) {
        return Err(format!("--sizes must be finite values, got {sizes:?}"));
    }
    Ok(sizes)
}

/// Broadcast a single size to every battery.
fn per_battery(sizes: Vec<f64>, case: &CaseData) -> Result<Vec<f64>, String> {
    let n = case.batteries.len();
    let v = match sizes.len() {
        1 => vec![sizes[0]; n],
        k if k == n => sizes,
        k => return Err(format!("--sizes takes 1 or {n} values, got {k}")),
    };
    check_sizes(&v, case)?;
    Ok(v)
}

/// Each size must fit every battery when installed everywhere.
fn check_sizes(sizes: &[f64], case: &CaseData) -> Result<(), String> {
    for s in sizes {
        for (k, b) in case.batteries.iter().enumerate() {
            if !(*s >= b.bs_min && *s <= b.bs_max) {
                return Err(format!("size {s} MWh outside [{}, {}] of battery {}", b.bs_min, b.bs_max, k + 1));
            }
        }
    }
    Ok(())
}

fn scale_factors(from: f64, to: f64, step: f64) -> Result<Vec<f64>, String> {
    if !(from > 0.0 && to >= from && to.is_finite() && step > 0.0 && step.is_finite()) {
        return Err(format!("scale range {from}..{to} step {step} must have 0 < from <= to and step > 0"));
    }
    let count = ((to - from) / step + 1e-9).floor() as usize + 1;
    if count > 10_000 {
        return Err(format!("scale range gives {count} factors"));
    }
    // Rounded so that 0.98 + 3 * 0.01 prints as 1.01.
    Ok((0..count).map(|i| ((from + i as f64 * step) * 1e9).round() / 1e9).collect())
}

impl RunSpec {
    pub fn from_cli(cli: Cli) -> Result<Self, String> {
        let (command, common) = match &cli.command {
            Command::Solve { common, .. } => ("solve", common),
            Command::SizeSweep { common, .. } => ("size-sweep", common),
            Command::DemandSweep { common, .. } => ("demand-sweep", common),
            Command::ParetoGrid { common, .. } => ("pareto-grid", common),
            Command::ParetoGrad { common, .. } => ("pareto-grad", common),
            Command::Schedule { common, .. } => ("schedule", common),
        };
        let common = common.clone();
        let case = CaseData::load(&common.case).map_err(|e| format!("case {}: {e}", common.case.display()))?;

        let mut solver = SolverConfig::default();
        if let Some(t) = common.tol {
            solver = solver.with_tolerance(t);
        }
        if let Some(m) = common.max_iter {
            solver.max_iter = m;
        }
        solver.validate().map_err(|e| e.to_string())?;
        if common.jobs == Some(0) {
            return Err("--jobs must be at least 1".into());
        }
        let execution = if common.jobs == Some(1) {
            Execution::Sequential
        } else {
            Execution::Parallel
        };
        let mut opts = SolveOptions {
            mode: SizingMode::Codesign,
            bnb: BnbConfig {
                solver,
                execution,
                ..BnbConfig::default()
            },
        };
        let fixed = |sizes: Option<Vec<f64>>, case: &CaseData| -> Result<SizingMode, String> {
            Ok(match sizes {
                Some(s) => SizingMode::Fixed(per_battery(s, case)?),
                None => SizingMode::Codesign,
            })
        };

        let task = match cli.command {
            Command::Solve { weights: w, sizes, .. } | Command::Schedule { weights: w, sizes, .. } => {
                opts.mode = fixed(sizes, &case)?;
                Task::Solve {
                    weights: weights(&w)?,
                    schedule: command == "schedule",
                }
            }
            Command::SizeSweep { weights: w, sizes, .. } => {
                let sizes = size_list(sizes)?;
                check_sizes(&sizes, &case)?;
                Task::SizeSweep {
                    weights: weights(&w)?,
                    sizes,
                }
            }
            Command::DemandSweep {
                weights: w,
                sizes,
                scale_from,
                scale_to,
                scale_step,
                ..
            } => {
                let sizes = size_list(sizes)?;
                check_sizes(&sizes, &case)?;
                Task::DemandSweep {
                    weights: weights(&w)?,
                    sizes,
                    factors: scale_factors(scale_from, scale_to, scale_step)?,
                }
            }
            Command::ParetoGrid { m, sizes, .. } => {
                if m < 2 {
                    return Err(format!("--M must be at least 2, got {m}"));
                }
                let fixed = sizes.unwrap_or_default();
                check_sizes(&fixed, &case)?;
                Task::ParetoGrid { m, fixed }
            }
            Command::ParetoGrad {
                k, step, weights: w, sizes, ..
            } => {
                opts.mode = fixed(sizes, &case)?;
                let config = SweepConfig {
                    iterations: k,
                    step,
                    initial: weights(&w)?,
                    utopia: None,
                };
                config.validate().map_err(|e| e.to_string())?;
                Task::ParetoGrad { config }
            }
        };
        Ok(RunSpec {
            command,
            case_path: common.case,
            case,
            out: common.out,
            svg: !common.no_svg,
            jobs: common.jobs,
            opts,
            task,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_range_is_inclusive() {
        let f = scale_factors(0.98, 1.04, 0.01).unwrap();
        assert_eq!(f, vec![0.98, 0.99, 1.0, 1.01, 1.02, 1.03, 1.04]);
        assert_eq!(scale_factors(1.0, 1.0, 0.5).unwrap(), vec![1.0]);
        assert!(scale_factors(1.0, 0.9, 0.01).is_err());
        assert!(scale_factors(1.0, 1.1, 0.0).is_err());
    }
}
