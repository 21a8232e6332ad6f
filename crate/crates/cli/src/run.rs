//! Executes a [`RunSpec`]: solves, then writes tables, plots, the manifest
//! and, when anything failed, a diagnostic file.

use crate::args::{RunSpec, Task};
use crate::plot::{self, LineChart, SchedulePane, Series};
use crate::table::{Cell, Table};
use ccd_core::grid::{battery_schedule, CaseData, GridError, SizingMode};
use ccd_core::pareto::{
    gradient_sweep, grid_sweep, nondominated_filter, scalarized_solve, ParetoError, ParetoPoint, SolveOptions, Sweep,
    WeightVector,
};
use serde_json::{json, Value};
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

pub const MANIFEST: &str = "manifest.json";
pub const DIAGNOSTIC: &str = "diagnostic.json";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Solve(String),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Invalid(_) => 1,
            RunError::Solve(_) => 2,
        }
    }
}

#[derive(Default)]
struct Report {
    files: Vec<String>,
    failures: Vec<Value>,
    extra: serde_json::Map<String, Value>,
}

struct Ctx<'a> {
    spec: &'a RunSpec,
    report: Report,
}

impl Ctx<'_> {
    fn case(&self) -> &CaseData {
        &self.spec.case
    }

    fn table(&mut self, name: &str, t: &Table) -> Result<(), RunError> {
        let path = self.spec.out.join(name);
        t.write(&path).map_err(|e| RunError::Invalid(format!("writing {}: {e}", path.display())))?;
        self.report.files.push(name.into());
        Ok(())
    }

    fn chart(&mut self, name: &str, chart: &LineChart) -> Result<(), RunError> {
        if !self.spec.svg {
            return Ok(());
        }
        let path = self.spec.out.join(name);
        plot::line_chart(&path, chart).map_err(|e| RunError::Invalid(format!("writing {}: {e}", path.display())))?;
        self.report.files.push(name.into());
        Ok(())
    }

    fn fixed_opts(&self, size: f64) -> SolveOptions {
        SolveOptions {
            mode: SizingMode::Fixed(vec![size; self.case().batteries.len()]),
            bnb: self.spec.opts.bnb,
        }
    }

    /// Loss in MWh from per-unit power summed over hours.
    fn loss_mwh(&self, p: &ParetoPoint) -> f64 {
        p.loss * self.case().mva_base
    }

    fn point_header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["w_cost", "w_loss", "total_cost", "total_loss_mwh"].map(String::from).into();
        h.extend((1..=self.case().batteries.len()).map(|k| format!("size_{k}_mwh")));
        h.extend(["status", "nodes"].map(String::from));
        h
    }

    fn point_row(&self, p: &ParetoPoint) -> Vec<Cell> {
        let w = p.weights.get();
        let mut r: Vec<Cell> = vec![w[0].into(), w[1].into(), p.cost.into(), self.loss_mwh(p).into()];
        r.extend(p.sizes.iter().map(|s| Cell::Real(*s)));
        r.extend([p.status.as_str().into(), p.nodes.into()]);
        r
    }

    fn sweep_failures(&mut self, label: &str, sweep: &Sweep) {
        for f in &sweep.failures {
            self.report.failures.push(json!({
                "item": label,
                "index": f.index,
                "weights": f.weights.get(),
                "error": f.message,
            }));
        }
    }
}

pub fn run(spec: &RunSpec) -> Result<(), RunError> {
    std::fs::create_dir_all(&spec.out)
        .map_err(|e| RunError::Invalid(format!("output directory {}: {e}", spec.out.display())))?;
    if let Some(j) = spec.jobs {
        // Only fails when a pool already exists, which keeps its size.
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            log::warn!("thread pool: {e}");
        }
    }
    let started = Instant::now();
    let mut ctx = Ctx {
        spec,
        report: Report::default(),
    };
    let result = match &spec.task {
        Task::Solve { weights, schedule } => solve(&mut ctx, *weights, *schedule),
        Task::SizeSweep { weights, sizes } => size_sweep(&mut ctx, *weights, sizes),
        Task::DemandSweep {
            weights,
            sizes,
            factors,
        } => demand_sweep(&mut ctx, *weights, sizes, factors),
        Task::ParetoGrid { m, fixed } => pareto_grid(&mut ctx, *m, fixed),
        Task::ParetoGrad { config } => pareto_grad(&mut ctx, config),
    };
    let result = match result {
        Ok(()) if !ctx.report.failures.is_empty() => Err(RunError::Solve(format!(
            "{} solves failed; partial results written, see {DIAGNOSTIC}",
            ctx.report.failures.len()
        ))),
        r => r,
    };
    if let Err(e) = &result {
        let diag = json!({
            "command": spec.command,
            "error": e.to_string(),
            "failures": ctx.report.failures,
        });
        write_json(&spec.out.join(DIAGNOSTIC), &diag)?;
        ctx.report.files.push(DIAGNOSTIC.into());
    }
    write_manifest(spec, &ctx.report, &result, started.elapsed().as_secs_f64())?;
    result
}

fn write_json(path: &Path, v: &Value) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(v).expect("json value serializes");
    std::fs::write(path, text + "\n").map_err(|e| RunError::Invalid(format!("writing {}: {e}", path.display())))
}

fn task_json(task: &Task) -> Value {
    match task {
        Task::Solve { weights, schedule } => json!({ "weights": weights.get(), "schedule": schedule }),
        Task::SizeSweep { weights, sizes } => json!({ "weights": weights.get(), "sizes_mwh": sizes }),
        Task::DemandSweep {
            weights,
            sizes,
            factors,
        } => json!({ "weights": weights.get(), "sizes_mwh": sizes, "scale_factors": factors }),
        Task::ParetoGrid { m, fixed } => json!({ "m": m, "fixed_sizes_mwh": fixed }),
        Task::ParetoGrad { config } => json!({
            "k": config.iterations,
            "step": config.step,
            "initial_weights": config.initial.get(),
        }),
    }
}

fn write_manifest(spec: &RunSpec, report: &Report, result: &Result<(), RunError>, elapsed: f64) -> Result<(), RunError> {
    let s = &spec.opts.bnb.solver;
    let mode = match &spec.opts.mode {
        SizingMode::Codesign => json!("codesign"),
        SizingMode::Fixed(v) => json!({ "fixed_mwh": v }),
    };
    let mut files = report.files.clone();
    files.push(MANIFEST.into());
    let m = json!({
        "command": spec.command,
        "version": env!("CARGO_PKG_VERSION"),
        "git_describe": env!("CCD_GIT_DESCRIBE"),
        "case": {
            "path": spec.case_path.display().to_string(),
            "name": spec.case.name,
            "horizon": spec.case.horizon,
            "mva_base": spec.case.mva_base,
        },
        "task": task_json(&spec.task),
        "sizing": mode,
        "solver": {
            "method": format!("{:?}", s.method),
            "tol_primal": s.tol_primal,
            "tol_dual": s.tol_dual,
            "tol_gap": s.tol_gap,
            "tol_infeasible": s.tol_infeasible,
            "max_iter": s.max_iter,
            "scaling": s.scaling,
        },
        "search": {
            "gap_tol": spec.opts.bnb.gap_tol,
            "node_limit": spec.opts.bnb.node_limit,
            "parallel": spec.opts.bnb.execution.is_parallel(),
            "jobs": spec.jobs.unwrap_or_else(rayon::current_num_threads),
        },
        "units": { "cost": "case currency", "power": "MW", "energy": "MWh" },
        "results": report.extra,
        "status": match result { Ok(()) => "ok", Err(RunError::Invalid(_)) => "invalid", Err(RunError::Solve(_)) => "failed" },
        "failures": report.failures.len(),
        "elapsed_s": elapsed,
        "files": files,
    });
    write_json(&spec.out.join(MANIFEST), &m)
}

fn solve(ctx: &mut Ctx, w: WeightVector, schedule: bool) -> Result<(), RunError> {
    let p = scalarized_solve(ctx.case(), w, &ctx.spec.opts).map_err(|e| classify(&e))?;
    let mut t = Table::new(ctx.point_header());
    t.push(ctx.point_row(&p));
    ctx.table("solve.csv", &t)?;
    let sizes: Vec<String> = p.sizes.iter().map(|s| format!("{s:.2}")).collect();
    println!(
        "total cost {:.2}, total loss {:.4} MWh, sizes {} MWh ({})",
        p.cost,
        ctx.loss_mwh(&p),
        sizes.join(", "),
        p.status.as_str()
    );
    ctx.report.extra.insert("total_cost".into(), json!(p.cost));
    ctx.report.extra.insert("sizes_mwh".into(), json!(p.sizes));
    if !schedule {
        return Ok(());
    }

    let rows = battery_schedule(ctx.case(), &p.operating).map_err(|e| RunError::Solve(e.to_string()))?;
    let mut t = Table::new(["battery", "hour", "net_power_mw", "soc_mwh", "size_mwh"]);
    let mut panes = Vec::new();
    for (k, bat) in rows.iter().enumerate() {
        for r in bat {
            t.push(vec![(k + 1).into(), r.hour.into(), r.net_power.into(), r.soc.into(), p.sizes[k].into()]);
        }
        panes.push(SchedulePane {
            title: format!("battery {} ({:.1} MWh)", k + 1, p.sizes[k]),
            net_power: bat.iter().map(|r| (r.hour as f64, r.net_power)).collect(),
            soc: bat.iter().map(|r| (r.hour as f64, r.soc)).collect(),
        });
    }
    ctx.table("schedule.csv", &t)?;
    if ctx.spec.svg {
        let path = ctx.spec.out.join("schedule.svg");
        plot::schedule_chart(&path, "battery charging and discharging", &panes)
            .map_err(|e| RunError::Invalid(format!("writing {}: {e}", path.display())))?;
        ctx.report.files.push("schedule.svg".into());
    }
    Ok(())
}

fn size_sweep(ctx: &mut Ctx, w: WeightVector, sizes: &[f64]) -> Result<(), RunError> {
    let results = ctx
        .spec
        .opts
        .bnb
        .execution
        .map(sizes, |s| scalarized_solve(ctx.case(), w, &ctx.fixed_opts(*s)));
    let mut t = Table::new(["size_mwh", "total_cost", "total_loss_mwh", "status", "nodes"]);
    let mut curve = Vec::new();
    for (s, r) in sizes.iter().zip(results) {
        match r {
            Ok(p) => {
                t.push(vec![(*s).into(), p.cost.into(), ctx.loss_mwh(&p).into(), p.status.as_str().into(), p.nodes.into()]);
                curve.push((*s, p.cost));
            }
            Err(e) => {
                if let RunError::Invalid(m) = classify(&e) {
                    return Err(RunError::Invalid(m));
                }
                ctx.report.failures.push(json!({ "size_mwh": s, "error": e.to_string() }));
            }
        }
    }
    ctx.table("size_sweep.csv", &t)?;
    if let Some(best) = curve.iter().min_by(|a, b| a.1.total_cmp(&b.1)) {
        ctx.report.extra.insert("best_size_mwh".into(), json!(best.0));
        ctx.report.extra.insert("best_total_cost".into(), json!(best.1));
    }
    ctx.chart(
        "size_sweep.svg",
        &LineChart {
            title: "total cost with fixed battery sizes".into(),
            x_label: "battery size (MWh)".into(),
            y_label: "total cost".into(),
            series: vec![Series {
                name: "fixed size".into(),
                points: curve,
            }],
        },
    )
}

/// Bad sizes or weights are the caller's fault; everything else is a
/// solve failure.
fn classify(e: &ParetoError) -> RunError {
    match e {
        ParetoError::Weights(_) | ParetoError::Config(_) => RunError::Invalid(e.to_string()),
        ParetoError::Solve {
            source: GridError::Sizes(_) | GridError::Weights(_) | GridError::Case(_),
            ..
        } => RunError::Invalid(e.to_string()),
        _ => RunError::Solve(e.to_string()),
    }
}

fn demand_sweep(ctx: &mut Ctx, w: WeightVector, sizes: &[f64], factors: &[f64]) -> Result<(), RunError> {
    let cases = factors
        .iter()
        .map(|f| ctx.case().demand_scale(*f))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| RunError::Invalid(e.to_string()))?;
    let items: Vec<(usize, f64)> = (0..factors.len()).flat_map(|i| sizes.iter().map(move |s| (i, *s))).collect();
    let results = ctx
        .spec
        .opts
        .bnb
        .execution
        .map(&items, |(i, s)| scalarized_solve(&cases[*i], w, &ctx.fixed_opts(*s)));

    let mut t = Table::new(["scale", "size_mwh", "total_cost", "total_loss_mwh", "status", "nodes"]);
    let mut curves: Vec<Vec<(f64, f64)>> = vec![Vec::new(); factors.len()];
    for (&(i, s), r) in items.iter().zip(results) {
        match r {
            Ok(p) => {
                t.push(vec![
                    factors[i].into(),
                    s.into(),
                    p.cost.into(),
                    ctx.loss_mwh(&p).into(),
                    p.status.as_str().into(),
                    p.nodes.into(),
                ]);
                curves[i].push((s, p.cost));
            }
            Err(e) => {
                if let RunError::Invalid(m) = classify(&e) {
                    return Err(RunError::Invalid(m));
                }
                ctx.report
                    .failures
                    .push(json!({ "scale": factors[i], "size_mwh": s, "error": e.to_string() }));
            }
        }
    }
    ctx.table("demand_sweep.csv", &t)?;

    let mut best = Table::new(["scale", "best_size_mwh", "total_cost"]);
    for (f, curve) in factors.iter().zip(&curves) {
        if let Some(b) = curve.iter().min_by(|a, b| a.1.total_cmp(&b.1)) {
            best.push(vec![(*f).into(), b.0.into(), b.1.into()]);
        }
    }
    ctx.table("demand_best.csv", &best)?;
    ctx.chart(
        "demand_sweep.svg",
        &LineChart {
            title: "total cost under scaled demand".into(),
            x_label: "battery size (MWh)".into(),
            y_label: "total cost".into(),
            series: factors
                .iter()
                .zip(curves)
                .map(|(f, points)| Series {
                    name: format!("demand x{f}"),
                    points,
                })
                .collect(),
        },
    )
}

fn front_series(ctx: &Ctx, name: String, points: &[ParetoPoint]) -> Series {
    Series {
        name,
        points: nondominated_filter(points).iter().map(|p| (p.cost, ctx.loss_mwh(p))).collect(),
    }
}

fn pareto_grid(ctx: &mut Ctx, m: usize, fixed: &[f64]) -> Result<(), RunError> {
    let mut runs: Vec<(String, SolveOptions)> = vec![("codesign".into(), ctx.spec.opts.clone())];
    runs.extend(fixed.iter().map(|s| (format!("fixed {s} MWh"), ctx.fixed_opts(*s))));

    let mut header = vec!["front".to_string()];
    header.extend(ctx.point_header());
    header.push("on_front".into());
    let mut t = Table::new(header);
    let mut series = Vec::new();
    for (label, opts) in runs {
        let sweep = grid_sweep(ctx.case(), m, &opts).map_err(|e| classify(&e))?;
        ctx.sweep_failures(&label, &sweep);
        let front = nondominated_filter(&sweep.points);
        for p in &sweep.points {
            let on = front.iter().any(|q| q.weights == p.weights);
            let mut row = vec![Cell::Text(label.clone())];
            row.extend(ctx.point_row(p));
            row.push(Cell::Int(on as i64));
            t.push(row);
        }
        series.push(front_series(ctx, label, &sweep.points));
    }
    ctx.table("pareto_grid.csv", &t)?;
    ctx.chart(
        "pareto_grid.svg",
        &LineChart {
            title: format!("weighted-sum fronts, M = {m}"),
            x_label: "total cost".into(),
            y_label: "total loss (MWh)".into(),
            series,
        },
    )
}

fn pareto_grad(ctx: &mut Ctx, config: &ccd_core::pareto::SweepConfig) -> Result<(), RunError> {
    let g = gradient_sweep(ctx.case(), config, &ctx.spec.opts).map_err(|e| classify(&e))?;
    ctx.sweep_failures("gradient", &g.sweep);
    let mut t = Table::new([
        "iteration",
        "w_cost",
        "w_loss",
        "total_cost",
        "total_loss_mwh",
        "h_cost",
        "h_loss",
        "status",
    ]);
    let base = ctx.case().mva_base;
    let blank = || Cell::Text(String::new());
    for st in &g.trajectory {
        let w = st.weights.get();
        let mut row: Vec<Cell> = vec![(st.iteration + 1).into(), w[0].into(), w[1].into()];
        match (st.objectives, st.direction) {
            (Some(o), Some(h)) => row.extend([o[0].into(), (o[1] * base).into(), h[0].into(), h[1].into(), "ok".into()]),
            _ => row.extend([blank(), blank(), blank(), blank(), "failed".into()]),
        }
        t.push(row);
    }
    ctx.table("trajectory.csv", &t)?;

    let mut f = Table::new(ctx.point_header());
    for p in nondominated_filter(&g.sweep.points) {
        f.push(ctx.point_row(&p));
    }
    ctx.table("front.csv", &f)?;
    ctx.report.extra.insert("utopia".into(), json!(g.utopia));
    ctx.report.extra.insert("distinct_solves".into(), json!(g.solves));
    let series = vec![front_series(ctx, format!("K = {}", config.iterations), &g.sweep.points)];
    ctx.chart(
        "pareto_grad.svg",
        &LineChart {
            title: format!("gradient weight update, K = {}", config.iterations),
            x_label: "total cost".into(),
            y_label: "total loss (MWh)".into(),
            series,
        },
    )
}
