use ccd_core::exec::Execution;
use ccd_core::grid::{build_graph, CaseData, SizingMode};
use ccd_core::mib::{enumerate_exact, BnbConfig};
use ccd_core::pareto::{grid_sweep, SolveOptions};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn shipped() -> CaseData {
    CaseData::load(concat!(env!("CARGO_MANIFEST_DIR"), "/../../cases/case9_mtdc.json")).unwrap()
}

fn config(execution: Execution) -> BnbConfig {
    BnbConfig {
        execution,
        ..BnbConfig::default()
    }
}

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn pareto_grid(c: &mut Criterion) {
    let case = shipped();
    let mut g = c.benchmark_group("pareto_grid_m5");
    g.sample_size(10);
    for (name, execution) in MODES {
        let opts = SolveOptions {
            bnb: config(execution),
            ..SolveOptions::default()
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| grid_sweep(&case, 5, &opts).unwrap())
        });
    }
    g.finish();
}

// 4 hours x 2 batteries: 256 independent fixings.
fn enumeration(c: &mut Criterion) {
    let mut case = shipped();
    case.horizon = 4;
    case.schedule.load.truncate(4);
    case.schedule.wind.truncate(4);
    case.schedule.fuel_cost.truncate(4);
    let flat = build_graph(&case, &[0.5, 0.5], &SizingMode::Codesign).unwrap().flatten().unwrap();
    let mut g = c.benchmark_group("enumerate_4h");
    g.sample_size(10);
    for (name, execution) in MODES {
        let cfg = config(execution);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| enumerate_exact(&flat, 256, &cfg).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, pareto_grid, enumeration);
criterion_main!(benches);
