use ccd_core::graph::Constraint;
use ccd_core::grid::*;
use ccd_core::mib::BnbConfig;
use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn shipped() -> CaseData {
    CaseData::load(concat!(env!("CARGO_MANIFEST_DIR"), "/../../cases/case9_mtdc.json")).unwrap()
}

fn shipped_text() -> String {
    std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../cases/case9_mtdc.json")).unwrap()
}

#[test]
fn shipped_case_topology_and_tables() {
    let c = shipped();
    assert_eq!(c.ac_buses.len(), 9);
    assert_eq!(c.dc_buses.len(), 4);
    assert_eq!(c.converters.len(), 2);
    assert_eq!(c.batteries.len(), 2);
    assert_eq!(c.horizon, 8);
    let r: Vec<(usize, usize, f64)> = c.dc_branches.iter().map(|b| (b.from, b.to, b.r)).collect();
    assert_eq!(r, vec![(1, 2, 0.0016), (1, 4, 0.0048), (2, 3, 0.0048), (3, 4, 0.0042)]);
    assert_eq!(c.schedule.load, vec![0.9, 1.1, 1.25, 1.4, 1.55, 1.3, 1.15, 1.0]);
    assert_eq!(c.schedule.wind, vec![1.0, 0.95, 1.05, 0.9, 0.85, 1.0, 1.1, 0.95]);
    assert_eq!(c.schedule.fuel_cost, vec![1.1, 0.9, 1.3, 1.5, 1.8, 1.6, 1.4, 1.4]);
    for cv in &c.converters {
        assert_eq!((cv.k, cv.d, cv.beta), (0.02, 1.0, 0.03));
    }
    for b in &c.batteries {
        assert_eq!((b.bs_min, b.bs_max, b.eta_ch, b.eta_dis), (20.0, 120.0, 0.8, 1.1));
        assert_eq!((b.sc0, b.sc_final_min), (10.0, 10.0));
    }
    let wind: Vec<f64> = c.wind_farms.iter().map(|w| w.nominal).collect();
    assert_eq!(wind, vec![40.0, 50.0]);
}

#[test]
fn case_round_trips_through_json() {
    let c = shipped();
    let again = CaseData::from_json_str(&c.to_json()).unwrap();
    assert_eq!(c, again);
}

fn parse_err(text: &str) -> String {
    CaseData::from_json_str(text).unwrap_err().to_string()
}

#[test]
fn malformed_cases_report_paths() {
    let text = shipped_text();
    let extra = text.replacen("\"mva_base\"", "\"colour\": 1, \"mva_base\"", 1);
    let msg = parse_err(&extra);
    assert!(msg.contains("colour"), "{msg}");

    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["batteries"][1].as_object_mut().unwrap().remove("eta_dis");
    let msg = parse_err(&v.to_string());
    assert!(msg.contains("batteries[1]") && msg.contains("eta_dis"), "{msg}");

    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["converters"][0]["ac_bus"] = 42.into();
    let msg = parse_err(&v.to_string());
    assert!(msg.contains("converters[0].ac_bus"), "{msg}");

    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["dc_branches"][2]["r"] = 0.0.into();
    let msg = parse_err(&v.to_string());
    assert!(msg.contains("dc_branches[2].r"), "{msg}");

    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["batteries"][0]["eta_ch"] = 1.2.into();
    let msg = parse_err(&v.to_string());
    assert!(msg.contains("batteries[0].eta_ch"), "{msg}");

    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["schedule"]["load"].as_array_mut().unwrap().pop();
    let msg = parse_err(&v.to_string());
    assert!(msg.contains("schedule.load"), "{msg}");
}

#[test]
fn demand_scale_examples() {
    let c = shipped();
    assert_eq!(c.demand_scale(1.0).unwrap(), c);
    let s = c.demand_scale(0.98).unwrap();
    let bus5 = s.ac_buses.iter().find(|b| b.id == 5).unwrap();
    assert!((bus5.pd - 0.882).abs() < 1e-15);
    let variants: Vec<CaseData> = (0..7).map(|k| c.demand_scale(0.98 + 0.01 * k as f64).unwrap()).collect();
    assert_eq!(variants.len(), 7);
    assert!(c.demand_scale(0.0).is_err());
    assert!(c.demand_scale(-1.0).is_err());
}

#[test]
fn codesign_graph_counts() {
    let c = shipped();
    let mut m = build_graph(&c, &[0.5, 0.5], &SizingMode::Codesign).unwrap();
    assert_eq!(m.graph.nodes().len(), 240);
    let flat = m.flatten().unwrap();
    assert_eq!(flat.binaries.len(), 16);

    // Recount columns and rows from the graph itself.
    let cols: usize = m.graph.nodes().iter().map(|n| n.variables().len()).sum();
    let mut rows = 0;
    for node in m.graph.nodes() {
        for v in node.variables() {
            rows += v.lower.is_finite() as usize + v.upper.is_finite() as usize;
        }
        for c in node.constraints() {
            rows += match c {
                Constraint::Affine { .. } => 1,
                Constraint::Cone { exprs, .. } => exprs.len(),
            };
        }
    }
    rows += m.graph.links().len();
    assert_eq!(flat.program.n(), cols);
    assert_eq!(flat.program.m(), rows);
}

#[test]
fn build_rejects_bad_inputs() {
    let c = shipped();
    assert!(matches!(build_graph(&c, &[0.6, 0.6], &SizingMode::Codesign), Err(GridError::Weights(_))));
    assert!(matches!(build_graph(&c, &[1.0], &SizingMode::Codesign), Err(GridError::Weights(_))));
    assert!(matches!(
        build_graph(&c, &[1.0, 0.0], &SizingMode::Fixed(vec![10.0, 50.0])),
        Err(GridError::Sizes(_))
    ));
    assert!(matches!(build_graph(&c, &[1.0, 0.0], &SizingMode::Fixed(vec![50.0])), Err(GridError::Sizes(_))));
}

#[test]
fn fixed_minimum_sizes_are_feasible() {
    let c = shipped();
    let r = solve_case(&c, &[1.0, 0.0], &SizingMode::Fixed(vec![20.0, 20.0]), &BnbConfig::default()).unwrap();
    let op = r.operating.unwrap();
    for s in &op.bat_size {
        assert!((s - 20.0).abs() < 1e-6);
    }
}

fn single_bus() -> CaseData {
    let text = r#"{
        "name": "single", "mva_base": 100.0, "horizon": 2, "slack_bus": 1,
        "ac_buses": [{"id": 1, "vmin": 0.95, "vmax": 1.05, "pd": 0.0, "qd": 0.0}],
        "ac_branches": [],
        "generators": [{"bus": 1, "pmin": 0.0, "pmax": 1.0, "qmin": -1.0, "qmax": 1.0,
            "ramp_p_up": 1.0, "ramp_p_down": 1.0, "ramp_q_up": 1.0, "ramp_q_down": 1.0,
            "cost_a": 0.1, "cost_b": 2.0, "cost_c0": 0.0}],
        "dc_buses": [], "dc_branches": [], "converters": [], "batteries": [], "wind_farms": [],
        "schedule": {"load": [1.0, 1.0], "wind": [1.0, 1.0], "fuel_cost": [1.0, 1.0]},
        "costs": {"objective_scales": [1.0, 1.0]}
    }"#;
    CaseData::from_json_str(text).unwrap()
}

#[test]
fn single_bus_without_load_idles() {
    let c = single_bus();
    let r = solve_case(&c, &[1.0, 0.0], &SizingMode::Codesign, &BnbConfig::default()).unwrap();
    let op = r.operating.unwrap();
    for row in op.gen_p.iter().chain(&op.gen_q) {
        for p in row {
            assert!(p.abs() < 1e-6, "{p}");
        }
    }
    assert!(op.total_cost.abs() < 1e-4);
}

fn zero_operation(c: &CaseData) -> OperatingSolution {
    let t = c.horizon;
    let z = |k: usize| vec![vec![0.0; t]; k];
    OperatingSolution {
        hours: t,
        ac_c: vec![vec![1.0; t]; c.ac_buses.len()],
        ac_branch_c: vec![vec![1.0; t]; c.ac_branches.len()],
        ac_branch_s: z(c.ac_branches.len()),
        dc_v: vec![vec![1.0; t]; c.dc_buses.len()],
        dc_branch_v: vec![vec![1.0; t]; c.dc_branches.len()],
        gen_p: z(c.generators.len()),
        gen_q: z(c.generators.len()),
        conv_p: z(c.converters.len()),
        conv_loss: z(c.converters.len()),
        conv_dc: z(c.converters.len()),
        bat_sc: vec![vec![10.0; t]; c.batteries.len()],
        bat_ch: z(c.batteries.len()),
        bat_dis: z(c.batteries.len()),
        bat_z: z(c.batteries.len()),
        bat_size: c.batteries.iter().map(|b| b.bs_min).collect(),
        total_cost: 0.0,
        total_loss: 0.0,
    }
}

#[test]
fn objectives_of_idle_operation() {
    let mut c = shipped();
    for g in &mut c.generators {
        g.cost_c0 = 0.0;
    }
    let op = zero_operation(&c);
    let (cost, loss) = evaluate_objectives(&c, &op).unwrap();
    let install: f64 = c.batteries.iter().map(|b| b.install_rate * b.bs_min).sum();
    assert_eq!(cost, install);
    assert_eq!(loss, 0.0);

    let mut op = zero_operation(&c);
    op.conv_dc[0][3] = 0.5;
    op.conv_loss[0][3] = 0.03 * 0.5;
    let (_, loss) = evaluate_objectives(&c, &op).unwrap();
    assert!((loss - 0.015).abs() < 1e-15);

    op.gen_p.pop();
    assert!(matches!(evaluate_objectives(&c, &op), Err(GridError::Dimensions(_))));
}

#[test]
fn voltage_recovery_examples() {
    let c = shipped();
    let op = zero_operation(&c);
    let (prof, rep) = recover_voltages(&c, &op, 1e-9).unwrap();
    assert!(prof.ac_magnitude.iter().flatten().all(|v| *v == 1.0));
    assert!(prof.ac_angle.iter().flatten().all(|a| *a == 0.0));
    assert_eq!(rep.max_gap(), 0.0);
    assert!(rep.is_exact());

    let mut op = zero_operation(&c);
    op.ac_branch_c[0][0] = 0.9;
    let (_, rep) = recover_voltages(&c, &op, 1e-9).unwrap();
    assert!((rep.ac_gap[0][0] - 0.19).abs() < 1e-12);
    assert!(!rep.is_exact());

    let mut op = zero_operation(&c);
    op.ac_c[3][2] = -0.1;
    assert!(recover_voltages(&c, &op, 1e-9).is_err());
}

#[test]
fn voltage_recovery_inverts_a_physical_profile() {
    let c = shipped();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut op = zero_operation(&c);
    let mut e = vec![vec![0.0; c.horizon]; 9];
    let mut f = vec![vec![0.0; c.horizon]; 9];
    for t in 0..c.horizon {
        for i in 0..9 {
            let (m, a): (f64, f64) = (rng.gen_range(0.95..1.05), if i == 0 { 0.0 } else { rng.gen_range(-0.3..0.3) });
            e[i][t] = m * a.cos();
            f[i][t] = m * a.sin();
            op.ac_c[i][t] = m * m;
        }
        for (k, br) in c.ac_branches.iter().enumerate() {
            let (i, j) = (c.ac_index(br.from).unwrap(), c.ac_index(br.to).unwrap());
            op.ac_branch_c[k][t] = e[i][t] * e[j][t] + f[i][t] * f[j][t];
            op.ac_branch_s[k][t] = e[i][t] * f[j][t] - e[j][t] * f[i][t];
        }
    }
    let (prof, rep) = recover_voltages(&c, &op, 1e-9).unwrap();
    for t in 0..c.horizon {
        for i in 0..9 {
            assert!((prof.ac_magnitude[i][t] - op.ac_c[i][t].sqrt()).abs() < 1e-12);
            assert!((prof.ac_angle[i][t] - f[i][t].atan2(e[i][t])).abs() < 1e-12);
        }
    }
    assert!(rep.ac_gap.iter().flatten().all(|g| g.abs() < 1e-12));
    assert!(rep.cycle_mismatch.iter().flatten().all(|g| g.abs() < 1e-12));
}

/// Power balance evaluated against complex nodal injections `V .* conj(Y V)`
/// from a physical voltage profile, with every bus absorbing its injection
/// through a generator.
#[test]
fn balance_matches_complex_power_flow() {
    let mut c = shipped();
    c.generators = c
        .ac_buses
        .iter()
        .map(|b| Generator {
            bus: b.id,
            pmin: -10.0,
            pmax: 10.0,
            qmin: -10.0,
            qmax: 10.0,
            ramp_p_up: 10.0,
            ramp_p_down: 10.0,
            ramp_q_up: 10.0,
            ramp_q_down: 10.0,
            cost_a: 0.0,
            cost_b: 0.0,
            cost_c0: 0.0,
        })
        .collect();
    c.converters.clear();
    c.batteries.clear();
    c.wind_farms.clear();
    for b in &mut c.ac_buses {
        b.pd = 0.0;
        b.qd = 0.0;
    }
    c.dc_buses.truncate(0);
    c.dc_branches.clear();
    c.validate().unwrap();

    let nb = 9;
    let mut y = DMatrix::<Complex<f64>>::zeros(nb, nb);
    for br in &c.ac_branches {
        let (i, j) = (c.ac_index(br.from).unwrap(), c.ac_index(br.to).unwrap());
        let ys = Complex::new(1.0, 0.0) / Complex::new(br.r, br.x);
        let sh = Complex::new(0.0, br.b / 2.0);
        y[(i, i)] += ys + sh;
        y[(j, j)] += ys + sh;
        y[(i, j)] -= ys;
        y[(j, i)] -= ys;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut op = zero_operation(&c);
    for t in 0..c.horizon {
        let v = DVector::from_fn(nb, |i, _| {
            Complex::from_polar(rng.gen_range(0.9..1.1), if i == 0 { 0.0 } else { rng.gen_range(-0.4..0.4) })
        });
        let inj = v.component_mul(&(&y * &v).map(|z| z.conj()));
        for i in 0..nb {
            op.ac_c[i][t] = v[i].norm_sqr();
            op.gen_p[i][t] = inj[i].re;
            op.gen_q[i][t] = inj[i].im;
        }
        for (k, br) in c.ac_branches.iter().enumerate() {
            let (i, j) = (c.ac_index(br.from).unwrap(), c.ac_index(br.to).unwrap());
            op.ac_branch_c[k][t] = v[i].re * v[j].re + v[i].im * v[j].im;
            op.ac_branch_s[k][t] = v[i].re * v[j].im - v[j].re * v[i].im;
        }
    }
    let res = balance_residuals(&c, &op).unwrap();
    assert!(res.ac_active < 1e-12, "{res:?}");
    assert!(res.ac_reactive < 1e-12, "{res:?}");

    // A perturbed injection shows up one for one.
    op.gen_p[4][0] += 1e-3;
    let res = balance_residuals(&c, &op).unwrap();
    assert!((res.ac_active - 1e-3).abs() < 1e-12);
}

#[test]
fn battery_schedule_examples() {
    let c = shipped();
    let mut op = zero_operation(&c);
    let rows = battery_schedule(&c, &op).unwrap();
    assert!(rows.iter().flatten().all(|r| r.soc == 10.0 && r.net_power == 0.0));

    op.bat_ch[0][0] = 5.0;
    op.bat_dis[0][1] = 2.0;
    let rows = battery_schedule(&c, &op).unwrap();
    assert!((rows[0][0].soc - 14.0).abs() < 1e-12);
    assert_eq!(rows[0][0].net_power, 5.0);
    assert!((rows[0][1].soc - 11.8).abs() < 1e-12);
    assert_eq!(rows[0][1].net_power, -2.0);
}

#[test]
fn solved_case_invariants() {
    let c = shipped();
    for w in [[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]] {
        let r = solve_case(&c, &w, &SizingMode::Codesign, &BnbConfig::default()).unwrap();
        let op = r.operating.as_ref().unwrap();

        let scales = c.costs.objective_scales;
        let recomputed = w[0] * op.total_cost / scales[0] + w[1] * op.total_loss / scales[1];
        let reported = r.scalarized().unwrap();
        assert!((recomputed - reported).abs() <= 1e-8 * reported.abs(), "{recomputed} vs {reported}");

        let bal = balance_residuals(&c, op).unwrap();
        assert!(bal.max() <= 1e-5, "{bal:?}");

        for (k, cv) in c.converters.iter().enumerate() {
            for t in 0..c.horizon {
                let slack = op.conv_loss[k][t] - cv.beta * op.conv_dc[k][t].abs();
                assert!(slack.abs() <= 1e-5, "converter {k} hour {t}: {slack}");
            }
        }
        assert!(exclusivity_violation(op) <= 1e-6);
        for (k, b) in c.batteries.iter().enumerate() {
            for t in 0..c.horizon {
                let sc = op.bat_sc[k][t];
                assert!(sc >= -1e-6 && sc <= op.bat_size[k] + 1e-6);
            }
            assert!(op.bat_sc[k][c.horizon - 1] >= b.sc_final_min - 1e-6);
            // Stored SOC agrees with the operation equation.
            let rows = battery_schedule(&c, op).unwrap();
            for t in 0..c.horizon {
                assert!((rows[k][t].soc - op.bat_sc[k][t]).abs() < 1e-5);
            }
        }
        let (_, rep) = recover_voltages(&c, op, 1e-6).unwrap();
        assert!(rep.dc_gap.iter().flatten().all(|g| *g >= -1e-6));
        assert!(rep.ac_gap.iter().flatten().all(|g| *g >= -1e-6));
    }
}
