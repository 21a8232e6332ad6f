use super::case::{CaseData, CaseError};
use crate::graph::{
    ConeKind, Constraint, Flattened, GraphError, LinExpr, LinkConstraint, LocalVar, NodeModel, ObjectiveTerm, OptiGraph,
};
use std::f64::consts::SQRT_2;
use thiserror::Error;

const INF: f64 = f64::INFINITY;

/// Tolerance on `w >= 0` and `sum(w) = 1`.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum SizingMode {
    Codesign,
    /// One fixed size (MWh) per battery.
    Fixed(Vec<f64>),
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error("weights {0:?} are not on the 2-simplex")]
    Weights(Vec<f64>),
    #[error("fixed sizes: {0}")]
    Sizes(String),
    #[error("solution has dimensions that do not match the case: {0}")]
    Dimensions(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Search(#[from] crate::mib::MibError),
}

pub fn check_weights(weights: &[f64]) -> Result<(), GridError> {
    let ok = weights.len() == 2
        && weights.iter().all(|w| w.is_finite() && *w >= -SIMPLEX_TOL)
        && (weights.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL;
    if ok {
        Ok(())
    } else {
        Err(GridError::Weights(weights.to_vec()))
    }
}

/// Variable handles, indexed `[component][hour]`.
#[derive(Debug, Clone, Default)]
pub struct GridVars {
    pub ac_c: Vec<Vec<LocalVar>>,
    /// From-end copies held by the from bus.
    pub ac_branch_c: Vec<Vec<LocalVar>>,
    pub ac_branch_s: Vec<Vec<LocalVar>>,
    pub dc_v: Vec<Vec<LocalVar>>,
    pub dc_branch_v: Vec<Vec<LocalVar>>,
    pub gen_p: Vec<Vec<LocalVar>>,
    pub gen_q: Vec<Vec<LocalVar>>,
    pub conv_p: Vec<Vec<LocalVar>>,
    pub conv_loss: Vec<Vec<LocalVar>>,
    pub conv_dc: Vec<Vec<LocalVar>>,
    pub bat_size: Vec<Vec<LocalVar>>,
    pub bat_sc: Vec<Vec<LocalVar>>,
    pub bat_ch: Vec<Vec<LocalVar>>,
    pub bat_dis: Vec<Vec<LocalVar>>,
    pub bat_z: Vec<Vec<LocalVar>>,
}

/// A co-design graph together with its variable handles and the weights
/// that scalarize it.
#[derive(Debug, Clone)]
pub struct GridModel {
    pub graph: OptiGraph,
    pub vars: GridVars,
    /// Weights on the simplex as given.
    pub weights: [f64; 2],
    /// Weights divided by the case objective scales; these enter the program.
    pub effective_weights: [f64; 2],
}

impl GridModel {
    pub fn flatten(&mut self) -> Result<Flattened, GridError> {
        Ok(self.graph.flatten(&self.effective_weights)?)
    }
}

fn grid(components: usize, hours: usize) -> Vec<Vec<LocalVar>> {
    vec![Vec::with_capacity(hours); components]
}

fn tie(label: String, a: LocalVar, b: LocalVar) -> LinkConstraint {
    LinkConstraint::new(label, Constraint::eq(LinExpr::var(a).plus(b, -1.0)))
}

pub fn build_graph(case: &CaseData, weights: &[f64], mode: &SizingMode) -> Result<GridModel, GridError> {
    case.validate()?;
    check_weights(weights)?;
    if let SizingMode::Fixed(sizes) = mode {
        if sizes.len() != case.batteries.len() {
            return Err(GridError::Sizes(format!(
                "{} sizes given for {} batteries",
                sizes.len(),
                case.batteries.len()
            )));
        }
        for (k, (s, b)) in sizes.iter().zip(&case.batteries).enumerate() {
            if !(*s >= b.bs_min && *s <= b.bs_max) {
                return Err(GridError::Sizes(format!(
                    "battery {k} size {s} outside [{}, {}]",
                    b.bs_min, b.bs_max
                )));
            }
        }
    }

    let hours = case.horizon;
    let base = case.mva_base;
    let nb = case.ac_buses.len();
    let mut v = GridVars {
        ac_c: grid(nb, hours),
        ac_branch_c: grid(case.ac_branches.len(), hours),
        ac_branch_s: grid(case.ac_branches.len(), hours),
        dc_v: grid(case.dc_buses.len(), hours),
        dc_branch_v: grid(case.dc_branches.len(), hours),
        gen_p: grid(case.generators.len(), hours),
        gen_q: grid(case.generators.len(), hours),
        conv_p: grid(case.converters.len(), hours),
        conv_loss: grid(case.converters.len(), hours),
        conv_dc: grid(case.converters.len(), hours),
        bat_size: grid(case.batteries.len(), hours),
        bat_sc: grid(case.batteries.len(), hours),
        bat_ch: grid(case.batteries.len(), hours),
        bat_dis: grid(case.batteries.len(), hours),
        bat_z: grid(case.batteries.len(), hours),
    };
    let mut graph = OptiGraph::new(2);
    let ac = |id: usize| case.ac_index(id).expect("validated");
    let dc = |id: usize| case.dc_index(id).expect("validated");

    // Per hour and bus: injection variables shared by attached devices.
    let mut bus_p_conv = vec![vec![None; nb]; hours];
    let mut bus_p_bat = vec![vec![None; nb]; hours];
    let mut dc_p_conv = vec![vec![None; case.dc_buses.len()]; hours];

    for t in 0..hours {
        let load = case.schedule.load[t];
        let fuel = case.schedule.fuel_cost[t];

        // AC buses: (c_ij, s_ij) per incident branch in local orientation.
        let mut bus_cs: Vec<Vec<(usize, LocalVar, LocalVar)>> = vec![Vec::new(); nb];
        for (bi, bus) in case.ac_buses.iter().enumerate() {
            let mut node = NodeModel::new(format!("ac_bus{}_t{}", bus.id, t + 1));
            let c_ii = node.add_variable("c_ii", bus.vmin * bus.vmin, bus.vmax * bus.vmax);
            v.ac_c[bi].push(c_ii);
            let mut p_expr = LinExpr::constant(-bus.pd * load);
            let mut q_expr = LinExpr::constant(-bus.qd * load);
            for (k, br) in case.ac_branches.iter().enumerate() {
                let other = if ac(br.from) == bi {
                    br.to
                } else if ac(br.to) == bi {
                    br.from
                } else {
                    continue;
                };
                let c = node.add_variable(format!("c_{}_{}", bus.id, other), -INF, INF);
                let s = node.add_variable(format!("s_{}_{}", bus.id, other), -INF, INF);
                let (g, b) = br.series_admittance();
                // Flow out of this bus: p = g c_ii - g c_ij + b s_ij,
                // q = -(b + b_sh/2) c_ii + g s_ij + b c_ij.
                p_expr = p_expr.plus(c_ii, -g).plus(c, g).plus(s, -b);
                q_expr = q_expr.plus(c_ii, b + br.b / 2.0).plus(s, -g).plus(c, -b);
                bus_cs[bi].push((k, c, s));
            }
            for (gi, gen) in case.generators.iter().enumerate() {
                if ac(gen.bus) != bi {
                    continue;
                }
                let pg = node.add_variable(format!("pg{gi}"), gen.pmin, gen.pmax);
                let qg = node.add_variable(format!("qg{gi}"), gen.qmin, gen.qmax);
                p_expr = p_expr.plus(pg, 1.0);
                q_expr = q_expr.plus(qg, 1.0);
                v.gen_p[gi].push(pg);
                v.gen_q[gi].push(qg);
                // Fuel cost with P in MW.
                node.add_objective(ObjectiveTerm {
                    objective: 1,
                    affine: LinExpr::constant(fuel * gen.cost_c0).plus(pg, fuel * gen.cost_b * base),
                    quadratic: vec![(pg, pg, fuel * gen.cost_a * base * base)],
                });
            }
            if case.converters.iter().any(|cv| ac(cv.ac_bus) == bi) {
                let p = node.add_variable("p_conv", -INF, INF);
                p_expr = p_expr.plus(p, 1.0);
                bus_p_conv[t][bi] = Some(p);
            }
            if case.batteries.iter().any(|b| ac(b.ac_bus) == bi) {
                let p = node.add_variable("p_bat", -INF, INF);
                p_expr = p_expr.plus(p, 1.0);
                bus_p_bat[t][bi] = Some(p);
            }
            node.add_constraint(Constraint::eq(p_expr));
            node.add_constraint(Constraint::eq(q_expr));
            graph.add_node(node)?;
        }

        // AC branches: copies, rotated cone and the series loss term.
        for (k, br) in case.ac_branches.iter().enumerate() {
            let (i, j) = (ac(br.from), ac(br.to));
            let mut node = NodeModel::new(format!("ac_branch{}_{}_t{}", br.from, br.to, t + 1));
            let c_ii = node.add_variable("c_ii", -INF, INF);
            let c_jj = node.add_variable("c_jj", -INF, INF);
            let c_ij = node.add_variable("c_ij", -INF, INF);
            let s_ij = node.add_variable("s_ij", -INF, INF);
            node.add_constraint(Constraint::Cone {
                kind: ConeKind::RotatedSecondOrder,
                exprs: vec![
                    LinExpr::var(c_ii),
                    LinExpr::var(c_jj),
                    LinExpr::new().plus(c_ij, SQRT_2),
                    LinExpr::new().plus(s_ij, SQRT_2),
                ],
            });
            let (g, _) = br.series_admittance();
            if g != 0.0 {
                node.add_objective(ObjectiveTerm::linear(
                    2,
                    LinExpr::new().plus(c_ii, g).plus(c_jj, g).plus(c_ij, -2.0 * g),
                ));
            }
            graph.add_node(node)?;

            let from = bus_cs[i].iter().find(|e| e.0 == k).expect("incident");
            let to = bus_cs[j].iter().find(|e| e.0 == k).expect("incident");
            let tag = format!("ac{}_{}_t{}", br.from, br.to, t + 1);
            graph.add_link(tie(format!("{tag}_cii"), c_ii, v.ac_c[i][t]))?;
            graph.add_link(tie(format!("{tag}_cjj"), c_jj, v.ac_c[j][t]))?;
            graph.add_link(tie(format!("{tag}_cij"), c_ij, from.1))?;
            graph.add_link(tie(format!("{tag}_sij"), s_ij, from.2))?;
            graph.add_link(tie(format!("{tag}_csym"), from.1, to.1))?;
            graph.add_link(LinkConstraint::new(
                format!("{tag}_ssym"),
                Constraint::eq(LinExpr::var(from.2).plus(to.2, 1.0)),
            ))?;
            v.ac_branch_c[k].push(from.1);
            v.ac_branch_s[k].push(from.2);
        }

        // DC buses.
        let mut bus_v: Vec<Vec<(usize, LocalVar)>> = vec![Vec::new(); case.dc_buses.len()];
        for (bi, bus) in case.dc_buses.iter().enumerate() {
            let mut node = NodeModel::new(format!("dc_bus{}_t{}", bus.id, t + 1));
            let v_ii = node.add_variable("v_ii", bus.vmin * bus.vmin, bus.vmax * bus.vmax);
            v.dc_v[bi].push(v_ii);
            let wind: f64 = case
                .wind_farms
                .iter()
                .filter(|w| dc(w.dc_bus) == bi)
                .map(|w| w.nominal * case.schedule.wind[t] / base)
                .sum();
            let mut expr = LinExpr::constant(wind);
            for (k, br) in case.dc_branches.iter().enumerate() {
                let other = if dc(br.from) == bi {
                    br.to
                } else if dc(br.to) == bi {
                    br.from
                } else {
                    continue;
                };
                let v_ij = node.add_variable(format!("v_{}_{}", bus.id, other), -INF, INF);
                let g = br.conductance();
                expr = expr.plus(v_ii, -g).plus(v_ij, g);
                bus_v[bi].push((k, v_ij));
            }
            if case.converters.iter().any(|cv| dc(cv.dc_bus) == bi) {
                let p = node.add_variable("p_dc", -INF, INF);
                expr = expr.plus(p, -1.0);
                dc_p_conv[t][bi] = Some(p);
            }
            node.add_constraint(Constraint::eq(expr));
            graph.add_node(node)?;
        }

        for (k, br) in case.dc_branches.iter().enumerate() {
            let (i, j) = (dc(br.from), dc(br.to));
            let mut node = NodeModel::new(format!("dc_branch{}_{}_t{}", br.from, br.to, t + 1));
            let v_ii = node.add_variable("v_ii", -INF, INF);
            let v_jj = node.add_variable("v_jj", -INF, INF);
            let v_ij = node.add_variable("v_ij", -INF, INF);
            node.add_constraint(Constraint::Cone {
                kind: ConeKind::RotatedSecondOrder,
                exprs: vec![LinExpr::var(v_ii), LinExpr::var(v_jj), LinExpr::new().plus(v_ij, SQRT_2)],
            });
            let g = br.conductance();
            node.add_objective(ObjectiveTerm::linear(
                2,
                LinExpr::new().plus(v_ii, g).plus(v_jj, g).plus(v_ij, -2.0 * g),
            ));
            graph.add_node(node)?;

            let from = bus_v[i].iter().find(|e| e.0 == k).expect("incident").1;
            let to = bus_v[j].iter().find(|e| e.0 == k).expect("incident").1;
            let tag = format!("dc{}_{}_t{}", br.from, br.to, t + 1);
            graph.add_link(tie(format!("{tag}_vii"), v_ii, v.dc_v[i][t]))?;
            graph.add_link(tie(format!("{tag}_vjj"), v_jj, v.dc_v[j][t]))?;
            graph.add_link(tie(format!("{tag}_vij"), v_ij, from))?;
            graph.add_link(tie(format!("{tag}_vsym"), from, to))?;
            v.dc_branch_v[k].push(from);
        }

        for (ci, cv) in case.converters.iter().enumerate() {
            let mut node = NodeModel::new(format!("conv{}_t{}", ci + 1, t + 1));
            let p = node.add_variable("p_conv", -INF, INF);
            let loss = node.add_variable("p_loss", 0.0, INF);
            let p_dc = node.add_variable("p_dc", -INF, INF);
            let v_dc = node.add_variable("v_dc", -INF, INF);
            node.add_constraint(Constraint::eq(LinExpr::var(p).plus(loss, 1.0).plus(p_dc, -1.0)));
            node.add_constraint(Constraint::ge(LinExpr::var(loss).plus(p_dc, -cv.beta)));
            node.add_constraint(Constraint::ge(LinExpr::var(loss).plus(p_dc, cv.beta)));
            // 2 * v_dc * 1/2 >= (k p + d)^2
            node.add_constraint(Constraint::Cone {
                kind: ConeKind::RotatedSecondOrder,
                exprs: vec![
                    LinExpr::var(v_dc),
                    LinExpr::constant(0.5),
                    LinExpr::constant(cv.d).plus(p, cv.k),
                ],
            });
            node.add_objective(ObjectiveTerm::linear(2, LinExpr::var(loss)));
            graph.add_node(node)?;
            let tag = format!("conv{}_t{}", ci + 1, t + 1);
            let di = dc(cv.dc_bus);
            graph.add_link(tie(format!("{tag}_v"), v_dc, v.dc_v[di][t]))?;
            v.conv_p[ci].push(p);
            v.conv_loss[ci].push(loss);
            v.conv_dc[ci].push(p_dc);
        }
        for (bi, p_bus) in bus_p_conv[t].iter().enumerate() {
            let Some(p_bus) = *p_bus else { continue };
            let mut expr = LinExpr::var(p_bus);
            for (ci, cv) in case.converters.iter().enumerate() {
                if ac(cv.ac_bus) == bi {
                    expr = expr.plus(v.conv_p[ci][t], -1.0);
                }
            }
            let label = format!("ac_bus{}_t{}_conv", case.ac_buses[bi].id, t + 1);
            graph.add_link(LinkConstraint::new(label, Constraint::eq(expr)))?;
        }
        for (bi, p_bus) in dc_p_conv[t].iter().enumerate() {
            let Some(p_bus) = *p_bus else { continue };
            let mut expr = LinExpr::var(p_bus);
            for (ci, cv) in case.converters.iter().enumerate() {
                if dc(cv.dc_bus) == bi {
                    expr = expr.plus(v.conv_dc[ci][t], -1.0);
                }
            }
            let label = format!("dc_bus{}_t{}_conv", case.dc_buses[bi].id, t + 1);
            graph.add_link(LinkConstraint::new(label, Constraint::eq(expr)))?;
        }

        for (si, bat) in case.batteries.iter().enumerate() {
            let mut node = NodeModel::new(format!("bat{}_t{}", si + 1, t + 1));
            let (lo, up) = match mode {
                SizingMode::Codesign => (bat.bs_min, bat.bs_max),
                SizingMode::Fixed(sizes) => (sizes[si], sizes[si]),
            };
            let bs = node.add_variable("bs", lo, up);
            let sc_lo = if t + 1 == hours { bat.sc_final_min } else { 0.0 };
            let sc = node.add_variable("sc", sc_lo, INF);
            let ch = node.add_variable("p_ch", 0.0, bat.p_ch_max);
            let dis = node.add_variable("p_dis", 0.0, bat.p_dis_max);
            let z = node.add_binary("z");
            node.add_constraint(Constraint::le(LinExpr::var(ch).plus(z, -bat.p_ch_max)));
            node.add_constraint(Constraint::le(
                LinExpr::var(dis).plus(z, bat.p_dis_max).offset(-bat.p_dis_max),
            ));
            node.add_constraint(Constraint::le(LinExpr::var(sc).plus(bs, -1.0)));
            if t == 0 {
                node.add_constraint(Constraint::eq(
                    LinExpr::var(sc).plus(ch, -bat.eta_ch).plus(dis, bat.eta_dis).offset(-bat.sc0),
                ));
                node.add_objective(ObjectiveTerm::linear(1, LinExpr::new().plus(bs, bat.install_rate)));
            }
            if bat.operation_rate != 0.0 {
                node.add_objective(ObjectiveTerm::linear(
                    1,
                    LinExpr::new().plus(ch, bat.operation_rate).plus(dis, bat.operation_rate),
                ));
            }
            graph.add_node(node)?;
            let tag = format!("bat{}_t{}", si + 1, t + 1);
            if t > 0 {
                let prev = v.bat_sc[si][t - 1];
                graph.add_link(LinkConstraint::new(
                    format!("{tag}_soc"),
                    Constraint::eq(
                        LinExpr::var(sc).plus(prev, -1.0).plus(ch, -bat.eta_ch).plus(dis, bat.eta_dis),
                    ),
                ))?;
                if matches!(mode, SizingMode::Codesign) {
                    graph.add_link(tie(format!("{tag}_bs"), bs, v.bat_size[si][t - 1]))?;
                }
            }
            v.bat_size[si].push(bs);
            v.bat_sc[si].push(sc);
            v.bat_ch[si].push(ch);
            v.bat_dis[si].push(dis);
            v.bat_z[si].push(z);
        }

        // Battery injections (MW) tied to the bus variable (p.u.).
        for (bi, p_bat) in bus_p_bat[t].iter().enumerate() {
            let Some(p_bat) = *p_bat else { continue };
            let mut expr = LinExpr::new().plus(p_bat, base);
            for (si, bat) in case.batteries.iter().enumerate() {
                if ac(bat.ac_bus) == bi {
                    expr = expr.plus(v.bat_dis[si][t], -1.0).plus(v.bat_ch[si][t], 1.0);
                }
            }
            graph.add_link(LinkConstraint::new(
                format!("ac_bus{}_t{}_bat", case.ac_buses[bi].id, t + 1),
                Constraint::eq(expr),
            ))?;
        }
    }

    // Generator ramps between consecutive hours.
    for (gi, gen) in case.generators.iter().enumerate() {
        for t in 1..hours {
            let tag = format!("gen{}_t{}", gi + 1, t + 1);
            let (p0, p1) = (v.gen_p[gi][t - 1], v.gen_p[gi][t]);
            let (q0, q1) = (v.gen_q[gi][t - 1], v.gen_q[gi][t]);
            for (name, a, b, limit) in [
                ("p_up", p1, p0, gen.ramp_p_up),
                ("p_down", p0, p1, gen.ramp_p_down),
                ("q_up", q1, q0, gen.ramp_q_up),
                ("q_down", q0, q1, gen.ramp_q_down),
            ] {
                graph.add_link(LinkConstraint::new(
                    format!("{tag}_{name}"),
                    Constraint::le(LinExpr::var(a).plus(b, -1.0).offset(-limit)),
                ))?;
            }
        }
    }

    let w = [weights[0], weights[1]];
    let scales = case.costs.objective_scales;
    Ok(GridModel {
        graph,
        vars: v,
        weights: w,
        effective_weights: [w[0] / scales[0], w[1] / scales[1]],
    })
}
