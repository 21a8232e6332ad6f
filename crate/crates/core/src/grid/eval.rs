use super::build::{GridError, GridModel};
use super::case::CaseData;
use crate::graph::Flattened;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::f64::consts::PI;

/// Cone gaps above this are reported as inexact.
pub const EXACTNESS_THRESHOLD: f64 = 1e-5;

/// Values of the co-design variables, indexed `[component][hour]`. Powers
/// are in p.u. except battery quantities (MW, MWh).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingSolution {
    pub hours: usize,
    pub ac_c: Vec<Vec<f64>>,
    pub ac_branch_c: Vec<Vec<f64>>,
    pub ac_branch_s: Vec<Vec<f64>>,
    pub dc_v: Vec<Vec<f64>>,
    pub dc_branch_v: Vec<Vec<f64>>,
    pub gen_p: Vec<Vec<f64>>,
    pub gen_q: Vec<Vec<f64>>,
    pub conv_p: Vec<Vec<f64>>,
    pub conv_loss: Vec<Vec<f64>>,
    pub conv_dc: Vec<Vec<f64>>,
    pub bat_sc: Vec<Vec<f64>>,
    pub bat_ch: Vec<Vec<f64>>,
    pub bat_dis: Vec<Vec<f64>>,
    pub bat_z: Vec<Vec<f64>>,
    pub bat_size: Vec<f64>,
    pub total_cost: f64,
    pub total_loss: f64,
}

impl OperatingSolution {
    /// Reads the variables of `model` from a solution of its flattened program.
    pub fn extract(case: &CaseData, model: &GridModel, flat: &Flattened, x: &[f64]) -> Result<Self, GridError> {
        let get = |vars: &Vec<Vec<crate::graph::LocalVar>>| -> Vec<Vec<f64>> {
            vars.iter()
                .map(|row| row.iter().map(|v| x[flat.column_of(*v)]).collect())
                .collect()
        };
        let v = &model.vars;
        let sizes = get(&v.bat_size);
        let mut sol = OperatingSolution {
            hours: case.horizon,
            ac_c: get(&v.ac_c),
            ac_branch_c: get(&v.ac_branch_c),
            ac_branch_s: get(&v.ac_branch_s),
            dc_v: get(&v.dc_v),
            dc_branch_v: get(&v.dc_branch_v),
            gen_p: get(&v.gen_p),
            gen_q: get(&v.gen_q),
            conv_p: get(&v.conv_p),
            conv_loss: get(&v.conv_loss),
            conv_dc: get(&v.conv_dc),
            bat_sc: get(&v.bat_sc),
            bat_ch: get(&v.bat_ch),
            bat_dis: get(&v.bat_dis),
            bat_z: get(&v.bat_z),
            bat_size: sizes.iter().map(|s| s[0]).collect(),
            total_cost: 0.0,
            total_loss: 0.0,
        };
        let (cost, loss) = evaluate_objectives(case, &sol)?;
        sol.total_cost = cost;
        sol.total_loss = loss;
        Ok(sol)
    }

    fn check(&self, case: &CaseData) -> Result<(), GridError> {
        let t = case.horizon;
        let shape = [
            ("ac_c", &self.ac_c, case.ac_buses.len()),
            ("ac_branch_c", &self.ac_branch_c, case.ac_branches.len()),
            ("ac_branch_s", &self.ac_branch_s, case.ac_branches.len()),
            ("dc_v", &self.dc_v, case.dc_buses.len()),
            ("dc_branch_v", &self.dc_branch_v, case.dc_branches.len()),
            ("gen_p", &self.gen_p, case.generators.len()),
            ("gen_q", &self.gen_q, case.generators.len()),
            ("conv_p", &self.conv_p, case.converters.len()),
            ("conv_loss", &self.conv_loss, case.converters.len()),
            ("conv_dc", &self.conv_dc, case.converters.len()),
            ("bat_sc", &self.bat_sc, case.batteries.len()),
            ("bat_ch", &self.bat_ch, case.batteries.len()),
            ("bat_dis", &self.bat_dis, case.batteries.len()),
            ("bat_z", &self.bat_z, case.batteries.len()),
        ];
        if self.hours != t {
            return Err(GridError::Dimensions(format!("{} hours, case has {t}", self.hours)));
        }
        for (name, rows, count) in shape {
            if rows.len() != count || rows.iter().any(|r| r.len() != t) {
                return Err(GridError::Dimensions(format!("{name} is not {count} x {t}")));
            }
        }
        if self.bat_size.len() != case.batteries.len() {
            return Err(GridError::Dimensions(format!(
                "bat_size has {} entries for {} batteries",
                self.bat_size.len(),
                case.batteries.len()
            )));
        }
        Ok(())
    }
}

/// Total cost and total loss (p.u. summed over hours) recomputed from the
/// raw variables.
pub fn evaluate_objectives(case: &CaseData, sol: &OperatingSolution) -> Result<(f64, f64), GridError> {
    sol.check(case)?;
    let base = case.mva_base;
    let mut cost = 0.0;
    for (k, bat) in case.batteries.iter().enumerate() {
        cost += bat.install_rate * sol.bat_size[k];
        for t in 0..sol.hours {
            cost += bat.operation_rate * (sol.bat_ch[k][t] + sol.bat_dis[k][t]);
        }
    }
    for (k, g) in case.generators.iter().enumerate() {
        for t in 0..sol.hours {
            let p = sol.gen_p[k][t] * base;
            cost += case.schedule.fuel_cost[t] * (g.cost_a * p * p + g.cost_b * p + g.cost_c0);
        }
    }

    let mut loss = 0.0;
    for t in 0..sol.hours {
        for k in 0..case.converters.len() {
            loss += sol.conv_loss[k][t];
        }
        for (k, br) in case.ac_branches.iter().enumerate() {
            let (g, _) = br.series_admittance();
            let i = case.ac_index(br.from).expect("validated");
            let j = case.ac_index(br.to).expect("validated");
            loss += g * (sol.ac_c[i][t] + sol.ac_c[j][t] - 2.0 * sol.ac_branch_c[k][t]);
        }
        for (k, br) in case.dc_branches.iter().enumerate() {
            let i = case.dc_index(br.from).expect("validated");
            let j = case.dc_index(br.to).expect("validated");
            loss += br.conductance() * (sol.dc_v[i][t] + sol.dc_v[j][t] - 2.0 * sol.dc_branch_v[k][t]);
        }
    }
    Ok((cost, loss))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageProfile {
    /// `[bus][hour]`
    pub ac_magnitude: Vec<Vec<f64>>,
    /// Radians, slack bus at zero.
    pub ac_angle: Vec<Vec<f64>>,
    pub dc_magnitude: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactnessReport {
    /// `c_ii c_jj - c_ij^2 - s_ij^2` per `[branch][hour]`.
    pub ac_gap: Vec<Vec<f64>>,
    /// `v_ii v_jj - v_ij^2` per `[branch][hour]`.
    pub dc_gap: Vec<Vec<f64>>,
    /// Angle mismatch around the cycle closed by each non-tree branch;
    /// zero for tree branches.
    pub cycle_mismatch: Vec<Vec<f64>>,
    /// `|k P + d - sqrt(v_ii)|` per `[converter][hour]`.
    pub droop_deviation: Vec<Vec<f64>>,
    pub threshold: f64,
}

impl ExactnessReport {
    pub fn max_gap(&self) -> f64 {
        self.ac_gap
            .iter()
            .chain(&self.dc_gap)
            .flatten()
            .fold(0.0, |m, g| m.max(g.abs()))
    }

    pub fn is_exact(&self) -> bool {
        self.max_gap() <= self.threshold
    }
}

fn wrap(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

/// Inverts the voltage lifting and measures how far the relaxation is from
/// a physical voltage profile.
pub fn recover_voltages(
    case: &CaseData,
    sol: &OperatingSolution,
    tolerance: f64,
) -> Result<(VoltageProfile, ExactnessReport), GridError> {
    sol.check(case)?;
    let sqrt = |what: &str, idx: usize, t: usize, v: f64| -> Result<f64, GridError> {
        if v < -tolerance {
            Err(GridError::Dimensions(format!("{what}[{idx}] at hour {} is negative: {v}", t + 1)))
        } else {
            Ok(v.max(0.0).sqrt())
        }
    };
    let hours = sol.hours;
    let nb = case.ac_buses.len();
    let ac_magnitude = (0..nb)
        .map(|i| (0..hours).map(|t| sqrt("c_ii", i, t, sol.ac_c[i][t])).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    let dc_magnitude = (0..case.dc_buses.len())
        .map(|i| (0..hours).map(|t| sqrt("v_ii", i, t, sol.dc_v[i][t])).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;

    // Breadth-first spanning tree from the slack bus, in branch order.
    let ends: Vec<(usize, usize)> = case
        .ac_branches
        .iter()
        .map(|b| (case.ac_index(b.from).expect("validated"), case.ac_index(b.to).expect("validated")))
        .collect();
    let slack = case.ac_index(case.slack_bus).expect("validated");
    let mut parent: Vec<Option<(usize, bool)>> = vec![None; nb];
    let mut seen = vec![false; nb];
    let mut in_tree = vec![false; ends.len()];
    let mut order = Vec::with_capacity(nb);
    let mut queue = VecDeque::from([slack]);
    seen[slack] = true;
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for (k, &(i, j)) in ends.iter().enumerate() {
            let (w, forward) = if i == u {
                (j, true)
            } else if j == u {
                (i, false)
            } else {
                continue;
            };
            if !seen[w] {
                seen[w] = true;
                in_tree[k] = true;
                parent[w] = Some((k, forward));
                queue.push_back(w);
            }
        }
    }

    let mut ac_angle = vec![vec![0.0; hours]; nb];
    let mut cycle_mismatch = vec![vec![0.0; hours]; ends.len()];
    for t in 0..hours {
        // theta_j - theta_i = atan2(s_ij, c_ij) along each branch.
        for &u in &order {
            if let Some((k, forward)) = parent[u] {
                let d = sol.ac_branch_s[k][t].atan2(sol.ac_branch_c[k][t]);
                let (i, j) = ends[k];
                ac_angle[u][t] = if forward { ac_angle[i][t] + d } else { ac_angle[j][t] - d };
            }
        }
        for (k, &(i, j)) in ends.iter().enumerate() {
            if !in_tree[k] {
                let d = sol.ac_branch_s[k][t].atan2(sol.ac_branch_c[k][t]);
                cycle_mismatch[k][t] = wrap(ac_angle[j][t] - ac_angle[i][t] - d);
            }
        }
    }

    let ac_gap = ends
        .iter()
        .enumerate()
        .map(|(k, &(i, j))| {
            (0..hours)
                .map(|t| {
                    let (c, s) = (sol.ac_branch_c[k][t], sol.ac_branch_s[k][t]);
                    sol.ac_c[i][t] * sol.ac_c[j][t] - c * c - s * s
                })
                .collect()
        })
        .collect();
    let dc_gap = case
        .dc_branches
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let i = case.dc_index(b.from).expect("validated");
            let j = case.dc_index(b.to).expect("validated");
            (0..hours)
                .map(|t| sol.dc_v[i][t] * sol.dc_v[j][t] - sol.dc_branch_v[k][t].powi(2))
                .collect()
        })
        .collect();
    let droop_deviation = case
        .converters
        .iter()
        .enumerate()
        .map(|(k, cv)| {
            let i = case.dc_index(cv.dc_bus).expect("validated");
            (0..hours)
                .map(|t| (cv.k * sol.conv_p[k][t] + cv.d - dc_magnitude[i][t]).abs())
                .collect()
        })
        .collect();

    Ok((
        VoltageProfile {
            ac_magnitude,
            ac_angle,
            dc_magnitude,
        },
        ExactnessReport {
            ac_gap,
            dc_gap,
            cycle_mismatch,
            droop_deviation,
            threshold: EXACTNESS_THRESHOLD,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryRow {
    pub hour: usize,
    /// Charging minus discharging (MW).
    pub net_power: f64,
    /// State of charge at the end of the hour (MWh).
    pub soc: f64,
}

/// Hourly table per battery. The state of charge is propagated from the
/// initial charge through the operation equation, not copied from the solve.
pub fn battery_schedule(case: &CaseData, sol: &OperatingSolution) -> Result<Vec<Vec<BatteryRow>>, GridError> {
    sol.check(case)?;
    Ok(case
        .batteries
        .iter()
        .enumerate()
        .map(|(k, bat)| {
            let mut soc = bat.sc0;
            (0..sol.hours)
                .map(|t| {
                    let (ch, dis) = (sol.bat_ch[k][t], sol.bat_dis[k][t]);
                    soc += bat.eta_ch * ch - bat.eta_dis * dis;
                    BatteryRow {
                        hour: t + 1,
                        net_power: ch - dis,
                        soc,
                    }
                })
                .collect()
        })
        .collect())
}

/// Largest residuals (p.u.) of the AC active/reactive balance, the DC
/// balance and the converter balance over all buses and hours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceResiduals {
    pub ac_active: f64,
    pub ac_reactive: f64,
    pub dc: f64,
    pub converter: f64,
}

impl BalanceResiduals {
    pub fn max(&self) -> f64 {
        self.ac_active.max(self.ac_reactive).max(self.dc).max(self.converter)
    }
}

/// Recomputes the power balances with the admittance matrices assembled
/// from the branch data, using the from-end branch values for both ends.
pub fn balance_residuals(case: &CaseData, sol: &OperatingSolution) -> Result<BalanceResiduals, GridError> {
    sol.check(case)?;
    let base = case.mva_base;
    let nb = case.ac_buses.len();
    let nd = case.dc_buses.len();
    let mut out = BalanceResiduals {
        ac_active: 0.0,
        ac_reactive: 0.0,
        dc: 0.0,
        converter: 0.0,
    };
    for t in 0..sol.hours {
        let mut p = vec![0.0; nb];
        let mut q = vec![0.0; nb];
        for (i, bus) in case.ac_buses.iter().enumerate() {
            p[i] -= bus.pd * case.schedule.load[t];
            q[i] -= bus.qd * case.schedule.load[t];
        }
        for (k, g) in case.generators.iter().enumerate() {
            let i = case.ac_index(g.bus).expect("validated");
            p[i] += sol.gen_p[k][t];
            q[i] += sol.gen_q[k][t];
        }
        for (k, cv) in case.converters.iter().enumerate() {
            p[case.ac_index(cv.ac_bus).expect("validated")] += sol.conv_p[k][t];
        }
        for (k, bat) in case.batteries.iter().enumerate() {
            p[case.ac_index(bat.ac_bus).expect("validated")] += (sol.bat_dis[k][t] - sol.bat_ch[k][t]) / base;
        }
        // Injection minus sum_j (G_ij c_ij - B_ij s_ij) and the reactive analogue.
        for (k, br) in case.ac_branches.iter().enumerate() {
            let i = case.ac_index(br.from).expect("validated");
            let j = case.ac_index(br.to).expect("validated");
            let (g, b) = br.series_admittance();
            let bsh = br.b / 2.0;
            let (c, s) = (sol.ac_branch_c[k][t], sol.ac_branch_s[k][t]);
            // Diagonal Y_ii += y + j b_sh, off-diagonal Y_ij = -y; s_ji = -s_ij.
            p[i] -= g * sol.ac_c[i][t] - g * c + b * s;
            p[j] -= g * sol.ac_c[j][t] - g * c - b * s;
            q[i] += (b + bsh) * sol.ac_c[i][t] - g * s - b * c;
            q[j] += (b + bsh) * sol.ac_c[j][t] + g * s - b * c;
        }
        for i in 0..nb {
            out.ac_active = out.ac_active.max(p[i].abs());
            out.ac_reactive = out.ac_reactive.max(q[i].abs());
        }

        let mut d = vec![0.0; nd];
        for wf in &case.wind_farms {
            d[case.dc_index(wf.dc_bus).expect("validated")] += wf.nominal * case.schedule.wind[t] / base;
        }
        for (k, cv) in case.converters.iter().enumerate() {
            d[case.dc_index(cv.dc_bus).expect("validated")] -= sol.conv_dc[k][t];
            let r = sol.conv_p[k][t] + sol.conv_loss[k][t] - sol.conv_dc[k][t];
            out.converter = out.converter.max(r.abs());
        }
        for (k, br) in case.dc_branches.iter().enumerate() {
            let i = case.dc_index(br.from).expect("validated");
            let j = case.dc_index(br.to).expect("validated");
            let g = br.conductance();
            let vij = sol.dc_branch_v[k][t];
            d[i] -= g * (sol.dc_v[i][t] - vij);
            d[j] -= g * (sol.dc_v[j][t] - vij);
        }
        for r in d {
            out.dc = out.dc.max(r.abs());
        }
    }
    Ok(out)
}
