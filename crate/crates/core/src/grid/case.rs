//! Case data: AC grid, MTDC grid, converters, batteries, wind farms and the
//! hourly schedule. Electrical quantities are per unit on `mva_base`;
//! battery energy is in MWh, battery power and wind output in MW.

use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcBus {
    pub id: usize,
    pub vmin: f64,
    pub vmax: f64,
    /// Nominal active demand (p.u.).
    pub pd: f64,
    /// Nominal reactive demand (p.u.).
    pub qd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcBranch {
    pub from: usize,
    pub to: usize,
    /// Series resistance and reactance, total line charging (p.u.).
    pub r: f64,
    pub x: f64,
    #[serde(default)]
    pub b: f64,
}

impl AcBranch {
    /// Series admittance `g + jb`.
    pub fn series_admittance(&self) -> (f64, f64) {
        let z2 = self.r * self.r + self.x * self.x;
        (self.r / z2, -self.x / z2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub bus: usize,
    pub pmin: f64,
    pub pmax: f64,
    pub qmin: f64,
    pub qmax: f64,
    pub ramp_p_up: f64,
    pub ramp_p_down: f64,
    pub ramp_q_up: f64,
    pub ramp_q_down: f64,
    /// Fuel cost `a P^2 + b P + c0` with `P` in MW, per hour.
    pub cost_a: f64,
    pub cost_b: f64,
    pub cost_c0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcBus {
    pub id: usize,
    /// Voltage magnitude bounds; the model bounds their squares.
    pub vmin: f64,
    pub vmax: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcBranch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
}

impl DcBranch {
    pub fn conductance(&self) -> f64 {
        1.0 / self.r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Converter {
    pub ac_bus: usize,
    pub dc_bus: usize,
    pub beta: f64,
    pub k: f64,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Battery {
    pub ac_bus: usize,
    pub bs_min: f64,
    pub bs_max: f64,
    pub p_ch_max: f64,
    pub p_dis_max: f64,
    pub eta_ch: f64,
    pub eta_dis: f64,
    pub sc0: f64,
    pub sc_final_min: f64,
    /// Installation cost per MWh of size, amortized to the horizon.
    pub install_rate: f64,
    /// Operation cost per MWh charged or discharged.
    pub operation_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindFarm {
    pub dc_bus: usize,
    /// Nominal output (MW).
    pub nominal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub load: Vec<f64>,
    pub wind: Vec<f64>,
    pub fuel_cost: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Costs {
    /// Divisors applied to (total cost, total loss) before weighting.
    pub objective_scales: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseData {
    pub name: String,
    pub mva_base: f64,
    pub horizon: usize,
    /// AC bus used as the angle reference.
    pub slack_bus: usize,
    pub ac_buses: Vec<AcBus>,
    pub ac_branches: Vec<AcBranch>,
    pub generators: Vec<Generator>,
    pub dc_buses: Vec<DcBus>,
    pub dc_branches: Vec<DcBranch>,
    pub converters: Vec<Converter>,
    pub batteries: Vec<Battery>,
    pub wind_farms: Vec<WindFarm>,
    pub schedule: Schedule,
    pub costs: Costs,
}

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("demand scale factor must be positive, got {0}")]
    Scale(f64),
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> CaseError {
    CaseError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

impl CaseData {
    pub fn from_json_str(text: &str) -> Result<Self, CaseError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let case: CaseData = serde_path_to_error::deserialize(de).map_err(|e| CaseError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        case.validate()?;
        Ok(case)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CaseError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CaseError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case data serializes")
    }

    pub fn ac_index(&self, id: usize) -> Option<usize> {
        self.ac_buses.iter().position(|b| b.id == id)
    }

    pub fn dc_index(&self, id: usize) -> Option<usize> {
        self.dc_buses.iter().position(|b| b.id == id)
    }

    /// Copy with all nominal demands multiplied by `factor`.
    pub fn demand_scale(&self, factor: f64) -> Result<Self, CaseError> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(CaseError::Scale(factor));
        }
        let mut c = self.clone();
        for b in &mut c.ac_buses {
            b.pd *= factor;
            b.qd *= factor;
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CaseError> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(name, format!("must be positive, got {v}")))
            }
        };
        let finite = |name: String, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(invalid(name, format!("must be finite, got {v}")))
            }
        };
        pos("mva_base", self.mva_base)?;
        if self.horizon == 0 {
            return Err(invalid("horizon", "must be at least 1"));
        }

        let mut ac_ids = HashSet::new();
        for (k, b) in self.ac_buses.iter().enumerate() {
            let p = format!("ac_buses[{k}]");
            if !ac_ids.insert(b.id) {
                return Err(invalid(format!("{p}.id"), format!("duplicate bus id {}", b.id)));
            }
            if !(b.vmin > 0.0 && b.vmin <= b.vmax && b.vmax.is_finite()) {
                return Err(invalid(p, format!("voltage bounds [{}, {}] must satisfy 0 < vmin <= vmax", b.vmin, b.vmax)));
            }
            finite(format!("{p}.pd"), b.pd)?;
            finite(format!("{p}.qd"), b.qd)?;
        }
        if self.ac_buses.is_empty() {
            return Err(invalid("ac_buses", "at least one AC bus is required"));
        }
        if !ac_ids.contains(&self.slack_bus) {
            return Err(invalid("slack_bus", format!("unknown AC bus {}", self.slack_bus)));
        }
        for (k, br) in self.ac_branches.iter().enumerate() {
            let p = format!("ac_branches[{k}]");
            for (end, id) in [("from", br.from), ("to", br.to)] {
                if !ac_ids.contains(&id) {
                    return Err(invalid(format!("{p}.{end}"), format!("unknown AC bus {id}")));
                }
            }
            if br.from == br.to {
                return Err(invalid(p, "branch connects a bus to itself"));
            }
            if !(br.r >= 0.0 && br.r.is_finite() && br.x.is_finite() && br.r * br.r + br.x * br.x > 0.0) {
                return Err(invalid(p, format!("impedance r={} x={} must be nonzero with r >= 0", br.r, br.x)));
            }
            finite(format!("{p}.b"), br.b)?;
        }
        for (k, g) in self.generators.iter().enumerate() {
            let p = format!("generators[{k}]");
            if !ac_ids.contains(&g.bus) {
                return Err(invalid(format!("{p}.bus"), format!("unknown AC bus {}", g.bus)));
            }
            if !(g.pmin <= g.pmax) {
                return Err(invalid(p, format!("pmin {} exceeds pmax {}", g.pmin, g.pmax)));
            }
            if !(g.qmin <= g.qmax) {
                return Err(invalid(p, format!("qmin {} exceeds qmax {}", g.qmin, g.qmax)));
            }
            for (name, v) in [
                ("ramp_p_up", g.ramp_p_up),
                ("ramp_p_down", g.ramp_p_down),
                ("ramp_q_up", g.ramp_q_up),
                ("ramp_q_down", g.ramp_q_down),
                ("cost_a", g.cost_a),
            ] {
                if !(v >= 0.0) {
                    return Err(invalid(format!("{p}.{name}"), format!("must be nonnegative, got {v}")));
                }
            }
            finite(format!("{p}.cost_b"), g.cost_b)?;
            finite(format!("{p}.cost_c0"), g.cost_c0)?;
        }

        let mut dc_ids = HashSet::new();
        for (k, b) in self.dc_buses.iter().enumerate() {
            let p = format!("dc_buses[{k}]");
            if !dc_ids.insert(b.id) {
                return Err(invalid(format!("{p}.id"), format!("duplicate bus id {}", b.id)));
            }
            if !(b.vmin > 0.0 && b.vmin <= b.vmax && b.vmax.is_finite()) {
                return Err(invalid(p, format!("voltage bounds [{}, {}] must satisfy 0 < vmin <= vmax", b.vmin, b.vmax)));
            }
        }
        for (k, br) in self.dc_branches.iter().enumerate() {
            let p = format!("dc_branches[{k}]");
            for (end, id) in [("from", br.from), ("to", br.to)] {
                if !dc_ids.contains(&id) {
                    return Err(invalid(format!("{p}.{end}"), format!("unknown DC bus {id}")));
                }
            }
            if br.from == br.to {
                return Err(invalid(p, "branch connects a bus to itself"));
            }
            pos(&format!("{p}.r"), br.r)?;
        }
        for (k, cv) in self.converters.iter().enumerate() {
            let p = format!("converters[{k}]");
            if !ac_ids.contains(&cv.ac_bus) {
                return Err(invalid(format!("{p}.ac_bus"), format!("unknown AC bus {}", cv.ac_bus)));
            }
            if !dc_ids.contains(&cv.dc_bus) {
                return Err(invalid(format!("{p}.dc_bus"), format!("unknown DC bus {}", cv.dc_bus)));
            }
            if !(0.0..1.0).contains(&cv.beta) {
                return Err(invalid(format!("{p}.beta"), format!("must lie in [0, 1), got {}", cv.beta)));
            }
            if cv.k == 0.0 || !cv.k.is_finite() {
                return Err(invalid(format!("{p}.k"), "must be nonzero"));
            }
            finite(format!("{p}.d"), cv.d)?;
        }
        for (k, bt) in self.batteries.iter().enumerate() {
            let p = format!("batteries[{k}]");
            if !ac_ids.contains(&bt.ac_bus) {
                return Err(invalid(format!("{p}.ac_bus"), format!("unknown AC bus {}", bt.ac_bus)));
            }
            if !(bt.bs_min >= 0.0 && bt.bs_min <= bt.bs_max && bt.bs_max.is_finite()) {
                return Err(invalid(p, format!("size bounds [{}, {}] must satisfy 0 <= min <= max", bt.bs_min, bt.bs_max)));
            }
            if !(bt.eta_ch > 0.0 && bt.eta_ch <= 1.0) {
                return Err(invalid(format!("{p}.eta_ch"), format!("must lie in (0, 1], got {}", bt.eta_ch)));
            }
            if !(bt.eta_dis >= 1.0 && bt.eta_dis.is_finite()) {
                return Err(invalid(format!("{p}.eta_dis"), format!("must be at least 1, got {}", bt.eta_dis)));
            }
            for (name, v) in [
                ("p_ch_max", bt.p_ch_max),
                ("p_dis_max", bt.p_dis_max),
                ("sc0", bt.sc0),
                ("sc_final_min", bt.sc_final_min),
                ("install_rate", bt.install_rate),
                ("operation_rate", bt.operation_rate),
            ] {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(invalid(format!("{p}.{name}"), format!("must be nonnegative, got {v}")));
                }
            }
            if bt.sc0 > bt.bs_min {
                return Err(invalid(format!("{p}.sc0"), format!("initial charge {} exceeds minimum size {}", bt.sc0, bt.bs_min)));
            }
        }
        for (k, wf) in self.wind_farms.iter().enumerate() {
            let p = format!("wind_farms[{k}]");
            if !dc_ids.contains(&wf.dc_bus) {
                return Err(invalid(format!("{p}.dc_bus"), format!("unknown DC bus {}", wf.dc_bus)));
            }
            if !(wf.nominal >= 0.0 && wf.nominal.is_finite()) {
                return Err(invalid(format!("{p}.nominal"), format!("must be nonnegative, got {}", wf.nominal)));
            }
        }
        for (name, series) in [
            ("load", &self.schedule.load),
            ("wind", &self.schedule.wind),
            ("fuel_cost", &self.schedule.fuel_cost),
        ] {
            let p = format!("schedule.{name}");
            if series.len() != self.horizon {
                return Err(invalid(p, format!("has {} entries, horizon is {}", series.len(), self.horizon)));
            }
            if let Some((t, v)) = series.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
                return Err(invalid(format!("{p}[{t}]"), format!("factor must be positive, got {v}")));
            }
        }
        for (k, s) in self.costs.objective_scales.iter().enumerate() {
            pos(&format!("costs.objective_scales[{k}]"), *s)?;
        }

        let ac_edges: Vec<(usize, usize)> = self.ac_branches.iter().map(|b| (b.from, b.to)).collect();
        if !connected(&ac_ids, &ac_edges) {
            return Err(invalid("ac_branches", "AC network is not connected"));
        }
        let dc_edges: Vec<(usize, usize)> = self.dc_branches.iter().map(|b| (b.from, b.to)).collect();
        if !dc_ids.is_empty() && !connected(&dc_ids, &dc_edges) {
            return Err(invalid("dc_branches", "DC network is not connected"));
        }
        Ok(())
    }
}

fn connected(ids: &HashSet<usize>, edges: &[(usize, usize)]) -> bool {
    let Some(&start) = ids.iter().min() else {
        return true;
    };
    let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
    for &(a, b) in edges {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    }
    let mut seen = HashSet::from([start]);
    let mut stack = vec![start];
    while let Some(u) = stack.pop() {
        for &v in adj.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
            if seen.insert(v) {
                stack.push(v);
            }
        }
    }
    seen.len() == ids.len()
}
