//! Graph-structured optimization models.
//!
//! Each node owns a set of variables, constraints over those variables and
//! objective terms tagged with an objective index. Edges carry linking
//! constraints between variables of different nodes. [`OptiGraph::flatten`]
//! concatenates everything into one [`ConicProgram`], scalarizing the tagged
//! objectives with a weight vector.
//!
//! Rows are grouped by cone kind (equalities, inequalities, then one block
//! per cone constraint); within a group they follow node insertion order,
//! then edge insertion order. Columns follow node insertion order and
//! variable declaration order.

use crate::conic::{Cone, ConicProgram, CscMatrix, ProgramError};
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use thiserror::Error;

static NEXT_MODEL: AtomicU64 = AtomicU64::new(1);

/// Handle to a variable of a [`NodeModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LocalVar {
    model: u64,
    index: usize,
}

impl LocalVar {
    pub fn index(&self) -> usize {
        self.index
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionVariable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
}

/// `sum coef * var + constant`
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinExpr {
    pub terms: Vec<(LocalVar, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(value: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: value,
        }
    }

    pub fn var(v: LocalVar) -> Self {
        Self::new().plus(v, 1.0)
    }

    pub fn plus(mut self, v: LocalVar, coef: f64) -> Self {
        self.terms.push((v, coef));
        self
    }

    pub fn offset(mut self, value: f64) -> Self {
        self.constant += value;
        self
    }

    pub fn eval(&self, value: impl Fn(LocalVar) -> f64) -> f64 {
        self.terms.iter().map(|&(v, c)| c * value(v)).sum::<f64>() + self.constant
    }
}

impl From<&[(LocalVar, f64)]> for LinExpr {
    fn from(terms: &[(LocalVar, f64)]) -> Self {
        Self {
            terms: terms.to_vec(),
            constant: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// `expr == 0`
    Eq,
    /// `expr <= 0`
    Le,
    /// `expr >= 0`
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    /// `e0 >= |(e1, ..)|`
    SecondOrder,
    /// `2 e0 e1 >= |(e2, ..)|^2`, `e0, e1 >= 0`
    RotatedSecondOrder,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    Affine { expr: LinExpr, sense: Sense },
    Cone { kind: ConeKind, exprs: Vec<LinExpr> },
}

impl Constraint {
    pub fn eq(expr: LinExpr) -> Self {
        Constraint::Affine { expr, sense: Sense::Eq }
    }

    pub fn le(expr: LinExpr) -> Self {
        Constraint::Affine { expr, sense: Sense::Le }
    }

    pub fn ge(expr: LinExpr) -> Self {
        Constraint::Affine { expr, sense: Sense::Ge }
    }

    fn vars(&self) -> Box<dyn Iterator<Item = LocalVar> + '_> {
        match self {
            Constraint::Affine { expr, .. } => Box::new(expr.terms.iter().map(|t| t.0)),
            Constraint::Cone { exprs, .. } => Box::new(exprs.iter().flat_map(|e| e.terms.iter().map(|t| t.0))),
        }
    }
}

/// Objective contribution `affine + sum q * xi * xj`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveTerm {
    /// 1-based objective index.
    pub objective: usize,
    pub affine: LinExpr,
    pub quadratic: Vec<(LocalVar, LocalVar, f64)>,
}

impl ObjectiveTerm {
    pub fn linear(objective: usize, affine: LinExpr) -> Self {
        Self {
            objective,
            affine,
            quadratic: Vec::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph is frozen after flatten")]
    Frozen,
    #[error("node {node}: {what} references a variable of another model")]
    ForeignVariable { node: String, what: String },
    #[error("node {node}: variable {var} has bounds [{lower}, {upper}]")]
    Bounds { node: String, var: String, lower: f64, upper: f64 },
    #[error("node {node}: objective index {index} outside 1..={count}")]
    ObjectiveIndex { node: String, index: usize, count: usize },
    #[error("node {node}: {what}")]
    Malformed { node: String, what: String },
    #[error("link references a variable of a model not in the graph")]
    DanglingLink,
    #[error("link spans a single node; add it as a node constraint")]
    SingleNodeLink,
    #[error("cone links are not supported")]
    ConeLink,
    #[error("graph has no variables")]
    Empty,
    #[error("weights have length {got}, graph declares {expected} objectives")]
    Weights { expected: usize, got: usize },
    #[error(transparent)]
    Program(#[from] ProgramError),
}

#[derive(Debug, Clone)]
pub struct NodeModel {
    id: u64,
    pub label: String,
    variables: Vec<DecisionVariable>,
    constraints: Vec<Constraint>,
    objective: Vec<ObjectiveTerm>,
}

impl NodeModel {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            id: NEXT_MODEL.fetch_add(1, Ordering::Relaxed),
            label: label.into(),
            variables: Vec::new(),
            constraints: Vec::new(),
            objective: Vec::new(),
        }
    }

    pub fn add_variable(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> LocalVar {
        self.push_var(name.into(), lower, upper, VarKind::Continuous)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> LocalVar {
        self.push_var(name.into(), 0.0, 1.0, VarKind::Binary)
    }

    fn push_var(&mut self, name: String, lower: f64, upper: f64, kind: VarKind) -> LocalVar {
        self.variables.push(DecisionVariable { name, lower, upper, kind });
        LocalVar {
            model: self.id,
            index: self.variables.len() - 1,
        }
    }

    pub fn add_constraint(&mut self, c: Constraint) {
        self.constraints.push(c);
    }

    pub fn add_objective(&mut self, term: ObjectiveTerm) {
        self.objective.push(term);
    }

    pub fn variables(&self) -> &[DecisionVariable] {
        &self.variables
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective_terms(&self) -> &[ObjectiveTerm] {
        &self.objective
    }

    pub fn variable(&self, v: LocalVar) -> Option<&DecisionVariable> {
        (v.model == self.id).then(|| self.variables.get(v.index)).flatten()
    }

    fn owns(&self, v: LocalVar) -> bool {
        v.model == self.id && v.index < self.variables.len()
    }

    fn validate(&self, objectives: usize) -> Result<(), GraphError> {
        let node = || self.label.clone();
        for v in &self.variables {
            let ok = v.lower <= v.upper
                && !v.lower.is_nan()
                && !v.upper.is_nan()
                && (v.kind == VarKind::Continuous || (v.lower >= 0.0 && v.upper <= 1.0));
            if !ok {
                return Err(GraphError::Bounds {
                    node: node(),
                    var: v.name.clone(),
                    lower: v.lower,
                    upper: v.upper,
                });
            }
        }
        for (k, c) in self.constraints.iter().enumerate() {
            if c.vars().any(|v| !self.owns(v)) {
                return Err(GraphError::ForeignVariable {
                    node: node(),
                    what: format!("constraint {k}"),
                });
            }
            if let Constraint::Cone { kind, exprs } = c {
                let min = match kind {
                    ConeKind::SecondOrder => 1,
                    ConeKind::RotatedSecondOrder => 2,
                };
                if exprs.len() < min {
                    return Err(GraphError::Malformed {
                        node: node(),
                        what: format!("cone constraint {k} has {} entries", exprs.len()),
                    });
                }
            }
        }
        for (k, t) in self.objective.iter().enumerate() {
            if t.objective == 0 || t.objective > objectives {
                return Err(GraphError::ObjectiveIndex {
                    node: node(),
                    index: t.objective,
                    count: objectives,
                });
            }
            let quad_vars = t.quadratic.iter().flat_map(|&(a, b, _)| [a, b]);
            if t.affine.terms.iter().map(|x| x.0).chain(quad_vars).any(|v| !self.owns(v)) {
                return Err(GraphError::ForeignVariable {
                    node: node(),
                    what: format!("objective term {k}"),
                });
            }
        }
        Ok(())
    }
}

/// Affine constraint over variables of at least two nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkConstraint {
    pub label: String,
    pub constraint: Constraint,
}

impl LinkConstraint {
    pub fn new(label: impl Into<String>, constraint: Constraint) -> Self {
        Self {
            label: label.into(),
            constraint,
        }
    }
}

/// Where a row of the flattened program came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowOrigin {
    Lower { node: NodeId, var: usize },
    Upper { node: NodeId, var: usize },
    Node { node: NodeId, constraint: usize, entry: usize },
    Link { edge: EdgeId, entry: usize },
}

/// Inverse map from global columns to node variables.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexMap {
    offsets: Vec<usize>,
    columns: Vec<(NodeId, usize)>,
    names: Vec<String>,
    models: HashMap<u64, NodeId>,
}

impl IndexMap {
    pub fn column(&self, node: NodeId, var: usize) -> usize {
        self.offsets[node.0] + var
    }

    /// Column of a variable handle, if its model belongs to the graph.
    pub fn column_of(&self, v: LocalVar) -> Option<usize> {
        self.models.get(&v.model).map(|n| self.offsets[n.0] + v.index)
    }

    pub fn owner(&self, col: usize) -> (NodeId, usize) {
        self.columns[col]
    }

    pub fn name(&self, col: usize) -> &str {
        &self.names[col]
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

/// One objective kept apart from the scalarization, for evaluation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObjectivePart {
    pub linear: Vec<(usize, f64)>,
    /// `(i, j, q)` contributing `q * x_i * x_j`.
    pub quadratic: Vec<(usize, usize, f64)>,
    pub constant: f64,
}

impl ObjectivePart {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.linear.iter().map(|&(j, c)| c * x[j]).sum();
        let quad: f64 = self.quadratic.iter().map(|&(i, j, q)| q * x[i] * x[j]).sum();
        lin + quad + self.constant
    }
}

#[derive(Debug, Clone)]
pub struct Flattened {
    pub program: ConicProgram,
    pub index: IndexMap,
    pub rows: Vec<RowOrigin>,
    /// Per objective, unweighted.
    pub objectives: Vec<ObjectivePart>,
    pub weights: Vec<f64>,
    /// Columns of binary variables in column order.
    pub binaries: Vec<usize>,
    /// `(lower row, upper row)` of each column, where the bound is finite.
    pub bound_rows: Vec<(Option<usize>, Option<usize>)>,
}

impl Flattened {
    pub fn objective_values(&self, x: &[f64]) -> Vec<f64> {
        self.objectives.iter().map(|o| o.eval(x)).collect()
    }

    pub fn column_of(&self, v: LocalVar) -> usize {
        self.index.column_of(v).expect("variable belongs to the flattened graph")
    }

    /// Copy of the program with the bounds of column `col` replaced.
    pub fn with_bounds(&self, program: &ConicProgram, col: usize, lower: f64, upper: f64) -> ConicProgram {
        let mut p = program.clone();
        let (lo, up) = self.bound_rows[col];
        if let Some(r) = lo {
            p.b[r] = -lower;
        }
        if let Some(r) = up {
            p.b[r] = upper;
        }
        p
    }
}

#[derive(Debug, Clone)]
pub struct OptiGraph {
    objectives: usize,
    nodes: Vec<NodeModel>,
    links: Vec<LinkConstraint>,
    models: HashMap<u64, NodeId>,
    frozen: bool,
}

impl OptiGraph {
    pub fn new(objectives: usize) -> Self {
        Self {
            objectives,
            nodes: Vec::new(),
            links: Vec::new(),
            models: HashMap::new(),
            frozen: false,
        }
    }

    pub fn objective_count(&self) -> usize {
        self.objectives
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn nodes(&self) -> &[NodeModel] {
        &self.nodes
    }

    pub fn links(&self) -> &[LinkConstraint] {
        &self.links
    }

    pub fn node(&self, id: NodeId) -> &NodeModel {
        &self.nodes[id.0]
    }

    pub fn variable_count(&self) -> usize {
        self.nodes.iter().map(|n| n.variables.len()).sum()
    }

    pub fn add_node(&mut self, model: NodeModel) -> Result<NodeId, GraphError> {
        if self.frozen {
            return Err(GraphError::Frozen);
        }
        model.validate(self.objectives)?;
        let id = NodeId(self.nodes.len());
        self.models.insert(model.id, id);
        self.nodes.push(model);
        Ok(id)
    }

    pub fn add_link(&mut self, link: LinkConstraint) -> Result<EdgeId, GraphError> {
        if self.frozen {
            return Err(GraphError::Frozen);
        }
        if matches!(link.constraint, Constraint::Cone { .. }) {
            return Err(GraphError::ConeLink);
        }
        let mut first = None;
        let mut spans = false;
        for v in link.constraint.vars() {
            let node = *self.models.get(&v.model).ok_or(GraphError::DanglingLink)?;
            if v.index >= self.nodes[node.0].variables.len() {
                return Err(GraphError::DanglingLink);
            }
            match first {
                None => first = Some(node),
                Some(f) if f != node => spans = true,
                _ => {}
            }
        }
        if !spans {
            return Err(GraphError::SingleNodeLink);
        }
        self.links.push(link);
        Ok(EdgeId(self.links.len() - 1))
    }

    /// Removes an edge. Only valid before flattening; later edge ids shift.
    pub fn remove_link(&mut self, edge: EdgeId) -> Result<LinkConstraint, GraphError> {
        if self.frozen {
            return Err(GraphError::Frozen);
        }
        Ok(self.links.remove(edge.0))
    }

    fn column(&self, offsets: &[usize], v: LocalVar) -> usize {
        offsets[self.models[&v.model].0] + v.index
    }

    /// Flattens the graph into one conic program, scalarizing objectives
    /// with `weights`. Freezes the graph.
    pub fn flatten(&mut self, weights: &[f64]) -> Result<Flattened, GraphError> {
        self.frozen = true;
        self.flatten_frozen(weights)
    }

    /// Same as [`OptiGraph::flatten`] on an already frozen graph.
    pub fn flatten_frozen(&self, weights: &[f64]) -> Result<Flattened, GraphError> {
        if weights.len() != self.objectives {
            return Err(GraphError::Weights {
                expected: self.objectives,
                got: weights.len(),
            });
        }
        let n = self.variable_count();
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut offsets = Vec::with_capacity(self.nodes.len());
        let mut columns = Vec::with_capacity(n);
        let mut names = Vec::with_capacity(n);
        for (k, node) in self.nodes.iter().enumerate() {
            offsets.push(columns.len());
            for (i, v) in node.variables.iter().enumerate() {
                columns.push((NodeId(k), i));
                names.push(format!("{}.{}", node.label, v.name));
            }
        }

        // Rows as (coefficients, rhs, origin), with `a x + s = b`.
        type Row = (Vec<(usize, f64)>, f64, RowOrigin);
        let mut zero: Vec<Row> = Vec::new();
        let mut nonneg: Vec<Row> = Vec::new();
        let mut cones: Vec<(Cone, Vec<Row>)> = Vec::new();

        let affine_row = |expr: &LinExpr, sense: Sense, origin: RowOrigin| -> (bool, Row) {
            let cols: Vec<(usize, f64)> = expr.terms.iter().map(|&(v, c)| (self.column(&offsets, v), c)).collect();
            match sense {
                // expr <= 0  ->  a x + s = -k
                Sense::Eq | Sense::Le => (sense == Sense::Eq, (cols, -expr.constant, origin)),
                // expr >= 0  ->  -a x + s = k
                Sense::Ge => (false, (cols.into_iter().map(|(j, c)| (j, -c)).collect(), expr.constant, origin)),
            }
        };

        for (k, node) in self.nodes.iter().enumerate() {
            let id = NodeId(k);
            for (i, v) in node.variables.iter().enumerate() {
                let col = offsets[k] + i;
                if v.lower.is_finite() {
                    nonneg.push((vec![(col, -1.0)], -v.lower, RowOrigin::Lower { node: id, var: i }));
                }
                if v.upper.is_finite() {
                    nonneg.push((vec![(col, 1.0)], v.upper, RowOrigin::Upper { node: id, var: i }));
                }
            }
            for (ci, c) in node.constraints.iter().enumerate() {
                let origin = RowOrigin::Node {
                    node: id,
                    constraint: ci,
                    entry: 0,
                };
                match c {
                    Constraint::Affine { expr, sense } => {
                        let (is_eq, row) = affine_row(expr, *sense, origin);
                        if is_eq { zero.push(row) } else { nonneg.push(row) }
                    }
                    Constraint::Cone { kind, exprs } => {
                        let rows = exprs
                            .iter()
                            .enumerate()
                            .map(|(e, expr)| {
                                let origin = RowOrigin::Node {
                                    node: id,
                                    constraint: ci,
                                    entry: e,
                                };
                                let (_, row) = affine_row(expr, Sense::Ge, origin);
                                row
                            })
                            .collect();
                        let cone = match kind {
                            ConeKind::SecondOrder => Cone::SecondOrder(exprs.len()),
                            ConeKind::RotatedSecondOrder => Cone::RotatedSecondOrder(exprs.len()),
                        };
                        cones.push((cone, rows));
                    }
                }
            }
        }
        for (e, link) in self.links.iter().enumerate() {
            let Constraint::Affine { expr, sense } = &link.constraint else {
                return Err(GraphError::ConeLink);
            };
            let (is_eq, row) = affine_row(expr, *sense, RowOrigin::Link { edge: EdgeId(e), entry: 0 });
            if is_eq { zero.push(row) } else { nonneg.push(row) }
        }

        let nz = zero.len();
        let mut bound_rows = vec![(None, None); n];
        for (k, (_, _, origin)) in nonneg.iter().enumerate() {
            match *origin {
                RowOrigin::Lower { node, var } => bound_rows[offsets[node.0] + var].0 = Some(nz + k),
                RowOrigin::Upper { node, var } => bound_rows[offsets[node.0] + var].1 = Some(nz + k),
                _ => {}
            }
        }

        let mut cone_list = Vec::new();
        if !zero.is_empty() {
            cone_list.push(Cone::Zero(zero.len()));
        }
        if !nonneg.is_empty() {
            cone_list.push(Cone::Nonnegative(nonneg.len()));
        }
        let mut all_rows = zero;
        all_rows.extend(nonneg);
        for (cone, rows) in cones {
            cone_list.push(cone);
            all_rows.extend(rows);
        }
        let m = all_rows.len();
        let mut trip = Vec::new();
        let mut b = Vec::with_capacity(m);
        let mut rows = Vec::with_capacity(m);
        for (r, (coefs, rhs, origin)) in all_rows.into_iter().enumerate() {
            for (j, v) in coefs {
                trip.push((r, j, v));
            }
            b.push(rhs);
            rows.push(origin);
        }
        let a = CscMatrix::from_triplets(m, n, &trip);

        // Objectives.
        let mut parts = vec![ObjectivePart::default(); self.objectives];
        for node in &self.nodes {
            for t in &node.objective {
                let part = &mut parts[t.objective - 1];
                part.constant += t.affine.constant;
                for &(v, c) in &t.affine.terms {
                    part.linear.push((self.column(&offsets, v), c));
                }
                for &(u, v, q) in &t.quadratic {
                    part.quadratic.push((self.column(&offsets, u), self.column(&offsets, v), q));
                }
            }
        }
        let mut c = vec![0.0; n];
        let mut offset = 0.0;
        let mut p_trip = Vec::new();
        for (part, &w) in parts.iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            offset += w * part.constant;
            for &(j, v) in &part.linear {
                c[j] += w * v;
            }
            // q x_i x_j = (1/2) x' P x with P_ij + P_ji = 2q
            for &(i, j, q) in &part.quadratic {
                let (r, s) = if i <= j { (i, j) } else { (j, i) };
                p_trip.push((r, s, if r == s { 2.0 * w * q } else { w * q }));
            }
        }
        let mut program = ConicProgram::new(c, a, b, cone_list)?.with_offset(offset);
        if !p_trip.is_empty() {
            program = program.with_quadratic(CscMatrix::from_triplets(n, n, &p_trip))?;
        }
        let binaries = columns
            .iter()
            .enumerate()
            .filter(|(_, &(node, i))| self.nodes[node.0].variables[i].kind == VarKind::Binary)
            .map(|(j, _)| j)
            .collect();
        Ok(Flattened {
            program,
            index: IndexMap {
                offsets,
                columns,
                names,
                models: self.models.clone(),
            },
            rows,
            objectives: parts,
            weights: weights.to_vec(),
            binaries,
            bound_rows,
        })
    }
}
