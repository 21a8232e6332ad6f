use ccd_core::graph::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

/// A random graph with every variable handle in declaration order.
struct Built {
    graph: OptiGraph,
    vars: Vec<Vec<LocalVar>>,
}

fn random_expr(rng: &mut ChaCha8Rng, vars: &[LocalVar]) -> LinExpr {
    let mut e = LinExpr::constant(rng.gen_range(-2.0..2.0));
    for _ in 0..rng.gen_range(1..=3) {
        e = e.plus(vars[rng.gen_range(0..vars.len())], rng.gen_range(-3.0..3.0));
    }
    e
}

fn random_sense(rng: &mut ChaCha8Rng, expr: LinExpr) -> Constraint {
    match rng.gen_range(0..3) {
        0 => Constraint::eq(expr),
        1 => Constraint::le(expr),
        _ => Constraint::ge(expr),
    }
}

fn random_graph(seed: u64) -> Built {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graph = OptiGraph::new(2);
    let mut vars = Vec::new();
    for k in 0..rng.gen_range(2..6) {
        let mut node = NodeModel::new(format!("n{k}"));
        let mut vs = Vec::new();
        for i in 0..rng.gen_range(1..5) {
            let v = match rng.gen_range(0..4) {
                0 => node.add_binary(format!("z{i}")),
                1 => node.add_variable(format!("x{i}"), f64::NEG_INFINITY, f64::INFINITY),
                2 => node.add_variable(format!("x{i}"), rng.gen_range(-1.0..0.0), f64::INFINITY),
                _ => {
                    let lo = rng.gen_range(-1.0..0.0);
                    node.add_variable(format!("x{i}"), lo, lo + rng.gen_range(0.0..2.0))
                }
            };
            vs.push(v);
        }
        for _ in 0..rng.gen_range(0..4) {
            let c = if rng.gen_bool(0.3) {
                let kind = if rng.gen_bool(0.5) {
                    ConeKind::SecondOrder
                } else {
                    ConeKind::RotatedSecondOrder
                };
                let exprs = (0..rng.gen_range(2..5)).map(|_| random_expr(&mut rng, &vs)).collect();
                Constraint::Cone { kind, exprs }
            } else {
                let e = random_expr(&mut rng, &vs);
                random_sense(&mut rng, e)
            };
            node.add_constraint(c);
        }
        for _ in 0..rng.gen_range(0..3) {
            let mut term = ObjectiveTerm::linear(rng.gen_range(1..=2), random_expr(&mut rng, &vs));
            if rng.gen_bool(0.5) {
                let u = vs[rng.gen_range(0..vs.len())];
                let v = vs[rng.gen_range(0..vs.len())];
                term.quadratic.push((u, v, rng.gen_range(0.0..2.0)));
            }
            node.add_objective(term);
        }
        graph.add_node(node).unwrap();
        vars.push(vs);
    }
    for _ in 0..rng.gen_range(1..6) {
        let a = rng.gen_range(0..vars.len());
        let b = (a + rng.gen_range(1..vars.len())) % vars.len();
        let e = LinExpr::constant(rng.gen_range(-1.0..1.0))
            .plus(vars[a][rng.gen_range(0..vars[a].len())], rng.gen_range(-2.0..2.0))
            .plus(vars[b][rng.gen_range(0..vars[b].len())], rng.gen_range(0.5..2.0));
        let c = random_sense(&mut rng, e);
        graph.add_link(LinkConstraint::new("link", c)).unwrap();
    }
    Built { graph, vars }
}

/// Slack `b - A x` each row should carry, from the original expressions.
fn expected_slack(g: &OptiGraph, origin: RowOrigin, val: &dyn Fn(LocalVar) -> f64, vars: &[Vec<LocalVar>]) -> f64 {
    let signed = |c: &Constraint, entry: usize| match c {
        Constraint::Affine { expr, sense } => match sense {
            Sense::Eq | Sense::Le => -expr.eval(val),
            Sense::Ge => expr.eval(val),
        },
        Constraint::Cone { exprs, .. } => exprs[entry].eval(val),
    };
    match origin {
        RowOrigin::Lower { node, var } => val(vars[node.0][var]) - g.node(node).variables()[var].lower,
        RowOrigin::Upper { node, var } => g.node(node).variables()[var].upper - val(vars[node.0][var]),
        RowOrigin::Node { node, constraint, entry } => signed(&g.node(node).constraints()[constraint], entry),
        RowOrigin::Link { edge, entry } => signed(&g.links()[edge.0].constraint, entry),
    }
}

/// Row content keyed by origin, for comparing flattens with shifted rows.
fn rows_by_origin(f: &Flattened) -> HashMap<RowOrigin, (Vec<(usize, u64)>, u64)> {
    let mut per_row: Vec<Vec<(usize, u64)>> = vec![Vec::new(); f.program.m()];
    for (i, j, v) in f.program.a.triplets() {
        per_row[i].push((j, v.to_bits()));
    }
    f.rows
        .iter()
        .enumerate()
        .map(|(r, o)| {
            let mut coefs = per_row[r].clone();
            coefs.sort();
            (*o, (coefs, f.program.b[r].to_bits()))
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flatten_is_lossless(seed in any::<u64>(), w in 0.0f64..1.0) {
        let Built { mut graph, vars } = random_graph(seed);
        let f = graph.flatten(&[w, 1.0 - w]).unwrap();

        // Columns follow node insertion then declaration order.
        let mut col = 0;
        let mut point = HashMap::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut x = vec![0.0; f.program.n()];
        for (k, vs) in vars.iter().enumerate() {
            for (i, v) in vs.iter().enumerate() {
                prop_assert_eq!(f.column_of(*v), col);
                prop_assert_eq!(f.index.owner(col), (NodeId(k), i));
                let value = rng.gen_range(-3.0..3.0);
                point.insert(*v, value);
                x[col] = value;
                col += 1;
            }
        }
        prop_assert_eq!(col, f.program.n());
        let val = |v: LocalVar| point[&v];

        let ax = f.program.a.mul_vec(&x);
        for (r, origin) in f.rows.iter().enumerate() {
            let want = expected_slack(&graph, *origin, &val, &vars);
            let got = f.program.b[r] - ax[r];
            prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()), "row {r} {origin:?}: {got} vs {want}");
        }

        // Objective parts and the scalarized objective.
        let mut parts = [0.0; 2];
        for node in graph.nodes() {
            for t in node.objective_terms() {
                let q: f64 = t.quadratic.iter().map(|&(u, v, c)| c * val(u) * val(v)).sum();
                parts[t.objective - 1] += t.affine.eval(val) + q;
            }
        }
        let got = f.objective_values(&x);
        for k in 0..2 {
            prop_assert!((got[k] - parts[k]).abs() <= 1e-12 * (1.0 + parts[k].abs()));
        }
        let scal = w * parts[0] + (1.0 - w) * parts[1];
        prop_assert!((f.program.objective(&x) - scal).abs() <= 1e-12 * (1.0 + scal.abs()));

        // Binaries pass through with their [0, 1] bounds.
        let declared = graph.nodes().iter().flat_map(|n| n.variables()).filter(|v| v.kind == VarKind::Binary).count();
        prop_assert_eq!(f.binaries.len(), declared);
        for &c in &f.binaries {
            let (node, i) = f.index.owner(c);
            let v = &graph.node(node).variables()[i];
            prop_assert_eq!(v.kind, VarKind::Binary);
            prop_assert_eq!((v.lower, v.upper), (0.0, 1.0));
        }
    }

    #[test]
    fn removing_an_edge_touches_only_its_rows(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let Built { graph, .. } = random_graph(seed);
        let before = rows_by_origin(&graph.clone().flatten(&[0.5, 0.5]).unwrap());
        let removed = pick.index(graph.links().len());
        let mut cut = graph.clone();
        cut.remove_link(EdgeId(removed)).unwrap();
        let after = rows_by_origin(&cut.flatten(&[0.5, 0.5]).unwrap());

        let renumber = |o: RowOrigin| match o {
            RowOrigin::Link { edge, entry } if edge.0 >= removed => RowOrigin::Link { edge: EdgeId(edge.0 + 1), entry },
            other => other,
        };
        let after: HashMap<_, _> = after.into_iter().map(|(o, v)| (renumber(o), v)).collect();
        let mut expected = before;
        expected.retain(|o, _| !matches!(o, RowOrigin::Link { edge, .. } if edge.0 == removed));
        prop_assert_eq!(after, expected);
    }

    #[test]
    fn flatten_is_deterministic(seed in any::<u64>()) {
        let Built { graph, .. } = random_graph(seed);
        let mut a = graph.clone();
        let fa = a.flatten(&[0.3, 0.7]).unwrap();
        let fb = a.flatten_frozen(&[0.3, 0.7]).unwrap();
        let fc = random_graph(seed).graph.flatten(&[0.3, 0.7]).unwrap();
        prop_assert_eq!(&fa.index, &fb.index);
        for f in [&fb, &fc] {
            prop_assert_eq!(&fa.program, &f.program);
            prop_assert_eq!(&fa.rows, &f.rows);
            prop_assert_eq!(&fa.binaries, &f.binaries);
            for j in 0..fa.program.n() {
                prop_assert_eq!(fa.index.name(j), f.index.name(j));
            }
        }
    }
}
