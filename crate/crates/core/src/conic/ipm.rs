//! Primal-dual interior-point iteration on the homogeneous self-dual
//! embedding
//!
//! ```text
//! A'z + c tau = 0,   Ax + s - b tau = 0,   c'x + b'z + kappa = 0,
//! s, z in K,  tau, kappa >= 0
//! ```
//!
//! with Nesterov-Todd scaling and a Mehrotra predictor-corrector step. Cones
//! here are zero, nonnegative, and second-order only; rotated blocks are
//! rotated onto the standard cone before reaching this module.

use super::cones::Cone;
use super::ldl::{LdlError, LdlFactor, Regularization};
use super::solution::Status;
use super::sparse::{dot, norm_inf, CscMatrix};
use std::ops::Range;

const STATIC_REG: f64 = 1e-8;
const STEP_FRACTION: f64 = 0.99;
const MAX_REG: f64 = 1e-4;
const REFINE_STEPS: usize = 10;

/// Termination tests evaluated on the original data.
pub(crate) trait Monitor {
    fn converged(&self, x: &[f64], y: &[f64], s: &[f64]) -> bool;
    fn primal_infeasible(&self, y: &[f64]) -> bool;
    fn dual_infeasible(&self, x: &[f64], s: &[f64]) -> bool;
}

pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub status: Status,
    pub iterations: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Zero,
    Nonneg,
    Soc,
}

struct Block {
    kind: Kind,
    range: Range<usize>,
}

enum NtScaling {
    None,
    Nonneg { w: Vec<f64> },
    Soc { eta: f64, wbar: Vec<f64> },
}

fn blocks_of(cones: &[Cone]) -> Vec<Block> {
    let mut start = 0;
    cones
        .iter()
        .map(|c| {
            let kind = match c {
                Cone::Zero(_) => Kind::Zero,
                Cone::Nonnegative(_) => Kind::Nonneg,
                Cone::SecondOrder(_) => Kind::Soc,
                Cone::RotatedSecondOrder(_) => unreachable!("rotated cones are converted before the interior-point solve"),
            };
            let r = start..start + c.dim();
            start += c.dim();
            Block { kind, range: r }
        })
        .collect()
}

fn soc_det(v: &[f64]) -> f64 {
    let n1 = v[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
    (v[0] - n1) * (v[0] + n1)
}

fn jordan_prod(kind: Kind, u: &[f64], v: &[f64], out: &mut [f64]) {
    match kind {
        Kind::Nonneg => {
            for i in 0..u.len() {
                out[i] = u[i] * v[i];
            }
        }
        Kind::Soc => {
            out[0] = dot(u, v);
            for i in 1..u.len() {
                out[i] = u[0] * v[i] + v[0] * u[i];
            }
        }
        Kind::Zero => out.iter_mut().for_each(|o| *o = 0.0),
    }
}

/// Solves `lambda o x = v` for `x`.
fn jordan_div(kind: Kind, lambda: &[f64], v: &[f64], out: &mut [f64]) {
    match kind {
        Kind::Nonneg => {
            for i in 0..v.len() {
                out[i] = v[i] / lambda[i];
            }
        }
        Kind::Soc => {
            let rho = soc_det(lambda);
            let l1v1: f64 = dot(&lambda[1..], &v[1..]);
            let x0 = (lambda[0] * v[0] - l1v1) / rho;
            out[0] = x0;
            for i in 1..v.len() {
                out[i] = (v[i] - x0 * lambda[i]) / lambda[0];
            }
        }
        Kind::Zero => out.iter_mut().for_each(|o| *o = 0.0),
    }
}

impl NtScaling {
    fn compute(kind: Kind, s: &[f64], z: &[f64]) -> Self {
        match kind {
            Kind::Zero => NtScaling::None,
            Kind::Nonneg => NtScaling::Nonneg {
                w: s.iter().zip(z).map(|(a, b)| (a / b).sqrt()).collect(),
            },
            Kind::Soc => {
                let sd = soc_det(s).max(f64::MIN_POSITIVE);
                let zd = soc_det(z).max(f64::MIN_POSITIVE);
                let (ss, zs) = (sd.sqrt(), zd.sqrt());
                let sbar: Vec<f64> = s.iter().map(|v| v / ss).collect();
                let zbar: Vec<f64> = z.iter().map(|v| v / zs).collect();
                let gamma = ((1.0 + dot(&sbar, &zbar)) / 2.0).sqrt();
                let mut wbar = vec![0.0; s.len()];
                wbar[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
                for i in 1..s.len() {
                    wbar[i] = (sbar[i] - zbar[i]) / (2.0 * gamma);
                }
                NtScaling::Soc {
                    eta: (sd / zd).powf(0.25),
                    wbar,
                }
            }
        }
    }

    /// `out = W v`
    fn mul_w(&self, v: &[f64], out: &mut [f64]) {
        match self {
            NtScaling::None => out.iter_mut().for_each(|o| *o = 0.0),
            NtScaling::Nonneg { w } => {
                for i in 0..v.len() {
                    out[i] = w[i] * v[i];
                }
            }
            NtScaling::Soc { eta, wbar } => {
                let w1v1 = dot(&wbar[1..], &v[1..]);
                out[0] = eta * (wbar[0] * v[0] + w1v1);
                let f = w1v1 / (1.0 + wbar[0]) + v[0];
                for i in 1..v.len() {
                    out[i] = eta * (v[i] + f * wbar[i]);
                }
            }
        }
    }

    /// `out = W^-1 v`
    fn mul_winv(&self, v: &[f64], out: &mut [f64]) {
        match self {
            NtScaling::None => out.iter_mut().for_each(|o| *o = 0.0),
            NtScaling::Nonneg { w } => {
                for i in 0..v.len() {
                    out[i] = v[i] / w[i];
                }
            }
            NtScaling::Soc { eta, wbar } => {
                let w1v1 = dot(&wbar[1..], &v[1..]);
                out[0] = (wbar[0] * v[0] - w1v1) / eta;
                let f = w1v1 / (1.0 + wbar[0]) - v[0];
                for i in 1..v.len() {
                    out[i] = (v[i] + f * wbar[i]) / eta;
                }
            }
        }
    }

    /// Entry `(a, b)` of `H = W'W` within the block.
    #[cfg(test)]
    fn h_entry(&self, a: usize, b: usize) -> f64 {
        match self {
            NtScaling::None => 0.0,
            NtScaling::Nonneg { w } => {
                if a == b {
                    w[a] * w[a]
                } else {
                    0.0
                }
            }
            NtScaling::Soc { eta, wbar } => {
                let j = if a != b {
                    0.0
                } else if a == 0 {
                    1.0
                } else {
                    -1.0
                };
                eta * eta * (2.0 * wbar[a] * wbar[b] - j)
            }
        }
    }
}

/// Largest `alpha` keeping `v + alpha d` inside the cone.
fn max_step(kind: Kind, v: &[f64], d: &[f64]) -> f64 {
    match kind {
        Kind::Zero => f64::INFINITY,
        Kind::Nonneg => v
            .iter()
            .zip(d)
            .filter(|(_, &di)| di < 0.0)
            .map(|(&vi, &di)| -vi / di)
            .fold(f64::INFINITY, f64::min),
        Kind::Soc => {
            let c = soc_det(v).max(0.0);
            let a = d[0] * d[0] - d[1..].iter().map(|x| x * x).sum::<f64>();
            let b = v[0] * d[0] - dot(&v[1..], &d[1..]);
            // q(alpha) = a alpha^2 + 2 b alpha + c
            let scale = a.abs().max(b.abs()).max(c).max(f64::MIN_POSITIVE);
            if a.abs() <= 1e-14 * scale {
                if b < 0.0 {
                    return -c / (2.0 * b);
                }
                return f64::INFINITY;
            }
            let disc = b * b - a * c;
            if disc < 0.0 {
                return f64::INFINITY;
            }
            let sq = disc.sqrt();
            let q = if b >= 0.0 { -(b + sq) } else { -b + sq };
            let mut best = f64::INFINITY;
            for r in [q / a, if q != 0.0 { c / q } else { f64::INFINITY }] {
                if r > 0.0 && r < best {
                    best = r;
                }
            }
            best
        }
    }
}

fn shift_into_cone(kind: Kind, v: &mut [f64]) {
    match kind {
        Kind::Zero => v.iter_mut().for_each(|x| *x = 0.0),
        Kind::Nonneg => {
            let mn = v.iter().copied().fold(f64::INFINITY, f64::min);
            if mn < f64::EPSILON.sqrt() {
                let shift = 1.0 - mn;
                v.iter_mut().for_each(|x| *x += shift);
            }
        }
        Kind::Soc => {
            let mn = v[0] - v[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
            if mn < f64::EPSILON.sqrt() {
                v[0] += 1.0 - mn;
            }
        }
    }
}

/// Quasi-definite Newton system. Second-order blocks are written in scaled
/// dual variables `q = W dz`:
///
/// ```text
/// [ eps I    A0'     Al'            (W^-1 Aq)' ] [dx ]
/// [ A0      -eps I                             ] [dz0]
/// [ Al              -(Hl + eps I)              ] [dzl]
/// [ W^-1 Aq                         -I         ] [q  ]
/// ```
///
/// Eliminating through the dense `-W'W` of a second-order block loses the
/// sign of its pivots once both iterates approach the boundary; the
/// identity block keeps those pivots safely negative. Nonnegative blocks
/// have a diagonal `H` and stay unscaled.
struct Kkt {
    n: usize,
    m: usize,
    upper: CscMatrix,
    /// Per row: the columns of A it touches. Rows of a second-order block
    /// share the union of their patterns since `W^-1` mixes them.
    row_cols: Vec<Vec<usize>>,
    /// Per row: values of A on `row_cols`.
    row_vals: Vec<Vec<f64>>,
    /// Position in `upper.nzval` of the first entry of column n+i.
    pos: Vec<usize>,
    /// Static regularization carried by each diagonal entry.
    reg: Vec<f64>,
    eps: f64,
    factor: Option<LdlFactor>,
}

impl Kkt {
    fn new(a: &CscMatrix, blocks: &[Block]) -> Self {
        let (m, n) = (a.nrows, a.ncols);
        let at = a.transpose();
        let mut row_cols = vec![Vec::new(); m];
        let mut row_vals = vec![Vec::new(); m];
        for blk in blocks {
            if blk.kind == Kind::Soc {
                let mut cols: Vec<usize> = blk.range.clone().flat_map(|i| at.col(i).map(|(j, _)| j)).collect();
                cols.sort_unstable();
                cols.dedup();
                for i in blk.range.clone() {
                    let mut vals = vec![0.0; cols.len()];
                    for (j, v) in at.col(i) {
                        vals[cols.binary_search(&j).expect("column collected above")] = v;
                    }
                    row_cols[i] = cols.clone();
                    row_vals[i] = vals;
                }
            } else {
                for i in blk.range.clone() {
                    let (cols, vals): (Vec<usize>, Vec<f64>) = at.col(i).unzip();
                    row_cols[i] = cols;
                    row_vals[i] = vals;
                }
            }
        }
        let mut colptr = Vec::with_capacity(n + m + 1);
        let mut rowval = Vec::new();
        colptr.push(0);
        for j in 0..n {
            rowval.push(j);
            colptr.push(rowval.len());
        }
        let mut pos = vec![0; m];
        for i in 0..m {
            pos[i] = rowval.len();
            rowval.extend(row_cols[i].iter().copied());
            rowval.push(n + i);
            colptr.push(rowval.len());
        }
        let nz = rowval.len();
        let upper = CscMatrix {
            nrows: n + m,
            ncols: n + m,
            colptr,
            rowval,
            nzval: vec![0.0; nz],
        };
        Self {
            n,
            m,
            upper,
            row_cols,
            row_vals,
            pos,
            reg: vec![0.0; n + m],
            eps: STATIC_REG,
            factor: None,
        }
    }

    /// Writes the values for the current scaling (identity when `scalings`
    /// is `None`) and refactors.
    fn update(&mut self, blocks: &[Block], scalings: Option<&[NtScaling]>) -> Result<(), LdlError> {
        let eps = self.eps;
        for j in 0..self.n {
            self.upper.nzval[j] = eps;
            self.reg[j] = eps;
        }
        for (b, blk) in blocks.iter().enumerate() {
            let sc = scalings.map(|s| &s[b]);
            match (sc, blk.kind) {
                (Some(w), Kind::Soc) => {
                    let d = blk.range.len();
                    let ncols = self.row_cols[blk.range.start].len();
                    let mut src = vec![0.0; d];
                    let mut col = vec![0.0; d];
                    for c in 0..ncols {
                        for (k, i) in blk.range.clone().enumerate() {
                            src[k] = self.row_vals[i][c];
                        }
                        w.mul_winv(&src, &mut col);
                        for (k, i) in blk.range.clone().enumerate() {
                            self.upper.nzval[self.pos[i] + c] = col[k];
                        }
                    }
                }
                _ => {
                    for i in blk.range.clone() {
                        let p = self.pos[i];
                        self.upper.nzval[p..p + self.row_vals[i].len()].copy_from_slice(&self.row_vals[i]);
                    }
                }
            }
            for (k, i) in blk.range.clone().enumerate() {
                let (h, reg) = match (sc, blk.kind) {
                    (None, _) => (1.0, 0.0),
                    (Some(_), Kind::Zero) => (0.0, eps),
                    (Some(NtScaling::Nonneg { w }), Kind::Nonneg) => (w[k] * w[k], eps),
                    (Some(_), _) => (1.0, 0.0),
                };
                self.upper.nzval[self.pos[i] + self.row_cols[i].len()] = -(h + reg);
                self.reg[self.n + i] = -reg;
            }
        }
        match &mut self.factor {
            Some(f) => f.refactor(&self.upper.nzval)?,
            None => {
                let signs: Vec<f64> = (0..self.n + self.m).map(|i| if i < self.n { 1.0 } else { -1.0 }).collect();
                self.factor = Some(LdlFactor::new(&self.upper, &signs, Regularization::default())?);
            }
        }
        Ok(())
    }

    /// `K_true * v` where `K_true` omits the static regularization.
    fn mul_true(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for j in 0..self.n + self.m {
            for k in self.upper.colptr[j]..self.upper.colptr[j + 1] {
                let r = self.upper.rowval[k];
                let mut val = self.upper.nzval[k];
                if r == j {
                    val -= self.reg[j];
                } else {
                    out[j] += val * v[r];
                }
                out[r] += val * v[j];
            }
        }
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let f = self.factor.as_ref().expect("factorization must precede solves");
        let mut sol = rhs.to_vec();
        f.solve(&mut sol);
        let mut res = vec![0.0; rhs.len()];
        let rhs_norm = norm_inf(rhs);
        let mut last = f64::INFINITY;
        for _ in 0..REFINE_STEPS {
            self.mul_true(&sol, &mut res);
            for (r, b) in res.iter_mut().zip(rhs) {
                *r = b - *r;
            }
            let rn = norm_inf(&res);
            if rn <= 1e-12 + 1e-13 * rhs_norm || rn > 0.5 * last {
                break;
            }
            last = rn;
            f.solve(&mut res);
            for (s, d) in sol.iter_mut().zip(&res) {
                *s += d;
            }
        }
        sol
    }
}

/// Maps a right-hand side `[rx; rz]` of the unscaled system to the scaled
/// one, solves, and returns `(dx, dz, q)`.
fn solve_scaled(kkt: &Kkt, blocks: &[Block], scalings: &[NtScaling], rx: &[f64], rz: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = rx.len();
    let m = rz.len();
    let mut rhs = vec![0.0; n + m];
    rhs[..n].copy_from_slice(rx);
    for (blk, sc) in blocks.iter().zip(scalings) {
        let r = blk.range.clone();
        if blk.kind == Kind::Soc {
            sc.mul_winv(&rz[r.clone()], &mut rhs[n + r.start..n + r.end]);
        } else {
            rhs[n + r.start..n + r.end].copy_from_slice(&rz[r]);
        }
    }
    let sol = kkt.solve(&rhs);
    let dx = sol[..n].to_vec();
    let q = &sol[n..];
    let mut dz = q.to_vec();
    for (blk, sc) in blocks.iter().zip(scalings) {
        if blk.kind == Kind::Soc {
            let r = blk.range.clone();
            sc.mul_winv(&q[r.clone()], &mut dz[r]);
        }
    }
    (dx, dz)
}

pub(crate) fn solve(
    c: &[f64],
    a: &CscMatrix,
    b: &[f64],
    cones: &[Cone],
    max_iter: usize,
    monitor: &dyn Monitor,
) -> Result<Outcome, LdlError> {
    let (m, n) = (a.nrows, a.ncols);
    let blocks = blocks_of(cones);
    let degree: usize = cones.iter().map(Cone::degree).sum();
    let mut kkt = Kkt::new(a, &blocks);

    // Initial point from two regularized least-squares solves.
    kkt.update(&blocks, None)?;
    let mut rhs = vec![0.0; n + m];
    rhs[n..].copy_from_slice(b);
    let sol = kkt.solve(&rhs);
    let mut x = sol[..n].to_vec();
    let mut s: Vec<f64> = sol[n..].iter().map(|v| -v).collect();
    rhs[..n].iter_mut().zip(c).for_each(|(r, ci)| *r = -ci);
    rhs[n..].iter_mut().for_each(|r| *r = 0.0);
    let sol = kkt.solve(&rhs);
    let mut z = sol[n..].to_vec();
    for blk in &blocks {
        shift_into_cone(blk.kind, &mut s[blk.range.clone()]);
        if blk.kind != Kind::Zero {
            shift_into_cone(blk.kind, &mut z[blk.range.clone()]);
        }
    }
    let (mut tau, mut kappa) = (1.0f64, 1.0f64);

    let mut r1 = vec![0.0; n];
    let mut r2 = vec![0.0; m];
    let mut lambda = vec![0.0; m];
    let mut stalls = 0;
    let mut iter = 0;
    let mut best: Option<(f64, Vec<f64>, Vec<f64>, Vec<f64>)> = None;

    loop {
        r1.copy_from_slice(c);
        r1.iter_mut().for_each(|v| *v *= tau);
        a.gemv_t(1.0, &z, &mut r1);
        for i in 0..m {
            r2[i] = s[i] - b[i] * tau;
        }
        a.gemv(1.0, &x, &mut r2);
        let cx = dot(c, &x);
        let bz = dot(b, &z);
        let r3 = cx + bz + kappa;
        let sz: f64 = blocks
            .iter()
            .filter(|b| b.kind != Kind::Zero)
            .map(|b| dot(&s[b.range.clone()], &z[b.range.clone()]))
            .sum();
        let mu = (sz + tau * kappa) / (degree as f64 + 1.0);
        log::trace!(
            "ipm {iter}: mu {mu:.3e} tau {tau:.3e} kappa {kappa:.3e} |r1| {:.3e} |r2| {:.3e} r3 {r3:.3e}",
            norm_inf(&r1),
            norm_inf(&r2)
        );
        let finite = mu.is_finite() && tau.is_finite() && x.iter().chain(&z).chain(&s).all(|v| v.is_finite());

        if finite {
            let inv_tau = 1.0 / tau;
            let xs: Vec<f64> = x.iter().map(|v| v * inv_tau).collect();
            let zs: Vec<f64> = z.iter().map(|v| v * inv_tau).collect();
            let ss: Vec<f64> = s.iter().map(|v| v * inv_tau).collect();
            if monitor.converged(&xs, &zs, &ss) {
                return Ok(Outcome {
                    x: xs,
                    y: zs,
                    s: ss,
                    status: Status::Optimal,
                    iterations: iter,
                });
            }
            let merit = (norm_inf(&r1).max(norm_inf(&r2)) + r3.abs() + mu) * inv_tau;
            if best.as_ref().is_none_or(|(bm, ..)| merit < *bm) {
                best = Some((merit, xs, zs, ss));
            }
            if kappa > tau {
                if bz < 0.0 && monitor.primal_infeasible(&z) {
                    let scale = 1.0 / -bz;
                    return Ok(Outcome {
                        x: vec![0.0; n],
                        y: z.iter().map(|v| v * scale).collect(),
                        s: vec![0.0; m],
                        status: Status::InfeasibleDetected,
                        iterations: iter,
                    });
                }
                if cx < 0.0 && monitor.dual_infeasible(&x, &s) {
                    let scale = 1.0 / -cx;
                    return Ok(Outcome {
                        x: x.iter().map(|v| v * scale).collect(),
                        y: vec![0.0; m],
                        s: s.iter().map(|v| v * scale).collect(),
                        status: Status::UnboundedDetected,
                        iterations: iter,
                    });
                }
            }
        }
        if iter >= max_iter || stalls >= 3 || !finite {
            let (_, xs, zs, ss) = best.unwrap_or((0.0, vec![0.0; n], vec![0.0; m], vec![0.0; m]));
            return Ok(Outcome {
                x: xs,
                y: zs,
                s: ss,
                status: Status::MaxIterations,
                iterations: iter,
            });
        }
        iter += 1;

        let scalings: Vec<NtScaling> = blocks
            .iter()
            .map(|blk| NtScaling::compute(blk.kind, &s[blk.range.clone()], &z[blk.range.clone()]))
            .collect();
        for (blk, sc) in blocks.iter().zip(&scalings) {
            let r = blk.range.clone();
            sc.mul_w(&z[r.clone()], &mut lambda[r]);
        }

        let solve_scaled = |kkt: &Kkt, rx: &[f64], rz: &[f64]| solve_scaled(kkt, &blocks, &scalings, rx, rz);
        let neg_c: Vec<f64> = c.iter().map(|v| -v).collect();
        // A non-finite solve means the factorization broke down; retry
        // with heavier regularization and let refinement absorb it.
        let (x1, z1) = loop {
            kkt.update(&blocks, Some(&scalings))?;
            let (x1, z1) = solve_scaled(&kkt, &neg_c, b);
            let clean = kkt.factor.as_ref().is_some_and(|f| f.regularized_pivots() == 0);
            if (clean && x1.iter().chain(&z1).all(|v| v.is_finite())) || kkt.eps >= MAX_REG {
                break (x1, z1);
            }
            kkt.eps *= 100.0;
            log::debug!("ipm {iter}: raising static regularization to {:.1e}", kkt.eps);
        };
        // Taken directly rather than as -z1'Hz1: the two agree only up to
        // the solve error, and near an infeasibility ray the quadratic form
        // is large enough that the gap breaks the homogeneous row.
        let denom_base = dot(c, &x1) + dot(b, &z1);

        // Direction for a given complementarity target.
        let direction = |ds: &[f64], dk: f64, eta: f64| {
            let rx: Vec<f64> = r1.iter().map(|v| -eta * v).collect();
            let mut lds = vec![0.0; m];
            let mut wlds = vec![0.0; m];
            for (blk, sc) in blocks.iter().zip(&scalings) {
                if blk.kind == Kind::Zero {
                    continue;
                }
                let r = blk.range.clone();
                jordan_div(blk.kind, &lambda[r.clone()], &ds[r.clone()], &mut lds[r.clone()]);
                sc.mul_w(&lds[r.clone()], &mut wlds[r]);
            }
            let rz: Vec<f64> = (0..m).map(|i| -eta * r2[i] - wlds[i]).collect();
            let (x2, z2) = solve_scaled(&kkt, &rx, &rz);
            let dtau = (-eta * r3 - dk / tau - dot(c, &x2) - dot(b, &z2)) / (denom_base - kappa / tau);
            let dx: Vec<f64> = x2.iter().zip(&x1).map(|(a, b)| a + dtau * b).collect();
            let dz: Vec<f64> = z2.iter().zip(&z1).map(|(a, b)| a + dtau * b).collect();
            // The primal equation A dx + ds - b dtau = -eta r2 fixes ds.
            // Recovering it from the complementarity row instead would
            // multiply the solve error by W, which grows without bound on
            // active cone blocks.
            let mut dsv: Vec<f64> = (0..m).map(|i| -eta * r2[i] + b[i] * dtau).collect();
            a.gemv(-1.0, &dx, &mut dsv);
            for blk in &blocks {
                if blk.kind == Kind::Zero {
                    dsv[blk.range.clone()].iter_mut().for_each(|v| *v = 0.0);
                }
            }
            let dkappa = (dk - kappa * dtau) / tau;
            (dx, dz, dsv, dtau, dkappa)
        };

        let step_len = |dz: &[f64], dsv: &[f64], dtau: f64, dkappa: f64| {
            let mut alpha = f64::INFINITY;
            for (bi, blk) in blocks.iter().enumerate() {
                if blk.kind == Kind::Zero {
                    continue;
                }
                let r = blk.range.clone();
                if blk.kind == Kind::Soc {
                    // Measured in the scaled space, where lambda sits well
                    // inside the cone even when s or z is near its boundary.
                    let sc = &scalings[bi];
                    let mut t = vec![0.0; r.len()];
                    sc.mul_winv(&dsv[r.clone()], &mut t);
                    alpha = alpha.min(max_step(blk.kind, &lambda[r.clone()], &t));
                    sc.mul_w(&dz[r.clone()], &mut t);
                    alpha = alpha.min(max_step(blk.kind, &lambda[r], &t));
                    continue;
                }
                alpha = alpha.min(max_step(blk.kind, &s[r.clone()], &dsv[r.clone()]));
                alpha = alpha.min(max_step(blk.kind, &z[r.clone()], &dz[r]));
            }
            if dtau < 0.0 {
                alpha = alpha.min(-tau / dtau);
            }
            if dkappa < 0.0 {
                alpha = alpha.min(-kappa / dkappa);
            }
            alpha
        };

        // predictor
        let mut ds_aff = vec![0.0; m];
        for blk in &blocks {
            let r = blk.range.clone();
            jordan_prod(blk.kind, &lambda[r.clone()], &lambda[r.clone()], &mut ds_aff[r.clone()]);
            ds_aff[r].iter_mut().for_each(|v| *v = -*v);
        }
        let (_dxa, dza, dsa, dtaua, dkappaa) = direction(&ds_aff, -tau * kappa, 1.0);
        let alpha_aff = step_len(&dza, &dsa, dtaua, dkappaa).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

        // corrector
        let mut ds = vec![0.0; m];
        for (blk, sc) in blocks.iter().zip(&scalings) {
            if blk.kind == Kind::Zero {
                continue;
            }
            let r = blk.range.clone();
            let len = r.len();
            let mut winv_ds = vec![0.0; len];
            sc.mul_winv(&dsa[r.clone()], &mut winv_ds);
            let mut w_dz = vec![0.0; len];
            sc.mul_w(&dza[r.clone()], &mut w_dz);
            let mut cross = vec![0.0; len];
            jordan_prod(blk.kind, &winv_ds, &w_dz, &mut cross);
            let mut ll = vec![0.0; len];
            jordan_prod(blk.kind, &lambda[r.clone()], &lambda[r.clone()], &mut ll);
            for k in 0..len {
                ds[r.start + k] = -ll[k] - cross[k];
            }
            match blk.kind {
                Kind::Nonneg => (0..len).for_each(|k| ds[r.start + k] += sigma * mu),
                Kind::Soc => ds[r.start] += sigma * mu,
                Kind::Zero => {}
            }
        }
        let dk = -tau * kappa - dtaua * dkappaa + sigma * mu;
        let (dx, dz, dsv, dtau, dkappa) = direction(&ds, dk, 1.0 - sigma);
        let alpha = (STEP_FRACTION * step_len(&dz, &dsv, dtau, dkappa)).min(1.0);
        if alpha < 1e-10 {
            stalls += 1;
        } else {
            stalls = 0;
        }
        for j in 0..n {
            x[j] += alpha * dx[j];
        }
        for i in 0..m {
            z[i] += alpha * dz[i];
            s[i] += alpha * dsv[i];
        }
        tau += alpha * dtau;
        kappa += alpha * dkappa;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nt_scaling_maps_z_and_s_to_same_point() {
        let s = [3.0, 1.0, -0.5];
        let z = [2.0, -0.3, 0.8];
        let sc = NtScaling::compute(Kind::Soc, &s, &z);
        let mut wz = [0.0; 3];
        sc.mul_w(&z, &mut wz);
        let mut winv_s = [0.0; 3];
        sc.mul_winv(&s, &mut winv_s);
        for k in 0..3 {
            assert!((wz[k] - winv_s[k]).abs() < 1e-12, "{wz:?} vs {winv_s:?}");
        }
        // H = W W
        let mut col = [0.0; 3];
        let mut wcol = [0.0; 3];
        for j in 0..3 {
            let mut e = [0.0; 3];
            e[j] = 1.0;
            sc.mul_w(&e, &mut col);
            sc.mul_w(&col, &mut wcol);
            for i in 0..3 {
                assert!((wcol[i] - sc.h_entry(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jordan_division_inverts_product() {
        let l = [2.0, 0.5, -0.7];
        let v = [0.3, 1.0, 2.0];
        let mut x = [0.0; 3];
        jordan_div(Kind::Soc, &l, &v, &mut x);
        let mut back = [0.0; 3];
        jordan_prod(Kind::Soc, &l, &x, &mut back);
        for k in 0..3 {
            assert!((back[k] - v[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn soc_step_stops_at_boundary() {
        let v = [2.0, 0.0, 0.0];
        let d = [0.0, 1.0, 0.0];
        let a = max_step(Kind::Soc, &v, &d);
        assert!((a - 2.0).abs() < 1e-12);
        let d = [1.0, 0.5, 0.0];
        assert!(max_step(Kind::Soc, &v, &d).is_infinite());
    }
}
