//! Shared fixtures: planted conic programs and projection oracles.
#![allow(dead_code)]

use ccd_core::conic::{Cone, ConicProgram, CscMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random SOCP together with a primal-dual pair that satisfies the KKT
/// conditions exactly by construction.
pub struct Planted {
    pub program: ConicProgram,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub s: DVector<f64>,
}

pub fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// Complementary `(s, y)` on one cone block.
pub fn complementary_pair(rng: &mut ChaCha8Rng, cone: &Cone, all_active: bool) -> (Vec<f64>, Vec<f64>) {
    match *cone {
        Cone::Nonnegative(d) => {
            let mut s = vec![0.0; d];
            let mut y = vec![0.0; d];
            for i in 0..d {
                if !all_active && rng.gen_bool(0.5) {
                    s[i] = rng.gen_range(0.1..2.0);
                } else {
                    y[i] = rng.gen_range(0.1..2.0);
                }
            }
            (s, y)
        }
        Cone::SecondOrder(d) => {
            let u = unit(rng, d - 1);
            match rng.gen_range(0..3) {
                0 => {
                    let t = rng.gen_range(0.5..2.0);
                    let mut s = vec![t + 0.5];
                    s.extend(u.iter().map(|v| v * t));
                    (s, vec![0.0; d])
                }
                1 => {
                    let t = rng.gen_range(0.5..2.0);
                    let mut y = vec![t + 0.5];
                    y.extend(u.iter().map(|v| v * t));
                    (vec![0.0; d], y)
                }
                _ => {
                    let (a, b) = (rng.gen_range(0.2..2.0), rng.gen_range(0.2..2.0));
                    let mut s = vec![a];
                    s.extend(u.iter().map(|v| a * v));
                    let mut y = vec![b];
                    y.extend(u.iter().map(|v| -b * v));
                    (s, y)
                }
            }
        }
        _ => unreachable!(),
    }
}

pub fn planted_socp(seed: u64, n: usize) -> Planted {
    planted(seed, n, false)
}

/// Every nonnegative row active with a strictly positive multiplier, so the
/// primal optimum is unique.
pub fn planted_unique(seed: u64, n: usize) -> Planted {
    planted(seed, n, true)
}

pub fn planted(seed: u64, n: usize, all_active: bool) -> Planted {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nonneg = if all_active { n } else { n / 2 };
    let mut cones = vec![Cone::Zero(3), Cone::Nonnegative(nonneg)];
    for _ in 0..4 {
        cones.push(Cone::SecondOrder(rng.gen_range(3..6)));
    }
    let m: usize = cones.iter().map(Cone::dim).sum();
    let mut trip = Vec::new();
    for i in 0..m {
        for j in 0..n {
            if rng.gen_bool(0.3) {
                trip.push((i, j, rng.gen_range(-1.0..1.0)));
            }
        }
    }
    for j in 0..n {
        trip.push((j % m, j, 1.0));
    }
    let a = CscMatrix::from_triplets(m, n, &trip);
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut s = vec![0.0; 3];
    let mut y: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for cone in &cones[1..] {
        let (sc, yc) = complementary_pair(&mut rng, cone, all_active);
        s.extend(sc);
        y.extend(yc);
    }
    let ad = DMatrix::from_fn(m, n, |i, j| a.get(i, j));
    let (xv, yv, sv) = (DVector::from_vec(x), DVector::from_vec(y), DVector::from_vec(s));
    let b = &ad * &xv + &sv;
    let c = -(ad.transpose() * &yv);
    let program = ConicProgram::new(c.as_slice().to_vec(), a, b.as_slice().to_vec(), cones).unwrap();
    Planted {
        program,
        x: xv,
        y: yv,
        s: sv,
    }
}

pub fn in_cone(cone: &Cone, v: &[f64], tol: f64) -> bool {
    match cone {
        Cone::Zero(_) => v.iter().all(|x| x.abs() <= tol),
        Cone::Nonnegative(_) => v.iter().all(|&x| x >= -tol),
        Cone::SecondOrder(_) => v[0] + tol >= v[1..].iter().map(|x| x * x).sum::<f64>().sqrt(),
        Cone::RotatedSecondOrder(_) => {
            v[0] >= -tol && v[1] >= -tol && 2.0 * v[0] * v[1] + tol >= v[2..].iter().map(|x| x * x).sum::<f64>()
        }
    }
}

/// Enumerates supports; on a support S the projection is v_S shifted by a
/// common constant.
pub fn simplex_oracle(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let shift = (support.iter().map(|&i| v[i]).sum::<f64>() - 1.0) / support.len() as f64;
        let mut w = vec![0.0; n];
        for &i in &support {
            w[i] = v[i] - shift;
        }
        if w.iter().any(|&x| x < -1e-15) {
            continue;
        }
        let d: f64 = w.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, w));
        }
    }
    best.unwrap().1
}

/// Projection onto the second-order cone by direct search: for a fixed
/// boundary height t the nearest boundary point points along the tail of v,
/// which leaves a 1-D convex problem in t >= 0, solved by bisection on the
/// sign of its slope.
pub fn soc_oracle(v: &[f64]) -> Vec<f64> {
    let t0 = v[0];
    let tail = &v[1..];
    let r0 = tail.iter().map(|x| x * x).sum::<f64>().sqrt();
    if r0 <= t0 {
        return v.to_vec();
    }
    let dir: Vec<f64> = if r0 > 0.0 { tail.iter().map(|x| x / r0).collect() } else { vec![0.0; tail.len()] };
    let slope = |t: f64| (t - t0) + (t - r0);
    let (mut lo, mut hi) = (0.0f64, t0.abs() + r0 + 1.0);
    if slope(lo) < 0.0 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if slope(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    } else {
        hi = lo;
    }
    let t = 0.5 * (lo + hi);
    let mut p = vec![t];
    p.extend(dir.iter().map(|d| t * d));
    p
}
