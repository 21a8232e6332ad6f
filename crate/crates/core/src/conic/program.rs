//! Standard-form conic programs.
//!
//! ```text
//! minimize    c'x + (1/2) x'Px + offset
//! subject to  Ax + s = b,  s in K = K_1 x ... x K_p
//! ```
//!
//! `P` is stored as its upper triangle. The dual is
//! `maximize -b'y + offset  s.t.  A'y + c = 0 (+ Px),  y in K*`.

use super::cones::{Cone, ConeError};
use super::sparse::{dot, CscMatrix};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProgramError {
    #[error("A is {rows}x{cols} but c has length {c} and b has length {b}")]
    Shape { rows: usize, cols: usize, c: usize, b: usize },
    #[error("cone dimensions sum to {cones} but A has {rows} rows")]
    ConeRows { cones: usize, rows: usize },
    #[error("quadratic part must be {n}x{n} upper triangular")]
    QuadraticShape { n: usize },
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("malformed dump: {0}")]
    Dump(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    pub c: Vec<f64>,
    pub a: CscMatrix,
    pub b: Vec<f64>,
    pub cones: Vec<Cone>,
    /// Upper triangle of the PSD quadratic part, if any.
    pub p: Option<CscMatrix>,
    pub offset: f64,
}

impl ConicProgram {
    pub fn new(c: Vec<f64>, a: CscMatrix, b: Vec<f64>, cones: Vec<Cone>) -> Result<Self, ProgramError> {
        let prog = Self {
            c,
            a,
            b,
            cones,
            p: None,
            offset: 0.0,
        };
        prog.validate()?;
        Ok(prog)
    }

    pub fn with_quadratic(mut self, p: CscMatrix) -> Result<Self, ProgramError> {
        self.p = Some(p);
        self.validate()?;
        Ok(self)
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn n(&self) -> usize {
        self.a.ncols
    }

    pub fn m(&self) -> usize {
        self.a.nrows
    }

    pub fn validate(&self) -> Result<(), ProgramError> {
        if self.c.len() != self.a.ncols || self.b.len() != self.a.nrows {
            return Err(ProgramError::Shape {
                rows: self.a.nrows,
                cols: self.a.ncols,
                c: self.c.len(),
                b: self.b.len(),
            });
        }
        let total: usize = self.cones.iter().map(Cone::dim).sum();
        if total != self.a.nrows {
            return Err(ProgramError::ConeRows {
                cones: total,
                rows: self.a.nrows,
            });
        }
        for cone in &self.cones {
            cone.validate()?;
        }
        if let Some(p) = &self.p {
            if p.nrows != self.n() || p.ncols != self.n() || p.triplets().any(|(r, c, _)| r > c) {
                return Err(ProgramError::QuadraticShape { n: self.n() });
            }
            if p.nzval.iter().any(|v| !v.is_finite()) {
                return Err(ProgramError::NonFinite("P"));
            }
        }
        if self.c.iter().any(|v| !v.is_finite()) {
            return Err(ProgramError::NonFinite("c"));
        }
        if self.b.iter().any(|v| !v.is_finite()) {
            return Err(ProgramError::NonFinite("b"));
        }
        if self.a.nzval.iter().any(|v| !v.is_finite()) {
            return Err(ProgramError::NonFinite("A"));
        }
        Ok(())
    }

    pub fn has_quadratic(&self) -> bool {
        self.p.as_ref().is_some_and(|p| p.nzval.iter().any(|&v| v != 0.0))
    }

    /// Row ranges of each cone block.
    pub fn cone_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.cones
            .iter()
            .map(|c| {
                let r = start..start + c.dim();
                start += c.dim();
                r
            })
            .collect()
    }

    /// Objective value `c'x + (1/2)x'Px + offset`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let quad = self.p.as_ref().map_or(0.0, |p| 0.5 * p.quad_form_upper(x));
        dot(&self.c, x) + quad + self.offset
    }

    /// Writes the plain-text sparse triplet dump: a header line
    /// `n m nnz cone...`, then `row col value` triplets of A, then the `m`
    /// entries of b, then the `n` entries of c, one per line.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<(), ProgramError> {
        let mut header = format!("{} {} {}", self.n(), self.m(), self.a.nnz());
        for c in &self.cones {
            let _ = write!(header, " {c}");
        }
        writeln!(w, "{header}")?;
        for (r, c, v) in self.a.triplets() {
            writeln!(w, "{r} {c} {v:.17e}")?;
        }
        for v in &self.b {
            writeln!(w, "{v:.17e}")?;
        }
        for v in &self.c {
            writeln!(w, "{v:.17e}")?;
        }
        Ok(())
    }

    /// Reads a dump written by [`ConicProgram::write_dump`].
    pub fn read_dump<R: BufRead>(r: R) -> Result<Self, ProgramError> {
        let mut lines = r.lines();
        let mut next = || -> Result<String, ProgramError> {
            lines
                .next()
                .ok_or_else(|| ProgramError::Dump("unexpected end of file".into()))?
                .map_err(ProgramError::from)
        };
        let header = next()?;
        let mut tokens = header.split_whitespace();
        let mut num = |what: &str| -> Result<usize, ProgramError> {
            tokens
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| ProgramError::Dump(format!("missing {what} in header")))
        };
        let (n, m, nnz) = (num("n")?, num("m")?, num("nnz")?);
        let cones = tokens
            .map(|t| Cone::parse(t).ok_or_else(|| ProgramError::Dump(format!("bad cone token '{t}'"))))
            .collect::<Result<Vec<_>, _>>()?;
        let parse_f = |s: &str| -> Result<f64, ProgramError> {
            s.trim().parse().map_err(|_| ProgramError::Dump(format!("bad number '{s}'")))
        };
        let mut trip = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let line = next()?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(ProgramError::Dump(format!("bad triplet line '{line}'")));
            }
            let r: usize = parts[0].parse().map_err(|_| ProgramError::Dump(line.clone()))?;
            let c: usize = parts[1].parse().map_err(|_| ProgramError::Dump(line.clone()))?;
            if r >= m || c >= n {
                return Err(ProgramError::Dump(format!("triplet ({r},{c}) out of range")));
            }
            trip.push((r, c, parse_f(parts[2])?));
        }
        let b = (0..m).map(|_| parse_f(&next()?)).collect::<Result<Vec<_>, _>>()?;
        let c = (0..n).map(|_| parse_f(&next()?)).collect::<Result<Vec<_>, _>>()?;
        Self::new(c, CscMatrix::from_triplets(m, n, &trip), b, cones)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ConicProgram {
        // min x0 + 2 x1 s.t. x0 + x1 = 1, x >= 0, (1, x0, x1) in SOC
        let a = CscMatrix::from_triplets(
            6,
            2,
            &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, -1.0), (2, 1, -1.0), (4, 0, -1.0), (5, 1, -1.0)],
        );
        ConicProgram::new(
            vec![1.0, 2.0],
            a,
            vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
            vec![Cone::Zero(1), Cone::Nonnegative(2), Cone::SecondOrder(3)],
        )
        .unwrap()
    }

    #[test]
    fn cone_rows_must_match() {
        let a = CscMatrix::zeros(2, 1);
        assert!(matches!(
            ConicProgram::new(vec![0.0], a, vec![0.0, 0.0], vec![Cone::Nonnegative(3)]),
            Err(ProgramError::ConeRows { cones: 3, rows: 2 })
        ));
    }

    #[test]
    fn dump_round_trip_is_exact() {
        let p = tiny();
        let mut buf = Vec::new();
        p.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("2 6 6 z:1 l:2 q:3\n"));
        let q = ConicProgram::read_dump(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn truncated_dump_is_rejected() {
        let r = ConicProgram::read_dump(std::io::Cursor::new(b"2 6 6 z:1\n0 0 1.0\n".to_vec()));
        assert!(matches!(r, Err(ProgramError::Dump(_))));
    }

    #[test]
    fn objective_includes_quadratic_and_offset() {
        let p = tiny()
            .with_quadratic(CscMatrix::from_triplets(2, 2, &[(0, 0, 2.0)]))
            .unwrap()
            .with_offset(3.0);
        // 1*2 + 2*1 + 0.5*2*4 + 3
        assert_eq!(p.objective(&[2.0, 1.0]), 11.0);
    }
}
