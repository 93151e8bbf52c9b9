//! Primal-dual interior-point solver for conic programs.
//!
//! Programs have the standard form
//!
//! ```text
//! minimize c^T x  subject to  A x = b,  x in K
//! ```
//!
//! where `K` is a product of free, nonnegative, second-order and PSD cones.
//! The dual is `maximize b^T y  subject to  A^T y + s = c,  s in K*`.

pub mod cones;
mod gmres;
pub mod hermitian;
mod ipm;
pub mod ldl;
pub mod presolve;
pub mod sparse;

use std::io::{self, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cones::Cone;
pub use hermitian::{embed_hermitian, HermitianEmbedding, LinearForm};
pub use sparse::CscMatrix;

#[derive(Debug, Error)]
pub enum ConicError {
    #[error("malformed program: {0}")]
    Malformed(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeBlock {
    pub name: String,
    pub cone: Cone,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConeProgram {
    pub c: Vec<f64>,
    pub a: CscMatrix,
    pub b: Vec<f64>,
    pub blocks: Vec<ConeBlock>,
    /// Constraint family of every row, for diagnostics.
    pub row_tags: Vec<String>,
}

impl ConeProgram {
    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    /// Start offset of every block, plus the total length at the end.
    pub fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.blocks.len() + 1);
        let mut acc = 0;
        off.push(0);
        for blk in &self.blocks {
            acc += blk.cone.dim();
            off.push(acc);
        }
        off
    }

    pub fn block_range(&self, name: &str) -> Option<Range<usize>> {
        let off = self.offsets();
        self.blocks
            .iter()
            .position(|b| b.name == name)
            .map(|i| off[i]..off[i + 1])
    }

    pub fn validate(&self) -> Result<(), ConicError> {
        let n = self.num_vars();
        let total: usize = self.blocks.iter().map(|b| b.cone.dim()).sum();
        if total != n {
            return Err(ConicError::Malformed(format!(
                "block dimensions sum to {total} but there are {n} variables"
            )));
        }
        if self.a.ncols != n || self.a.nrows != self.b.len() {
            return Err(ConicError::Malformed(format!(
                "constraint matrix is {}x{}, expected {}x{}",
                self.a.nrows,
                self.a.ncols,
                self.b.len(),
                n
            )));
        }
        if self.row_tags.len() != self.b.len() {
            return Err(ConicError::Malformed("row tag count mismatch".into()));
        }
        let finite = self
            .c
            .iter()
            .chain(&self.b)
            .chain(&self.a.values)
            .all(|v| v.is_finite());
        if !finite {
            return Err(ConicError::Malformed("non-finite data".into()));
        }
        Ok(())
    }

    /// Largest violation of `v in K` (or `K*` with `dual = true`, where free
    /// blocks must vanish).
    pub fn cone_violation(&self, v: &[f64], dual: bool) -> f64 {
        let off = self.offsets();
        let mut worst = 0.0f64;
        for (k, blk) in self.blocks.iter().enumerate() {
            let part = &v[off[k]..off[k + 1]];
            match blk.cone {
                Cone::Free(_) => {
                    if dual {
                        worst = worst.max(sparse::norm_inf(part));
                    }
                }
                cone => worst = worst.max(-cones::margin(cone, part)),
            }
        }
        worst
    }

    /// Writes the program in a line-oriented sparse text format.
    ///
    /// ```text
    /// conic-program vars <n> rows <m> nnz <k>
    /// block <name> <free|nonneg|soc|psd> <size>
    /// c <col> <value>
    /// b <row> <value> <tag>
    /// a <row> <col> <value>
    /// ```
    ///
    /// PSD sizes are matrix orders; their variables use the scaled lower
    /// triangle (column major, off-diagonals times sqrt 2).
    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "conic-program vars {} rows {} nnz {}",
            self.num_vars(),
            self.num_rows(),
            self.a.nnz()
        )?;
        for blk in &self.blocks {
            let (kind, size) = match blk.cone {
                Cone::Free(n) => ("free", n),
                Cone::NonNeg(n) => ("nonneg", n),
                Cone::Soc(n) => ("soc", n),
                Cone::Psd(n) => ("psd", n),
            };
            writeln!(w, "block {} {} {}", blk.name, kind, size)?;
        }
        for (j, v) in self.c.iter().enumerate() {
            if *v != 0.0 {
                writeln!(w, "c {j} {v:e}")?;
            }
        }
        for (i, v) in self.b.iter().enumerate() {
            writeln!(w, "b {i} {v:e} {}", self.row_tags[i])?;
        }
        for j in 0..self.a.ncols {
            for (i, v) in self.a.col(j) {
                writeln!(w, "a {i} {j} {v:e}")?;
            }
        }
        Ok(())
    }
}

/// Incremental construction of a [`ConeProgram`].
#[derive(Debug, Default, Clone)]
pub struct ProgramBuilder {
    blocks: Vec<ConeBlock>,
    c: Vec<f64>,
    triplets: Vec<(usize, usize, f64)>,
    b: Vec<f64>,
    tags: Vec<String>,
}

impl ProgramBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a block and returns the range of its variables.
    pub fn add_block(&mut self, name: impl Into<String>, cone: Cone) -> Range<usize> {
        let start = self.c.len();
        self.c.resize(start + cone.dim(), 0.0);
        self.blocks.push(ConeBlock {
            name: name.into(),
            cone,
        });
        start..self.c.len()
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn add_cost(&mut self, var: usize, value: f64) {
        self.c[var] += value;
    }

    /// Appends the row `sum coef * x[var] = rhs`. Repeated variables are summed.
    pub fn add_row(&mut self, tag: &str, entries: &[(usize, f64)], rhs: f64) -> usize {
        let row = self.b.len();
        for &(j, v) in entries {
            debug_assert!(j < self.c.len(), "row references unknown variable {j}");
            self.triplets.push((row, j, v));
        }
        self.b.push(rhs);
        self.tags.push(tag.to_string());
        row
    }

    /// Adds a rotated-cone block `(u0, u1, u2)` with `u1 = 2 sqrt(q) x` and
    /// `u0 - u2 = 2`, so that `t = (u0 + u2) / 2 >= q x^2`. Returns `t` as a
    /// linear form.
    pub fn add_quadratic_epigraph(
        &mut self,
        name: impl Into<String>,
        x: usize,
        q: f64,
    ) -> LinearForm {
        let u = self.add_block(name, Cone::Soc(3));
        self.add_row(
            "epi.lin",
            &[(u.start + 1, 1.0), (x, -2.0 * q.max(0.0).sqrt())],
            0.0,
        );
        self.add_row("epi.rot", &[(u.start, 1.0), (u.start + 2, -1.0)], 2.0);
        vec![(u.start, 0.5), (u.start + 2, 0.5)]
    }

    pub fn build(self) -> ConeProgram {
        let n = self.c.len();
        let m = self.b.len();
        ConeProgram {
            a: CscMatrix::from_triplets(m, n, &self.triplets),
            c: self.c,
            b: self.b,
            blocks: self.blocks,
            row_tags: self.tags,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    /// Progress stalled; the returned point meets `reduced_tol` only.
    AlmostOptimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIter,
}

/// Objective values and the split of their difference at one iterate.
///
/// With `r_p = A x - b` and `r_d = A^T y + s - c` at the normalized iterate,
/// `pobj - dobj = complementarity + y^T r_p - x^T r_d` holds identically, and
/// the complementarity term is nonnegative inside the cone.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterateLog {
    pub iter: usize,
    pub pobj: f64,
    pub dobj: f64,
    pub complementarity: f64,
    pub residual_term: f64,
    pub primal_res: f64,
    pub dual_res: f64,
    pub mu: f64,
    pub tau: f64,
    pub kappa: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConeSolution {
    pub status: Status,
    /// Primal point (a normalized ray `c^T x = -1` when dual infeasible).
    pub x: Vec<f64>,
    /// Dual multipliers, one per original row (a ray `b^T y = 1` when
    /// primal infeasible).
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub pobj: f64,
    pub dobj: f64,
    pub gap: f64,
    pub iterations: usize,
    pub dropped_rows: Vec<usize>,
    pub history: Vec<IterateLog>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Settings {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub infeas_tol: f64,
    pub max_iter: usize,
    /// Acceptance level for the fallback when progress stalls.
    pub reduced_tol: f64,
    pub static_reg: f64,
    /// Krylov iterations per restart when solving the Newton system.
    pub refine_steps: usize,
    pub step_fraction: f64,
    pub presolve: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            feas_tol: 1e-8,
            gap_tol: 1e-8,
            infeas_tol: 1e-8,
            max_iter: 100,
            reduced_tol: 1e-5,
            static_reg: 1e-8,
            refine_steps: 20,
            step_fraction: 0.99,
            presolve: true,
        }
    }
}

/// Residuals recomputed from the program data alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `|A x - b|_inf / (1 + |b|_inf)`
    pub primal: f64,
    /// `|A^T y + s - c|_inf / (1 + |c|_inf)`
    pub dual: f64,
    /// `|c^T x - b^T y| / (1 + |c^T x| + |b^T y|)`
    pub gap: f64,
    pub primal_abs: f64,
    pub dual_abs: f64,
    pub gap_abs: f64,
}

pub fn residuals(prog: &ConeProgram, sol: &ConeSolution) -> Residuals {
    residuals_of(prog, &sol.x, &sol.y, &sol.s)
}

pub fn residuals_of(prog: &ConeProgram, x: &[f64], y: &[f64], s: &[f64]) -> Residuals {
    let mut rp = prog.a.mul_vec(x);
    for (r, b) in rp.iter_mut().zip(&prog.b) {
        *r -= b;
    }
    let mut rd = prog.a.tmul_vec(y);
    for i in 0..rd.len() {
        rd[i] += s[i] - prog.c[i];
    }
    let p = sparse::dot(&prog.c, x);
    let d = sparse::dot(&prog.b, y);
    let primal_abs = sparse::norm_inf(&rp);
    let dual_abs = sparse::norm_inf(&rd);
    let gap_abs = (p - d).abs();
    Residuals {
        primal: primal_abs / (1.0 + sparse::norm_inf(&prog.b)),
        dual: dual_abs / (1.0 + sparse::norm_inf(&prog.c)),
        gap: gap_abs / (1.0 + p.abs() + d.abs()),
        primal_abs,
        dual_abs,
        gap_abs,
    }
}

/// Solves a conic program.
pub fn solve(prog: &ConeProgram, settings: &Settings) -> Result<ConeSolution, ConicError> {
    prog.validate()?;
    ipm::solve(prog, settings)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_tracks_blocks_and_rows() {
        let mut pb = ProgramBuilder::new();
        let x = pb.add_block("x", Cone::NonNeg(2));
        let t = pb.add_block("t", Cone::Soc(3));
        pb.add_cost(x.start, 1.0);
        pb.add_row(
            "sum",
            &[(x.start, 1.0), (x.start + 1, 1.0), (x.start, 1.0)],
            2.0,
        );
        pb.add_row("head", &[(t.start, 1.0)], 1.0);
        let prog = pb.build();
        prog.validate().unwrap();
        assert_eq!(prog.offsets(), vec![0, 2, 5]);
        assert_eq!(prog.block_range("t"), Some(2..5));
        assert_eq!(prog.a.to_dense()[0], vec![2.0, 1.0, 0.0, 0.0, 0.0]);
        let mut buf = Vec::new();
        prog.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("conic-program vars 5 rows 2 nnz 3"));
        assert!(text.contains("block t soc 3"));
    }
}
