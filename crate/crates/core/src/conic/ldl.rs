//! Sparse LDL^T factorization for quasi-definite systems.
//!
//! Follows the up-looking elimination-tree scheme of QDLDL. The symbolic
//! phase (ordering, elimination tree, column counts) runs once per pattern;
//! the numeric phase is repeated every interior-point iteration.

use thiserror::Error;

use super::sparse::CscMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum LdlError {
    #[error("input is not upper triangular (entry ({row},{col}))")]
    NotUpperTriangular { row: usize, col: usize },
    #[error("missing diagonal entry in column {0}")]
    MissingDiagonal(usize),
    #[error("fill-reducing ordering failed")]
    Ordering,
    #[error("zero or non-finite pivot at column {0}")]
    BadPivot(usize),
}

const NONE: usize = usize::MAX;

/// Numeric settings for pivot regularization.
#[derive(Debug, Clone, Copy)]
pub struct PivotRegularization {
    /// Pivots with `sign * d <= eps` are replaced.
    pub eps: f64,
    /// Replacement magnitude.
    pub delta: f64,
}

impl Default for PivotRegularization {
    fn default() -> Self {
        PivotRegularization {
            eps: 1e-13,
            delta: 2e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    // perm[new] = old, iperm[old] = new
    perm: Vec<usize>,
    iperm: Vec<usize>,
    // permuted upper-triangular pattern
    ap: Vec<usize>,
    ai: Vec<usize>,
    ax: Vec<f64>,
    map: Vec<usize>,
    signs: Vec<f64>,
    etree: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
    pub bumped: usize,
}

impl LdlFactor {
    /// Symbolic analysis of an upper-triangular pattern. `signs[i]` is the
    /// expected pivot sign (+1 primal block, -1 dual block).
    pub fn analyze(upper: &CscMatrix, signs: &[f64]) -> Result<Self, LdlError> {
        let n = upper.ncols;
        assert_eq!(upper.nrows, n);
        assert_eq!(signs.len(), n);
        for j in 0..n {
            let mut has_diag = false;
            for (i, _) in upper.col(j) {
                if i > j {
                    return Err(LdlError::NotUpperTriangular { row: i, col: j });
                }
                has_diag |= i == j;
            }
            if !has_diag {
                return Err(LdlError::MissingDiagonal(j));
            }
        }

        let (perm, iperm) = if n == 0 {
            (Vec::new(), Vec::new())
        } else {
            let control = amd::Control::default();
            let (p, pinv, _) = amd::order::<usize>(n, &upper.colptr, &upper.rowind, &control)
                .map_err(|_| LdlError::Ordering)?;
            (p, pinv)
        };

        // Permute the pattern, remembering where every original entry lands.
        let mut triplets = Vec::with_capacity(upper.nnz());
        for j in 0..n {
            for p in upper.colptr[j]..upper.colptr[j + 1] {
                let i = upper.rowind[p];
                let (a, b) = (iperm[i], iperm[j]);
                let (r, c) = if a <= b { (a, b) } else { (b, a) };
                triplets.push((r, c, p));
            }
        }
        let mut counts = vec![0usize; n + 1];
        for &(_, c, _) in &triplets {
            counts[c + 1] += 1;
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let mut by_col: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for &(r, c, p) in &triplets {
            by_col[c].push((r, p));
        }
        let mut ap = Vec::with_capacity(n + 1);
        let mut ai = Vec::with_capacity(upper.nnz());
        let mut map = vec![0usize; upper.nnz()];
        ap.push(0);
        for col in by_col.iter_mut() {
            col.sort_by_key(|&(r, _)| r);
            for &(r, p) in col.iter() {
                map[p] = ai.len();
                ai.push(r);
            }
            ap.push(ai.len());
        }

        // Elimination tree and column counts.
        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for p in ap[j]..ap[j + 1] {
                let mut i = ai[p];
                while i != NONE && work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let total = lp[n];
        let psigns = (0..n).map(|k| signs[perm[k]]).collect();

        Ok(LdlFactor {
            n,
            perm,
            iperm,
            ax: vec![0.0; ai.len()],
            ap,
            ai,
            map,
            signs: psigns,
            etree,
            lp,
            li: vec![0; total],
            lx: vec![0.0; total],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
            bumped: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factor_nnz(&self) -> usize {
        self.lp[self.n]
    }

    /// Numeric factorization. `values` follows the pattern passed to
    /// [`LdlFactor::analyze`].
    pub fn factor(&mut self, values: &[f64], reg: PivotRegularization) -> Result<(), LdlError> {
        let n = self.n;
        assert_eq!(values.len(), self.map.len());
        for (p, &v) in values.iter().enumerate() {
            self.ax[self.map[p]] = v;
        }

        let mut y_vals = vec![0.0; n];
        let mut y_used = vec![false; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_space: Vec<usize> = self.lp[..n].to_vec();
        self.bumped = 0;

        for k in 0..n {
            let mut nnz_y = 0usize;
            self.d[k] = 0.0;
            for p in self.ap[k]..self.ap[k + 1] {
                let b = self.ai[p];
                if b == k {
                    self.d[k] = self.ax[p];
                    continue;
                }
                y_vals[b] = self.ax[p];
                if !y_used[b] {
                    y_used[b] = true;
                    elim[0] = b;
                    let mut ne = 1;
                    let mut next = self.etree[b];
                    while next != NONE && next < k {
                        if y_used[next] {
                            break;
                        }
                        y_used[next] = true;
                        elim[ne] = next;
                        ne += 1;
                        next = self.etree[next];
                    }
                    while ne > 0 {
                        ne -= 1;
                        y_idx[nnz_y] = elim[ne];
                        nnz_y += 1;
                    }
                }
            }

            for i in (0..nnz_y).rev() {
                let c = y_idx[i];
                let tmp = next_space[c];
                let yc = y_vals[c];
                for j in self.lp[c]..tmp {
                    y_vals[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[tmp] = k;
                let l = yc * self.dinv[c];
                self.lx[tmp] = l;
                self.d[k] -= yc * l;
                next_space[c] += 1;
                y_vals[c] = 0.0;
                y_used[c] = false;
            }

            let s = self.signs[k];
            if !self.d[k].is_finite() {
                return Err(LdlError::BadPivot(self.perm[k]));
            }
            if s * self.d[k] <= reg.eps {
                self.d[k] = s * reg.delta;
                self.bumped += 1;
            }
            self.dinv[k] = 1.0 / self.d[k];
        }
        Ok(())
    }

    /// Solves `K x = b` in place using the current factors.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = (0..n).map(|k| b[self.perm[k]]).collect();
        // L solve
        for i in 0..n {
            let xi = x[i];
            if xi != 0.0 {
                for j in self.lp[i]..self.lp[i + 1] {
                    x[self.li[j]] -= self.lx[j] * xi;
                }
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        // L^T solve
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                acc -= self.lx[j] * x[self.li[j]];
            }
            x[i] = acc;
        }
        for k in 0..n {
            b[self.perm[k]] = x[k];
        }
    }

    #[allow(dead_code)]
    pub(crate) fn inverse_permutation(&self) -> &[usize] {
        &self.iperm
    }
}

/// `y = K x` for a symmetric matrix stored as its upper triangle.
pub fn sym_upper_mul(upper: &CscMatrix, values: &[f64], x: &[f64], y: &mut [f64]) {
    y.iter_mut().for_each(|v| *v = 0.0);
    for j in 0..upper.ncols {
        for p in upper.colptr[j]..upper.colptr[j + 1] {
            let i = upper.rowind[p];
            let v = values[p];
            y[i] += v * x[j];
            if i != j {
                y[j] += v * x[i];
            }
        }
    }
}
