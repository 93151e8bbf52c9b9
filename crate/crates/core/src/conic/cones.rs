//! Cone kernels: Jordan algebra, Nesterov-Todd scalings and step lengths.
//!
//! PSD blocks are stored as `svec`: the lower triangle column by column with
//! off-diagonal entries multiplied by sqrt(2), so that the Euclidean inner
//! product of two svec vectors equals the trace inner product.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cone {
    Free(usize),
    NonNeg(usize),
    /// Second-order cone `{(t, u) : t >= |u|}` of the given total dimension.
    Soc(usize),
    /// Symmetric PSD matrices of the given order.
    Psd(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Free(n) | Cone::NonNeg(n) | Cone::Soc(n) => n,
            Cone::Psd(n) => svec_len(n),
        }
    }

    /// Contribution to the barrier degree.
    pub fn degree(&self) -> usize {
        match *self {
            Cone::Free(_) => 0,
            Cone::NonNeg(n) | Cone::Psd(n) => n,
            Cone::Soc(n) => usize::from(n > 0),
        }
    }

    pub fn is_free(&self) -> bool {
        matches!(self, Cone::Free(_))
    }
}

pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Position of matrix entry `(i, j)` inside the svec of an order-`n` matrix.
pub fn svec_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i >= j { (i, j) } else { (j, i) };
    // the first j columns of the lower triangle hold j*n - j(j-1)/2 entries
    j * n - j * j.saturating_sub(1) / 2 + (i - j)
}

pub fn smat(n: usize, v: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        m[(j, j)] = v[k];
        k += 1;
        for i in j + 1..n {
            let e = v[k] / SQRT_2;
            m[(i, j)] = e;
            m[(j, i)] = e;
            k += 1;
        }
    }
    m
}

pub fn svec(m: &DMatrix<f64>, out: &mut [f64]) {
    let n = m.nrows();
    let mut k = 0;
    for j in 0..n {
        out[k] = m[(j, j)];
        k += 1;
        for i in j + 1..n {
            out[k] = SQRT_2 * 0.5 * (m[(i, j)] + m[(j, i)]);
            k += 1;
        }
    }
}

pub fn svec_vec(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v = vec![0.0; svec_len(m.nrows())];
    svec(m, &mut v);
    v
}

/// Identity element `e` of the cone.
pub fn identity(cone: Cone, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    match cone {
        Cone::Free(_) => {}
        Cone::NonNeg(_) => out.iter_mut().for_each(|v| *v = 1.0),
        Cone::Soc(n) => {
            if n > 0 {
                out[0] = 1.0;
            }
        }
        Cone::Psd(n) => {
            for j in 0..n {
                out[svec_index(n, j, j)] = 1.0;
            }
        }
    }
}

/// Jordan product `u o v`.
pub fn jordan_prod(cone: Cone, u: &[f64], v: &[f64], out: &mut [f64]) {
    match cone {
        Cone::Free(_) => out.iter_mut().for_each(|o| *o = 0.0),
        Cone::NonNeg(_) => {
            for i in 0..out.len() {
                out[i] = u[i] * v[i];
            }
        }
        Cone::Soc(n) => {
            if n == 0 {
                return;
            }
            out[0] = u.iter().zip(v).map(|(a, b)| a * b).sum();
            for i in 1..n {
                out[i] = u[0] * v[i] + v[0] * u[i];
            }
        }
        Cone::Psd(n) => {
            let (a, b) = (smat(n, u), smat(n, v));
            let p = &a * &b;
            let sym = (&p + p.transpose()) * 0.5;
            svec(&sym, out);
        }
    }
}

/// Smallest "eigenvalue" of `x`: positive iff `x` is interior.
pub fn margin(cone: Cone, x: &[f64]) -> f64 {
    match cone {
        Cone::Free(_) => f64::INFINITY,
        Cone::NonNeg(_) => x.iter().copied().fold(f64::INFINITY, f64::min),
        Cone::Soc(n) => {
            if n == 0 {
                return f64::INFINITY;
            }
            x[0] - x[1..].iter().map(|v| v * v).sum::<f64>().sqrt()
        }
        Cone::Psd(n) => {
            if n == 0 {
                return f64::INFINITY;
            }
            SymmetricEigen::new(smat(n, x)).eigenvalues.min()
        }
    }
}

/// Largest `a` with `x + a dx` in the cone (`x` interior). Returns infinity
/// when the ray never leaves the cone.
pub fn max_step(cone: Cone, x: &[f64], dx: &[f64]) -> f64 {
    match cone {
        Cone::Free(_) => f64::INFINITY,
        Cone::NonNeg(_) => {
            let mut a = f64::INFINITY;
            for i in 0..x.len() {
                if dx[i] < 0.0 {
                    a = a.min(-x[i] / dx[i]);
                }
            }
            a
        }
        Cone::Soc(n) => {
            if n == 0 {
                return f64::INFINITY;
            }
            soc_step(x, dx)
        }
        Cone::Psd(n) => {
            if n == 0 {
                return f64::INFINITY;
            }
            let xm = smat(n, x);
            let Some(ch) = xm.cholesky() else {
                return 0.0;
            };
            let l = ch.l();
            let dm = smat(n, dx);
            let Some(t) = l.solve_lower_triangular(&dm) else {
                return 0.0;
            };
            let Some(m) = l.solve_lower_triangular(&t.transpose()) else {
                return 0.0;
            };
            let m = (&m + m.transpose()) * 0.5;
            let lmin = SymmetricEigen::new(m).eigenvalues.min();
            if lmin >= 0.0 {
                f64::INFINITY
            } else {
                -1.0 / lmin
            }
        }
    }
}

fn soc_step(x: &[f64], d: &[f64]) -> f64 {
    let tail =
        |u: &[f64], v: &[f64]| -> f64 { u[1..].iter().zip(&v[1..]).map(|(a, b)| a * b).sum() };
    let a = d[0] * d[0] - tail(d, d);
    let b = x[0] * d[0] - tail(x, d);
    let c = (x[0] * x[0] - tail(x, x)).max(0.0);
    let mut best = f64::INFINITY;
    let mut consider = |r: f64| {
        if r > 0.0 && r < best {
            best = r;
        }
    };
    if a.abs() <= 1e-300 {
        if b < 0.0 {
            consider(-c / (2.0 * b));
        }
    } else {
        let disc = b * b - a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            let q = -(b + b.signum() * sq);
            if q != 0.0 {
                consider(q / a);
                consider(c / q);
            } else {
                consider((c / a).abs().sqrt());
            }
        }
    }
    // The head must stay nonnegative as well.
    if d[0] < 0.0 {
        consider(-x[0] / d[0]);
    }
    best
}

/// Nesterov-Todd scaling `W` of one non-free block, with `W s = W^{-T} x = lambda`.
#[derive(Debug, Clone)]
pub enum Scaling {
    Free,
    NonNeg {
        w: Vec<f64>,
    },
    Soc {
        beta: f64,
        v: Vec<f64>,
    },
    Psd {
        n: usize,
        r: DMatrix<f64>,
        rinv: DMatrix<f64>,
        eig: Vec<f64>,
    },
}

impl Scaling {
    /// Computes the scaling and the scaled point `lambda`. Returns `None` if
    /// either point is not strictly interior.
    pub fn new(cone: Cone, x: &[f64], s: &[f64], lambda: &mut [f64]) -> Option<Scaling> {
        match cone {
            Cone::Free(_) => Some(Scaling::Free),
            Cone::NonNeg(_) => {
                let mut w = Vec::with_capacity(x.len());
                for i in 0..x.len() {
                    if !(x[i] > 0.0 && s[i] > 0.0) {
                        return None;
                    }
                    w.push((x[i] / s[i]).sqrt());
                    lambda[i] = (x[i] * s[i]).sqrt();
                }
                Some(Scaling::NonNeg { w })
            }
            Cone::Soc(n) => {
                if n == 0 {
                    return Some(Scaling::Soc {
                        beta: 1.0,
                        v: Vec::new(),
                    });
                }
                let jnorm = |u: &[f64]| -> Option<f64> {
                    let t: f64 = u[1..].iter().map(|v| v * v).sum::<f64>();
                    let q = (u[0] - t.sqrt()) * (u[0] + t.sqrt());
                    (u[0] > 0.0 && q > 0.0).then(|| q.sqrt())
                };
                let nx = jnorm(x)?;
                let ns = jnorm(s)?;
                let xb: Vec<f64> = x.iter().map(|v| v / nx).collect();
                let sb: Vec<f64> = s.iter().map(|v| v / ns).collect();
                let dot: f64 = xb.iter().zip(&sb).map(|(a, b)| a * b).sum();
                let gamma = ((1.0 + dot) / 2.0).sqrt();
                let mut wb = vec![0.0; n];
                wb[0] = (xb[0] + sb[0]) / (2.0 * gamma);
                for i in 1..n {
                    wb[i] = (xb[i] - sb[i]) / (2.0 * gamma);
                }
                let denom = (2.0 * (wb[0] + 1.0)).sqrt();
                let mut v = wb;
                v[0] += 1.0;
                v.iter_mut().for_each(|e| *e /= denom);
                let sc = Scaling::Soc {
                    beta: (nx / ns).sqrt(),
                    v,
                };
                sc.apply_w(s, lambda);
                Some(sc)
            }
            Cone::Psd(n) => {
                if n == 0 {
                    return Some(Scaling::Psd {
                        n,
                        r: DMatrix::zeros(0, 0),
                        rinv: DMatrix::zeros(0, 0),
                        eig: Vec::new(),
                    });
                }
                let l1 = smat(n, x).cholesky()?.l();
                let l2 = smat(n, s).cholesky()?.l();
                let svd = (l2.transpose() * &l1).svd(true, true);
                let (u, vt) = (svd.u?, svd.v_t?);
                let sig = svd.singular_values;
                if sig.iter().any(|&g| !(g > 0.0)) {
                    return None;
                }
                let mut r = &l1 * vt.transpose();
                for j in 0..n {
                    let f = 1.0 / sig[j].sqrt();
                    r.column_mut(j).scale_mut(f);
                }
                // R^{-1} = S^{-1/2} U' L2' avoids inverting a nearly singular L1
                let mut rinv = u.transpose() * l2.transpose();
                for i in 0..n {
                    let f = 1.0 / sig[i].sqrt();
                    rinv.row_mut(i).scale_mut(f);
                }
                lambda.iter_mut().for_each(|e| *e = 0.0);
                for j in 0..n {
                    lambda[svec_index(n, j, j)] = sig[j];
                }
                Some(Scaling::Psd {
                    n,
                    r,
                    rinv,
                    eig: sig.iter().copied().collect(),
                })
            }
        }
    }

    /// `out = W u`
    pub fn apply_w(&self, u: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Free => out.iter_mut().for_each(|o| *o = 0.0),
            Scaling::NonNeg { w } => {
                for i in 0..w.len() {
                    out[i] = w[i] * u[i];
                }
            }
            Scaling::Soc { beta, v } => {
                // beta (2 v v^T - J) u
                let vu: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                out[0] = beta * (2.0 * v[0] * vu - u[0]);
                for i in 1..v.len() {
                    out[i] = beta * (2.0 * v[i] * vu + u[i]);
                }
            }
            Scaling::Psd { n, r, .. } => {
                let m = r.transpose() * smat(*n, u) * r;
                svec(&m, out);
            }
        }
    }

    /// `out = W^{-1} u`
    pub fn apply_winv(&self, u: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Free => out.iter_mut().for_each(|o| *o = 0.0),
            Scaling::NonNeg { w } => {
                for i in 0..w.len() {
                    out[i] = u[i] / w[i];
                }
            }
            Scaling::Soc { beta, v } => {
                // (1/beta) (2 J v v^T J - J) u
                let jv_u: f64 =
                    v[0] * u[0] - v[1..].iter().zip(&u[1..]).map(|(a, b)| a * b).sum::<f64>();
                out[0] = (2.0 * v[0] * jv_u - u[0]) / beta;
                for i in 1..v.len() {
                    out[i] = (-2.0 * v[i] * jv_u + u[i]) / beta;
                }
            }
            Scaling::Psd { n, rinv, .. } => {
                let m = rinv.transpose() * smat(*n, u) * rinv;
                svec(&m, out);
            }
        }
    }

    /// `out = W^{-T} u`
    pub fn apply_winv_t(&self, u: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Psd { n, rinv, .. } => {
                let m = rinv * smat(*n, u) * rinv.transpose();
                svec(&m, out);
            }
            _ => self.apply_winv(u, out),
        }
    }

    /// Solves `lambda o u = d` for `u`.
    pub fn lambda_div(&self, lambda: &[f64], d: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Free => out.iter_mut().for_each(|o| *o = 0.0),
            Scaling::NonNeg { .. } => {
                for i in 0..d.len() {
                    out[i] = d[i] / lambda[i];
                }
            }
            Scaling::Soc { .. } => {
                let n = d.len();
                if n == 0 {
                    return;
                }
                let l1d1: f64 = lambda[1..].iter().zip(&d[1..]).map(|(a, b)| a * b).sum();
                let l1l1: f64 = lambda[1..].iter().map(|a| a * a).sum();
                let u0 = (lambda[0] * d[0] - l1d1)
                    / ((lambda[0] - l1l1.sqrt()) * (lambda[0] + l1l1.sqrt()));
                out[0] = u0;
                for i in 1..n {
                    out[i] = (d[i] - u0 * lambda[i]) / lambda[0];
                }
            }
            Scaling::Psd { n, eig, .. } => {
                let mut k = 0;
                for j in 0..*n {
                    for i in j..*n {
                        out[k] = 2.0 * d[k] / (eig[i] + eig[j]);
                        k += 1;
                    }
                }
            }
        }
    }

    /// Dense `H = (W^T W)^{-1}` of the block, row-major `dim x dim`.
    /// Only used for SOC and PSD blocks.
    pub fn hessian_dense(&self) -> Vec<f64> {
        match self {
            Scaling::Free => Vec::new(),
            Scaling::NonNeg { w } => {
                let d = w.len();
                let mut h = vec![0.0; d * d];
                for i in 0..d {
                    h[i * d + i] = 1.0 / (w[i] * w[i]);
                }
                h
            }
            Scaling::Soc { beta, v } => {
                // W^{-2} = (1/beta^2) (2 J v v^T J - J)^2, with Jv = (v0, -v1).
                let d = v.len();
                let jv: Vec<f64> = v
                    .iter()
                    .enumerate()
                    .map(|(i, e)| if i == 0 { *e } else { -*e })
                    .collect();
                let mut m = vec![0.0; d * d];
                for i in 0..d {
                    for j in 0..d {
                        let jij = if i != j {
                            0.0
                        } else if i == 0 {
                            1.0
                        } else {
                            -1.0
                        };
                        m[i * d + j] = 2.0 * jv[i] * jv[j] - jij;
                    }
                }
                let b2 = beta * beta;
                let mut h = vec![0.0; d * d];
                for i in 0..d {
                    for j in 0..d {
                        let mut acc = 0.0;
                        for k in 0..d {
                            acc += m[i * d + k] * m[k * d + j];
                        }
                        h[i * d + j] = acc / b2;
                    }
                }
                h
            }
            Scaling::Psd { n, rinv, .. } => {
                // H(Z) = P Z P with P = R^{-T} R^{-1}.
                let n = *n;
                let p = rinv.transpose() * rinv;
                let d = svec_len(n);
                let mut h = vec![0.0; d * d];
                let mut col = DMatrix::zeros(n, n);
                let mut buf = vec![0.0; d];
                let mut k = 0;
                for j in 0..n {
                    for i in j..n {
                        // P E P with E the svec basis element for (i, j).
                        let (pi, pj) = (p.column(i), p.column(j));
                        if i == j {
                            col.copy_from(&(pi * pi.transpose()));
                        } else {
                            col.copy_from(&((pi * pj.transpose() + pj * pi.transpose()) / SQRT_2));
                        }
                        svec(&col, &mut buf);
                        for (r, val) in buf.iter().enumerate() {
                            h[r * d + k] = *val;
                        }
                        k += 1;
                    }
                }
                h
            }
        }
    }
}

/// Convenience for tests and callers that want `lambda o lambda`.
pub fn lambda_sq(cone: Cone, lambda: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; lambda.len()];
    jordan_prod(cone, lambda, lambda, &mut out);
    out
}
