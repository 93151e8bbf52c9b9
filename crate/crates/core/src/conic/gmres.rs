//! Restarted GMRES with a right preconditioner.
//!
//! Used to solve the unregularized Newton system with the regularized
//! factorization as preconditioner. Plain iterative refinement contracts
//! like `delta / (lambda + delta)` along directions where the system is
//! nearly singular; a Krylov method removes those few outliers in as many
//! iterations.

use super::sparse::{dot, norm2};

/// Improves `x` toward `a(x) = b` and returns the final residual 2-norm.
///
/// `precond` overwrites its argument with the preconditioned vector.
pub fn gmres(
    a: impl Fn(&[f64], &mut [f64]),
    precond: impl Fn(&mut [f64]),
    b: &[f64],
    x: &mut [f64],
    restart: usize,
    cycles: usize,
    tol: f64,
) -> f64 {
    let dim = b.len();
    let restart = restart.max(1);
    let mut ax = vec![0.0; dim];
    let residual = |x: &[f64], ax: &mut Vec<f64>| -> Vec<f64> {
        a(x, ax);
        b.iter().zip(ax.iter()).map(|(bi, ai)| bi - ai).collect()
    };
    let mut r = residual(x, &mut ax);
    let mut beta = norm2(&r);
    for _ in 0..cycles {
        if !(beta > tol) {
            break;
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        // Hessenberg columns after rotation, stored as upper triangles
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(restart);
        let mut rot: Vec<(f64, f64)> = Vec::with_capacity(restart);
        let mut g = vec![beta];
        let mut z = vec![0.0; dim];
        let mut w = vec![0.0; dim];
        for j in 0..restart {
            z.copy_from_slice(&v[j]);
            precond(&mut z);
            a(&z, &mut w);
            let mut col = vec![0.0; j + 2];
            // modified Gram-Schmidt, twice
            for _ in 0..2 {
                for (i, vi) in v.iter().enumerate() {
                    let c = dot(&w, vi);
                    col[i] += c;
                    w.iter_mut().zip(vi).for_each(|(wk, vk)| *wk -= c * vk);
                }
            }
            let hn = norm2(&w);
            col[j + 1] = hn;
            for (i, &(c, s)) in rot.iter().enumerate() {
                let (p, q) = (col[i], col[i + 1]);
                col[i] = c * p + s * q;
                col[i + 1] = -s * p + c * q;
            }
            let (p, q) = (col[j], col[j + 1]);
            let d = p.hypot(q);
            let (c, s) = if d == 0.0 { (1.0, 0.0) } else { (p / d, q / d) };
            col[j] = d;
            col.truncate(j + 1);
            rot.push((c, s));
            g.push(-s * g[j]);
            g[j] *= c;
            h.push(col);
            if !(hn > 0.0) || !(g[j + 1].abs() > tol) {
                break;
            }
            v.push(w.iter().map(|wk| wk / hn).collect());
        }
        // back substitution for the Krylov coefficients
        let k = h.len();
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for (l, yl) in y.iter().enumerate().skip(i + 1) {
                acc -= h[l][i] * yl;
            }
            y[i] = if h[i][i] != 0.0 { acc / h[i][i] } else { 0.0 };
        }
        let mut dx = vec![0.0; dim];
        for (yi, vi) in y.iter().zip(&v) {
            dx.iter_mut().zip(vi).for_each(|(d, vk)| *d += yi * vk);
        }
        precond(&mut dx);
        let trial: Vec<f64> = x.iter().zip(&dx).map(|(xi, di)| xi + di).collect();
        let r_trial = residual(&trial, &mut ax);
        let beta_trial = norm2(&r_trial);
        if !(beta_trial < beta) {
            break;
        }
        x.copy_from_slice(&trial);
        r = r_trial;
        beta = beta_trial;
    }
    beta
}
