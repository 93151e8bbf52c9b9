//! Real embedding of complex Hermitian PSD constraints.
//!
//! `H = A + iB` is PSD exactly when the real symmetric matrix
//! `[[A, -B], [B, A]]` is PSD. The embedding has order `2n`; its spectrum is
//! the spectrum of `H` with every eigenvalue repeated twice.
//!
//! The forms below average the two copies of every entry, so any program
//! written through them is invariant under `Y -> J Y J^T` with
//! `J = [[0, -I], [I, 0]]`. Averaging a solution over that map yields the
//! block structure, and the central path of an interior-point method already
//! has it. The tie rows are therefore redundant and are only kept for checks.

use nalgebra::DMatrix;
use num_complex::Complex64;
use std::f64::consts::FRAC_1_SQRT_2;

use super::cones::{svec_index, svec_len, Cone};

/// Linear form over the svec coordinates of one PSD block.
pub type LinearForm = Vec<(usize, f64)>;

#[derive(Debug, Clone)]
pub struct HermitianEmbedding {
    pub n: usize,
    /// Homogeneous rows forcing the `[[A, -B], [B, A]]` structure.
    pub ties: Vec<LinearForm>,
}

/// Builds the embedding for a complex Hermitian matrix of order `n`.
pub fn embed_hermitian(n: usize) -> HermitianEmbedding {
    assert!(n >= 1, "Hermitian order must be positive");
    let m = 2 * n;
    let mut ties = Vec::with_capacity(n * n + n);
    for k in 0..n {
        for l in k..n {
            ties.push(vec![
                (svec_index(m, k, l), 1.0),
                (svec_index(m, n + k, n + l), -1.0),
            ]);
        }
    }
    for k in 0..n {
        for l in k + 1..n {
            ties.push(vec![
                (svec_index(m, n + k, l), 1.0),
                (svec_index(m, n + l, k), 1.0),
            ]);
        }
    }
    for k in 0..n {
        ties.push(vec![(svec_index(m, n + k, k), 1.0)]);
    }
    HermitianEmbedding { n, ties }
}

impl HermitianEmbedding {
    pub fn cone(&self) -> Cone {
        Cone::Psd(2 * self.n)
    }

    pub fn dim(&self) -> usize {
        svec_len(2 * self.n)
    }

    /// `Re W_kl` as a linear form in the svec coordinates.
    pub fn re(&self, k: usize, l: usize) -> LinearForm {
        let (m, n) = (2 * self.n, self.n);
        let c = if k == l { 0.5 } else { 0.5 * FRAC_1_SQRT_2 };
        vec![(svec_index(m, k, l), c), (svec_index(m, n + k, n + l), c)]
    }

    /// `Im W_kl` as a linear form in the svec coordinates.
    pub fn im(&self, k: usize, l: usize) -> LinearForm {
        if k == l {
            return Vec::new();
        }
        let (m, n) = (2 * self.n, self.n);
        let c = 0.5 * FRAC_1_SQRT_2;
        vec![(svec_index(m, n + k, l), c), (svec_index(m, n + l, k), -c)]
    }

    /// Reads the complex matrix back from svec coordinates.
    pub fn extract(&self, x: &[f64]) -> DMatrix<Complex64> {
        let n = self.n;
        let eval = |f: &LinearForm| f.iter().map(|&(i, c)| c * x[i]).sum::<f64>();
        let mut h = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for k in 0..n {
            for l in 0..n {
                h[(k, l)] = Complex64::new(eval(&self.re(k, l)), eval(&self.im(k, l)));
            }
        }
        // symmetrize away solver noise
        let ht = h.adjoint();
        (h + ht) * Complex64::new(0.5, 0.0)
    }

    /// Embeds a complex matrix into svec coordinates.
    pub fn lift(&self, h: &DMatrix<Complex64>) -> Vec<f64> {
        super::cones::svec_vec(&real_block(h))
    }
}

/// The real `2n x 2n` block matrix of a complex matrix.
pub fn real_block(h: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = h.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        for l in 0..n {
            let (a, b) = (h[(k, l)].re, h[(k, l)].im);
            m[(k, l)] = a;
            m[(n + k, n + l)] = a;
            m[(n + k, l)] = b;
            m[(k, n + l)] = -b;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::cones::smat;

    #[test]
    fn tie_count_and_free_dimension() {
        for n in 1..6 {
            let e = embed_hermitian(n);
            assert_eq!(e.ties.len(), n * n + n);
            assert_eq!(e.dim() - e.ties.len(), n * n);
        }
    }

    #[test]
    fn lift_satisfies_ties_and_extracts_back() {
        let h = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(2.0, 0.0),
                Complex64::new(0.3, -0.4),
                Complex64::new(0.3, 0.4),
                Complex64::new(1.0, 0.0),
            ],
        );
        let e = embed_hermitian(2);
        let x = e.lift(&h);
        for t in &e.ties {
            let v: f64 = t.iter().map(|&(i, c)| c * x[i]).sum();
            assert!(v.abs() < 1e-15);
        }
        assert!((e.extract(&x) - &h).norm() < 1e-14);
        assert!((smat(4, &x) - real_block(&h)).norm() < 1e-14);
    }

    #[test]
    fn scalar_case_is_diagonal() {
        let h = DMatrix::from_element(1, 1, Complex64::new(0.7, 0.0));
        let m = real_block(&h);
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[0.7, 0.0, 0.0, 0.7]));
    }
}
