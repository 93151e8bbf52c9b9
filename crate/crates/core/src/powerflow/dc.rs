//! Linearized active-power model: flat magnitudes, small angle differences,
//! conductances neglected.

use nalgebra::{DMatrix, DVector};

use crate::netmodel::Network;

/// `P = B' theta` over all buses, with `B'_kl = B_kl` off the diagonal and
/// `B'_kk = -sum_l B_kl`, `B_kl` the series susceptance.
#[derive(Debug, Clone)]
pub struct DcModel {
    pub b: DMatrix<f64>,
}

pub fn dc_linearize(net: &Network) -> DcModel {
    let n = net.n_bus();
    let mut b = DMatrix::zeros(n, n);
    for l in &net.lines {
        // a line with susceptance B carries -B (theta_from - theta_to)
        let w = -l.y.im;
        b[(l.from, l.from)] += w;
        b[(l.to, l.to)] += w;
        b[(l.from, l.to)] -= w;
        b[(l.to, l.from)] -= w;
    }
    DcModel { b }
}

impl DcModel {
    pub fn n(&self) -> usize {
        self.b.nrows()
    }

    /// Active injections for the given angles.
    pub fn injections(&self, theta: &[f64]) -> Vec<f64> {
        (&self.b * DVector::from_column_slice(theta))
            .iter()
            .copied()
            .collect()
    }

    /// Angles (slack at 0) producing the given injections at non-slack buses.
    pub fn angles(&self, p: &[f64]) -> Option<Vec<f64>> {
        let n = self.n();
        let red = self.b.view((1, 1), (n - 1, n - 1)).into_owned();
        let rhs = DVector::from_iterator(n - 1, p[1..].iter().copied());
        let th = red.lu().solve(&rhs)?;
        let mut out = vec![0.0; n];
        out[1..].copy_from_slice(th.as_slice());
        Some(out)
    }

    /// Flow on each line, from-to direction.
    pub fn flows(&self, net: &Network, theta: &[f64]) -> Vec<f64> {
        net.lines
            .iter()
            .map(|l| -l.y.im * (theta[l.from] - theta[l.to]))
            .collect()
    }
}
