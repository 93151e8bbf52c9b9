use std::ops::Range;

use crate::conic::{embed_hermitian, HermitianEmbedding, LinearForm, ProgramBuilder};
use crate::netmodel::Network;

/// Linear forms in the entries of a lifted matrix stored as one embedded
/// Hermitian PSD block.
#[derive(Debug, Clone)]
pub(crate) struct WForms {
    pub range: Range<usize>,
    pub embedding: HermitianEmbedding,
}

impl WForms {
    pub fn add(b: &mut ProgramBuilder, name: &str, n: usize) -> Self {
        let embedding = embed_hermitian(n);
        let range = b.add_block(name, embedding.cone());
        WForms { range, embedding }
    }

    fn shift(&self, f: LinearForm) -> LinearForm {
        f.into_iter()
            .map(|(i, c)| (self.range.start + i, c))
            .collect()
    }

    pub fn re(&self, k: usize, l: usize) -> LinearForm {
        self.shift(self.embedding.re(k, l))
    }

    pub fn im(&self, k: usize, l: usize) -> LinearForm {
        self.shift(self.embedding.im(k, l))
    }

    pub fn diag(&self, k: usize) -> LinearForm {
        self.re(k, k)
    }

    /// `|V_l - V_m|^2 = W_ll + W_mm - 2 Re W_lm`.
    pub fn dv_sq(&self, l: usize, m: usize) -> LinearForm {
        let mut f = self.diag(l);
        f.extend(self.diag(m));
        f.extend(scaled(self.re(l, m), -2.0));
        f
    }

    /// `(W_kk - W_kl) conj(y_kl)` for one line end, as (real, imaginary) forms.
    pub fn line_end(
        &self,
        k: usize,
        l: usize,
        y: num_complex::Complex64,
    ) -> (LinearForm, LinearForm) {
        let (g, bb) = (y.re, y.im);
        // z = (W_kk - a) - i b with W_kl = a + i b
        // Re z conj(y) = (W_kk - a) g - b bb,  Im = -(W_kk - a) bb - b g
        let d = self.diag(k);
        let a = self.re(k, l);
        let im = self.im(k, l);
        let mut p = scaled(d.clone(), g);
        p.extend(scaled(a.clone(), -g));
        p.extend(scaled(im.clone(), -bb));
        let mut q = scaled(d, -bb);
        q.extend(scaled(a, bb));
        q.extend(scaled(im, -g));
        (p, q)
    }

    /// Active and reactive power leaving bus `k` as forms in `W`.
    pub fn injection(&self, net: &Network, k: usize) -> (LinearForm, LinearForm) {
        let (mut p, mut q) = (Vec::new(), Vec::new());
        for &(l, li) in net.neighbors(k) {
            let (a, b) = self.line_end(k, l, net.lines[li].y);
            p.extend(a);
            q.extend(b);
        }
        (p, q)
    }
}

pub(crate) fn scaled(f: LinearForm, c: f64) -> LinearForm {
    f.into_iter().map(|(i, v)| (i, v * c)).collect()
}
