use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use super::SwcError;

/// Risk level, confidence and number of shared decision variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleComplexitySpec {
    pub eps: f64,
    pub beta: f64,
    pub n_u: usize,
}

impl SampleComplexitySpec {
    pub fn new(eps: f64, beta: f64, n_u: usize) -> Result<Self, SwcError> {
        let s = SampleComplexitySpec { eps, beta, n_u };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SwcError> {
        let open = |x: f64| x > 0.0 && x < 1.0;
        if !open(self.eps) || !open(self.beta) || self.n_u == 0 {
            return Err(SwcError::InvalidSpec(format!(
                "need 0 < eps < 1, 0 < beta < 1, n_u >= 1 (got eps={}, beta={}, n_u={})",
                self.eps, self.beta, self.n_u
            )));
        }
        Ok(())
    }
}

/// `ceil(e / (eps (e - 1)) (ln(1/beta) + n_u - 1))`.
pub fn n_swc_explicit(spec: &SampleComplexitySpec) -> Result<usize, SwcError> {
    spec.validate()?;
    let e = std::f64::consts::E;
    let n = e / (spec.eps * (e - 1.0)) * ((1.0 / spec.beta).ln() + spec.n_u as f64 - 1.0);
    Ok(n.ceil() as usize)
}

/// `P(Binomial(n, eps) <= k)`, via the regularized incomplete beta function.
pub fn binomial_tail(n: usize, k: usize, eps: f64) -> f64 {
    if n <= k {
        return 1.0;
    }
    beta_reg((n - k) as f64, (k + 1) as f64, 1.0 - eps)
}

/// Smallest `N` with `P(Binomial(N, eps) <= n_u - 1) <= beta`.
pub fn n_swc_exact(spec: &SampleComplexitySpec) -> Result<usize, SwcError> {
    spec.validate()?;
    let k = spec.n_u - 1;
    let ok = |n: usize| binomial_tail(n, k, spec.eps) <= spec.beta;
    let mut hi = n_swc_explicit(spec)?.max(k + 1);
    while !ok(hi) {
        hi *= 2;
    }
    // the tail is 1 for n <= k
    let mut lo = k;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
