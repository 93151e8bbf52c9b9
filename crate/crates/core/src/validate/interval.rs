use statrs::distribution::{Beta, ContinuousCDF};

/// Exact binomial (Clopper–Pearson) interval for `k` successes in `m` trials
/// at confidence `1 - eta`.
///
/// Interior counts split `eta` evenly between the two tails. At `k = 0` the
/// lower end is pinned to 0 and the whole of `eta` goes to the upper tail,
/// giving `1 - eta^(1/m)`; `k = m` mirrors this.
pub fn clopper_pearson(k: usize, m: usize, eta: f64) -> (f64, f64) {
    assert!(m >= 1 && k <= m, "need 0 <= k <= m and m >= 1");
    assert!(
        eta > 0.0 && eta < 1.0,
        "confidence level must lie in (0, 1)"
    );
    let (kf, mf) = (k as f64, m as f64);
    if k == 0 {
        return (0.0, 1.0 - eta.powf(1.0 / mf));
    }
    if k == m {
        return (eta.powf(1.0 / mf), 1.0);
    }
    let lo = Beta::new(kf, mf - kf + 1.0)
        .expect("positive shapes")
        .inverse_cdf(eta / 2.0);
    let hi = Beta::new(kf + 1.0, mf - kf)
        .expect("positive shapes")
        .inverse_cdf(1.0 - eta / 2.0);
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{Binomial, DiscreteCDF};

    #[test]
    fn interior_bounds_hit_their_tail_masses() {
        for &(k, m) in &[(1usize, 10usize), (7, 40), (50, 200), (199, 200)] {
            let (lo, hi) = clopper_pearson(k, m, 0.05);
            // P(X >= k | lo) = eta/2 and P(X <= k | hi) = eta/2
            let upper_tail = 1.0 - Binomial::new(lo, m as u64).unwrap().cdf(k as u64 - 1);
            let lower_tail = Binomial::new(hi, m as u64).unwrap().cdf(k as u64);
            assert!((upper_tail - 0.025).abs() < 1e-9, "{k}/{m}: {upper_tail}");
            assert!((lower_tail - 0.025).abs() < 1e-9, "{k}/{m}: {lower_tail}");
        }
    }

    #[test]
    fn boundary_counts_are_mirrored() {
        let (lo0, hi0) = clopper_pearson(0, 37, 0.1);
        let (lo1, hi1) = clopper_pearson(37, 37, 0.1);
        assert_eq!(lo0, 0.0);
        assert_eq!(hi1, 1.0);
        assert!((hi0 - (1.0 - lo1)).abs() < 1e-15);
    }
}
