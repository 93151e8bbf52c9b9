//! Load and renewable fluctuations, scenario sampling and the affine
//! deployment of the active-power mismatch.

mod io;

pub use io::{read_jsonl, write_jsonl};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::netmodel::Network;

#[derive(Debug, Error)]
pub enum UncertaintyError {
    #[error("invalid uncertainty model: {0}")]
    Invalid(String),
    #[error("deployment vector invalid: {0}")]
    Deployment(String),
    #[error("scenario file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Support and distribution of one complex fluctuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Support {
    /// No fluctuation.
    #[default]
    PointZero,
    /// Uniform on the rectangle `[re_min, re_max] x [im_min, im_max]`.
    Box { re: [f64; 2], im: [f64; 2] },
    /// Zero-mean normal in `(re, im)` with the given covariance.
    Gaussian { cov: [[f64; 2]; 2] },
    /// Real part `lo + (hi - lo) X` with `X ~ Beta(a, b)`; zero imaginary part.
    Beta { a: f64, b: f64, lo: f64, hi: f64 },
}

impl Support {
    /// Wind profile: Beta(2, 5) scaled to `[-p0, cap]`.
    pub fn wind(p0: f64, cap: f64) -> Self {
        Support::Beta {
            a: 2.0,
            b: 5.0,
            lo: -p0,
            hi: cap,
        }
    }

    pub fn is_point(&self) -> bool {
        matches!(self, Support::PointZero)
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self, Support::Gaussian { .. })
    }

    fn validate(&self) -> Result<(), String> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Support::PointZero => Ok(()),
            Support::Box { re, im } => {
                if !finite(re) || !finite(im) || re[0] > re[1] || im[0] > im[1] {
                    Err(format!("box bounds {re:?} {im:?} are not ordered"))
                } else {
                    Ok(())
                }
            }
            Support::Gaussian { cov } => {
                let [[a, b], [c, d]] = *cov;
                if !finite(&[a, b, c, d]) || b != c || a < 0.0 || d < 0.0 || a * d - b * b < -1e-15
                {
                    Err(format!("covariance {cov:?} is not symmetric PSD"))
                } else {
                    Ok(())
                }
            }
            Support::Beta { a, b, lo, hi } => {
                if !(*a > 0.0 && *b > 0.0) || !finite(&[*lo, *hi]) || lo > hi {
                    Err(format!("beta support a={a} b={b} [{lo}, {hi}] invalid"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Whether `z` lies in the support (always true for Gaussian).
    pub fn contains(&self, z: Complex64) -> bool {
        match self {
            Support::PointZero => z == Complex64::new(0.0, 0.0),
            Support::Box { re, im } => {
                (re[0]..=re[1]).contains(&z.re) && (im[0]..=im[1]).contains(&z.im)
            }
            Support::Gaussian { .. } => true,
            Support::Beta { lo, hi, .. } => (*lo..=*hi).contains(&z.re) && z.im == 0.0,
        }
    }

    /// Scales the support about zero by `t` (`t = 0` collapses it).
    pub fn scaled(&self, t: f64) -> Self {
        match self {
            Support::PointZero => Support::PointZero,
            Support::Box { re, im } => Support::Box {
                re: [t * re[0], t * re[1]],
                im: [t * im[0], t * im[1]],
            },
            Support::Gaussian { cov } => Support::Gaussian {
                cov: [
                    [t * t * cov[0][0], t * t * cov[0][1]],
                    [t * t * cov[1][0], t * t * cov[1][1]],
                ],
            },
            Support::Beta { a, b, lo, hi } => Support::Beta {
                a: *a,
                b: *b,
                lo: t * lo,
                hi: t * hi,
            },
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Complex64 {
        match self {
            Support::PointZero => Complex64::new(0.0, 0.0),
            Support::Box { re, im } => Complex64::new(uniform(rng, re), uniform(rng, im)),
            Support::Gaussian { cov } => {
                let z0: f64 = StandardNormal.sample(rng);
                let z1: f64 = StandardNormal.sample(rng);
                let l00 = cov[0][0].sqrt();
                let l10 = if l00 > 0.0 { cov[1][0] / l00 } else { 0.0 };
                let l11 = (cov[1][1] - l10 * l10).max(0.0).sqrt();
                Complex64::new(l00 * z0, l10 * z0 + l11 * z1)
            }
            Support::Beta { a, b, lo, hi } => {
                let x: f64 = rand_distr::Beta::new(*a, *b)
                    .expect("validated parameters")
                    .sample(rng);
                Complex64::new((lo + (hi - lo) * x).clamp(*lo, *hi), 0.0)
            }
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: &[f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

/// Fluctuation sources at one bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct BusUncertainty {
    /// Nominal renewable injection `P^R0 + i Q^R0`.
    #[serde(default)]
    pub renewable_p0: f64,
    #[serde(default)]
    pub renewable_q0: f64,
    #[serde(default)]
    pub renewable: Support,
    #[serde(default)]
    pub load: Support,
}

/// Per-bus supports, in per-unit on the case base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyModel {
    #[serde(default)]
    pub name: String,
    pub buses: Vec<BusUncertainty>,
}

impl UncertaintyModel {
    /// No fluctuation anywhere.
    pub fn point(net: &Network) -> Self {
        UncertaintyModel {
            name: "point".into(),
            buses: vec![BusUncertainty::default(); net.n_bus()],
        }
    }

    pub fn from_json(text: &str) -> Result<Self, UncertaintyError> {
        serde_json::from_str(text).map_err(|e| UncertaintyError::Invalid(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn validate(&self, net: &Network) -> Result<(), UncertaintyError> {
        if self.buses.len() != net.n_bus() {
            return Err(UncertaintyError::Invalid(format!(
                "{} bus entries for a {}-bus network",
                self.buses.len(),
                net.n_bus()
            )));
        }
        for (k, b) in self.buses.iter().enumerate() {
            let bus = &net.buses[k];
            if !bus.renewable
                && (!b.renewable.is_point() || b.renewable_p0 != 0.0 || b.renewable_q0 != 0.0)
            {
                return Err(UncertaintyError::Invalid(format!(
                    "bus {k} has no renewable source"
                )));
            }
            b.renewable
                .validate()
                .and(b.load.validate())
                .map_err(|m| UncertaintyError::Invalid(format!("bus {k}: {m}")))?;
        }
        Ok(())
    }

    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    pub fn is_degenerate(&self) -> bool {
        self.buses
            .iter()
            .all(|b| b.renewable.is_point() && b.load.is_point())
    }

    pub fn is_bounded(&self) -> bool {
        self.buses
            .iter()
            .all(|b| b.renewable.is_bounded() && b.load.is_bounded())
    }

    /// Every support scaled about zero by `t`.
    pub fn scaled(&self, t: f64) -> Self {
        UncertaintyModel {
            name: self.name.clone(),
            buses: self
                .buses
                .iter()
                .map(|b| BusUncertainty {
                    renewable: b.renewable.scaled(t),
                    load: b.load.scaled(t),
                    ..b.clone()
                })
                .collect(),
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(
            serde_json::to_vec(self).expect("model serializes"),
        ))
    }

    /// Net complex load per bus: nominal load minus nominal renewable plus
    /// the load fluctuation minus the renewable fluctuation.
    pub fn net_load(&self, net: &Network, delta: &UncertaintyVector) -> Vec<Complex64> {
        let n = net.n_bus();
        (0..n)
            .map(|k| {
                let b = &self.buses[k];
                Complex64::new(
                    net.buses[k].pd - b.renewable_p0,
                    net.buses[k].qd - b.renewable_q0,
                ) + delta.load(k)
                    - delta.renewable(k)
            })
            .collect()
    }

    /// One draw, a function of `(seed, index)` only.
    pub fn draw(&self, seed: u64, index: u64) -> UncertaintyVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let n = self.n_bus();
        let mut delta = vec![Complex64::new(0.0, 0.0); 2 * n];
        for (k, b) in self.buses.iter().enumerate() {
            delta[k] = b.load.draw(&mut rng);
            delta[n + k] = b.renewable.draw(&mut rng);
        }
        UncertaintyVector { delta, seed, index }
    }

    /// True when some Gaussian entry of `delta` lies outside the box of
    /// `sigmas` marginal standard deviations around zero.
    pub fn is_tail(&self, delta: &UncertaintyVector, sigmas: f64) -> bool {
        let n = self.n_bus();
        let outside = |s: &Support, z: Complex64| match s {
            Support::Gaussian { cov } => {
                z.re.abs() > sigmas * cov[0][0].sqrt() || z.im.abs() > sigmas * cov[1][1].sqrt()
            }
            _ => false,
        };
        self.buses.iter().enumerate().any(|(k, b)| {
            outside(&b.load, delta.delta[k]) || outside(&b.renewable, delta.delta[n + k])
        })
    }

    /// True when every entry of `delta` lies in its support.
    pub fn contains(&self, delta: &UncertaintyVector) -> bool {
        let n = self.n_bus();
        delta.delta.len() == 2 * n
            && self.buses.iter().enumerate().all(|(k, b)| {
                b.load.contains(delta.delta[k]) && b.renewable.contains(delta.delta[n + k])
            })
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// `[load fluctuations; renewable fluctuations]`, one complex entry per bus each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyVector {
    pub delta: Vec<Complex64>,
    pub seed: u64,
    pub index: u64,
}

impl UncertaintyVector {
    pub fn zero(n: usize) -> Self {
        UncertaintyVector {
            delta: vec![Complex64::new(0.0, 0.0); 2 * n],
            seed: 0,
            index: 0,
        }
    }

    pub fn n_bus(&self) -> usize {
        self.delta.len() / 2
    }

    pub fn load(&self, k: usize) -> Complex64 {
        self.delta[k]
    }

    pub fn renewable(&self, k: usize) -> Complex64 {
        self.delta[self.n_bus() + k]
    }
}

/// `s^T Re(delta)` with `s = [1; -1]`: positive means extra net demand.
pub fn mismatch(delta: &UncertaintyVector) -> f64 {
    let n = delta.n_bus();
    let load: f64 = delta.delta[..n].iter().map(|z| z.re).sum();
    let ren: f64 = delta.delta[n..].iter().map(|z| z.re).sum();
    load - ren
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentVector {
    pub alpha: Vec<f64>,
}

impl DeploymentVector {
    pub fn new(alpha: Vec<f64>) -> Result<Self, UncertaintyError> {
        if alpha.is_empty() || alpha.iter().any(|a| !(*a >= 0.0)) {
            return Err(UncertaintyError::Deployment(format!(
                "{alpha:?} has negative entries"
            )));
        }
        let s: f64 = alpha.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(UncertaintyError::Deployment(format!("entries sum to {s}")));
        }
        Ok(DeploymentVector { alpha })
    }

    /// Projects solver output onto the simplex by clipping and rescaling.
    pub fn normalized(raw: &[f64]) -> Result<Self, UncertaintyError> {
        let clipped: Vec<f64> = raw.iter().map(|a| a.max(0.0)).collect();
        let s: f64 = clipped.iter().sum();
        if !(s > 0.0) || !s.is_finite() {
            return Err(UncertaintyError::Deployment(format!(
                "{raw:?} cannot be normalized"
            )));
        }
        Ok(DeploymentVector {
            alpha: clipped.iter().map(|a| a / s).collect(),
        })
    }

    pub fn uniform(n: usize) -> Self {
        DeploymentVector {
            alpha: vec![1.0 / n as f64; n],
        }
    }
}

/// `P_k + alpha_k * mismatch(delta)`.
pub fn deploy(pg: &[f64], alpha: &DeploymentVector, delta: &UncertaintyVector) -> Vec<f64> {
    assert_eq!(
        pg.len(),
        alpha.alpha.len(),
        "dispatch and deployment dimensions differ"
    );
    let m = mismatch(delta);
    pg.iter()
        .zip(&alpha.alpha)
        .map(|(p, a)| p + a * m)
        .collect()
}

/// Scenarios with their provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub seed: u64,
    pub model_hash: String,
    pub eps: Option<f64>,
    pub beta: Option<f64>,
    pub scenarios: Vec<UncertaintyVector>,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }
}

/// `n` independent draws; draw `i` uses stream `i` of the seeded generator.
pub fn sample(model: &UncertaintyModel, n: usize, seed: u64) -> ScenarioSet {
    ScenarioSet {
        seed,
        model_hash: model.hash(),
        eps: None,
        beta: None,
        scenarios: (0..n as u64).map(|i| model.draw(seed, i)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(delta: Vec<Complex64>) -> UncertaintyVector {
        UncertaintyVector {
            delta,
            seed: 0,
            index: 0,
        }
    }

    fn r(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn mismatch_signs() {
        assert_eq!(mismatch(&UncertaintyVector::zero(3)), 0.0);
        assert_eq!(mismatch(&v(vec![r(0.0), r(0.0), r(0.0), r(0.2)])), -0.2);
        let m = mismatch(&v(vec![r(0.3), r(0.0), r(0.0), r(0.1)]));
        assert!((m - 0.2).abs() < 1e-15);
    }

    #[test]
    fn deploy_shares_the_mismatch() {
        let a = DeploymentVector::new(vec![0.6, 0.4]).unwrap();
        let p = deploy(&[1.0, 2.0], &a, &v(vec![r(1.0), r(0.0), r(0.0), r(0.0)]));
        assert_eq!(p, vec![1.6, 2.4]);
        assert_eq!(
            deploy(&[1.0, 2.0], &a, &UncertaintyVector::zero(2)),
            vec![1.0, 2.0]
        );
    }

    #[test]
    fn deployment_vector_checks() {
        assert!(DeploymentVector::new(vec![0.5, 0.6]).is_err());
        assert!(DeploymentVector::new(vec![1.1, -0.1]).is_err());
        let d = DeploymentVector::normalized(&[0.5 + 1e-9, 0.5, -1e-10]).unwrap();
        assert!((d.alpha.iter().sum::<f64>() - 1.0).abs() <= 1e-15);
        assert_eq!(d.alpha[2], 0.0);
    }

    #[test]
    fn support_json_shape() {
        let s: Support =
            serde_json::from_str(r#"{"kind":"box","re":[-0.1,0.1],"im":[0,0]}"#).unwrap();
        assert!(matches!(s, Support::Box { .. }));
        assert!(serde_json::from_str::<Support>(r#"{"kind":"box","re":[0,1]}"#).is_err());
    }
}
