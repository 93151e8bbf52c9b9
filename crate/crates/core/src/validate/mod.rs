//! Out-of-sample Monte Carlo audit of a control decision: per-scenario
//! feasibility checks and exact binomial bounds on the violation probability.

mod interval;
mod sdp;

pub use interval::clopper_pearson;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::Settings;
use crate::netmodel::Network;
use crate::powerflow::{check_limits, solve_pf, InjectionSpec, LimitFamily, PfOptions, Violation};
use crate::swc::{apply_realtime, ControlDecision, SwcSolution};
use crate::uncertainty::{UncertaintyModel, UncertaintyVector};

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error("validation seed {0} equals the training seed; draw fresh samples")]
    SeedReuse(u64),
    #[error("invalid validation input: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Newton power flow on the original equations, then limit checks.
    PfNewton,
    /// Certificate search in the relaxed single-scenario block.
    SdpFeasibility,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViolationFamily {
    #[serde(rename = "PL.1")]
    Pl1,
    #[serde(rename = "PL.2")]
    Pl2,
    #[serde(rename = "VL.1")]
    Vl1,
    #[serde(rename = "VL.2")]
    Vl2,
    /// No state satisfies the balance equations (or none was found).
    #[serde(rename = "PF-infeasible")]
    PfInfeasible,
}

impl From<LimitFamily> for ViolationFamily {
    fn from(f: LimitFamily) -> Self {
        match f {
            LimitFamily::Pl1 => ViolationFamily::Pl1,
            LimitFamily::Pl2 => ViolationFamily::Pl2,
            LimitFamily::Vl1 => ViolationFamily::Vl1,
            LimitFamily::Vl2 => ViolationFamily::Vl2,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CheckOptions {
    pub method: Method,
    pub pf: PfOptions,
    /// Slack allowed on every operating limit before it counts as violated.
    pub limit_tol: f64,
    pub settings: Settings,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            method: Method::PfNewton,
            pf: PfOptions::default(),
            limit_tol: 1e-6,
            settings: Settings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioCheck {
    pub feasible: bool,
    pub method: Method,
    /// Families with at least one violated constraint, without repeats.
    pub families: Vec<ViolationFamily>,
    /// Individual limit violations (power-flow method only).
    pub violations: Vec<Violation>,
    pub detail: Option<String>,
}

impl ScenarioCheck {
    fn from_families(
        method: Method,
        mut families: Vec<ViolationFamily>,
        detail: Option<String>,
    ) -> Self {
        families.sort();
        families.dedup();
        ScenarioCheck {
            feasible: families.is_empty(),
            method,
            families,
            violations: Vec::new(),
            detail,
        }
    }
}

/// Whether the decision admits a feasible operating state under `delta`.
pub fn check_scenario(
    net: &Network,
    model: &UncertaintyModel,
    dec: &ControlDecision,
    delta: &UncertaintyVector,
    opts: &CheckOptions,
) -> ScenarioCheck {
    match opts.method {
        Method::PfNewton => check_pf(net, model, dec, delta, opts),
        Method::SdpFeasibility => {
            let v = sdp::check(net, model, dec, delta, &opts.settings, opts.limit_tol);
            ScenarioCheck::from_families(Method::SdpFeasibility, v.families, v.detail)
        }
    }
}

fn check_pf(
    net: &Network,
    model: &UncertaintyModel,
    dec: &ControlDecision,
    delta: &UncertaintyVector,
    opts: &CheckOptions,
) -> ScenarioCheck {
    // the network as seen in this scenario: loads net of renewables
    let mut scen = net.clone();
    for (bus, s) in scen.buses.iter_mut().zip(model.net_load(net, delta)) {
        bus.pd = s.re;
        bus.qd = s.im;
    }
    let set = apply_realtime(dec, delta);
    let mut vm = vec![1.0; net.n_bus()];
    for (g, v) in net.generators.iter().zip(&set.vm) {
        vm[g.bus] = *v;
    }
    let spec = InjectionSpec::with_dispatch(&scen, &set.pg, &vm);
    match solve_pf(&scen, &spec, &opts.pf) {
        Ok(sol) => {
            let report = check_limits(&scen, &sol, opts.limit_tol);
            let families = report.violations.iter().map(|v| v.family.into()).collect();
            let mut out = ScenarioCheck::from_families(Method::PfNewton, families, None);
            out.violations = report.violations;
            out
        }
        Err(e) => ScenarioCheck::from_families(
            Method::PfNewton,
            vec![ViolationFamily::PfInfeasible],
            Some(e.to_string()),
        ),
    }
}

/// Where a decision came from: its training seed and declared risk level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub train_seed: u64,
    pub eps: Option<f64>,
}

impl From<&SwcSolution> for Provenance {
    fn from(sol: &SwcSolution) -> Self {
        Provenance {
            train_seed: sol.seed,
            eps: sol.eps,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyCounts {
    #[serde(rename = "PL.1")]
    pub pl1: usize,
    #[serde(rename = "PL.2")]
    pub pl2: usize,
    #[serde(rename = "VL.1")]
    pub vl1: usize,
    #[serde(rename = "VL.2")]
    pub vl2: usize,
    #[serde(rename = "PF-infeasible")]
    pub pf_infeasible: usize,
}

impl FamilyCounts {
    fn add(&mut self, f: ViolationFamily) {
        match f {
            ViolationFamily::Pl1 => self.pl1 += 1,
            ViolationFamily::Pl2 => self.pl2 += 1,
            ViolationFamily::Vl1 => self.vl1 += 1,
            ViolationFamily::Vl2 => self.vl2 += 1,
            ViolationFamily::PfInfeasible => self.pf_infeasible += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.pl1 + self.pl2 + self.vl1 + self.vl2 + self.pf_infeasible
    }
}

/// Draws outside the core of a Gaussian support, tallied on their own so the
/// unbounded tails stay visible next to the bounded part of the risk.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TailSummary {
    /// Half-width of the core in standard deviations.
    pub sigmas: f64,
    pub draws: usize,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    #[serde(rename = "M")]
    pub m: usize,
    pub violations: usize,
    pub p_hat: f64,
    pub eta: f64,
    pub lower: f64,
    pub upper: f64,
    pub breakdown: FamilyCounts,
    pub tail: TailSummary,
    pub method: Option<Method>,
    pub seed: u64,
    pub train_seed: Option<u64>,
    pub eps: Option<f64>,
    /// `upper <= eps`, when a target risk level is known.
    pub pass: Option<bool>,
    #[serde(skip)]
    pub outcomes: Vec<Outcome>,
}

/// One validation draw and its verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub index: u64,
    pub mismatch: f64,
    pub tail: bool,
    pub families: Vec<ViolationFamily>,
}

impl Outcome {
    pub fn violated(&self) -> bool {
        !self.families.is_empty()
    }
}

impl RiskReport {
    /// Per-draw outcomes as CSV.
    pub fn outcomes_csv(&self) -> String {
        let mut out = String::from("index,mismatch,tail,violated,families\n");
        for o in &self.outcomes {
            let fams: Vec<String> = o
                .families
                .iter()
                .map(|f| {
                    serde_json::to_value(f)
                        .ok()
                        .and_then(|v| v.as_str().map(String::from))
                        .unwrap_or_default()
                })
                .collect();
            let _ = writeln!(
                out,
                "{},{:e},{},{},{}",
                o.index,
                o.mismatch,
                o.tail,
                o.violated(),
                fams.join(";")
            );
        }
        out
    }
}

/// Core half-width used to separate Gaussian tail draws.
pub const TAIL_SIGMAS: f64 = 3.0;

/// Validation sample size, confidence level and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskConfig {
    #[serde(rename = "M")]
    pub m: usize,
    pub eta: f64,
    pub seed: u64,
}

/// Monte Carlo risk of a decision over fresh draws.
pub fn estimate_risk(
    net: &Network,
    model: &UncertaintyModel,
    dec: &ControlDecision,
    provenance: &Provenance,
    cfg: &RiskConfig,
    opts: &CheckOptions,
) -> Result<RiskReport, ValidateError> {
    if cfg.seed == provenance.train_seed {
        return Err(ValidateError::SeedReuse(cfg.seed));
    }
    let mut report = estimate_risk_with(model, cfg, |delta| {
        check_scenario(net, model, dec, delta, opts).families
    })?;
    report.method = Some(opts.method);
    report.train_seed = Some(provenance.train_seed);
    report.eps = provenance.eps;
    report.pass = provenance.eps.map(|e| report.upper <= e);
    Ok(report)
}

/// Risk estimate for an arbitrary per-draw verdict, which returns the
/// violated families (empty when feasible). Draws are checked in parallel
/// and reduced in index order, so the report depends only on the inputs.
pub fn estimate_risk_with<F>(
    model: &UncertaintyModel,
    cfg: &RiskConfig,
    verdict: F,
) -> Result<RiskReport, ValidateError>
where
    F: Fn(&UncertaintyVector) -> Vec<ViolationFamily> + Sync,
{
    let RiskConfig { m, eta, seed } = *cfg;
    if m == 0 {
        return Err(ValidateError::Invalid(
            "validation sample count must be positive".into(),
        ));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(ValidateError::Invalid(format!(
            "confidence level {eta} outside (0, 1)"
        )));
    }
    let outcomes: Vec<Outcome> = (0..m as u64)
        .into_par_iter()
        .map(|i| {
            let delta = model.draw(seed, i);
            Outcome {
                index: i,
                mismatch: crate::uncertainty::mismatch(&delta),
                tail: model.is_tail(&delta, TAIL_SIGMAS),
                families: verdict(&delta),
            }
        })
        .collect();
    let mut breakdown = FamilyCounts::default();
    let mut tail = TailSummary {
        sigmas: TAIL_SIGMAS,
        ..TailSummary::default()
    };
    let mut violations = 0;
    for o in &outcomes {
        o.families.iter().for_each(|&f| breakdown.add(f));
        tail.draws += usize::from(o.tail);
        if o.violated() {
            violations += 1;
            tail.violations += usize::from(o.tail);
        }
    }
    let (lower, upper) = clopper_pearson(violations, m, eta);
    Ok(RiskReport {
        m,
        violations,
        p_hat: violations as f64 / m as f64,
        eta,
        lower,
        upper,
        breakdown,
        tail,
        method: None,
        seed,
        train_seed: None,
        eps: None,
        pass: None,
        outcomes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disagreement {
    pub index: u64,
    pub pf_newton: Vec<ViolationFamily>,
    pub sdp_feasibility: Vec<ViolationFamily>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub count: usize,
    pub agree: usize,
    pub rate: f64,
    pub disagreements: Vec<Disagreement>,
}

/// Runs both methods on the same draws and records where their verdicts on
/// feasibility differ.
pub fn compare_methods(
    net: &Network,
    model: &UncertaintyModel,
    dec: &ControlDecision,
    count: usize,
    seed: u64,
    opts: &CheckOptions,
) -> Agreement {
    let pf = CheckOptions {
        method: Method::PfNewton,
        ..*opts
    };
    let sdp = CheckOptions {
        method: Method::SdpFeasibility,
        ..*opts
    };
    let disagreements: Vec<Disagreement> = (0..count as u64)
        .into_par_iter()
        .filter_map(|i| {
            let delta = model.draw(seed, i);
            let a = check_scenario(net, model, dec, &delta, &pf);
            let b = check_scenario(net, model, dec, &delta, &sdp);
            (a.feasible != b.feasible).then_some(Disagreement {
                index: i,
                pf_newton: a.families,
                sdp_feasibility: b.families,
            })
        })
        .collect();
    let agree = count - disagreements.len();
    Agreement {
        count,
        agree,
        rate: if count == 0 {
            1.0
        } else {
            agree as f64 / count as f64
        },
        disagreements,
    }
}
