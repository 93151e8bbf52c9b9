//! Scenario design with per-scenario certificates: sample complexity, the
//! sampled semidefinite program and real-time deployment.

mod assemble;
mod complexity;

pub use assemble::{assemble_swc, ScenarioLayout, SwcLayout, SwcProgram};
pub use complexity::{binomial_tail, n_swc_exact, n_swc_explicit, SampleComplexitySpec};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::{self, ConicError, Settings, Status};
use crate::netmodel::Network;
use crate::relaxation::{HermitianLift, SolverStats};
use crate::uncertainty::{
    deploy, sample, DeploymentVector, ScenarioSet, UncertaintyError, UncertaintyModel,
    UncertaintyVector,
};

#[derive(Debug, Error)]
pub enum SwcError {
    #[error("invalid sample-complexity spec: {0}")]
    InvalidSpec(String),
    #[error("invalid SwC input: {0}")]
    Invalid(String),
    #[error("sampled program is infeasible: some scenario admits no certificate")]
    Infeasible,
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
    #[error("conic solver: {0}")]
    Solver(#[from] ConicError),
    #[error("conic solver stopped with status {0:?}")]
    NotSolved(Status),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleBound {
    Exact,
    Explicit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SwcOptions {
    /// Weight on the total reactive generation of each scenario.
    pub gamma_b: f64,
    /// Weight on the line-flow proxy of each scenario.
    pub gamma_l: f64,
    /// Lines entering the line-flow proxy; `None` selects all lines.
    pub l_prob: Option<Vec<usize>>,
    pub bound: SampleBound,
    /// Weight of the pull of `alpha` toward the uniform vector.
    pub alpha_reg: f64,
    pub settings: Settings,
}

impl Default for SwcOptions {
    fn default() -> Self {
        SwcOptions {
            gamma_b: 0.0,
            gamma_l: 0.0,
            l_prob: None,
            bound: SampleBound::Exact,
            alpha_reg: 1e-9,
            settings: Settings::default(),
        }
    }
}

/// Number of shared decision variables: `P^G`, `W^u`, `alpha` and `gamma`.
pub fn shared_dimension(net: &Network) -> usize {
    3 * net.n_gen() + 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlDecision {
    pub pg: Vec<f64>,
    /// Squared voltage magnitude at each generator's bus.
    pub wu: Vec<f64>,
    pub alpha: DeploymentVector,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub qg: Vec<f64>,
    /// `W^u + W^x` for this scenario.
    pub lift: HermitianLift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub generation: f64,
    pub reactive_penalty: f64,
    pub line_penalty: f64,
    /// `gamma` minus the scenario's total.
    pub slack: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SwcSolution {
    pub decision: ControlDecision,
    pub certificates: Vec<Certificate>,
    pub objective: f64,
    pub breakdown: Vec<CostBreakdown>,
    pub eps: Option<f64>,
    pub beta: Option<f64>,
    pub n_u: usize,
    pub n_scenarios: usize,
    pub seed: u64,
    pub solver: SolverStats,
}

/// Draws the required number of scenarios and solves the sampled program.
pub fn solve_swc(
    net: &Network,
    model: &UncertaintyModel,
    spec: &SampleComplexitySpec,
    opts: &SwcOptions,
    seed: u64,
) -> Result<SwcSolution, SwcError> {
    let n = match opts.bound {
        SampleBound::Exact => n_swc_exact(spec)?,
        SampleBound::Explicit => n_swc_explicit(spec)?,
    };
    let mut set = sample(model, n, seed);
    set.eps = Some(spec.eps);
    set.beta = Some(spec.beta);
    let mut sol = solve_swc_scenarios(net, model, &set, opts)?;
    sol.n_u = spec.n_u;
    Ok(sol)
}

/// Solves the sampled program for a given scenario set.
pub fn solve_swc_scenarios(
    net: &Network,
    model: &UncertaintyModel,
    set: &ScenarioSet,
    opts: &SwcOptions,
) -> Result<SwcSolution, SwcError> {
    let SwcProgram { program, layout } = assemble_swc(net, model, set, opts)?;
    let sol = conic::solve(&program, &opts.settings)?;
    match sol.status {
        Status::Optimal | Status::AlmostOptimal => {}
        Status::PrimalInfeasible => return Err(SwcError::Infeasible),
        s => return Err(SwcError::NotSolved(s)),
    }
    let x = &sol.x;
    let pg = x[layout.pg.clone()].to_vec();
    let decision = ControlDecision {
        wu: x[layout.wu.clone()].to_vec(),
        alpha: DeploymentVector::normalized(&x[layout.alpha.clone()])?,
        gamma: x[layout.gamma],
        pg,
    };
    let generation: f64 = net
        .generators
        .iter()
        .zip(&decision.pg)
        .map(|(g, &p)| g.cost_at(p))
        .sum();
    let mut certificates = Vec::with_capacity(set.len());
    let mut breakdown = Vec::with_capacity(set.len());
    for lay in &layout.scenarios {
        let qg = x[lay.qg.clone()].to_vec();
        let lift = HermitianLift::new(layout.embedding.extract(&x[lay.w.clone()]), net);
        let reactive_penalty = opts.gamma_b * qg.iter().sum::<f64>();
        let line_penalty = opts.gamma_l * line_proxy(net, &lift, &layout.l_prob);
        breakdown.push(CostBreakdown {
            generation,
            reactive_penalty,
            line_penalty,
            slack: decision.gamma - generation - reactive_penalty - line_penalty,
        });
        certificates.push(Certificate { qg, lift });
    }
    Ok(SwcSolution {
        objective: decision.gamma,
        decision,
        certificates,
        breakdown,
        eps: set.eps,
        beta: set.beta,
        n_u: shared_dimension(net),
        n_scenarios: set.len(),
        seed: set.seed,
        solver: SolverStats::of(&program, &sol),
    })
}

/// `sum |W_ll - W_lm| |y| + |W_mm - W_ml| |y|` over the given lines.
pub fn line_proxy(net: &Network, lift: &HermitianLift, lines: &[usize]) -> f64 {
    let w = &lift.w;
    lines
        .iter()
        .map(|&li| {
            let l = &net.lines[li];
            let (a, c) = (l.from, l.to);
            ((w[(a, a)] - w[(a, c)]).norm() + (w[(c, c)] - w[(c, a)]).norm()) * l.y.norm()
        })
        .sum()
}

/// Setpoints sent to the generators once `delta` is observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setpoints {
    pub pg: Vec<f64>,
    /// Voltage magnitude at each generator's bus.
    pub vm: Vec<f64>,
}

pub fn apply_realtime(dec: &ControlDecision, delta: &UncertaintyVector) -> Setpoints {
    Setpoints {
        pg: deploy(&dec.pg, &dec.alpha, delta),
        vm: dec.wu.iter().map(|w| w.max(0.0).sqrt()).collect(),
    }
}
