//! Command-line front end: loads cases and uncertainty models, runs one
//! stage of the pipeline, and writes a JSON report with a reproducibility
//! envelope to the output directory.
//!
//! Exit codes: 0 success, 1 infeasible problem, 2 usage or I/O error
//! (including seed reuse), 3 solver numerical failure.

mod report;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use ccopf::conic::{Settings, Status};
use ccopf::dispatch::{solve_dc_opf, solve_ed, DispatchError};
use ccopf::netmodel::{parse_case, Network};
use ccopf::powerflow::{check_limits, solve_pf, InjectionSpec, PfError, PfOptions};
use ccopf::relaxation::{solve_nominal_with, RelaxError, RANK_TOL};
use ccopf::swc::{
    n_swc_exact, n_swc_explicit, shared_dimension, solve_swc, SampleBound, SampleComplexitySpec,
    SwcError, SwcOptions, SwcSolution,
};
use ccopf::uncertainty::UncertaintyModel;
use ccopf::validate::{estimate_risk, CheckOptions, Method, Provenance, RiskConfig, ValidateError};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use report::{Inputs, RunConfig};

const INFEASIBLE: u8 = 1;
const USAGE: u8 = 2;
const NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "ccopf",
    version,
    about = "Chance-constrained AC optimal power flow"
)]
struct Cli {
    /// Directory receiving the reports.
    #[arg(
        long,
        global = true,
        env = "CCOPF_OUT_DIR",
        default_value = "ccopf-out"
    )]
    out: PathBuf,
    /// Cap on worker threads in parallel sections.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Newton power flow at the case's set points, with a limit check.
    Pf {
        #[command(flatten)]
        case: CaseArg,
        /// Mismatch tolerance in per unit.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Slack on operating limits before they count as violated.
        #[arg(long, default_value_t = 1e-6)]
        limit_tol: f64,
    },
    /// Economic dispatch ignoring the network.
    Ed {
        #[command(flatten)]
        case: CaseArg,
        /// Total demand in per unit; defaults to the case's total load.
        #[arg(long)]
        demand: Option<f64>,
    },
    /// DC optimal power flow.
    Dcopf {
        #[command(flatten)]
        case: CaseArg,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Semidefinite relaxation of the AC optimal power flow.
    Acopf {
        #[command(flatten)]
        case: CaseArg,
        #[command(flatten)]
        solver: SolverArgs,
        /// Largest eigenvalue ratio accepted as rank one.
        #[arg(long, default_value_t = RANK_TOL)]
        rank_tol: f64,
    },
    /// Scenario design with per-scenario certificates.
    Swc(SwcArgs),
    /// Monte Carlo risk estimate of a trained decision.
    Validate(ValidateArgs),
    /// Number of scenarios required for a risk level and confidence.
    Samples(SamplesArgs),
}

#[derive(Args)]
struct CaseArg {
    /// Network case (JSON or MATPOWER).
    #[arg(long)]
    case: PathBuf,
}

#[derive(Args, Clone, Copy)]
struct SolverArgs {
    #[arg(long, default_value_t = 1e-8)]
    feas_tol: f64,
    #[arg(long, default_value_t = 1e-8)]
    gap_tol: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
}

impl SolverArgs {
    fn settings(&self) -> Settings {
        Settings {
            feas_tol: self.feas_tol,
            gap_tol: self.gap_tol,
            max_iter: self.max_iter,
            ..Settings::default()
        }
    }

    fn record(&self, cfg: &mut RunConfig) {
        cfg.feas_tol = Some(self.feas_tol);
        cfg.gap_tol = Some(self.gap_tol);
        cfg.max_iter = Some(self.max_iter);
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Bound {
    Exact,
    Explicit,
}

impl Bound {
    fn name(self) -> &'static str {
        match self {
            Bound::Exact => "exact",
            Bound::Explicit => "explicit",
        }
    }
}

#[derive(Args)]
struct SwcArgs {
    #[command(flatten)]
    case: CaseArg,
    /// Uncertainty model (JSON).
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    beta: f64,
    /// Seed of the training scenarios.
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value = "exact")]
    bound: Bound,
    /// Weight on reactive generation per scenario.
    #[arg(long, default_value_t = 0.0)]
    gamma_b: f64,
    /// Weight on the line-flow proxy per scenario.
    #[arg(long, default_value_t = 0.0)]
    gamma_l: f64,
    /// Lines in the line-flow proxy (comma separated); all lines when absent.
    #[arg(long, value_delimiter = ',')]
    l_prob: Option<Vec<usize>>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    PfNewton,
    SdpFeasibility,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    case: CaseArg,
    #[arg(long)]
    model: PathBuf,
    /// Report written by `swc`; defaults to `swc.json` in the output directory.
    #[arg(long)]
    decision: Option<PathBuf>,
    /// Seed of the validation draws; must differ from the training seed.
    #[arg(long)]
    seed: u64,
    /// Number of validation draws.
    #[arg(long, short = 'M', default_value_t = 2000)]
    samples: usize,
    /// Confidence parameter of the interval.
    #[arg(long, default_value_t = 0.05)]
    eta: f64,
    /// Target risk level; defaults to the one the decision was trained for.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, value_enum, default_value = "pf-newton")]
    method: MethodArg,
    #[arg(long, default_value_t = 1e-6)]
    limit_tol: f64,
}

#[derive(Args)]
struct SamplesArgs {
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    beta: f64,
    /// Number of shared decision variables; derived from `--case` when absent.
    #[arg(long)]
    nu: Option<usize>,
    #[arg(long)]
    case: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "exact")]
    bound: Bound,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code,
            error: error.into(),
        }
    }
}

/// Plain `anyhow` errors are input or I/O problems.
impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: USAGE, error }
    }
}

fn status_code(s: Status) -> u8 {
    match s {
        Status::PrimalInfeasible => INFEASIBLE,
        _ => NUMERICAL,
    }
}

fn pf_failure(e: PfError) -> Failure {
    let code = match e {
        PfError::Dimension { .. } => USAGE,
        _ => NUMERICAL,
    };
    Failure::new(code, e)
}

fn dispatch_failure(e: DispatchError) -> Failure {
    let code = match e {
        DispatchError::InfeasibleDemand { .. } | DispatchError::Infeasible { .. } => INFEASIBLE,
        DispatchError::Dimension { .. } => USAGE,
        DispatchError::Solver(_) | DispatchError::NotSolved(_) => NUMERICAL,
    };
    Failure::new(code, e)
}

fn relax_failure(e: RelaxError) -> Failure {
    let code = match e {
        RelaxError::InfeasibleOpf => INFEASIBLE,
        RelaxError::NotSolved(s) => status_code(s),
        RelaxError::RankCheckFailed { .. } | RelaxError::Solver(_) => NUMERICAL,
    };
    Failure::new(code, e)
}

fn swc_failure(e: SwcError) -> Failure {
    let code = match e {
        SwcError::InvalidSpec(_) | SwcError::Invalid(_) | SwcError::Uncertainty(_) => USAGE,
        SwcError::Infeasible => INFEASIBLE,
        SwcError::NotSolved(s) => status_code(s),
        SwcError::Solver(_) => NUMERICAL,
    };
    Failure::new(code, e)
}

fn validate_failure(e: ValidateError) -> Failure {
    Failure::new(USAGE, e)
}

fn load_network(inputs: &mut Inputs, path: &Path) -> anyhow::Result<Network> {
    let text = inputs.read("case", path)?;
    parse_case(&text).with_context(|| format!("parsing case {}", path.display()))
}

fn load_model(inputs: &mut Inputs, path: &Path, net: &Network) -> anyhow::Result<UncertaintyModel> {
    let text = inputs.read("model", path)?;
    let model = UncertaintyModel::from_json(&text)
        .with_context(|| format!("parsing uncertainty model {}", path.display()))?;
    model
        .validate(net)
        .with_context(|| format!("model {} does not fit the case", path.display()))?;
    Ok(model)
}

/// Only the `result` member of a report is needed to reload it.
#[derive(Deserialize)]
struct Stored<T> {
    result: T,
}

#[derive(Serialize)]
struct PfReport {
    solution: ccopf::powerflow::PowerFlowSolution,
    violations: ccopf::powerflow::ViolationReport,
}

#[derive(Serialize)]
struct AcopfReport {
    rank_one: bool,
    solution: ccopf::relaxation::RelaxedOpfSolution,
}

#[derive(Serialize)]
struct SamplesReport {
    eps: f64,
    beta: f64,
    nu: usize,
    bound: &'static str,
    n: usize,
    exact: usize,
    explicit: usize,
}

fn base_config(name: &str, cli: &Cli) -> RunConfig {
    RunConfig {
        subcommand: name.into(),
        out_dir: cli.out.clone(),
        threads: cli.threads,
        ..RunConfig::default()
    }
}

fn run(cli: &Cli) -> Result<String, Failure> {
    let mut inputs = Inputs::default();
    match &cli.command {
        Command::Pf {
            case,
            tol,
            limit_tol,
        } => {
            let mut cfg = base_config("pf", cli);
            cfg.case = Some(case.case.clone());
            cfg.pf_tol = Some(*tol);
            cfg.limit_tol = Some(*limit_tol);
            let net = load_network(&mut inputs, &case.case)?;
            let opts = PfOptions {
                tol: *tol,
                ..PfOptions::default()
            };
            let solution =
                solve_pf(&net, &InjectionSpec::from_network(&net), &opts).map_err(pf_failure)?;
            let violations = check_limits(&net, &solution, *limit_tol);
            let summary = format!(
                "pf: converged in {} iterations, residual {:.2e}, {} limit violations",
                solution.iterations,
                solution.residual,
                violations.violations.len()
            );
            let path = report::write(
                &cfg,
                &inputs,
                &PfReport {
                    solution,
                    violations,
                },
            )?;
            Ok(format!("{summary}; report {}", path.display()))
        }
        Command::Ed { case, demand } => {
            let mut cfg = base_config("ed", cli);
            cfg.case = Some(case.case.clone());
            let net = load_network(&mut inputs, &case.case)?;
            let demand = demand.unwrap_or_else(|| net.buses.iter().map(|b| b.pd).sum());
            cfg.demand = Some(demand);
            let res = solve_ed(&net.generators, demand).map_err(dispatch_failure)?;
            let summary = format!("ed: cost {:.6}, price {:.6}", res.cost, res.price);
            let path = report::write(&cfg, &inputs, &res)?;
            Ok(format!("{summary}; report {}", path.display()))
        }
        Command::Dcopf { case, solver } => {
            let mut cfg = base_config("dcopf", cli);
            cfg.case = Some(case.case.clone());
            solver.record(&mut cfg);
            let net = load_network(&mut inputs, &case.case)?;
            let loads: Vec<f64> = net.buses.iter().map(|b| b.pd).collect();
            let res = solve_dc_opf(&net, &loads).map_err(dispatch_failure)?;
            let summary = format!("dcopf: cost {:.6}", res.dispatch.cost);
            let path = report::write(&cfg, &inputs, &res)?;
            Ok(format!("{summary}; report {}", path.display()))
        }
        Command::Acopf {
            case,
            solver,
            rank_tol,
        } => {
            let mut cfg = base_config("acopf", cli);
            cfg.case = Some(case.case.clone());
            cfg.rank_tol = Some(*rank_tol);
            solver.record(&mut cfg);
            let net = load_network(&mut inputs, &case.case)?;
            let solution =
                solve_nominal_with(&net, &solver.settings(), *rank_tol).map_err(relax_failure)?;
            let rank_one = solution.rank.rank_one;
            let summary = format!(
                "acopf: cost {:.6}, rank-one {rank_one} (ratio {:.2e})",
                solution.objective, solution.rank.ratio
            );
            let path = report::write(&cfg, &inputs, &AcopfReport { rank_one, solution })?;
            Ok(format!("{summary}; report {}", path.display()))
        }
        Command::Swc(a) => {
            let mut cfg = base_config("swc", cli);
            cfg.case = Some(a.case.case.clone());
            cfg.model = Some(a.model.clone());
            cfg.eps = Some(a.eps);
            cfg.beta = Some(a.beta);
            cfg.train_seed = Some(a.seed);
            cfg.bound = Some(a.bound.name().into());
            cfg.gamma_b = Some(a.gamma_b);
            cfg.gamma_l = Some(a.gamma_l);
            cfg.l_prob.clone_from(&a.l_prob);
            a.solver.record(&mut cfg);
            cfg.check()?;
            let net = load_network(&mut inputs, &a.case.case)?;
            let model = load_model(&mut inputs, &a.model, &net)?;
            let spec = SampleComplexitySpec::new(a.eps, a.beta, shared_dimension(&net))
                .map_err(swc_failure)?;
            let opts = SwcOptions {
                gamma_b: a.gamma_b,
                gamma_l: a.gamma_l,
                l_prob: a.l_prob.clone(),
                bound: match a.bound {
                    Bound::Exact => SampleBound::Exact,
                    Bound::Explicit => SampleBound::Explicit,
                },
                settings: a.solver.settings(),
                ..SwcOptions::default()
            };
            let sol = solve_swc(&net, &model, &spec, &opts, a.seed).map_err(swc_failure)?;
            let mut csv = String::from("scenario,generation,reactive_penalty,line_penalty,slack\n");
            for (i, b) in sol.breakdown.iter().enumerate() {
                let _ = writeln!(
                    csv,
                    "{i},{:e},{:e},{:e},{:e}",
                    b.generation, b.reactive_penalty, b.line_penalty, b.slack
                );
            }
            report::write_extra(&cfg, "swc_scenarios.csv", &csv)?;
            let summary = format!(
                "swc: N = {}, objective {:.6}, seed {}",
                sol.n_scenarios, sol.objective, sol.seed
            );
            let path = report::write(&cfg, &inputs, &sol)?;
            Ok(format!("{summary}; report {}", path.display()))
        }
        Command::Validate(a) => {
            let mut cfg = base_config("validate", cli);
            let decision = a
                .decision
                .clone()
                .unwrap_or_else(|| cli.out.join("swc.json"));
            cfg.case = Some(a.case.case.clone());
            cfg.model = Some(a.model.clone());
            cfg.decision = Some(decision.clone());
            cfg.validate_seed = Some(a.seed);
            cfg.samples = Some(a.samples);
            cfg.eta = Some(a.eta);
            cfg.limit_tol = Some(a.limit_tol);
            let method = match a.method {
                MethodArg::PfNewton => Method::PfNewton,
                MethodArg::SdpFeasibility => Method::SdpFeasibility,
            };
            cfg.method = Some(
                match method {
                    Method::PfNewton => "pf-newton",
                    Method::SdpFeasibility => "sdp-feasibility",
                }
                .into(),
            );
            let net = load_network(&mut inputs, &a.case.case)?;
            let model = load_model(&mut inputs, &a.model, &net)?;
            let text = inputs.read("decision", &decision)?;
            let stored: Stored<SwcSolution> = serde_json::from_str(&text)
                .with_context(|| format!("{} is not an swc report", decision.display()))?;
            let sol = stored.result;
            let prov = Provenance {
                train_seed: sol.seed,
                eps: a.eps.or(sol.eps),
            };
            cfg.train_seed = Some(prov.train_seed);
            cfg.eps = prov.eps;
            if prov.train_seed == a.seed {
                return Err(validate_failure(ValidateError::SeedReuse(a.seed)));
            }
            cfg.check()?;
            let risk_cfg = RiskConfig {
                m: a.samples,
                eta: a.eta,
                seed: a.seed,
            };
            let opts = CheckOptions {
                method,
                limit_tol: a.limit_tol,
                ..CheckOptions::default()
            };
            let rep = estimate_risk(&net, &model, &sol.decision, &prov, &risk_cfg, &opts)
                .map_err(validate_failure)?;
            report::write_extra(&cfg, "validate_outcomes.csv", &rep.outcomes_csv())?;
            let verdict = match rep.pass {
                Some(true) => "pass",
                Some(false) => "fail",
                None => "no target",
            };
            let summary = format!(
                "validate: {}/{} violated, p_hat {:.4}, interval [{:.4}, {:.4}], {verdict}",
                rep.violations, rep.m, rep.p_hat, rep.lower, rep.upper
            );
            let path = report::write(&cfg, &inputs, &rep)?;
            Ok(format!("{summary}; report {}", path.display()))
        }
        Command::Samples(a) => {
            let mut cfg = base_config("samples", cli);
            cfg.eps = Some(a.eps);
            cfg.beta = Some(a.beta);
            cfg.case.clone_from(&a.case);
            cfg.bound = Some(a.bound.name().into());
            cfg.check()?;
            let nu = match (a.nu, &a.case) {
                (Some(nu), _) => nu,
                (None, Some(path)) => shared_dimension(&load_network(&mut inputs, path)?),
                (None, None) => return Err(anyhow!("give --nu or --case").into()),
            };
            cfg.nu = Some(nu);
            let spec = SampleComplexitySpec::new(a.eps, a.beta, nu).map_err(swc_failure)?;
            let exact = n_swc_exact(&spec).map_err(swc_failure)?;
            let explicit = n_swc_explicit(&spec).map_err(swc_failure)?;
            let n = match a.bound {
                Bound::Exact => exact,
                Bound::Explicit => explicit,
            };
            report::write(
                &cfg,
                &inputs,
                &SamplesReport {
                    eps: a.eps,
                    beta: a.beta,
                    nu,
                    bound: a.bound.name(),
                    n,
                    exact,
                    explicit,
                },
            )?;
            Ok(n.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(USAGE);
        }
    }
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
