//! Semidefinite relaxation of AC-OPF in the lifted variable `W = V V^*`.

mod forms;

pub(crate) use forms::{scaled as scaled_form, WForms};

use std::ops::Range;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::{
    self, Cone, ConeProgram, ConicError, HermitianEmbedding, ProgramBuilder, Settings, Status,
};
use crate::netmodel::Network;
use crate::powerflow::ComplexVoltageState;

/// Default bound on `lambda_2 / lambda_1` for a lift to count as rank one.
pub const RANK_TOL: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum RelaxError {
    #[error("relaxed OPF is infeasible")]
    InfeasibleOpf,
    #[error("lift is not rank one (lambda2/lambda1 = {ratio:.3e})")]
    RankCheckFailed { ratio: f64 },
    #[error("conic solver: {0}")]
    Solver(#[from] ConicError),
    #[error("conic solver stopped with status {0:?}")]
    NotSolved(Status),
}

/// Hermitian lift together with the split into control entries (diagonal
/// at generator buses) and state entries (everything else).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermitianLift {
    pub w: DMatrix<Complex64>,
    /// `control[k]` marks `W_kk` as a control entry.
    pub control: Vec<bool>,
}

impl HermitianLift {
    pub fn new(w: DMatrix<Complex64>, net: &Network) -> Self {
        let control = (0..net.n_bus())
            .map(|k| net.generator_at(k).is_some())
            .collect();
        let wt = w.adjoint();
        HermitianLift {
            w: (w + wt) * Complex64::new(0.5, 0.0),
            control,
        }
    }

    /// Lift of a voltage state.
    pub fn from_state(state: &ComplexVoltageState, net: &Network) -> Self {
        let v = nalgebra::DVector::from_vec(state.phasors());
        Self::new(&v * v.adjoint(), net)
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    /// Control part: the diagonal at generator buses, zero elsewhere.
    pub fn control_part(&self) -> DMatrix<Complex64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |k, l| {
            if k == l && self.control[k] {
                self.w[(k, k)]
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// State part, `W - control_part()`.
    pub fn state_part(&self) -> DMatrix<Complex64> {
        &self.w - self.control_part()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankDiagnostic {
    /// Eigenvalues in decreasing order.
    pub eigenvalues: Vec<f64>,
    pub ratio: f64,
    pub rank_one: bool,
}

pub fn rank_check(lift: &HermitianLift, tol: f64) -> RankDiagnostic {
    let mut ev: Vec<f64> = lift
        .w
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    let ratio = match ev.as_slice() {
        [] => f64::INFINITY,
        [l1] if *l1 > 0.0 => 0.0,
        [l1, l2, ..] if *l1 > 0.0 => l2.max(0.0) / l1,
        _ => f64::INFINITY,
    };
    RankDiagnostic {
        rank_one: ratio <= tol,
        eigenvalues: ev,
        ratio,
    }
}

/// `|V_k| = sqrt(W_kk)`, angles from the dominant eigenvector with bus 0 at zero.
pub fn recover_voltages(lift: &HermitianLift, tol: f64) -> Result<ComplexVoltageState, RelaxError> {
    let diag = rank_check(lift, tol);
    if !diag.rank_one {
        return Err(RelaxError::RankCheckFailed { ratio: diag.ratio });
    }
    let eig = lift.w.clone().symmetric_eigen();
    let top = eig.eigenvalues.imax();
    let u = eig.eigenvectors.column(top);
    let a0 = u[0].arg();
    Ok(ComplexVoltageState {
        vm: (0..lift.n())
            .map(|k| lift.w[(k, k)].re.max(0.0).sqrt())
            .collect(),
        va: u.iter().map(|z| wrap(z.arg() - a0)).collect(),
    })
}

fn wrap(a: f64) -> f64 {
    let t = std::f64::consts::TAU;
    let r = a.rem_euclid(t);
    if r > std::f64::consts::PI {
        r - t
    } else {
        r
    }
}

/// Variable layout of the nominal program.
#[derive(Debug, Clone)]
pub struct NominalLayout {
    pub pg: Range<usize>,
    pub qg: Range<usize>,
    pub w: Range<usize>,
    pub embedding: HermitianEmbedding,
}

#[derive(Debug, Clone)]
pub struct NominalProgram {
    pub program: ConeProgram,
    pub layout: NominalLayout,
}

/// Relaxed AC-OPF: balance in `W` at every bus, generator limits, bus
/// voltage bounds on `W_kk`, line limits on `W_ll + W_mm - 2 Re W_lm`,
/// `W_00 = V_0^2` and `W` Hermitian PSD.
pub fn assemble_nominal(net: &Network) -> NominalProgram {
    let n = net.n_bus();
    let ng = net.n_gen();
    let mut b = ProgramBuilder::new();
    let pg = b.add_block("pg", Cone::Free(ng));
    let qg = b.add_block("qg", Cone::Free(ng));
    let forms = WForms::add(&mut b, "W", n);
    for (gi, g) in net.generators.iter().enumerate() {
        for (j, v) in b.add_quadratic_epigraph(format!("cost{gi}"), pg.start + gi, g.cost[0]) {
            b.add_cost(j, v);
        }
        b.add_cost(pg.start + gi, g.cost[1]);
    }
    let sl = b.add_block("slack", Cone::NonNeg(4 * ng + 2 * n + net.lines.len()));
    let mut s = sl.start;
    let mut next = || {
        s += 1;
        s - 1
    };

    let v0 = net.slack_voltage();
    b.add_row("ref", &forms.diag(0), v0 * v0);
    for k in 0..n {
        let (mut p, mut q) = forms.injection(net, k);
        if let Some(gi) = net.generator_at(k) {
            p.push((pg.start + gi, -1.0));
            q.push((qg.start + gi, -1.0));
        }
        b.add_row("pf.p", &p, -net.buses[k].pd);
        b.add_row("pf.q", &q, -net.buses[k].qd);
    }
    for (gi, g) in net.generators.iter().enumerate() {
        b.add_row("pl1.min", &[(pg.start + gi, 1.0), (next(), -1.0)], g.pmin);
        b.add_row("pl1.max", &[(pg.start + gi, 1.0), (next(), 1.0)], g.pmax);
        b.add_row("pl2.min", &[(qg.start + gi, 1.0), (next(), -1.0)], g.qmin);
        b.add_row("pl2.max", &[(qg.start + gi, 1.0), (next(), 1.0)], g.qmax);
    }
    for (k, bus) in net.buses.iter().enumerate() {
        let d = forms.diag(k);
        b.add_row("vl1.min", &with(&d, (next(), -1.0)), bus.vmin * bus.vmin);
        b.add_row("vl1.max", &with(&d, (next(), 1.0)), bus.vmax * bus.vmax);
    }
    for l in &net.lines {
        b.add_row(
            "vl2",
            &with(&forms.dv_sq(l.from, l.to), (next(), 1.0)),
            l.dv_max * l.dv_max,
        );
    }
    NominalProgram {
        program: b.build(),
        layout: NominalLayout {
            pg,
            qg,
            w: forms.range.clone(),
            embedding: forms.embedding,
        },
    }
}

fn with(f: &[(usize, f64)], extra: (usize, f64)) -> Vec<(usize, f64)> {
    let mut v = f.to_vec();
    v.push(extra);
    v
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverStats {
    pub status: Status,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

impl SolverStats {
    pub(crate) fn of(prog: &ConeProgram, sol: &conic::ConeSolution) -> Self {
        let r = conic::residuals(prog, sol);
        SolverStats {
            status: sol.status,
            iterations: sol.iterations,
            primal_residual: r.primal,
            dual_residual: r.dual,
            gap: r.gap,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelaxedOpfSolution {
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    pub lift: HermitianLift,
    /// Generation cost at `pg`.
    pub objective: f64,
    pub rank: RankDiagnostic,
    pub voltages: Option<ComplexVoltageState>,
    /// `max_k |dP_k|, |dQ_k|` of the recovered state against the dispatch.
    pub reconstruction_error: Option<f64>,
    pub solver: SolverStats,
}

pub fn solve_nominal(net: &Network) -> Result<RelaxedOpfSolution, RelaxError> {
    solve_nominal_with(net, &Settings::default(), RANK_TOL)
}

pub fn solve_nominal_with(
    net: &Network,
    settings: &Settings,
    rank_tol: f64,
) -> Result<RelaxedOpfSolution, RelaxError> {
    let NominalProgram { program, layout } = assemble_nominal(net);
    let sol = conic::solve(&program, settings)?;
    match sol.status {
        Status::Optimal | Status::AlmostOptimal => {}
        Status::PrimalInfeasible => return Err(RelaxError::InfeasibleOpf),
        s => return Err(RelaxError::NotSolved(s)),
    }
    let pg = sol.x[layout.pg.clone()].to_vec();
    let qg = sol.x[layout.qg.clone()].to_vec();
    let lift = HermitianLift::new(layout.embedding.extract(&sol.x[layout.w.clone()]), net);
    let rank = rank_check(&lift, rank_tol);
    let voltages = recover_voltages(&lift, rank_tol).ok();
    let reconstruction_error = voltages.as_ref().map(|v| {
        let inj = net_injection(net, &pg, &qg);
        crate::powerflow::pf_residual(net, v, &inj)
            .map(|r| {
                r.iter()
                    .map(|(p, q)| p.abs().max(q.abs()))
                    .fold(0.0, f64::max)
            })
            .unwrap_or(f64::INFINITY)
    });
    Ok(RelaxedOpfSolution {
        objective: net
            .generators
            .iter()
            .zip(&pg)
            .map(|(g, &p)| g.cost_at(p))
            .sum(),
        pg,
        qg,
        lift,
        rank,
        voltages,
        reconstruction_error,
        solver: SolverStats::of(&program, &sol),
    })
}

/// Net complex injection per bus for a given generator output.
pub fn net_injection(net: &Network, pg: &[f64], qg: &[f64]) -> Vec<Complex64> {
    let mut s: Vec<Complex64> = net
        .buses
        .iter()
        .map(|b| Complex64::new(-b.pd, -b.qd))
        .collect();
    for (gi, g) in net.generators.iter().enumerate() {
        s[g.bus] += Complex64::new(pg[gi], qg[gi]);
    }
    s
}
