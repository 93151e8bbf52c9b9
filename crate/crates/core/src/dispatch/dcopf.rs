use std::fmt;

use serde::{Deserialize, Serialize};

use super::{DispatchError, DispatchResult};
use crate::conic::{self, Cone, ProgramBuilder, Settings, Status};
use crate::netmodel::Network;
use crate::powerflow::dc_linearize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InfeasibilityHint {
    /// Demand outside the aggregate generation limits.
    Capacity,
    /// Generation suffices but the line limits block delivery.
    Congestion,
}

impl fmt::Display for InfeasibilityHint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InfeasibilityHint::Capacity => write!(f, "generation capacity"),
            InfeasibilityHint::Congestion => write!(f, "line limits"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DcOpfResult {
    pub dispatch: DispatchResult,
    /// Bus angles with the slack at zero.
    pub theta: Vec<f64>,
    /// Active flow per line, from-to direction.
    pub flows: Vec<f64>,
    /// Marginal price of the balance at each bus.
    pub lmp: Vec<f64>,
    /// Multiplier of the angle-difference limit of each line (zero when slack).
    pub line_duals: Vec<f64>,
}

/// DC-OPF: quadratic generation cost subject to the linearized balance at
/// every bus, generator limits, and `|theta_l - theta_m| <= dv_max` per line.
pub fn solve_dc_opf(net: &Network, loads: &[f64]) -> Result<DcOpfResult, DispatchError> {
    let nb = net.n_bus();
    let ng = net.n_gen();
    if loads.len() != nb {
        return Err(DispatchError::Dimension {
            expected: nb,
            got: loads.len(),
        });
    }
    let dc = dc_linearize(net);
    let mut b = ProgramBuilder::new();
    let pg = b.add_block("pg", Cone::Free(ng));
    let th = b.add_block("theta", Cone::Free(nb));
    for (gi, g) in net.generators.iter().enumerate() {
        let t = b.add_quadratic_epigraph(format!("cost{gi}"), pg.start + gi, g.cost[0]);
        for (j, v) in t {
            b.add_cost(j, v);
        }
        b.add_cost(pg.start + gi, g.cost[1]);
    }
    let gs = b.add_block("gen_slack", Cone::NonNeg(2 * ng));
    let ls = b.add_block("line_slack", Cone::NonNeg(2 * net.lines.len()));

    b.add_row("dc.ref", &[(th.start, 1.0)], 0.0);
    let mut bal_rows = Vec::with_capacity(nb);
    for k in 0..nb {
        let mut e: Vec<(usize, f64)> = (0..nb)
            .filter(|&l| dc.b[(k, l)] != 0.0)
            .map(|l| (th.start + l, -dc.b[(k, l)]))
            .collect();
        if let Some(gi) = net.generator_at(k) {
            e.push((pg.start + gi, 1.0));
        }
        bal_rows.push(b.add_row("dc.bal", &e, loads[k]));
    }
    for (gi, g) in net.generators.iter().enumerate() {
        b.add_row(
            "pl1.min",
            &[(pg.start + gi, 1.0), (gs.start + 2 * gi, -1.0)],
            g.pmin,
        );
        b.add_row(
            "pl1.max",
            &[(pg.start + gi, 1.0), (gs.start + 2 * gi + 1, 1.0)],
            g.pmax,
        );
    }
    let mut line_rows = Vec::with_capacity(net.lines.len());
    for (li, l) in net.lines.iter().enumerate() {
        let (a, c) = (th.start + l.from, th.start + l.to);
        let fwd = b.add_row(
            "vl2.fwd",
            &[(a, 1.0), (c, -1.0), (ls.start + 2 * li, 1.0)],
            l.dv_max,
        );
        let rev = b.add_row(
            "vl2.rev",
            &[(a, -1.0), (c, 1.0), (ls.start + 2 * li + 1, 1.0)],
            l.dv_max,
        );
        line_rows.push((fwd, rev));
    }
    let prog = b.build();
    let settings = Settings {
        feas_tol: 1e-10,
        gap_tol: 1e-10,
        max_iter: 150,
        ..Settings::default()
    };
    let sol = conic::solve(&prog, &settings)?;
    match sol.status {
        Status::Optimal | Status::AlmostOptimal => {}
        Status::PrimalInfeasible => {
            let demand: f64 = loads.iter().sum();
            let min: f64 = net.generators.iter().map(|g| g.pmin).sum();
            let max: f64 = net.generators.iter().map(|g| g.pmax).sum();
            let hint = if demand < min || demand > max {
                InfeasibilityHint::Capacity
            } else {
                InfeasibilityHint::Congestion
            };
            return Err(DispatchError::Infeasible { hint });
        }
        s => return Err(DispatchError::NotSolved(format!("{s:?}"))),
    }
    let p: Vec<f64> = net
        .generators
        .iter()
        .enumerate()
        .map(|(gi, g)| sol.x[pg.start + gi].clamp(g.pmin, g.pmax))
        .collect();
    let theta = sol.x[th.clone()].to_vec();
    let cost = net
        .generators
        .iter()
        .zip(&p)
        .map(|(g, &x)| g.cost_at(x))
        .sum();
    let lmp: Vec<f64> = bal_rows.iter().map(|&r| sol.y[r]).collect();
    Ok(DcOpfResult {
        dispatch: DispatchResult {
            p,
            cost,
            price: lmp[0],
        },
        flows: dc.flows(net, &theta),
        theta,
        line_duals: line_rows
            .iter()
            .map(|&(f, r)| -(sol.y[f] + sol.y[r]))
            .collect(),
        lmp,
    })
}
