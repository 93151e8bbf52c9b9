//! Economic dispatch and DC optimal power flow.

mod dcopf;

pub use dcopf::{solve_dc_opf, DcOpfResult, InfeasibilityHint};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::ConicError;
use crate::netmodel::Generator;

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error("demand {demand} outside aggregate capacity [{min}, {max}]")]
    InfeasibleDemand { demand: f64, min: f64, max: f64 },
    #[error("DC-OPF infeasible ({hint})")]
    Infeasible { hint: InfeasibilityHint },
    #[error("load vector has {got} entries for {expected} buses")]
    Dimension { expected: usize, got: usize },
    #[error("conic solver: {0}")]
    Solver(#[from] ConicError),
    #[error("conic solver stopped without an optimal point ({0})")]
    NotSolved(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchResult {
    /// Active output per generator.
    pub p: Vec<f64>,
    pub cost: f64,
    /// Marginal price of the balance constraint.
    pub price: f64,
}

/// Price bisection stops once the bracket is this narrow.
pub const PRICE_TOL: f64 = 1e-10;

fn response(g: &Generator, price: f64) -> f64 {
    let [c2, c1, _] = g.cost;
    if c2 > 0.0 {
        ((price - c1) / (2.0 * c2)).clamp(g.pmin, g.pmax)
    } else if price > c1 {
        g.pmax
    } else {
        g.pmin
    }
}

fn total(gens: &[Generator], price: f64) -> f64 {
    gens.iter().map(|g| response(g, price)).sum()
}

/// Minimum-cost dispatch meeting `demand`, found by bisection on the price.
///
/// The final output is the convex combination of the responses at the two
/// ends of the bracket that meets the demand exactly, which also resolves
/// ties among generators with linear costs.
pub fn solve_ed(gens: &[Generator], demand: f64) -> Result<DispatchResult, DispatchError> {
    let min: f64 = gens.iter().map(|g| g.pmin).sum();
    let max: f64 = gens.iter().map(|g| g.pmax).sum();
    let slack = 1e-12 * (1.0 + max.abs());
    if gens.is_empty() || !(min - slack..=max + slack).contains(&demand) {
        return Err(DispatchError::InfeasibleDemand { demand, min, max });
    }
    let demand = demand.clamp(min, max);
    let mut lo = gens
        .iter()
        .map(|g| g.marginal_cost(g.pmin))
        .fold(f64::INFINITY, f64::min)
        - 1.0;
    let mut hi = gens
        .iter()
        .map(|g| g.marginal_cost(g.pmax))
        .fold(f64::NEG_INFINITY, f64::max)
        + 1.0;
    for _ in 0..400 {
        if hi - lo <= PRICE_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total(gens, mid) < demand {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let p_lo: Vec<f64> = gens.iter().map(|g| response(g, lo)).collect();
    let p_hi: Vec<f64> = gens.iter().map(|g| response(g, hi)).collect();
    let (s_lo, s_hi): (f64, f64) = (p_lo.iter().sum(), p_hi.iter().sum());
    let t = if s_hi > s_lo {
        ((demand - s_lo) / (s_hi - s_lo)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let p: Vec<f64> = p_lo
        .iter()
        .zip(&p_hi)
        .zip(gens)
        .map(|((a, b), g)| (a + t * (b - a)).clamp(g.pmin, g.pmax))
        .collect();
    let cost = gens.iter().zip(&p).map(|(g, &x)| g.cost_at(x)).sum();
    Ok(DispatchResult {
        p,
        cost,
        price: 0.5 * (lo + hi),
    })
}
