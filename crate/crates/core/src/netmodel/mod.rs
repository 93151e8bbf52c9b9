//! Network data model in per-unit quantities.
//!
//! Bus ids are 0-based and the slack bus is always bus 0. All electrical
//! quantities are per-unit on `base_mva` and on the base voltage of each bus.

mod json;
mod matpower;

use std::collections::{BTreeSet, VecDeque};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use json::{BusRecord, CaseFile, GeneratorRecord, LineRecord};
pub use matpower::parse_matpower;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invalid network: {0}")]
    Invariant(String),
    #[error("network is disconnected: bus {bus} is unreachable from the slack bus")]
    Disconnected { bus: usize },
    #[error("unsupported case feature: {0}")]
    Unsupported(String),
    #[error("no line between buses {0} and {1}")]
    NoSuchLine(usize, usize),
    #[error("MATPOWER input, line {line}: {message}")]
    Matpower { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Generator,
    Load,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    /// Hosts a renewable source. May coexist with `Load`.
    pub renewable: bool,
    pub base_kv: f64,
    pub vmin: f64,
    pub vmax: f64,
    pub pd: f64,
    pub qd: f64,
    /// Voltage magnitude setpoint, if the case specifies one.
    pub vset: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Series admittance.
    pub y: Complex64,
    /// Limit on `|V_from - V_to|`.
    pub dv_max: f64,
    /// Apparent power limit, recorded for reporting.
    pub s_max: Option<f64>,
    /// `dv_max` was derived from `s_max` rather than given.
    pub dv_derived: bool,
}

impl Line {
    pub fn impedance(&self) -> Complex64 {
        1.0 / self.y
    }

    pub fn other(&self, k: usize) -> usize {
        if self.from == k {
            self.to
        } else {
            self.from
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub pmin: f64,
    pub pmax: f64,
    pub qmin: f64,
    pub qmax: f64,
    /// `[c2, c1, c0]` with cost `c2 P^2 + c1 P + c0` for `P` in per-unit.
    pub cost: [f64; 3],
    pub p_set: Option<f64>,
    pub v_set: Option<f64>,
}

impl Generator {
    pub fn cost_at(&self, p: f64) -> f64 {
        self.cost[0] * p * p + self.cost[1] * p + self.cost[2]
    }

    pub fn marginal_cost(&self, p: f64) -> f64 {
        2.0 * self.cost[0] * p + self.cost[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    /// `adjacency[k]` lists `(neighbor, line index)` pairs.
    #[serde(skip)]
    adjacency: Vec<Vec<(usize, usize)>>,
    #[serde(skip)]
    gen_of_bus: Vec<Option<usize>>,
}

/// Disjoint cover of the buses by role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BusPartition {
    pub slack: usize,
    pub generators: Vec<usize>,
    pub renewables: Vec<usize>,
    pub loads: Vec<usize>,
}

impl Network {
    /// Validates the parts and builds the derived lookup tables.
    pub fn new(
        name: impl Into<String>,
        base_mva: f64,
        buses: Vec<Bus>,
        lines: Vec<Line>,
        generators: Vec<Generator>,
    ) -> Result<Network, NetError> {
        let mut net = Network {
            name: name.into(),
            base_mva,
            buses,
            lines,
            generators,
            adjacency: Vec::new(),
            gen_of_bus: Vec::new(),
        };
        net.validate()?;
        Ok(net)
    }

    fn validate(&mut self) -> Result<(), NetError> {
        let inv = |m: String| Err(NetError::Invariant(m));
        if !(self.base_mva > 0.0) {
            return inv(format!("base_mva must be positive, got {}", self.base_mva));
        }
        let n = self.buses.len();
        if n == 0 {
            return inv("network has no buses".into());
        }
        for (i, b) in self.buses.iter().enumerate() {
            if b.id != i {
                return inv(format!(
                    "bus ids must be 0..{n} in order; position {i} holds id {}",
                    b.id
                ));
            }
            if !(b.vmin > 0.0 && b.vmin <= b.vmax) {
                return inv(format!(
                    "bus {i}: need 0 < vmin <= vmax, got vmin={} vmax={}",
                    b.vmin, b.vmax
                ));
            }
            if !(b.base_kv > 0.0) {
                return inv(format!("bus {i}: base_kv must be positive"));
            }
            if !(b.pd.is_finite() && b.qd.is_finite()) {
                return inv(format!("bus {i}: non-finite load"));
            }
            if let Some(v) = b.vset {
                if !(v > 0.0) {
                    return inv(format!("bus {i}: voltage setpoint must be positive"));
                }
            }
            if b.kind == BusKind::Slack && i != 0 {
                return inv(format!(
                    "bus {i} is a second slack bus; the slack must be bus 0 only"
                ));
            }
        }
        if self.buses[0].kind != BusKind::Slack {
            return inv("bus 0 must be the slack bus".into());
        }

        let mut pairs = BTreeSet::new();
        self.adjacency = vec![Vec::new(); n];
        for (li, l) in self.lines.iter().enumerate() {
            if l.from >= n || l.to >= n {
                return inv(format!("line {li} references a missing bus"));
            }
            if l.from == l.to {
                return inv(format!("line {li} connects bus {} to itself", l.from));
            }
            if !pairs.insert((l.from.min(l.to), l.from.max(l.to))) {
                return inv(format!(
                    "line {li} duplicates the pair ({}, {})",
                    l.from, l.to
                ));
            }
            if !(l.y.re.is_finite() && l.y.im.is_finite()) || l.y.norm() == 0.0 {
                return inv(format!("line {li}: admittance must be finite and nonzero"));
            }
            if !(l.dv_max > 0.0) {
                return inv(format!("line {li}: dv_max must be positive"));
            }
            if let Some(s) = l.s_max {
                if !(s > 0.0) {
                    return inv(format!("line {li}: s_max must be positive"));
                }
            }
            self.adjacency[l.from].push((l.to, li));
            self.adjacency[l.to].push((l.from, li));
        }

        self.gen_of_bus = vec![None; n];
        for (gi, g) in self.generators.iter().enumerate() {
            if g.bus >= n {
                return inv(format!("generator {gi} references missing bus {}", g.bus));
            }
            if self.gen_of_bus[g.bus].is_some() {
                return inv(format!("bus {} hosts more than one generator", g.bus));
            }
            if self.buses[g.bus].kind == BusKind::Load {
                return inv(format!("generator {gi} sits on load bus {}", g.bus));
            }
            if !(g.pmin <= g.pmax) || !(g.qmin <= g.qmax) {
                return inv(format!("generator {gi}: limits are inverted"));
            }
            if !(g.cost[0] >= 0.0) || g.cost.iter().any(|c| !c.is_finite()) {
                return inv(format!("generator {gi}: cost must be convex with c2 >= 0"));
            }
            self.gen_of_bus[g.bus] = Some(gi);
        }
        for (i, b) in self.buses.iter().enumerate() {
            if b.kind != BusKind::Load && self.gen_of_bus[i].is_none() {
                return inv(format!("bus {i} is a {:?} bus without a generator", b.kind));
            }
        }

        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(k) = queue.pop_front() {
            for &(m, _) in &self.adjacency[k] {
                if !seen[m] {
                    seen[m] = true;
                    queue.push_back(m);
                }
            }
        }
        if let Some(bus) = seen.iter().position(|s| !s) {
            return Err(NetError::Disconnected { bus });
        }
        Ok(())
    }

    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    pub fn n_gen(&self) -> usize {
        self.generators.len()
    }

    /// `(neighbor, line index)` pairs of bus `k`.
    pub fn neighbors(&self, k: usize) -> &[(usize, usize)] {
        &self.adjacency[k]
    }

    pub fn generator_at(&self, bus: usize) -> Option<usize> {
        self.gen_of_bus[bus]
    }

    pub fn line_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency
            .get(a)?
            .iter()
            .find(|&&(m, _)| m == b)
            .map(|&(_, li)| li)
    }

    /// Series admittance of the line joining `l` and `m`.
    pub fn admittance_of(&self, l: usize, m: usize) -> Result<Complex64, NetError> {
        self.line_between(l, m)
            .map(|li| self.lines[li].y)
            .ok_or(NetError::NoSuchLine(l, m))
    }

    /// Dense bus admittance matrix.
    pub fn ybus(&self) -> DMatrix<Complex64> {
        let n = self.n_bus();
        let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for l in &self.lines {
            y[(l.from, l.from)] += l.y;
            y[(l.to, l.to)] += l.y;
            y[(l.from, l.to)] -= l.y;
            y[(l.to, l.from)] -= l.y;
        }
        y
    }

    pub fn bus_partition(&self) -> BusPartition {
        let mut p = BusPartition {
            slack: 0,
            generators: Vec::new(),
            renewables: Vec::new(),
            loads: Vec::new(),
        };
        for b in &self.buses[1..] {
            match b.kind {
                BusKind::Slack => {}
                BusKind::Generator => p.generators.push(b.id),
                BusKind::Load if b.renewable => p.renewables.push(b.id),
                BusKind::Load => p.loads.push(b.id),
            }
        }
        p
    }

    /// Slack voltage magnitude: 1 unless overridden by the case.
    pub fn slack_voltage(&self) -> f64 {
        self.voltage_setpoint(0).unwrap_or(1.0)
    }

    /// Voltage setpoint at a bus from the bus or its generator record.
    pub fn voltage_setpoint(&self, bus: usize) -> Option<f64> {
        self.buses[bus]
            .vset
            .or_else(|| self.gen_of_bus[bus].and_then(|g| self.generators[g].v_set))
    }

    pub fn total_load(&self) -> f64 {
        self.buses.iter().map(|b| b.pd).sum()
    }

    /// Reads a case from JSON text (physical units).
    pub fn from_json(text: &str) -> Result<Network, NetError> {
        CaseFile::from_json(text)?.to_network()
    }

    /// Serializes to the JSON case format (physical units).
    pub fn to_json(&self) -> String {
        CaseFile::from_network(self).to_json()
    }

    /// Rebuilds lookup tables after deserializing the per-unit form.
    pub fn revalidate(mut self) -> Result<Network, NetError> {
        self.validate()?;
        Ok(self)
    }
}

/// Parses either a JSON case or a MATPOWER `mpc` file, chosen by content.
pub fn parse_case(text: &str) -> Result<Network, NetError> {
    if text.trim_start().starts_with('{') {
        Network::from_json(text)
    } else {
        parse_matpower(text)
    }
}
