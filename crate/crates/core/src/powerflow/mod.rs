//! AC power flow in polar coordinates and the DC approximation.
//!
//! The complex power leaving bus `k` is
//! `S_k = sum_l (W_kk - W_kl) conj(y_kl)` with `W = V V^*`, i.e.
//! `S_k = V_k conj(sum_l y_kl (V_k - V_l))`.

mod dc;

pub use dc::{dc_linearize, DcModel};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::{BusKind, Network};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PfError {
    #[error("dimension mismatch: expected {expected} buses, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("power flow did not converge in {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("power flow Jacobian is singular")]
    SingularJacobian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexVoltageState {
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
}

impl ComplexVoltageState {
    pub fn flat(n: usize) -> Self {
        ComplexVoltageState {
            vm: vec![1.0; n],
            va: vec![0.0; n],
        }
    }

    pub fn from_phasors(v: &[Complex64]) -> Self {
        ComplexVoltageState {
            vm: v.iter().map(|z| z.norm()).collect(),
            va: v.iter().map(|z| z.arg()).collect(),
        }
    }

    pub fn phasors(&self) -> Vec<Complex64> {
        self.vm
            .iter()
            .zip(&self.va)
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.vm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vm.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PfBusType {
    Slack,
    Pv,
    Pq,
}

/// What is held fixed at every bus. `p` and `q` are net injections
/// (generation minus load); `vm` is used at slack and PV buses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionSpec {
    pub kinds: Vec<PfBusType>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub vm: Vec<f64>,
}

impl InjectionSpec {
    /// Spec from the case data: generator `p_set` (0 if absent), loads, and
    /// voltage setpoints (1 if absent).
    pub fn from_network(net: &Network) -> Self {
        let gen_p: Vec<f64> = net
            .generators
            .iter()
            .map(|g| g.p_set.unwrap_or(0.0))
            .collect();
        let vm: Vec<f64> = (0..net.n_bus())
            .map(|k| {
                if k == 0 {
                    net.slack_voltage()
                } else {
                    net.voltage_setpoint(k).unwrap_or(1.0)
                }
            })
            .collect();
        Self::with_dispatch(net, &gen_p, &vm)
    }

    /// Spec for a given generator dispatch and voltage magnitudes.
    pub fn with_dispatch(net: &Network, gen_p: &[f64], vm: &[f64]) -> Self {
        let n = net.n_bus();
        let mut p: Vec<f64> = net.buses.iter().map(|b| -b.pd).collect();
        let q: Vec<f64> = net.buses.iter().map(|b| -b.qd).collect();
        for (g, pg) in net.generators.iter().zip(gen_p) {
            p[g.bus] += pg;
        }
        let kinds = net
            .buses
            .iter()
            .map(|b| match b.kind {
                BusKind::Slack => PfBusType::Slack,
                BusKind::Generator => PfBusType::Pv,
                BusKind::Load => PfBusType::Pq,
            })
            .collect();
        InjectionSpec {
            kinds,
            p,
            q,
            vm: vm[..n].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PfOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PfOptions {
    fn default() -> Self {
        PfOptions {
            tol: 1e-8,
            max_iter: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineFlow {
    pub line: usize,
    pub s_from: Complex64,
    pub s_to: Complex64,
    /// `|V_from - V_to|`
    pub dv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    pub state: ComplexVoltageState,
    /// Net injection at every bus.
    pub injection: Vec<Complex64>,
    /// Active and reactive output of every generator.
    pub gen_p: Vec<f64>,
    pub gen_q: Vec<f64>,
    pub flows: Vec<LineFlow>,
    pub iterations: usize,
    pub residual: f64,
}

impl PowerFlowSolution {
    /// Evaluates injections, generator outputs and flows at a given state.
    pub fn from_state(net: &Network, state: ComplexVoltageState) -> Self {
        let v = state.phasors();
        let injection = injections(net, &v);
        let mut gen_p = Vec::with_capacity(net.n_gen());
        let mut gen_q = Vec::with_capacity(net.n_gen());
        for g in &net.generators {
            let b = &net.buses[g.bus];
            gen_p.push(injection[g.bus].re + b.pd);
            gen_q.push(injection[g.bus].im + b.qd);
        }
        let flows = net
            .lines
            .iter()
            .enumerate()
            .map(|(li, l)| {
                let (vf, vt) = (v[l.from], v[l.to]);
                let i = l.y * (vf - vt);
                LineFlow {
                    line: li,
                    s_from: vf * i.conj(),
                    s_to: vt * (-i).conj(),
                    dv: (vf - vt).norm(),
                }
            })
            .collect();
        PowerFlowSolution {
            state,
            injection,
            gen_p,
            gen_q,
            flows,
            iterations: 0,
            residual: 0.0,
        }
    }
}

/// Net complex injection at every bus for the given phasors.
pub fn injections(net: &Network, v: &[Complex64]) -> Vec<Complex64> {
    let mut s = vec![Complex64::new(0.0, 0.0); net.n_bus()];
    for l in &net.lines {
        let i = l.y * (v[l.from] - v[l.to]);
        s[l.from] += v[l.from] * i.conj();
        s[l.to] += v[l.to] * (-i).conj();
    }
    s
}

/// Per-bus `(dP, dQ)`: specified injection minus the injection implied by the state.
pub fn pf_residual(
    net: &Network,
    state: &ComplexVoltageState,
    injection: &[Complex64],
) -> Result<Vec<(f64, f64)>, PfError> {
    let n = net.n_bus();
    for len in [state.vm.len(), state.va.len(), injection.len()] {
        if len != n {
            return Err(PfError::Dimension {
                expected: n,
                got: len,
            });
        }
    }
    let s = injections(net, &state.phasors());
    Ok(injection
        .iter()
        .zip(&s)
        .map(|(a, b)| (a.re - b.re, a.im - b.im))
        .collect())
}

struct Unknowns {
    // buses whose angle / magnitude is unknown
    ang: Vec<usize>,
    mag: Vec<usize>,
}

fn unknowns(kinds: &[PfBusType]) -> Unknowns {
    let ang = (0..kinds.len())
        .filter(|&k| kinds[k] != PfBusType::Slack)
        .collect();
    let mag = (0..kinds.len())
        .filter(|&k| kinds[k] == PfBusType::Pq)
        .collect();
    Unknowns { ang, mag }
}

/// Mismatch `[P_calc - P_spec at non-slack; Q_calc - Q_spec at PQ]`.
pub fn mismatch(net: &Network, state: &ComplexVoltageState, spec: &InjectionSpec) -> DVector<f64> {
    let u = unknowns(&spec.kinds);
    let s = injections(net, &state.phasors());
    let mut f = DVector::zeros(u.ang.len() + u.mag.len());
    for (r, &k) in u.ang.iter().enumerate() {
        f[r] = s[k].re - spec.p[k];
    }
    for (r, &k) in u.mag.iter().enumerate() {
        f[u.ang.len() + r] = s[k].im - spec.q[k];
    }
    f
}

/// Analytic Jacobian of [`mismatch`] with respect to
/// `[angles at non-slack buses; magnitudes at PQ buses]`.
pub fn jacobian(net: &Network, state: &ComplexVoltageState, kinds: &[PfBusType]) -> DMatrix<f64> {
    let ybus = net.ybus();
    let n = net.n_bus();
    let v = DVector::from_vec(state.phasors());
    let ibus = &ybus * &v;
    let vnorm = v.map(|z| z / z.norm());
    let j = Complex64::new(0.0, 1.0);
    // dS/dVa = j diag(V) conj(diag(I) - Y diag(V))
    // dS/dVm = diag(V) conj(Y diag(Vnorm)) + conj(diag(I)) diag(Vnorm)
    let mut ds_dva = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    let mut ds_dvm = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for r in 0..n {
        for c in 0..n {
            let diag_i = if r == c {
                ibus[r]
            } else {
                Complex64::new(0.0, 0.0)
            };
            ds_dva[(r, c)] = j * v[r] * (diag_i - ybus[(r, c)] * v[c]).conj();
            let mut t = v[r] * (ybus[(r, c)] * vnorm[c]).conj();
            if r == c {
                t += ibus[r].conj() * vnorm[r];
            }
            ds_dvm[(r, c)] = t;
        }
    }
    let u = unknowns(kinds);
    let na = u.ang.len();
    let dim = na + u.mag.len();
    let mut jac = DMatrix::zeros(dim, dim);
    for (ri, &k) in u.ang.iter().enumerate() {
        for (ci, &l) in u.ang.iter().enumerate() {
            jac[(ri, ci)] = ds_dva[(k, l)].re;
        }
        for (ci, &l) in u.mag.iter().enumerate() {
            jac[(ri, na + ci)] = ds_dvm[(k, l)].re;
        }
    }
    for (ri, &k) in u.mag.iter().enumerate() {
        for (ci, &l) in u.ang.iter().enumerate() {
            jac[(na + ri, ci)] = ds_dva[(k, l)].im;
        }
        for (ci, &l) in u.mag.iter().enumerate() {
            jac[(na + ri, na + ci)] = ds_dvm[(k, l)].im;
        }
    }
    jac
}

/// Newton-Raphson power flow from a flat start.
pub fn solve_pf(
    net: &Network,
    spec: &InjectionSpec,
    opts: &PfOptions,
) -> Result<PowerFlowSolution, PfError> {
    let n = net.n_bus();
    for len in [spec.kinds.len(), spec.p.len(), spec.q.len(), spec.vm.len()] {
        if len != n {
            return Err(PfError::Dimension {
                expected: n,
                got: len,
            });
        }
    }
    let u = unknowns(&spec.kinds);
    let mut state = ComplexVoltageState::flat(n);
    for k in 0..n {
        if spec.kinds[k] != PfBusType::Pq {
            state.vm[k] = spec.vm[k];
        }
    }
    let mut iter = 0;
    loop {
        let f = mismatch(net, &state, spec);
        let res = f.amax();
        if !res.is_finite() {
            return Err(PfError::NonConvergence {
                iterations: iter,
                residual: res,
            });
        }
        if res <= opts.tol {
            let mut sol = PowerFlowSolution::from_state(net, state);
            sol.iterations = iter;
            sol.residual = res;
            return Ok(sol);
        }
        if iter >= opts.max_iter {
            return Err(PfError::NonConvergence {
                iterations: iter,
                residual: res,
            });
        }
        let jac = jacobian(net, &state, &spec.kinds);
        let dx = jac.lu().solve(&(-f)).ok_or(PfError::SingularJacobian)?;
        if dx.iter().any(|v| !v.is_finite()) {
            return Err(PfError::SingularJacobian);
        }
        for (r, &k) in u.ang.iter().enumerate() {
            state.va[k] += dx[r];
        }
        for (r, &k) in u.mag.iter().enumerate() {
            state.vm[k] += dx[u.ang.len() + r];
        }
        iter += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LimitFamily {
    /// Active generation bounds.
    #[serde(rename = "PL.1")]
    Pl1,
    /// Reactive generation bounds.
    #[serde(rename = "PL.2")]
    Pl2,
    /// Bus voltage magnitude bounds.
    #[serde(rename = "VL.1")]
    Vl1,
    /// Line voltage-difference bound.
    #[serde(rename = "VL.2")]
    Vl2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub family: LimitFamily,
    /// Generator, bus or line index depending on the family.
    pub element: usize,
    pub value: f64,
    pub limit: f64,
    /// Amount by which the limit is exceeded (positive).
    pub excess: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub violations: Vec<Violation>,
}

impl ViolationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, family: LimitFamily) -> usize {
        self.violations
            .iter()
            .filter(|v| v.family == family)
            .count()
    }
}

/// Lists every violated operating limit; `tol` absorbs round-off.
pub fn check_limits(net: &Network, sol: &PowerFlowSolution, tol: f64) -> ViolationReport {
    let mut out = Vec::new();
    let mut bounds = |family, element, value: f64, lo: f64, hi: f64| {
        if value > hi + tol {
            out.push(Violation {
                family,
                element,
                value,
                limit: hi,
                excess: value - hi,
            });
        } else if value < lo - tol {
            out.push(Violation {
                family,
                element,
                value,
                limit: lo,
                excess: lo - value,
            });
        }
    };
    for (gi, g) in net.generators.iter().enumerate() {
        bounds(LimitFamily::Pl1, gi, sol.gen_p[gi], g.pmin, g.pmax);
    }
    for (gi, g) in net.generators.iter().enumerate() {
        bounds(LimitFamily::Pl2, gi, sol.gen_q[gi], g.qmin, g.qmax);
    }
    for (k, b) in net.buses.iter().enumerate() {
        bounds(LimitFamily::Vl1, k, sol.state.vm[k], b.vmin, b.vmax);
    }
    for f in &sol.flows {
        let l = &net.lines[f.line];
        bounds(LimitFamily::Vl2, f.line, f.dv, f64::NEG_INFINITY, l.dv_max);
    }
    ViolationReport { violations: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{Bus, Generator, Line};

    fn net2(y: Complex64, pd: f64) -> Network {
        let bus = |id, kind, pd| Bus {
            id,
            kind,
            renewable: false,
            base_kv: 1.0,
            vmin: 0.95,
            vmax: 1.05,
            pd,
            qd: 0.0,
            vset: None,
        };
        Network::new(
            "pf2",
            100.0,
            vec![bus(0, BusKind::Slack, 0.0), bus(1, BusKind::Load, pd)],
            vec![Line {
                from: 0,
                to: 1,
                y,
                dv_max: 0.5,
                s_max: None,
                dv_derived: false,
            }],
            vec![Generator {
                bus: 0,
                pmin: 0.0,
                pmax: 20.0,
                qmin: -20.0,
                qmax: 20.0,
                cost: [0.0, 1.0, 0.0],
                p_set: None,
                v_set: None,
            }],
        )
        .unwrap()
    }

    #[test]
    fn equal_voltages_leave_raw_injections() {
        let net = net2(Complex64::new(1.0, -10.0), 0.0);
        let inj = vec![Complex64::new(0.3, 0.1), Complex64::new(-0.3, -0.1)];
        let r = pf_residual(&net, &ComplexVoltageState::flat(2), &inj).unwrap();
        assert_eq!(r, vec![(0.3, 0.1), (-0.3, -0.1)]);
    }

    #[test]
    fn residual_dimension_checked() {
        let net = net2(Complex64::new(1.0, -10.0), 0.0);
        let r = pf_residual(&net, &ComplexVoltageState::flat(3), &[]);
        assert!(matches!(r, Err(PfError::Dimension { .. })));
    }

    #[test]
    fn overloaded_line_does_not_converge() {
        let net = net2(Complex64::new(0.0, -10.0), 10.5);
        let r = solve_pf(
            &net,
            &InjectionSpec::from_network(&net),
            &PfOptions::default(),
        );
        assert!(matches!(
            r,
            Err(PfError::NonConvergence { .. }) | Err(PfError::SingularJacobian)
        ));
    }

    #[test]
    fn voltage_violation_is_reported() {
        let net = net2(Complex64::new(0.0, -10.0), 0.0);
        let st = ComplexVoltageState {
            vm: vec![1.0, 1.08],
            va: vec![0.0, 0.0],
        };
        let rep = check_limits(&net, &PowerFlowSolution::from_state(&net, st), 1e-9);
        assert_eq!(rep.count(LimitFamily::Vl1), 1);
        let v = &rep.violations[0];
        assert_eq!(v.element, 1);
        assert!((v.excess - 0.03).abs() < 1e-12);
    }
}
