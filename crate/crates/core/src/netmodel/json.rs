//! JSON case format in physical units and its per-unit conversion.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Bus, BusKind, Generator, Line, NetError, Network};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseFile {
    #[serde(default)]
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<BusRecord>,
    pub lines: Vec<LineRecord>,
    pub generators: Vec<GeneratorRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusRecord {
    pub id: usize,
    pub kind: BusKind,
    #[serde(default)]
    pub renewable: bool,
    pub base_kv: f64,
    pub vmin_kv: f64,
    pub vmax_kv: f64,
    #[serde(default)]
    pub pd_mw: f64,
    #[serde(default)]
    pub qd_mvar: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vset_kv: Option<f64>,
    /// Shunt conductance; only zero is accepted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gs_mw: Option<f64>,
    /// Shunt susceptance; only zero is accepted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bs_mvar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineRecord {
    pub from: usize,
    pub to: usize,
    pub r_ohm: f64,
    pub x_ohm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dv_max_kv: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_max_mva: Option<f64>,
    /// Line charging susceptance in siemens; only zero is accepted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charging_s: Option<f64>,
    /// Off-nominal tap ratio; only 1 is accepted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorRecord {
    pub bus: usize,
    pub pmin_mw: f64,
    pub pmax_mw: f64,
    pub qmin_mvar: f64,
    pub qmax_mvar: f64,
    /// `[c2, c1, c0]` for cost in currency per hour with `P` in MW.
    pub cost: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_set_mw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_set_kv: Option<f64>,
}

impl CaseFile {
    pub fn from_json(text: &str) -> Result<CaseFile, NetError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| NetError::Schema {
            path: e.path().to_string(),
            message: e.into_inner().to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case serialization cannot fail")
    }

    /// Converts to per-unit and validates.
    pub fn to_network(&self) -> Result<Network, NetError> {
        let base = self.base_mva;
        if !(base > 0.0) {
            return Err(NetError::Schema {
                path: "base_mva".into(),
                message: "must be positive".into(),
            });
        }
        let kv_of = |bus: usize, what: &str| -> Result<f64, NetError> {
            self.buses
                .iter()
                .find(|b| b.id == bus)
                .map(|b| b.base_kv)
                .ok_or_else(|| NetError::Invariant(format!("{what} references missing bus {bus}")))
        };

        let mut buses = Vec::with_capacity(self.buses.len());
        for (i, b) in self.buses.iter().enumerate() {
            if b.gs_mw.is_some_and(|v| v != 0.0) || b.bs_mvar.is_some_and(|v| v != 0.0) {
                return Err(NetError::Unsupported(format!(
                    "bus {i} declares a shunt element"
                )));
            }
            buses.push(Bus {
                id: b.id,
                kind: b.kind,
                renewable: b.renewable,
                base_kv: b.base_kv,
                vmin: b.vmin_kv / b.base_kv,
                vmax: b.vmax_kv / b.base_kv,
                pd: b.pd_mw / base,
                qd: b.qd_mvar / base,
                vset: b.vset_kv.map(|v| v / b.base_kv),
            });
        }

        let mut lines = Vec::with_capacity(self.lines.len());
        for (i, l) in self.lines.iter().enumerate() {
            if l.charging_s.is_some_and(|v| v != 0.0) {
                return Err(NetError::Unsupported(format!(
                    "line {i} declares line charging"
                )));
            }
            if l.tap.is_some_and(|t| t != 1.0) {
                return Err(NetError::Unsupported(format!(
                    "line {i} declares an off-nominal tap"
                )));
            }
            let kv = kv_of(l.from, &format!("line {i}"))?;
            if kv_of(l.to, &format!("line {i}"))? != kv {
                return Err(NetError::Unsupported(format!(
                    "line {i} joins buses with different base voltages (transformer)"
                )));
            }
            let zbase = kv * kv / base;
            let z = Complex64::new(l.r_ohm, l.x_ohm) / zbase;
            if z.norm() == 0.0 {
                return Err(NetError::Invariant(format!("line {i} has zero impedance")));
            }
            let y = 1.0 / z;
            let s_max = l.s_max_mva.map(|s| s / base);
            let (dv_max, dv_derived) = match (l.dv_max_kv, s_max) {
                (Some(dv), _) => (dv / kv, false),
                (None, Some(s)) => (s / y.norm(), true),
                (None, None) => {
                    return Err(NetError::Schema {
                        path: format!("lines[{i}]"),
                        message: "needs dv_max_kv or s_max_mva".into(),
                    })
                }
            };
            lines.push(Line {
                from: l.from,
                to: l.to,
                y,
                dv_max,
                s_max,
                dv_derived,
            });
        }

        let mut generators = Vec::with_capacity(self.generators.len());
        for (i, g) in self.generators.iter().enumerate() {
            let kv = kv_of(g.bus, &format!("generator {i}"))?;
            generators.push(Generator {
                bus: g.bus,
                pmin: g.pmin_mw / base,
                pmax: g.pmax_mw / base,
                qmin: g.qmin_mvar / base,
                qmax: g.qmax_mvar / base,
                cost: [g.cost[0] * base * base, g.cost[1] * base, g.cost[2]],
                p_set: g.p_set_mw.map(|p| p / base),
                v_set: g.v_set_kv.map(|v| v / kv),
            });
        }
        Network::new(self.name.clone(), base, buses, lines, generators)
    }

    /// Converts a per-unit network back to physical units.
    pub fn from_network(net: &Network) -> CaseFile {
        let base = net.base_mva;
        let buses = net
            .buses
            .iter()
            .map(|b| BusRecord {
                id: b.id,
                kind: b.kind,
                renewable: b.renewable,
                base_kv: b.base_kv,
                vmin_kv: b.vmin * b.base_kv,
                vmax_kv: b.vmax * b.base_kv,
                pd_mw: b.pd * base,
                qd_mvar: b.qd * base,
                vset_kv: b.vset.map(|v| v * b.base_kv),
                gs_mw: None,
                bs_mvar: None,
            })
            .collect();
        let lines = net
            .lines
            .iter()
            .map(|l| {
                let kv = net.buses[l.from].base_kv;
                let z = l.impedance() * (kv * kv / base);
                LineRecord {
                    from: l.from,
                    to: l.to,
                    r_ohm: z.re,
                    x_ohm: z.im,
                    dv_max_kv: (!l.dv_derived).then_some(l.dv_max * kv),
                    s_max_mva: l.s_max.map(|s| s * base),
                    charging_s: None,
                    tap: None,
                }
            })
            .collect();
        let generators = net
            .generators
            .iter()
            .map(|g| {
                let kv = net.buses[g.bus].base_kv;
                GeneratorRecord {
                    bus: g.bus,
                    pmin_mw: g.pmin * base,
                    pmax_mw: g.pmax * base,
                    qmin_mvar: g.qmin * base,
                    qmax_mvar: g.qmax * base,
                    cost: [g.cost[0] / (base * base), g.cost[1] / base, g.cost[2]],
                    p_set_mw: g.p_set.map(|p| p * base),
                    v_set_kv: g.v_set.map(|v| v * kv),
                }
            })
            .collect();
        CaseFile {
            name: net.name.clone(),
            base_mva: base,
            buses,
            lines,
            generators,
        }
    }
}
