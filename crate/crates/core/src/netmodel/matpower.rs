//! Importer for a restricted subset of MATPOWER `mpc` case files.
//!
//! Supported: `baseMVA`, `bus`, `gen`, `branch` and `gencost` (model 2,
//! polynomial of degree at most 2). Anything the data model cannot
//! represent (shunts, charging, taps, phase shifts, out-of-service
//! elements) is rejected.

use std::collections::HashMap;

use super::json::{BusRecord, CaseFile, GeneratorRecord, LineRecord};
use super::{BusKind, NetError, Network};

struct Table {
    rows: Vec<(usize, Vec<f64>)>,
}

fn err(line: usize, message: impl Into<String>) -> NetError {
    NetError::Matpower {
        line,
        message: message.into(),
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn parse_tables(text: &str) -> Result<(Option<f64>, HashMap<String, Table>), NetError> {
    let mut base = None;
    let mut tables = HashMap::new();
    let mut current: Option<(String, Table)> = None;
    let mut pending = String::new();
    let mut pending_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some((name, mut table)) = current.take() {
            let (body, closed) = match line.find(']') {
                Some(i) => (&line[..i], true),
                None => (line, false),
            };
            for chunk in body.split(';') {
                let chunk = chunk.trim();
                if pending.is_empty() {
                    pending_line = lineno;
                }
                pending.push(' ');
                pending.push_str(chunk);
                // a row ends at ';' or at the end of a physical line
                flush_row(&mut pending, pending_line, &mut table)?;
            }
            if closed {
                tables.insert(name, table);
            } else {
                current = Some((name, table));
            }
            continue;
        }
        if line.starts_with("function") {
            continue;
        }
        let Some(rest) = line.strip_prefix("mpc.") else {
            return Err(err(lineno, format!("unexpected statement `{line}`")));
        };
        let Some((field, value)) = rest.split_once('=') else {
            return Err(err(lineno, "expected an assignment"));
        };
        let field = field.trim();
        let value = value.trim().trim_end_matches(';').trim();
        match field {
            "version" => {}
            "baseMVA" => {
                base = Some(
                    value
                        .parse::<f64>()
                        .map_err(|_| err(lineno, "baseMVA is not a number"))?,
                );
            }
            "bus" | "gen" | "branch" | "gencost" => {
                let Some(body) = value.strip_prefix('[') else {
                    return Err(err(lineno, format!("mpc.{field} must be a matrix literal")));
                };
                let mut table = Table { rows: Vec::new() };
                let (body, closed) = match body.find(']') {
                    Some(i) => (&body[..i], true),
                    None => (body, false),
                };
                for chunk in body.split(';') {
                    pending.push(' ');
                    pending.push_str(chunk);
                    pending_line = lineno;
                    flush_row(&mut pending, pending_line, &mut table)?;
                }
                if closed {
                    tables.insert(field.to_string(), table);
                } else {
                    current = Some((field.to_string(), table));
                }
            }
            other => return Err(err(lineno, format!("unsupported field mpc.{other}"))),
        }
    }
    if let Some((name, _)) = current {
        return Err(err(
            text.lines().count(),
            format!("matrix mpc.{name} is not closed"),
        ));
    }
    Ok((base, tables))
}

fn flush_row(pending: &mut String, line: usize, table: &mut Table) -> Result<(), NetError> {
    let vals: Result<Vec<f64>, _> = pending
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>())
        .collect();
    let vals = vals.map_err(|_| err(line, format!("cannot parse row `{}`", pending.trim())))?;
    if !vals.is_empty() {
        table.rows.push((line, vals));
    }
    pending.clear();
    Ok(())
}

fn need(row: &(usize, Vec<f64>), n: usize, what: &str) -> Result<(), NetError> {
    if row.1.len() < n {
        return Err(err(
            row.0,
            format!(
                "{what} row needs at least {n} columns, found {}",
                row.1.len()
            ),
        ));
    }
    Ok(())
}

/// Parses a MATPOWER case into a validated per-unit network.
pub fn parse_matpower(text: &str) -> Result<Network, NetError> {
    to_case_file(text)?.to_network()
}

pub(crate) fn to_case_file(text: &str) -> Result<CaseFile, NetError> {
    let (base, mut tables) = parse_tables(text)?;
    let base = base.ok_or_else(|| err(0, "missing mpc.baseMVA"))?;
    let mut take = |name: &str| {
        tables
            .remove(name)
            .ok_or_else(|| err(0, format!("missing mpc.{name}")))
    };
    let bus_t = take("bus")?;
    let gen_t = take("gen")?;
    let branch_t = take("branch")?;
    let cost_t = take("gencost")?;

    // slack first, then file order
    let mut order: Vec<usize> = (0..bus_t.rows.len()).collect();
    let slack_rows: Vec<usize> = bus_t
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.1.get(1) == Some(&3.0))
        .map(|(i, _)| i)
        .collect();
    if slack_rows.len() != 1 {
        return Err(err(
            0,
            format!(
                "expected exactly one reference bus, found {}",
                slack_rows.len()
            ),
        ));
    }
    order.retain(|&i| i != slack_rows[0]);
    order.insert(0, slack_rows[0]);
    let mut id_map = HashMap::new();
    let mut buses = Vec::new();
    for (new_id, &ri) in order.iter().enumerate() {
        let row = &bus_t.rows[ri];
        need(row, 13, "bus")?;
        let r = &row.1;
        let ext = r[0] as i64;
        if id_map.insert(ext, new_id).is_some() {
            return Err(err(row.0, format!("duplicate bus number {ext}")));
        }
        let kind = match r[1] as i64 {
            3 => BusKind::Slack,
            2 => BusKind::Generator,
            1 => BusKind::Load,
            t => return Err(err(row.0, format!("unsupported bus type {t}"))),
        };
        if r[4] != 0.0 || r[5] != 0.0 {
            return Err(err(row.0, "bus shunts (Gs, Bs) are not supported"));
        }
        let kv = if r[9] > 0.0 { r[9] } else { 1.0 };
        buses.push(BusRecord {
            id: new_id,
            kind,
            renewable: false,
            base_kv: kv,
            vmin_kv: r[12] * kv,
            vmax_kv: r[11] * kv,
            pd_mw: r[2],
            qd_mvar: r[3],
            vset_kv: None,
            gs_mw: None,
            bs_mvar: None,
        });
    }
    let map_bus = |ext: f64, line: usize| -> Result<usize, NetError> {
        id_map
            .get(&(ext as i64))
            .copied()
            .ok_or_else(|| err(line, format!("unknown bus number {ext}")))
    };

    if cost_t.rows.len() != gen_t.rows.len() {
        return Err(err(0, "gencost must have one row per generator"));
    }
    let mut generators = Vec::new();
    for (g, c) in gen_t.rows.iter().zip(&cost_t.rows) {
        need(g, 10, "gen")?;
        let r = &g.1;
        if r[7] <= 0.0 {
            return Err(err(g.0, "out-of-service generators are not supported"));
        }
        let bus = map_bus(r[0], g.0)?;
        need(c, 4, "gencost")?;
        if c.1[0] != 2.0 {
            return Err(err(c.0, "only polynomial gencost (model 2) is supported"));
        }
        let n = c.1[3] as usize;
        if n > 3 || c.1.len() < 4 + n {
            return Err(err(c.0, "gencost polynomial must have degree at most 2"));
        }
        let mut cost = [0.0; 3];
        for (k, v) in c.1[4..4 + n].iter().enumerate() {
            cost[3 - n + k] = *v;
        }
        let kv = buses[bus].base_kv;
        generators.push(GeneratorRecord {
            bus,
            pmin_mw: r[9],
            pmax_mw: r[8],
            qmin_mvar: r[4],
            qmax_mvar: r[3],
            cost,
            p_set_mw: Some(r[1]),
            v_set_kv: Some(r[5] * kv),
        });
    }

    let mut lines = Vec::new();
    for row in &branch_t.rows {
        need(row, 11, "branch")?;
        let r = &row.1;
        if r[10] <= 0.0 {
            return Err(err(row.0, "out-of-service branches are not supported"));
        }
        if r[4] != 0.0 {
            return Err(err(row.0, "line charging (b) is not supported"));
        }
        if r[8] != 0.0 && r[8] != 1.0 {
            return Err(err(row.0, "transformer taps are not supported"));
        }
        if r[9] != 0.0 {
            return Err(err(row.0, "phase shifters are not supported"));
        }
        let from = map_bus(r[0], row.0)?;
        let to = map_bus(r[1], row.0)?;
        let kv = buses[from].base_kv;
        let zbase = kv * kv / base;
        let rate = r[5];
        let zabs = (r[2] * r[2] + r[3] * r[3]).sqrt();
        // with |V| near 1 the flow limit maps to |dV| <= rate / |y| = rate |z|
        let dv_pu = if rate > 0.0 { rate / base * zabs } else { 2.0 };
        lines.push(LineRecord {
            from,
            to,
            r_ohm: r[2] * zbase,
            x_ohm: r[3] * zbase,
            dv_max_kv: Some(dv_pu * kv),
            s_max_mva: (rate > 0.0).then_some(rate),
            charging_s: None,
            tap: None,
        });
    }

    Ok(CaseFile {
        name: String::new(),
        base_mva: base,
        buses,
        lines,
        generators,
    })
}
