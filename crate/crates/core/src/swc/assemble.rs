use std::ops::Range;

use rayon::prelude::*;

use super::{SwcError, SwcOptions};
use crate::conic::{Cone, ConeProgram, HermitianEmbedding, LinearForm, ProgramBuilder};
use crate::netmodel::Network;
use crate::relaxation::WForms;
use crate::uncertainty::{mismatch, ScenarioSet, UncertaintyModel};

/// Variable and row ranges of one scenario block.
#[derive(Debug, Clone)]
pub struct ScenarioLayout {
    pub qg: Range<usize>,
    pub w: Range<usize>,
    pub slack: Range<usize>,
    /// Norm epigraphs `(tau, re, im)` for the two ends of each penalized line.
    pub line_moduli: Range<usize>,
    pub rows: Range<usize>,
}

impl ScenarioLayout {
    pub fn num_vars(&self) -> usize {
        self.qg.len() + self.w.len() + self.slack.len() + self.line_moduli.len()
    }
}

#[derive(Debug, Clone)]
pub struct SwcLayout {
    pub pg: Range<usize>,
    pub wu: Range<usize>,
    pub alpha: Range<usize>,
    pub gamma: usize,
    /// Number of variables not owned by any scenario.
    pub shared_vars: usize,
    pub scenarios: Vec<ScenarioLayout>,
    pub embedding: HermitianEmbedding,
    pub l_prob: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SwcProgram {
    pub program: ConeProgram,
    pub layout: SwcLayout,
}

struct Row {
    tag: &'static str,
    entries: LinearForm,
    rhs: f64,
}

fn row(tag: &'static str, entries: LinearForm, rhs: f64) -> Row {
    Row { tag, entries, rhs }
}

fn plus(mut f: LinearForm, extra: &[(usize, f64)]) -> LinearForm {
    f.extend_from_slice(extra);
    f
}

/// Number of nonnegative slacks per scenario block.
fn slack_count(net: &Network, penalized: bool) -> usize {
    4 * net.n_gen() + 2 * net.n_bus() + net.lines.len() + usize::from(penalized)
}

/// Sampled program: shared `(P^G, W^u, alpha, gamma)` and, per scenario, a
/// reactive dispatch and a Hermitian PSD lift certifying feasibility.
pub fn assemble_swc(
    net: &Network,
    model: &UncertaintyModel,
    scenarios: &ScenarioSet,
    opts: &SwcOptions,
) -> Result<SwcProgram, SwcError> {
    model.validate(net)?;
    let n = net.n_bus();
    let ng = net.n_gen();
    if scenarios.is_empty() {
        return Err(SwcError::Invalid("scenario set is empty".into()));
    }
    if let Some(s) = scenarios.scenarios.iter().find(|s| s.delta.len() != 2 * n) {
        return Err(SwcError::Invalid(format!(
            "scenario {} has {} entries, expected {}",
            s.index,
            s.delta.len(),
            2 * n
        )));
    }
    if !(opts.gamma_b >= 0.0 && opts.gamma_l >= 0.0) {
        return Err(SwcError::Invalid("penalties must be nonnegative".into()));
    }
    let l_prob: Vec<usize> = match &opts.l_prob {
        None => (0..net.lines.len()).collect(),
        Some(v) => {
            if let Some(bad) = v.iter().find(|&&l| l >= net.lines.len()) {
                return Err(SwcError::Invalid(format!("line {bad} does not exist")));
            }
            v.clone()
        }
    };
    let with_lines = opts.gamma_l > 0.0 && !l_prob.is_empty();

    let mut b = ProgramBuilder::new();
    let pg = b.add_block("pg", Cone::Free(ng));
    let wu = b.add_block("wu", Cone::Free(ng));
    let alpha = b.add_block("alpha", Cone::NonNeg(ng));
    let gamma = b.add_block("gamma", Cone::Free(1)).start;
    b.add_cost(gamma, 1.0);
    let mut gen_cost: LinearForm = Vec::new();
    let mut c0 = 0.0;
    for (gi, g) in net.generators.iter().enumerate() {
        gen_cost.extend(b.add_quadratic_epigraph(format!("cost{gi}"), pg.start + gi, g.cost[0]));
        gen_cost.push((pg.start + gi, g.cost[1]));
        c0 += g.cost[2];
    }
    // tie-break among deployment vectors: distance to uniform
    let reg = b.add_block("alpha_reg", Cone::Soc(ng + 1));
    b.add_cost(reg.start, opts.alpha_reg);
    for gi in 0..ng {
        b.add_row(
            "alpha.reg",
            &[(reg.start + 1 + gi, 1.0), (alpha.start + gi, -1.0)],
            -1.0 / ng as f64,
        );
    }
    let simplex: LinearForm = alpha.clone().map(|j| (j, 1.0)).collect();
    b.add_row("simplex", &simplex, 1.0);
    let slack_gen = net
        .generator_at(0)
        .ok_or_else(|| SwcError::Invalid("slack bus has no generator".into()))?;
    let v0 = net.slack_voltage();
    b.add_row("ref", &[(wu.start + slack_gen, 1.0)], v0 * v0);
    // Without penalties every scenario epigraph would be the same row, which
    // makes the system rank deficient at the optimum; keep a single copy.
    let penalized = opts.gamma_b != 0.0 || with_lines;
    if !penalized {
        b.add_row("epi", &plus(gen_cost.clone(), &[(gamma, -1.0)]), -c0);
    }
    let shared_vars = b.num_vars();

    let embedding = crate::conic::embed_hermitian(n);
    let mut layouts = Vec::with_capacity(scenarios.len());
    for i in 0..scenarios.len() {
        let qg = b.add_block(format!("qg[{i}]"), Cone::Free(ng));
        let w = b.add_block(format!("W[{i}]"), embedding.cone());
        let slack = b.add_block(
            format!("slack[{i}]"),
            Cone::NonNeg(slack_count(net, penalized)),
        );
        let start = b.num_vars();
        if with_lines {
            for (j, _) in l_prob.iter().enumerate() {
                b.add_block(format!("L[{i}][{j}].from"), Cone::Soc(3));
                b.add_block(format!("L[{i}][{j}].to"), Cone::Soc(3));
            }
        }
        layouts.push(ScenarioLayout {
            qg,
            w,
            slack,
            line_moduli: start..b.num_vars(),
            rows: 0..0,
        });
    }

    let blocks: Vec<Vec<Row>> = layouts
        .par_iter()
        .zip(scenarios.scenarios.par_iter())
        .map(|(lay, delta)| {
            let forms = WForms {
                range: lay.w.clone(),
                embedding: embedding.clone(),
            };
            let m = mismatch(delta);
            let load = model.net_load(net, delta);
            let mut s = lay.slack.start;
            let mut next = || {
                s += 1;
                s - 1
            };
            let mut rows = Vec::new();
            for (gi, g) in net.generators.iter().enumerate() {
                rows.push(row(
                    "link",
                    plus(forms.diag(g.bus), &[(wu.start + gi, -1.0)]),
                    0.0,
                ));
            }
            for k in 0..n {
                let (mut p, mut q) = forms.injection(net, k);
                if let Some(gi) = net.generator_at(k) {
                    p.push((pg.start + gi, -1.0));
                    if m != 0.0 {
                        p.push((alpha.start + gi, -m));
                    }
                    q.push((lay.qg.start + gi, -1.0));
                }
                rows.push(row("pf.p", p, -load[k].re));
                rows.push(row("pf.q", q, -load[k].im));
            }
            for (gi, g) in net.generators.iter().enumerate() {
                let mut pbar = vec![(pg.start + gi, 1.0)];
                if m != 0.0 {
                    pbar.push((alpha.start + gi, m));
                }
                rows.push(row(
                    "pl1.min",
                    plus(pbar.clone(), &[(next(), -1.0)]),
                    g.pmin,
                ));
                rows.push(row("pl1.max", plus(pbar, &[(next(), 1.0)]), g.pmax));
                let q = lay.qg.start + gi;
                rows.push(row("pl2.min", vec![(q, 1.0), (next(), -1.0)], g.qmin));
                rows.push(row("pl2.max", vec![(q, 1.0), (next(), 1.0)], g.qmax));
            }
            for (k, bus) in net.buses.iter().enumerate() {
                rows.push(row(
                    "vl1.min",
                    plus(forms.diag(k), &[(next(), -1.0)]),
                    bus.vmin * bus.vmin,
                ));
                rows.push(row(
                    "vl1.max",
                    plus(forms.diag(k), &[(next(), 1.0)]),
                    bus.vmax * bus.vmax,
                ));
            }
            for l in &net.lines {
                rows.push(row(
                    "vl2",
                    plus(forms.dv_sq(l.from, l.to), &[(next(), 1.0)]),
                    l.dv_max * l.dv_max,
                ));
            }
            if !penalized {
                debug_assert_eq!(s, lay.slack.end);
                return rows;
            }
            let mut epi = gen_cost.clone();
            epi.push((gamma, -1.0));
            epi.push((next(), 1.0));
            if opts.gamma_b != 0.0 {
                epi.extend(lay.qg.clone().map(|j| (j, opts.gamma_b)));
            }
            if with_lines {
                let mut u = lay.line_moduli.start;
                for &li in &l_prob {
                    let line = &net.lines[li];
                    let ymag = line.y.norm();
                    for (a, c) in [(line.from, line.to), (line.to, line.from)] {
                        // |W_aa - W_ac| |y| with W_aa - W_ac = (W_aa - Re W_ac) - i Im W_ac
                        let mut re = crate::relaxation::scaled_form(forms.diag(a), -ymag);
                        re.extend(crate::relaxation::scaled_form(forms.re(a, c), ymag));
                        re.push((u + 1, 1.0));
                        rows.push(row("lmod.re", re, 0.0));
                        let mut im = crate::relaxation::scaled_form(forms.im(a, c), ymag);
                        im.push((u + 2, 1.0));
                        rows.push(row("lmod.im", im, 0.0));
                        epi.push((u, opts.gamma_l));
                        u += 3;
                    }
                }
            }
            rows.push(row("epi", epi, -c0));
            debug_assert_eq!(s, lay.slack.end);
            rows
        })
        .collect();

    for (lay, rows) in layouts.iter_mut().zip(blocks) {
        let start = b.num_rows();
        for r in &rows {
            b.add_row(r.tag, &r.entries, r.rhs);
        }
        lay.rows = start..b.num_rows();
    }
    Ok(SwcProgram {
        program: b.build(),
        layout: SwcLayout {
            pg,
            wu,
            alpha,
            gamma,
            shared_vars,
            scenarios: layouts,
            embedding,
            l_prob,
        },
    })
}
