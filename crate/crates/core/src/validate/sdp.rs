//! Relaxation-consistent scenario check: with the controls fixed, search for
//! a certificate `(Q^G, W)` of the single-scenario block, letting a common
//! amount `t >= 0` relax every inequality. The scenario is feasible when the
//! smallest such `t` is within tolerance.

use crate::conic::{self, Cone, ProgramBuilder, Settings, Status};
use crate::netmodel::Network;
use crate::relaxation::WForms;
use crate::swc::ControlDecision;
use crate::uncertainty::{deploy, UncertaintyModel, UncertaintyVector};

use super::ViolationFamily;

pub(super) struct SdpVerdict {
    pub families: Vec<ViolationFamily>,
    pub detail: Option<String>,
}

pub(super) fn check(
    net: &Network,
    model: &UncertaintyModel,
    dec: &ControlDecision,
    delta: &UncertaintyVector,
    settings: &Settings,
    tol: f64,
) -> SdpVerdict {
    let n = net.n_bus();
    let ng = net.n_gen();
    let pbar = deploy(&dec.pg, &dec.alpha, delta);
    let load = model.net_load(net, delta);
    let mut families = Vec::new();
    if net
        .generators
        .iter()
        .zip(&pbar)
        .any(|(g, &p)| p > g.pmax + tol || p < g.pmin - tol)
    {
        families.push(ViolationFamily::Pl1);
    }

    let mut b = ProgramBuilder::new();
    let qg = b.add_block("qg", Cone::Free(ng));
    let forms = WForms::add(&mut b, "W", n);
    let t = b.add_block("t", Cone::NonNeg(1)).start;
    b.add_cost(t, 1.0);
    let n_slack = 2 * ng + 2 * n + net.lines.len();
    let slack = b.add_block("slack", Cone::NonNeg(n_slack));
    let mut tagged: Vec<(ViolationFamily, usize)> = Vec::with_capacity(n_slack);
    let mut s = slack.start;
    let mut bound = |b: &mut ProgramBuilder, fam, form: Vec<(usize, f64)>, lo: f64, hi: f64| {
        for (sign, rhs) in [(-1.0, lo), (1.0, hi)] {
            let mut row = form.clone();
            row.push((s, sign));
            row.push((t, -sign));
            b.add_row("limit", &row, rhs);
            tagged.push((fam, s));
            s += 1;
        }
    };
    for (gi, g) in net.generators.iter().enumerate() {
        b.add_row("link", &forms.diag(g.bus), dec.wu[gi]);
        bound(
            &mut b,
            ViolationFamily::Pl2,
            vec![(qg.start + gi, 1.0)],
            g.qmin,
            g.qmax,
        );
    }
    for k in 0..n {
        let (p, mut q) = forms.injection(net, k);
        let mut p_fixed = -load[k].re;
        if let Some(gi) = net.generator_at(k) {
            p_fixed += pbar[gi];
            q.push((qg.start + gi, -1.0));
        }
        b.add_row("pf.p", &p, p_fixed);
        b.add_row("pf.q", &q, -load[k].im);
    }
    for (k, bus) in net.buses.iter().enumerate() {
        bound(
            &mut b,
            ViolationFamily::Vl1,
            forms.diag(k),
            bus.vmin * bus.vmin,
            bus.vmax * bus.vmax,
        );
    }
    for l in &net.lines {
        let mut row = forms.dv_sq(l.from, l.to);
        row.push((s, 1.0));
        row.push((t, -1.0));
        b.add_row("limit", &row, l.dv_max * l.dv_max);
        tagged.push((ViolationFamily::Vl2, s));
        s += 1;
    }
    debug_assert_eq!(s, slack.end);

    let sol = match conic::solve(&b.build(), settings) {
        Ok(sol) => sol,
        Err(e) => {
            families.push(ViolationFamily::PfInfeasible);
            return SdpVerdict {
                families,
                detail: Some(format!("solver failed: {e}")),
            };
        }
    };
    match sol.status {
        Status::Optimal | Status::AlmostOptimal => {
            let tv = sol.x[t];
            for &(fam, j) in &tagged {
                if tv - sol.x[j] > tol && !families.contains(&fam) {
                    families.push(fam);
                }
            }
            SdpVerdict {
                families,
                detail: (tv > tol).then(|| format!("limits need relaxing by {tv:.3e}")),
            }
        }
        status => {
            families.push(ViolationFamily::PfInfeasible);
            SdpVerdict {
                families,
                detail: Some(format!("no certificate: solver status {status:?}")),
            }
        }
    }
}
