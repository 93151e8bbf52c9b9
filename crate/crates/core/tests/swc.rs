mod common;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use ccopf::conic::{self, Settings, Status};
use ccopf::netmodel::Network;
use ccopf::relaxation::solve_nominal_with;
use ccopf::swc::{
    apply_realtime, assemble_swc, binomial_tail, n_swc_exact, n_swc_explicit, shared_dimension,
    solve_swc, solve_swc_scenarios, SampleComplexitySpec, SwcError, SwcOptions, SwcSolution,
};
use ccopf::uncertainty::{
    deploy, mismatch, sample, ScenarioSet, UncertaintyModel, UncertaintyVector,
};
use common::load_case;
use num_complex::Complex64;

fn spec(eps: f64, beta: f64, n_u: usize) -> SampleComplexitySpec {
    SampleComplexitySpec::new(eps, beta, n_u).unwrap()
}

fn model_file(name: &str) -> UncertaintyModel {
    let text = std::fs::read_to_string(common::case_path("models").join(name)).unwrap();
    UncertaintyModel::from_json(&text).unwrap()
}

fn tight() -> Settings {
    Settings {
        feas_tol: 1e-10,
        gap_tol: 1e-10,
        ..Settings::default()
    }
}

fn ln_choose(n: usize, k: usize) -> f64 {
    (1..=k)
        .map(|i| ((n - k + i) as f64).ln() - (i as f64).ln())
        .sum()
}

/// `sum_{i<k} C(n,i) eps^i (1-eps)^(n-i)`, term by term.
fn direct_tail(n: usize, k: usize, eps: f64) -> f64 {
    (0..k)
        .map(|i| (ln_choose(n, i) + i as f64 * eps.ln() + (n - i) as f64 * (1.0 - eps).ln()).exp())
        .sum()
}

#[test]
fn explicit_bound_example() {
    assert_eq!(n_swc_explicit(&spec(0.1, 1e-6, 10)).unwrap(), 361);
}

#[test]
fn exact_bound_single_variable() {
    assert_eq!(n_swc_exact(&spec(0.1, 0.01, 1)).unwrap(), 44);
    let closed = (0.01f64.ln() / 0.9f64.ln()).ceil() as usize;
    assert_eq!(closed, 44);
}

#[test]
fn exact_never_exceeds_explicit() {
    let mut count = 0;
    for &eps in &[0.01, 0.1, 0.3] {
        for &beta in &[1e-9, 1e-3, 0.1] {
            for &nu in &[1, 7, 40] {
                let s = spec(eps, beta, nu);
                assert!(
                    n_swc_exact(&s).unwrap() <= n_swc_explicit(&s).unwrap(),
                    "{s:?}"
                );
                count += 1;
            }
        }
    }
    assert_eq!(count, 27);
}

#[test]
fn exact_matches_direct_summation() {
    let s = spec(0.05, 1e-6, 3);
    let n = n_swc_exact(&s).unwrap();
    assert!(direct_tail(n, 3, 0.05) <= 1e-6);
    assert!(direct_tail(n - 1, 3, 0.05) > 1e-6);
    for m in [n - 1, n, n + 5] {
        let d = direct_tail(m, 3, 0.05);
        assert!((binomial_tail(m, 2, 0.05) - d).abs() <= 1e-9 * d);
    }
}

#[test]
fn exact_monotone_in_eps_and_nu() {
    let epss = [0.02, 0.05, 0.1, 0.2, 0.4, 0.7];
    for &beta in &[1e-6, 1e-2] {
        for &nu in &[1, 3, 10] {
            let ns: Vec<usize> = epss
                .iter()
                .map(|&e| n_swc_exact(&spec(e, beta, nu)).unwrap())
                .collect();
            assert!(ns.windows(2).all(|w| w[1] <= w[0]), "{ns:?}");
        }
        for &eps in &[0.05, 0.2] {
            let ns: Vec<usize> = (1..12)
                .map(|nu| n_swc_exact(&spec(eps, beta, nu)).unwrap())
                .collect();
            assert!(ns.windows(2).all(|w| w[1] >= w[0]), "{ns:?}");
        }
    }
}

#[test]
fn explicit_decreasing_in_eps() {
    let ns: Vec<usize> = (1..=10)
        .map(|i| n_swc_explicit(&spec(0.09 * i as f64, 1e-4, 5)).unwrap())
        .collect();
    assert!(ns.windows(2).all(|w| w[1] < w[0]), "{ns:?}");
}

#[test]
fn invalid_specs_rejected() {
    assert!(SampleComplexitySpec::new(0.1, 1.0, 1).is_err());
    assert!(SampleComplexitySpec::new(0.0, 0.1, 1).is_err());
    assert!(SampleComplexitySpec::new(0.1, 0.1, 0).is_err());
    let bad = SampleComplexitySpec {
        eps: 0.1,
        beta: 1.0,
        n_u: 1,
    };
    assert!(matches!(
        n_swc_explicit(&bad),
        Err(SwcError::InvalidSpec(_))
    ));
}

fn point_mass_matches_nominal(case: &str) {
    let net = load_case(case);
    let nominal = solve_nominal_with(&net, &tight(), 1e-5).unwrap();
    let opts = SwcOptions {
        settings: tight(),
        ..SwcOptions::default()
    };
    let s = spec(0.1, 1e-3, shared_dimension(&net));
    let sol = solve_swc(&net, &UncertaintyModel::point(&net), &s, &opts, 3).unwrap();
    assert_eq!(sol.n_scenarios, n_swc_exact(&s).unwrap());
    for (a, b) in sol.decision.pg.iter().zip(&nominal.pg) {
        assert!((a - b).abs() <= 1e-5, "{case}: {a} vs {b}");
    }
    // uniform tie-break
    let ng = net.n_gen() as f64;
    assert!(sol
        .decision
        .alpha
        .alpha
        .iter()
        .all(|a| (a - 1.0 / ng).abs() < 1e-4));
}

#[test]
fn point_mass_radial3() {
    point_mass_matches_nominal("radial3.json");
}

#[test]
fn point_mass_two_bus() {
    point_mass_matches_nominal("two_bus.json");
}

#[test]
fn point_mass_triangle3() {
    point_mass_matches_nominal("triangle3.json");
}

#[test]
fn variable_count_affine_in_n() {
    let net = load_case("radial3.json");
    let model = model_file("radial3_box.json");
    let (n, ng, nl) = (net.n_bus(), net.n_gen(), net.lines.len());
    let w_dim = (2 * n) * (2 * n + 1) / 2;
    let slacks = 4 * ng + 2 * n + nl;
    let mut shared = None;
    for count in [1, 2, 5, 9] {
        let p = assemble_swc(
            &net,
            &model,
            &sample(&model, count, 4),
            &SwcOptions::default(),
        )
        .unwrap();
        let base = *shared.get_or_insert(p.layout.shared_vars);
        assert_eq!(p.layout.shared_vars, base);
        assert_eq!(p.program.num_vars(), base + count * (ng + w_dim + slacks));
    }
    // penalties add a per-scenario epigraph slack and two SOC(3) per line
    let opts = SwcOptions {
        gamma_l: 0.1,
        ..SwcOptions::default()
    };
    let p = assemble_swc(&net, &model, &sample(&model, 3, 4), &opts).unwrap();
    assert_eq!(
        p.program.num_vars(),
        p.layout.shared_vars + 3 * (ng + w_dim + slacks + 1 + 6 * nl)
    );
}

#[test]
fn shared_columns_identical_across_scenarios() {
    let net = load_case("radial3.json");
    let model = model_file("radial3_box.json");
    let p = assemble_swc(&net, &model, &sample(&model, 6, 8), &SwcOptions::default()).unwrap();
    let a = &p.program.a;
    let hashes: Vec<u64> = p
        .layout
        .scenarios
        .iter()
        .map(|lay| {
            let mut h = DefaultHasher::new();
            for j in p.layout.wu.clone() {
                for (r, v) in a.col(j) {
                    if lay.rows.contains(&r) {
                        (j, r - lay.rows.start, v.to_bits()).hash(&mut h);
                    }
                }
            }
            h.finish()
        })
        .collect();
    assert!(hashes.windows(2).all(|w| w[0] == w[1]));
    // and the shared block is actually referenced
    assert!(p.layout.wu.clone().all(|j| a.col(j).count() > 1));
}

#[test]
fn capacity_exceeding_scenario_is_infeasible() {
    let net = load_case("radial3.json");
    let model = model_file("radial3_box.json");
    let n = net.n_bus();
    let mut big = UncertaintyVector::zero(n);
    big.delta[2] = Complex64::new(5.0, 0.0);
    big.index = 1;
    let mut set = sample(&model, 1, 0);
    set.scenarios.push(big);
    let err = solve_swc_scenarios(&net, &model, &set, &SwcOptions::default()).unwrap_err();
    assert!(matches!(err, SwcError::Infeasible), "{err:?}");
}

/// Rechecks each scenario's balance, voltage and generator rows from the
/// returned certificates alone.
fn recheck(net: &Network, model: &UncertaintyModel, set: &ScenarioSet, sol: &SwcSolution) -> f64 {
    let dec = &sol.decision;
    let mut worst: f64 = 0.0;
    for (cert, delta) in sol.certificates.iter().zip(&set.scenarios) {
        let w = &cert.lift.w;
        let load = model.net_load(net, delta);
        let pg = deploy(&dec.pg, &dec.alpha, delta);
        let mut inj = vec![Complex64::new(0.0, 0.0); net.n_bus()];
        for l in &net.lines {
            let (a, c) = (l.from, l.to);
            inj[a] += (w[(a, a)] - w[(a, c)]) * l.y.conj();
            inj[c] += (w[(c, c)] - w[(c, a)]) * l.y.conj();
        }
        for (gi, g) in net.generators.iter().enumerate() {
            inj[g.bus] -= Complex64::new(pg[gi], cert.qg[gi]);
            worst = worst.max((w[(g.bus, g.bus)].re - dec.wu[gi]).abs());
            worst = worst.max(pg[gi] - g.pmax).max(g.pmin - pg[gi]);
            worst = worst.max(cert.qg[gi] - g.qmax).max(g.qmin - cert.qg[gi]);
        }
        for (k, b) in net.buses.iter().enumerate() {
            worst = worst.max((inj[k] + load[k]).norm());
            let v2 = w[(k, k)].re;
            worst = worst.max(v2 - b.vmax * b.vmax).max(b.vmin * b.vmin - v2);
        }
        let ev = cert.lift.w.clone().symmetric_eigenvalues();
        worst = worst.max(-ev.min());
    }
    worst
}

#[test]
fn certificates_satisfy_scenario_rows() {
    let net = load_case("radial3.json");
    let model = model_file("radial3_box.json");
    let set = sample(&model, 30, 11);
    let sol = solve_swc_scenarios(&net, &model, &set, &SwcOptions::default()).unwrap();
    assert!(recheck(&net, &model, &set, &sol) <= 1e-6);
    // the epigraph bounds every scenario's cost
    assert!(sol.breakdown.iter().all(|b| b.slack >= -1e-6));
}

#[test]
fn wind_model_certificates() {
    let net = load_case("radial3.json");
    let model = model_file("radial3_wind.json");
    let set = sample(&model, 25, 2);
    let sol = solve_swc_scenarios(&net, &model, &set, &SwcOptions::default()).unwrap();
    assert!(recheck(&net, &model, &set, &sol) <= 1e-6);
}

#[test]
fn raw_deployment_vector_on_simplex() {
    let net = load_case("radial3.json");
    let model = model_file("radial3_box.json");
    let p = assemble_swc(&net, &model, &sample(&model, 20, 5), &SwcOptions::default()).unwrap();
    let sol = conic::solve(&p.program, &Settings::default()).unwrap();
    assert!(matches!(
        sol.status,
        Status::Optimal | Status::AlmostOptimal
    ));
    let alpha = &sol.x[p.layout.alpha.clone()];
    assert!((alpha.iter().sum::<f64>() - 1.0).abs() <= 1e-8);
    assert!(alpha.iter().all(|&a| a >= -1e-8));
}

#[test]
fn more_scenarios_never_cheaper() {
    let net = load_case("radial3.json");
    let model = model_file("radial3_box.json");
    let full = sample(&model, 40, 21);
    let mut last = f64::NEG_INFINITY;
    for k in [5, 10, 20, 40] {
        let mut set = full.clone();
        set.scenarios.truncate(k);
        let g = solve_swc_scenarios(&net, &model, &set, &SwcOptions::default())
            .unwrap()
            .objective;
        assert!(g >= last - 1e-7, "{k}: {g} < {last}");
        last = g;
    }
}

#[test]
fn shrinking_support_never_costlier() {
    let net = load_case("radial3.json");
    let model = model_file("radial3_box.json");
    let s = spec(0.2, 0.05, shared_dimension(&net));
    let gammas: Vec<f64> = [1.0, 0.5, 0.25]
        .iter()
        .map(|&t| {
            solve_swc(&net, &model.scaled(t), &s, &SwcOptions::default(), 7)
                .unwrap()
                .objective
        })
        .collect();
    assert!(gammas.windows(2).all(|w| w[1] <= w[0] + 1e-7), "{gammas:?}");
}

#[test]
fn penalties_enter_the_objective() {
    let net = load_case("radial3.json");
    let model = model_file("radial3_box.json");
    let set = sample(&model, 10, 13);
    let base = solve_swc_scenarios(&net, &model, &set, &SwcOptions::default()).unwrap();
    let opts = SwcOptions {
        gamma_l: 1.0,
        ..SwcOptions::default()
    };
    let pen = solve_swc_scenarios(&net, &model, &set, &opts).unwrap();
    assert!(pen.objective > base.objective);
    assert!(pen
        .breakdown
        .iter()
        .all(|b| b.line_penalty > 0.0 && b.slack >= -1e-6));
}

#[test]
fn realtime_setpoints() {
    let net = load_case("radial3.json");
    let model = model_file("radial3_box.json");
    let set = sample(&model, 8, 1);
    let dec = solve_swc_scenarios(&net, &model, &set, &SwcOptions::default())
        .unwrap()
        .decision;
    let zero = apply_realtime(&dec, &UncertaintyVector::zero(net.n_bus()));
    assert_eq!(zero.pg, dec.pg);
    for (v, w) in zero.vm.iter().zip(&dec.wu) {
        assert!((v * v - w).abs() < 1e-12 && *v > 0.0);
    }
    // only the mismatch matters
    let mut a = UncertaintyVector::zero(net.n_bus());
    a.delta[2] = Complex64::new(0.25, 0.3);
    let mut b = UncertaintyVector::zero(net.n_bus());
    b.delta[1] = Complex64::new(0.5, -0.2);
    b.delta[net.n_bus() + 2] = Complex64::new(0.25, 0.0);
    assert_eq!(mismatch(&a), mismatch(&b));
    assert_eq!(apply_realtime(&dec, &a).pg, apply_realtime(&dec, &b).pg);
}
