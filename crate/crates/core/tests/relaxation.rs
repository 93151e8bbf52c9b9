mod common;

use ccopf::conic::{self, cones::smat, Cone};
use ccopf::netmodel::{BusKind, Network};
use ccopf::powerflow::{check_limits, pf_residual, solve_pf, InjectionSpec, PfBusType, PfOptions};
use ccopf::relaxation::{
    assemble_nominal, net_injection, rank_check, recover_voltages, solve_nominal, HermitianLift,
    RelaxError, RANK_TOL,
};
use common::{bus, gen, line, load_case};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn outer(v: &[Complex64]) -> DMatrix<Complex64> {
    let v = DVector::from_column_slice(v);
    &v * v.adjoint()
}

fn lift(w: DMatrix<Complex64>) -> HermitianLift {
    let n = w.nrows();
    HermitianLift {
        w,
        control: vec![false; n],
    }
}

#[test]
fn rank_of_outer_product_and_identity() {
    let v = [c(1.0, 0.0), Complex64::from_polar(1.0, -0.1)];
    let d = rank_check(&lift(outer(&v)), RANK_TOL);
    assert!(d.rank_one && d.ratio < 1e-15);
    let d = rank_check(&lift(DMatrix::identity(2, 2)), RANK_TOL);
    assert!(!d.rank_one);
    assert!((d.ratio - 1.0).abs() < 1e-15);
    let w = outer(&v) + DMatrix::identity(2, 2) * c(1e-8, 0.0);
    let d = rank_check(&lift(w), RANK_TOL);
    // spectrum of v v^* + e I is {|v|^2 + e, e}
    assert!((d.ratio - 1e-8 / (2.0 + 1e-8)).abs() < 1e-15);
    assert!(d.rank_one);
}

#[test]
fn recovery_of_exact_outer_product() {
    let v = [c(1.0, 0.0), Complex64::from_polar(0.98, -0.05)];
    let st = recover_voltages(&lift(outer(&v)), RANK_TOL).unwrap();
    assert!((st.vm[0] - 1.0).abs() < 1e-10 && (st.vm[1] - 0.98).abs() < 1e-10);
    assert!(st.va[0].abs() < 1e-10 && (st.va[1] + 0.05).abs() < 1e-10);
    let rank2 = outer(&v) + outer(&[c(0.0, 0.0), c(0.5, 0.0)]);
    assert!(matches!(
        recover_voltages(&lift(rank2), RANK_TOL),
        Err(RelaxError::RankCheckFailed { .. })
    ));
}

#[test]
fn single_bus_serves_local_load() {
    let mut b = bus(0, BusKind::Slack, 0.4, 0.1);
    b.vset = Some(1.0);
    let net = Network::new(
        "one",
        100.0,
        vec![b],
        vec![],
        vec![gen(0, 2.0, [2.0, 3.0, 0.5])],
    )
    .unwrap();
    let r = solve_nominal(&net).unwrap();
    assert!((r.pg[0] - 0.4).abs() < 1e-7);
    assert!((r.lift.w[(0, 0)].re - 1.0).abs() < 1e-7);
    assert!((r.objective - net.generators[0].cost_at(0.4)).abs() < 1e-6);
}

#[test]
fn row_counts_per_family() {
    for name in ["radial3.json", "triangle3.json", "two_bus.json"] {
        let net = load_case(name);
        let p = assemble_nominal(&net).program;
        let count = |pre: &str| p.row_tags.iter().filter(|t| t.starts_with(pre)).count();
        assert_eq!(count("pf."), 2 * net.n_bus());
        assert_eq!(count("vl1."), 2 * net.n_bus());
        assert_eq!(count("vl2"), net.lines.len());
        assert_eq!(count("ref"), 1);
    }
}

#[test]
fn lift_of_power_flow_state_satisfies_equalities() {
    let net = load_case("radial3.json");
    let opts = PfOptions {
        tol: 1e-13,
        ..PfOptions::default()
    };
    let pf = solve_pf(&net, &InjectionSpec::from_network(&net), &opts).unwrap();
    let np = assemble_nominal(&net);
    let mut x = vec![0.0; np.program.num_vars()];
    x[np.layout.pg.clone()].copy_from_slice(&pf.gen_p);
    x[np.layout.qg.clone()].copy_from_slice(&pf.gen_q);
    let w = HermitianLift::from_state(&pf.state, &net);
    x[np.layout.w.clone()].copy_from_slice(&np.layout.embedding.lift(&w.w));
    let ax = np.program.a.mul_vec(&x);
    for (i, tag) in np.program.row_tags.iter().enumerate() {
        if tag.starts_with("pf.") || tag == "herm.tie" || tag == "ref" {
            assert!(
                (ax[i] - np.program.b[i]).abs() <= 1e-9,
                "{tag}: {}",
                ax[i] - np.program.b[i]
            );
        }
    }
}

#[test]
fn radial_feeder_is_exact() {
    let net = load_case("radial3.json");
    let r = solve_nominal(&net).unwrap();
    assert!(r.rank.ratio <= 1e-5);
    let st = r.voltages.clone().unwrap();
    let res = pf_residual(&net, &st, &net_injection(&net, &r.pg, &r.qg)).unwrap();
    assert!(res.iter().all(|(p, q)| p.abs() <= 1e-6 && q.abs() <= 1e-6));
    let mut sol = ccopf::powerflow::PowerFlowSolution::from_state(&net, st);
    // generator outputs come from the dispatch; the state reproduces them
    sol.gen_p.clone_from(&r.pg);
    sol.gen_q.clone_from(&r.qg);
    assert!(check_limits(&net, &sol, 1e-6).is_empty());
    assert!(r.rank.eigenvalues.iter().all(|&l| l >= -1e-7));
    for (k, b) in net.buses.iter().enumerate() {
        let wkk = r.lift.w[(k, k)].re;
        assert!(wkk >= b.vmin * b.vmin - 1e-7 && wkk <= b.vmax * b.vmax + 1e-7);
    }
}

#[test]
fn zero_load_costs_only_fixed_terms() {
    let mut net = load_case("radial3.json");
    for b in &mut net.buses {
        b.pd = 0.0;
        b.qd = 0.0;
    }
    net.generators[0].cost[2] = 3.0;
    net.generators[1].cost[2] = 4.0;
    let r = solve_nominal(&net).unwrap();
    assert!(r.pg.iter().all(|p| p.abs() < 1e-6));
    assert!((r.objective - 7.0).abs() < 1e-4);
}

#[test]
fn lossless_relaxation_below_power_flow_point() {
    let y = c(0.0, -10.0);
    let mut b0 = bus(0, BusKind::Slack, 0.0, 0.0);
    b0.vset = Some(1.0);
    let b1 = bus(1, BusKind::Generator, 1.0, 0.2);
    let net = Network::new(
        "lossless",
        100.0,
        vec![b0, b1],
        vec![line(0, 1, y, 0.5)],
        vec![gen(0, 3.0, [1.0, 2.0, 0.0]), gen(1, 3.0, [2.0, 1.0, 0.0])],
    )
    .unwrap();
    let r = solve_nominal(&net).unwrap();
    for p1 in [0.0, 0.3, 0.6] {
        let spec = InjectionSpec::with_dispatch(&net, &[0.0, p1], &[1.0, 1.0]);
        let pf = solve_pf(&net, &spec, &PfOptions::default()).unwrap();
        if !check_limits(&net, &pf, 1e-9).is_empty() {
            continue;
        }
        let cost: f64 = net
            .generators
            .iter()
            .zip(&pf.gen_p)
            .map(|(g, &p)| g.cost_at(p))
            .sum();
        assert!(r.objective <= cost + 1e-6);
    }
}

/// Grid search over the generator-bus output and voltage, power flow fixing the rest.
fn two_bus_grid(net: &Network, step: f64) -> (f64, f64) {
    let g1 = &net.generators[1];
    let b1 = &net.buses[1];
    let np = ((g1.pmax - g1.pmin) / step).round() as usize;
    let nv = ((b1.vmax - b1.vmin) / step).round() as usize;
    let mut cost = vec![vec![f64::NAN; nv + 1]; np + 1];
    for (i, row) in cost.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let p1 = g1.pmin + i as f64 * step;
            let v1 = b1.vmin + j as f64 * step;
            let spec = InjectionSpec::with_dispatch(net, &[0.0, p1], &[net.slack_voltage(), v1]);
            debug_assert_eq!(spec.kinds[1], PfBusType::Pv);
            if let Ok(pf) = solve_pf(net, &spec, &PfOptions::default()) {
                if check_limits(net, &pf, 1e-12).is_empty() {
                    *cell = net
                        .generators
                        .iter()
                        .zip(&pf.gen_p)
                        .map(|(g, &p)| g.cost_at(p))
                        .sum();
                }
            }
        }
    }
    let best = cost
        .iter()
        .flatten()
        .copied()
        .filter(|c| !c.is_nan())
        .fold(f64::INFINITY, f64::min);
    // largest change between grid neighbours bounds the distance to the continuous optimum
    let mut lip = 0.0f64;
    for i in 0..=np {
        for j in 0..=nv {
            if i < np && !cost[i][j].is_nan() && !cost[i + 1][j].is_nan() {
                lip = lip.max((cost[i + 1][j] - cost[i][j]).abs());
            }
            if j < nv && !cost[i][j].is_nan() && !cost[i][j + 1].is_nan() {
                lip = lip.max((cost[i][j + 1] - cost[i][j]).abs());
            }
        }
    }
    (best, 2.0 * lip)
}

#[test]
fn two_bus_relaxation_brackets_grid_search() {
    let net = load_case("two_bus.json");
    let r = solve_nominal(&net).unwrap();
    let (best, err) = two_bus_grid(&net, 1e-3);
    assert!(r.objective <= best + 1e-6, "{} > {best}", r.objective);
    assert!(
        best <= r.objective + err,
        "{best} > {} + {err}",
        r.objective
    );
}

#[test]
fn solution_lift_is_feasible_for_the_cone() {
    let net = load_case("triangle3.json");
    let np = assemble_nominal(&net);
    let sol = conic::solve(&np.program, &conic::Settings::default()).unwrap();
    let x = &sol.x[np.layout.w.clone()];
    let m = smat(2 * net.n_bus(), x);
    let ev = m.symmetric_eigenvalues();
    assert!(ev.min() >= -1e-7);
    assert!(matches!(np.program.blocks[2].cone, Cone::Psd(6)));
}
