use ccopf::conic::cones::{margin, smat, svec_vec};
use ccopf::conic::hermitian::real_block;
use ccopf::conic::{
    embed_hermitian, residuals, solve, Cone, ConeProgram, ProgramBuilder, Settings, Status,
};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use proptest::prelude::*;

fn lp_shift() -> ConeProgram {
    // min x  s.t.  x - t = 1, t >= 0
    let mut pb = ProgramBuilder::new();
    let x = pb.add_block("x", Cone::Free(1));
    let t = pb.add_block("t", Cone::NonNeg(1));
    pb.add_cost(x.start, 1.0);
    pb.add_row("shift", &[(x.start, 1.0), (t.start, -1.0)], 1.0);
    pb.build()
}

fn soc_norm() -> ConeProgram {
    let mut pb = ProgramBuilder::new();
    let v = pb.add_block("tu", Cone::Soc(3));
    pb.add_cost(v.start, 1.0);
    pb.add_row("u1", &[(v.start + 1, 1.0)], 3.0);
    pb.add_row("u2", &[(v.start + 2, 1.0)], 4.0);
    pb.build()
}

fn sdp_2x2() -> ConeProgram {
    let mut pb = ProgramBuilder::new();
    let x = pb.add_block("X", Cone::Psd(2));
    pb.add_cost(x.start, 1.0);
    pb.add_cost(x.start + 2, 1.0);
    pb.add_row(
        "offdiag",
        &[(x.start + 1, std::f64::consts::FRAC_1_SQRT_2)],
        1.0,
    );
    pb.build()
}

#[test]
fn lp_reaches_bound() {
    let sol = solve(&lp_shift(), &Settings::default()).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.x[0] - 1.0).abs() < 1e-7, "{}", sol.x[0]);
    assert!((sol.pobj - 1.0).abs() < 1e-7);
}

#[test]
fn soc_norm_is_five() {
    let sol = solve(&soc_norm(), &Settings::default()).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.x[0] - 5.0).abs() < 1e-7, "{}", sol.x[0]);
}

#[test]
fn sdp_trace_is_two() {
    let sol = solve(&sdp_2x2(), &Settings::default()).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.pobj - 2.0).abs() < 1e-7, "{}", sol.pobj);
    let x = smat(2, &sol.x);
    let target = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
    assert!((x - target).norm() < 1e-6);
}

#[test]
fn optimal_solutions_pass_residual_check() {
    let s = Settings::default();
    for prog in [lp_shift(), soc_norm(), sdp_2x2()] {
        let sol = solve(&prog, &s).unwrap();
        let r = residuals(&prog, &sol);
        assert!(
            r.primal <= s.feas_tol && r.dual <= s.feas_tol && r.gap <= s.gap_tol,
            "{r:?}"
        );
        assert!(prog.cone_violation(&sol.x, false) <= 1e-9);
        assert!(prog.cone_violation(&sol.s, true) <= 1e-9);
    }
}

#[test]
fn weak_duality_identity_at_every_iterate() {
    for prog in [lp_shift(), soc_norm(), sdp_2x2()] {
        let sol = solve(&prog, &Settings::default()).unwrap();
        assert!(sol.history.len() >= 2);
        for it in &sol.history {
            let scale = 1.0 + it.pobj.abs() + it.dobj.abs();
            assert!(it.complementarity >= -1e-12 * scale);
            let lhs = it.pobj - it.dobj;
            let rhs = it.complementarity + it.residual_term;
            assert!(
                (lhs - rhs).abs() <= 1e-8 * scale,
                "iter {}: {lhs} vs {rhs}",
                it.iter
            );
        }
        // once the iterate is feasible the objectives are ordered
        let last = sol.history.last().unwrap();
        assert!(last.pobj >= last.dobj - 1e-7 * (1.0 + last.pobj.abs()));
    }
}

#[test]
fn suboptimal_point_has_zero_primal_residual_and_positive_gap() {
    let prog = soc_norm();
    let sol = solve(&prog, &Settings::default()).unwrap();
    let x = vec![6.0, 3.0, 4.0];
    let r = ccopf::conic::residuals_of(&prog, &x, &sol.y, &sol.s);
    assert!(r.primal_abs < 1e-12);
    assert!(r.gap_abs > 0.9);
}

#[test]
fn perturbation_shows_up_linearly_in_primal_residual() {
    let prog = soc_norm();
    let sol = solve(&prog, &Settings::default()).unwrap();
    for j in 0..3 {
        let mut x = sol.x.clone();
        x[j] += 1e-3;
        let r = ccopf::conic::residuals_of(&prog, &x, &sol.y, &sol.s);
        let col_norm = prog.a.col(j).map(|(_, v)| v.abs()).fold(0.0, f64::max);
        let base = residuals(&prog, &sol).primal_abs;
        assert!((r.primal_abs - col_norm * 1e-3).abs() <= base + 1e-12);
    }
}

#[test]
fn primal_infeasible_certificate() {
    // x >= 0 and x = -1
    let mut pb = ProgramBuilder::new();
    let x = pb.add_block("x", Cone::NonNeg(2));
    pb.add_cost(x.start, 1.0);
    pb.add_row("neg", &[(x.start, 1.0), (x.start + 1, 1.0)], -1.0);
    let prog = pb.build();
    let sol = solve(&prog, &Settings::default()).unwrap();
    assert_eq!(sol.status, Status::PrimalInfeasible);
    let bty: f64 = prog.b.iter().zip(&sol.y).map(|(b, y)| b * y).sum();
    assert!(bty > 0.0);
    let neg_aty: Vec<f64> = prog.a.tmul_vec(&sol.y).iter().map(|v| -v).collect();
    assert!(prog.cone_violation(&neg_aty, true) <= 1e-7);
}

#[test]
fn dual_infeasible_certificate() {
    // min -x with x >= 0 free to grow
    let mut pb = ProgramBuilder::new();
    let x = pb.add_block("x", Cone::NonNeg(2));
    pb.add_cost(x.start, -1.0);
    pb.add_row("z", &[(x.start + 1, 1.0)], 1.0);
    let prog = pb.build();
    let sol = solve(&prog, &Settings::default()).unwrap();
    assert_eq!(sol.status, Status::DualInfeasible);
    let ctx: f64 = prog.c.iter().zip(&sol.x).map(|(c, x)| c * x).sum();
    assert!(ctx < 0.0);
    assert!(ccopf::conic::sparse::norm_inf(&prog.a.mul_vec(&sol.x)) <= 1e-7);
}

#[test]
fn inconsistent_rows_are_reported_infeasible() {
    let mut pb = ProgramBuilder::new();
    let x = pb.add_block("x", Cone::Free(2));
    pb.add_row("a", &[(x.start, 1.0), (x.start + 1, 1.0)], 1.0);
    pb.add_row("b", &[(x.start, 1.0), (x.start + 1, 1.0)], 2.0);
    let sol = solve(&pb.build(), &Settings::default()).unwrap();
    assert_eq!(sol.status, Status::PrimalInfeasible);
}

#[test]
fn duplicate_rows_are_dropped() {
    let mut pb = ProgramBuilder::new();
    let x = pb.add_block("x", Cone::NonNeg(2));
    pb.add_cost(x.start, 1.0);
    pb.add_cost(x.start + 1, 2.0);
    pb.add_row("sum", &[(x.start, 1.0), (x.start + 1, 1.0)], 1.0);
    pb.add_row("sum-again", &[(x.start, 2.0), (x.start + 1, 2.0)], 2.0);
    let sol = solve(&pb.build(), &Settings::default()).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert_eq!(sol.dropped_rows, vec![1]);
    assert!((sol.x[0] - 1.0).abs() < 1e-7);
}

#[test]
fn scaling_data_scales_solution() {
    // mixed program: min t + x0 s.t. (t, x0 - 1, 2) in SOC, x0 >= 0
    let build = |k: f64| {
        let mut pb = ProgramBuilder::new();
        let v = pb.add_block("soc", Cone::Soc(3));
        let x = pb.add_block("x", Cone::NonNeg(1));
        pb.add_cost(v.start, k);
        pb.add_cost(x.start, k);
        pb.add_row("tail1", &[(v.start + 1, 1.0), (x.start, -1.0)], -k);
        pb.add_row("tail2", &[(v.start + 2, 1.0)], 2.0 * k);
        pb.build()
    };
    let s1 = solve(&build(1.0), &Settings::default()).unwrap();
    let s10 = solve(&build(10.0), &Settings::default()).unwrap();
    assert_eq!(s1.status, Status::Optimal);
    assert_eq!(s10.status, Status::Optimal);
    for j in 0..4 {
        assert!((s10.x[j] - 10.0 * s1.x[j]).abs() < 1e-5 * (1.0 + s10.x[j].abs()));
    }
    assert!((s10.iterations as i64 - s1.iterations as i64).abs() <= 2);
}

#[test]
fn solves_are_bitwise_deterministic() {
    let prog = sdp_2x2();
    let a = solve(&prog, &Settings::default()).unwrap();
    let b = solve(&prog, &Settings::default()).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.y, b.y);
    assert_eq!(a.history.len(), b.history.len());
    for (p, q) in a.history.iter().zip(&b.history) {
        assert_eq!(p.pobj.to_bits(), q.pobj.to_bits());
        assert_eq!(p.dobj.to_bits(), q.dobj.to_bits());
    }
}

#[test]
fn hermitian_embedding_of_singular_matrix() {
    let h = DMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, -1.0),
            Complex64::new(1.0, 0.0),
        ],
    );
    let m = real_block(&h);
    let eig = SymmetricEigen::new(m).eigenvalues;
    let mut v: Vec<f64> = eig.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    assert!(v[0].abs() < 1e-12 && v[1].abs() < 1e-12);
    assert!((v[2] - 2.0).abs() < 1e-12 && (v[3] - 2.0).abs() < 1e-12);
    let e = embed_hermitian(2);
    assert!(margin(Cone::Psd(4), &e.lift(&h)).abs() < 1e-12);
}

#[test]
fn hermitian_psd_through_solver() {
    // min trace(H) with Re H_01 = 1, Im H_01 = 1 over Hermitian PSD H:
    // optimum 2|H_01| = 2 sqrt 2.
    let e = embed_hermitian(2);
    let mut pb = ProgramBuilder::new();
    let x = pb.add_block("H", e.cone());
    let shift = |f: Vec<(usize, f64)>| {
        f.into_iter()
            .map(|(i, c)| (x.start + i, c))
            .collect::<Vec<_>>()
    };
    for t in &e.ties {
        pb.add_row("tie", &shift(t.clone()), 0.0);
    }
    pb.add_row("re01", &shift(e.re(0, 1)), 1.0);
    pb.add_row("im01", &shift(e.im(0, 1)), 1.0);
    for k in 0..2 {
        for (i, c) in e.re(k, k) {
            pb.add_cost(x.start + i, c);
        }
    }
    let sol = solve(&pb.build(), &Settings::default()).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.pobj - 2.0 * 2f64.sqrt()).abs() < 1e-7, "{}", sol.pobj);
    let h = e.extract(&sol.x);
    assert!((h[(0, 1)] - Complex64::new(1.0, 1.0)).norm() < 1e-7);
}

fn hermitian_from(vals: &[f64], n: usize) -> DMatrix<Complex64> {
    let mut h = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    let mut k = 0;
    for i in 0..n {
        h[(i, i)] = Complex64::new(vals[k], 0.0);
        k += 1;
        for j in i + 1..n {
            let z = Complex64::new(vals[k], vals[k + 1]);
            k += 2;
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
        }
    }
    h
}

proptest! {
    #[test]
    fn embedding_doubles_spectrum(n in 1usize..5, vals in prop::collection::vec(-2.0f64..2.0, 16)) {
        let h = hermitian_from(&vals, n);
        let mut ev_h: Vec<f64> = SymmetricEigen::new(h.clone()).eigenvalues.iter().copied().collect();
        let mut ev_m: Vec<f64> = SymmetricEigen::new(real_block(&h)).eigenvalues.iter().copied().collect();
        ev_h.sort_by(f64::total_cmp);
        ev_m.sort_by(f64::total_cmp);
        for (k, lam) in ev_h.iter().enumerate() {
            prop_assert!((ev_m[2 * k] - lam).abs() < 1e-10);
            prop_assert!((ev_m[2 * k + 1] - lam).abs() < 1e-10);
        }
        let e = embed_hermitian(n);
        let x = e.lift(&h);
        prop_assert!((smat(2 * n, &x) - real_block(&h)).norm() < 1e-12);
        prop_assert!((margin(Cone::Psd(2 * n), &x) - ev_h[0]).abs() < 1e-10);
        let _ = svec_vec(&real_block(&h));
    }

    #[test]
    fn random_lp_meets_tolerances(costs in prop::collection::vec(0.1f64..5.0, 4), rhs in 0.5f64..10.0) {
        // min c^T x  s.t.  sum x = rhs, x >= 0: optimum rhs * min c
        let mut pb = ProgramBuilder::new();
        let x = pb.add_block("x", Cone::NonNeg(4));
        for (j, c) in costs.iter().enumerate() {
            pb.add_cost(x.start + j, *c);
        }
        let row: Vec<(usize, f64)> = (0..4).map(|j| (x.start + j, 1.0)).collect();
        pb.add_row("sum", &row, rhs);
        let prog = pb.build();
        let sol = solve(&prog, &Settings::default()).unwrap();
        prop_assert_eq!(sol.status, Status::Optimal);
        let best = costs.iter().copied().fold(f64::INFINITY, f64::min) * rhs;
        prop_assert!((sol.pobj - best).abs() <= 1e-6 * (1.0 + best));
    }
}
