//! Homogeneous self-dual interior-point iteration with Nesterov-Todd scaling
//! and Mehrotra predictor-corrector steps.

use super::cones::{self, Cone, Scaling};
use super::gmres::gmres;
use super::ldl::{sym_upper_mul, LdlFactor, PivotRegularization};
use super::presolve::{reduce_rows, RowReduction};
use super::sparse::{dot, norm2, norm_inf, CscMatrix};
use super::{ConeProgram, ConeSolution, ConicError, IterateLog, Settings, Status};

const MAX_REG: f64 = 1e-6;

/// Per-block Nesterov-Todd scaling `W` entering the KKT matrix.
enum BlockW {
    Free,
    Diag(Vec<f64>),
    /// Row-major `d x d`.
    Dense(Vec<f64>),
}

impl BlockW {
    fn of(sc: &Scaling, d: usize) -> BlockW {
        match sc {
            Scaling::Free => BlockW::Free,
            Scaling::NonNeg { w } => BlockW::Diag(w.clone()),
            _ => {
                let mut w = vec![0.0; d * d];
                let mut e = vec![0.0; d];
                let mut col = vec![0.0; d];
                for c in 0..d {
                    e[c] = 1.0;
                    sc.apply_w(&e, &mut col);
                    e[c] = 0.0;
                    for r in 0..d {
                        w[r * d + c] = col[r];
                    }
                }
                BlockW::Dense(w)
            }
        }
    }

    /// `out = W u`
    fn apply(&self, u: &[f64], out: &mut [f64]) {
        match self {
            BlockW::Free => out.copy_from_slice(u),
            BlockW::Diag(w) => {
                for i in 0..u.len() {
                    out[i] = w[i] * u[i];
                }
            }
            BlockW::Dense(w) => {
                let d = u.len();
                for r in 0..d {
                    out[r] = dot(&w[r * d..(r + 1) * d], u);
                }
            }
        }
    }

    /// `out = W^T u`
    fn apply_t(&self, u: &[f64], out: &mut [f64]) {
        match self {
            BlockW::Dense(w) => {
                let d = u.len();
                out.iter_mut().for_each(|o| *o = 0.0);
                for r in 0..d {
                    let ur = u[r];
                    for c in 0..d {
                        out[c] += w[r * d + c] * ur;
                    }
                }
            }
            _ => self.apply(u, out),
        }
    }
}

/// Rows of `A` restricted to one block with a dense scaling, and where the
/// scaled row starts in the KKT value array.
struct DenseRows {
    block: usize,
    rows: Vec<(Vec<f64>, usize)>,
}

/// The Newton system in scaled coordinates. With `x = W^T xi` on each cone
/// block, the (1,1) part becomes the identity and `A` becomes `A W^T`, so the
/// ill-conditioning of nearly active cones sits in the columns of `A W^T`
/// rather than inside dense blocks, where elimination would not survive it.
struct Kkt {
    n: usize,
    m: usize,
    pattern: CscMatrix,
    offsets: Vec<usize>,
    cones: Vec<Cone>,
    // (value slot, column of A, coefficient) for entries in free and
    // nonnegative blocks
    sparse_entries: Vec<(usize, usize, f64)>,
    dense_rows: Vec<DenseRows>,
    ws: Vec<BlockW>,
    reg_values: Vec<f64>,
    true_values: Vec<f64>,
    factor: LdlFactor,
    // current diagonal regularization, adapted between factorizations
    // diagonal regularization, raised when elimination breaks down
    reg: f64,
    refine_steps: usize,
}

impl Kkt {
    fn new(
        a: &CscMatrix,
        cones: &[Cone],
        offsets: &[usize],
        settings: &Settings,
    ) -> Result<Kkt, ConicError> {
        let n = a.ncols;
        let m = a.nrows;
        let at = a.transpose();
        let mut col_block = vec![0usize; n];
        for k in 0..cones.len() {
            col_block[offsets[k]..offsets[k + 1]]
                .iter_mut()
                .for_each(|b| *b = k);
        }
        let dense = |k: usize| matches!(cones[k], Cone::Soc(_) | Cone::Psd(_));

        let mut colptr = Vec::with_capacity(n + m + 1);
        let mut rowind = Vec::new();
        colptr.push(0);
        for j in 0..n {
            rowind.push(j);
            colptr.push(rowind.len());
        }
        let mut sparse_entries = Vec::new();
        let mut dense_rows: Vec<DenseRows> = (0..cones.len())
            .filter(|&k| dense(k))
            .map(|k| DenseRows {
                block: k,
                rows: Vec::new(),
            })
            .collect();
        let mut dense_index = vec![usize::MAX; cones.len()];
        for (t, dr) in dense_rows.iter().enumerate() {
            dense_index[dr.block] = t;
        }
        for i in 0..m {
            let entries: Vec<(usize, f64)> = at.col(i).collect();
            let mut q = 0;
            while q < entries.len() {
                let (j, v) = entries[q];
                let k = col_block[j];
                if dense(k) {
                    let (o, e) = (offsets[k], offsets[k + 1]);
                    let mut row = vec![0.0; e - o];
                    while q < entries.len() && entries[q].0 < e {
                        row[entries[q].0 - o] = entries[q].1;
                        q += 1;
                    }
                    dense_rows[dense_index[k]].rows.push((row, rowind.len()));
                    rowind.extend(o..e);
                } else {
                    sparse_entries.push((rowind.len(), j, v));
                    rowind.push(j);
                    q += 1;
                }
            }
            rowind.push(n + i);
            colptr.push(rowind.len());
        }
        let nnz = rowind.len();
        let pattern = CscMatrix {
            nrows: n + m,
            ncols: n + m,
            colptr,
            rowind,
            values: vec![0.0; nnz],
        };
        let signs: Vec<f64> = (0..n + m).map(|i| if i < n { 1.0 } else { -1.0 }).collect();
        let factor = LdlFactor::analyze(&pattern, &signs)
            .map_err(|e| ConicError::NumericalFailure(format!("KKT analysis: {e}")))?;
        let mut kkt = Kkt {
            n,
            m,
            offsets: offsets.to_vec(),
            cones: cones.to_vec(),
            sparse_entries,
            dense_rows,
            ws: Vec::new(),
            reg_values: vec![0.0; nnz],
            true_values: vec![0.0; nnz],
            pattern,
            factor,
            reg: settings.static_reg,
            refine_steps: settings.refine_steps,
        };
        for j in 0..n {
            let k = col_block[j];
            let q = kkt.pattern.colptr[j];
            kkt.true_values[q] = if cones[k].is_free() { 0.0 } else { 1.0 };
        }
        for i in 0..m {
            let q = kkt.pattern.colptr[n + i + 1] - 1;
            kkt.true_values[q] = 0.0;
        }
        Ok(kkt)
    }

    fn update(&mut self, ws: Vec<BlockW>) -> Result<(), ConicError> {
        for &(q, j, v) in &self.sparse_entries {
            let k = self.block_of(j);
            let val = match &ws[k] {
                BlockW::Diag(w) => v * w[j - self.offsets[k]],
                _ => v,
            };
            self.true_values[q] = val;
            self.reg_values[q] = val;
        }
        let mut buf = Vec::new();
        for dr in &self.dense_rows {
            let w = &ws[dr.block];
            for (row, start) in &dr.rows {
                buf.resize(row.len(), 0.0);
                // row i of A W^T is (W a_i)^T
                w.apply(row, &mut buf);
                self.true_values[*start..*start + row.len()].copy_from_slice(&buf);
                self.reg_values[*start..*start + row.len()].copy_from_slice(&buf);
            }
        }
        self.ws = ws;
        loop {
            self.set_regularized_diagonal();
            let piv = PivotRegularization {
                eps: 1e-13,
                delta: self.reg.max(1e-12).sqrt() * 1e-3,
            };
            match self.factor.factor(&self.reg_values, piv) {
                Ok(()) => return Ok(()),
                Err(e) if self.reg >= MAX_REG => {
                    return Err(ConicError::NumericalFailure(format!(
                        "KKT factorization: {e}"
                    )))
                }
                Err(_) => self.reg = (self.reg * 1e2).min(MAX_REG),
            }
        }
    }

    fn set_regularized_diagonal(&mut self) {
        for j in 0..self.n {
            let q = self.pattern.colptr[j];
            self.reg_values[q] = self.true_values[q] + self.reg;
        }
        for i in 0..self.m {
            let q = self.pattern.colptr[self.n + i + 1] - 1;
            self.reg_values[q] = -self.reg;
        }
    }

    fn block_of(&self, j: usize) -> usize {
        self.offsets.partition_point(|&o| o <= j) - 1
    }

    /// Solves `[H A^T; A 0] z = rhs` with `H = W^{-1} W^{-T}` blockwise.
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut r = rhs.to_vec();
        for (k, w) in self.ws.iter().enumerate() {
            let rg = self.offsets[k]..self.offsets[k + 1];
            let mut t = vec![0.0; rg.len()];
            w.apply(&rhs[rg.clone()], &mut t);
            r[rg].copy_from_slice(&t);
        }
        let mut z = self.solve_scaled(&r);
        for (k, w) in self.ws.iter().enumerate() {
            let rg = self.offsets[k]..self.offsets[k + 1];
            let mut t = vec![0.0; rg.len()];
            w.apply_t(&z[rg.clone()], &mut t);
            z[rg].copy_from_slice(&t);
        }
        z
    }

    /// Solves the unregularized scaled system by GMRES preconditioned with
    /// the regularized factors.
    fn solve_scaled(&self, rhs: &[f64]) -> Vec<f64> {
        // start from the regularized solution; on singular systems it is the
        // one that carries the infeasibility direction
        let mut z = rhs.to_vec();
        self.factor.solve(&mut z);
        let tol = 1e-14 * (1.0 + norm2(rhs));
        gmres(
            |x, y| sym_upper_mul(&self.pattern, &self.true_values, x, y),
            |v| self.factor.solve(v),
            rhs,
            &mut z,
            self.refine_steps,
            2,
            tol,
        );
        z
    }

    fn identity_blocks(&self) -> Vec<BlockW> {
        self.cones
            .iter()
            .enumerate()
            .map(|(k, c)| {
                if c.is_free() {
                    BlockW::Free
                } else {
                    BlockW::Diag(vec![1.0; self.offsets[k + 1] - self.offsets[k]])
                }
            })
            .collect()
    }
}

/// Problem data after presolve and scaling.
struct Scaled {
    a: CscMatrix,
    b: Vec<f64>,
    c: Vec<f64>,
    // row scaling and the scalar scalings of b and c
    d: Vec<f64>,
    sigma_b: f64,
    sigma_c: f64,
    b_norm: f64,
    c_norm: f64,
}

fn prepare(a: &CscMatrix, b: &[f64], c: &[f64]) -> Scaled {
    let rows = a.rows();
    let d: Vec<f64> = rows
        .iter()
        .map(|r| {
            let nrm = r.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
            if nrm > 0.0 {
                1.0 / nrm
            } else {
                1.0
            }
        })
        .collect();
    let mut sa = a.clone();
    sa.scale_rows(&d);
    let db: Vec<f64> = b.iter().zip(&d).map(|(bi, di)| bi * di).collect();
    let sigma_b = norm_inf(&db).max(1.0);
    let sigma_c = norm_inf(c).max(1.0);
    Scaled {
        a: sa,
        b: db.iter().map(|v| v / sigma_b).collect(),
        c: c.iter().map(|v| v / sigma_c).collect(),
        d,
        sigma_b,
        sigma_c,
        b_norm: norm_inf(b),
        c_norm: norm_inf(c),
    }
}

struct Blocks<'a> {
    cones: &'a [Cone],
    off: &'a [usize],
}

impl Blocks<'_> {
    fn range(&self, k: usize) -> std::ops::Range<usize> {
        self.off[k]..self.off[k + 1]
    }

    fn shift_interior(&self, v: &mut [f64]) {
        let mut e = Vec::new();
        let mut worst = f64::INFINITY;
        for (k, &cone) in self.cones.iter().enumerate() {
            if !cone.is_free() && cone.dim() > 0 {
                worst = worst.min(cones::margin(cone, &v[self.range(k)]));
            }
        }
        if !worst.is_finite() || worst > 1e-8 {
            return;
        }
        let shift = 1.0 - worst;
        for (k, &cone) in self.cones.iter().enumerate() {
            if cone.is_free() {
                continue;
            }
            let r = self.range(k);
            e.resize(r.len(), 0.0);
            cones::identity(cone, &mut e);
            for (vi, ei) in v[r].iter_mut().zip(&e) {
                *vi += shift * ei;
            }
        }
    }

    fn zero_free(&self, v: &mut [f64]) {
        for (k, &cone) in self.cones.iter().enumerate() {
            if cone.is_free() {
                v[self.range(k)].iter_mut().for_each(|e| *e = 0.0);
            }
        }
    }

    fn max_step(&self, x: &[f64], dx: &[f64]) -> f64 {
        let mut a = f64::INFINITY;
        for (k, &cone) in self.cones.iter().enumerate() {
            if !cone.is_free() {
                let r = self.range(k);
                a = a.min(cones::max_step(cone, &x[r.clone()], &dx[r]));
            }
        }
        a
    }
}

struct Direction {
    dx: Vec<f64>,
    dy: Vec<f64>,
    ds: Vec<f64>,
    dtau: f64,
    dkappa: f64,
}

/// Best iterate meeting the reduced tolerances.
struct Best {
    x: Vec<f64>,
    y: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    score: f64,
    iter: usize,
}

struct State<'a> {
    sc: &'a Scaled,
    blocks: Blocks<'a>,
    scalings: Vec<Scaling>,
    lambda: Vec<f64>,
    x2: Vec<f64>,
    y2: Vec<f64>,
}

impl State<'_> {
    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        kkt: &Kkt,
        r1: &[f64],
        r2: &[f64],
        r3: f64,
        eta: f64,
        ds_target: &[f64],
        dk_target: f64,
        tau: f64,
        kappa: f64,
    ) -> Direction {
        let n = self.sc.c.len();
        let m = self.sc.b.len();
        // u = W^{-1} (lambda \ d_s) on cone blocks
        let mut u = vec![0.0; n];
        let mut tmp = Vec::new();
        for (k, &cone) in self.blocks.cones.iter().enumerate() {
            if cone.is_free() {
                continue;
            }
            let r = self.blocks.range(k);
            tmp.resize(r.len(), 0.0);
            self.scalings[k].lambda_div(&self.lambda[r.clone()], &ds_target[r.clone()], &mut tmp);
            self.scalings[k].apply_winv(&tmp, &mut u[r]);
        }
        let mut rhs = vec![0.0; n + m];
        for j in 0..n {
            rhs[j] = eta * r2[j] + u[j];
        }
        for i in 0..m {
            rhs[n + i] = -eta * r1[i];
        }
        let sol = kkt.solve(&rhs);
        let (x1, y1) = sol.split_at(n);
        let num = -eta * r3 - dk_target / tau - dot(&self.sc.c, x1) - dot(&self.sc.b, y1);
        let den = dot(&self.sc.c, &self.x2) + dot(&self.sc.b, &self.y2) - kappa / tau;
        let dtau = num / den;
        let dx: Vec<f64> = (0..n).map(|j| x1[j] + dtau * self.x2[j]).collect();
        let dy: Vec<f64> = (0..m).map(|i| -(y1[i] + dtau * self.y2[i])).collect();
        // ds from the dual residual row, so r_d contracts by exactly (1 - eta)
        // even when W is too badly conditioned for u - H dx to be accurate
        let mut ds = self.sc.a.tmul_vec(&dy);
        for j in 0..n {
            ds[j] = -eta * r2[j] + self.sc.c[j] * dtau - ds[j];
        }
        self.blocks.zero_free(&mut ds);
        let dkappa = (dk_target - kappa * dtau) / tau;
        Direction {
            dx,
            dy,
            ds,
            dtau,
            dkappa,
        }
    }

    fn step_length(&self, x: &[f64], s: &[f64], tau: f64, kappa: f64, d: &Direction) -> f64 {
        let mut a = self
            .blocks
            .max_step(x, &d.dx)
            .min(self.blocks.max_step(s, &d.ds));
        if d.dtau < 0.0 {
            a = a.min(-tau / d.dtau);
        }
        if d.dkappa < 0.0 {
            a = a.min(-kappa / d.dkappa);
        }
        a
    }
}

pub(super) fn solve(prog: &ConeProgram, settings: &Settings) -> Result<ConeSolution, ConicError> {
    let m_orig = prog.num_rows();
    let (keep, dropped) = if settings.presolve && m_orig > 0 {
        match reduce_rows(&prog.a, &prog.b, 1e-10) {
            RowReduction::Independent { keep, dropped } => (keep, dropped),
            // leave inconsistent systems to the embedding, which yields a certificate
            RowReduction::Inconsistent { .. } => ((0..m_orig).collect(), Vec::new()),
        }
    } else {
        ((0..m_orig).collect(), Vec::new())
    };
    let a_red = if dropped.is_empty() {
        prog.a.clone()
    } else {
        prog.a.select_rows(&keep)
    };
    let b_red: Vec<f64> = keep.iter().map(|&i| prog.b[i]).collect();
    let sc = prepare(&a_red, &b_red, &prog.c);

    let cones_list: Vec<Cone> = prog.blocks.iter().map(|b| b.cone).collect();
    let off = prog.offsets();
    let n = prog.num_vars();
    let m = keep.len();
    let nu: usize = cones_list.iter().map(|c| c.degree()).sum();

    let mut kkt = Kkt::new(&sc.a, &cones_list, &off, settings)?;
    let blocks = Blocks {
        cones: &cones_list,
        off: &off,
    };

    // Least-squares start shifted into the cone interior.
    kkt.update(kkt.identity_blocks())?;
    let mut rhs = vec![0.0; n + m];
    rhs[n..].copy_from_slice(&sc.b);
    let z = kkt.solve(&rhs);
    let mut x = z[..n].to_vec();
    rhs[..n].copy_from_slice(&sc.c);
    rhs[n..].iter_mut().for_each(|v| *v = 0.0);
    let z = kkt.solve(&rhs);
    let mut s = z[..n].to_vec();
    let mut y = z[n..].to_vec();
    blocks.shift_interior(&mut x);
    blocks.zero_free(&mut s);
    blocks.shift_interior(&mut s);
    let mut tau = 1.0;
    let mut kappa = 1.0;

    let mut state = State {
        sc: &sc,
        blocks,
        scalings: Vec::new(),
        lambda: vec![0.0; n],
        x2: Vec::new(),
        y2: Vec::new(),
    };
    let mut history = Vec::new();
    let mut last_step = 0.0;
    let unscale = sc.sigma_b * sc.sigma_c;

    let mut best: Option<Best> = None;
    let mut iter = 0;
    let status = loop {
        // residuals of the embedding
        let mut r1 = sc.a.mul_vec(&x);
        for i in 0..m {
            r1[i] -= sc.b[i] * tau;
        }
        let mut r2 = sc.a.tmul_vec(&y);
        for j in 0..n {
            r2[j] += s[j] - sc.c[j] * tau;
        }
        let ctx = dot(&sc.c, &x);
        let bty = dot(&sc.b, &y);
        let r3 = ctx - bty + kappa;

        // metrics of the normalized iterate in original units
        let pobj = unscale * ctx / tau;
        let dobj = unscale * bty / tau;
        let rp_orig: f64 = r1
            .iter()
            .zip(&sc.d)
            .map(|(r, d)| (r / d).abs())
            .fold(0.0, f64::max)
            * sc.sigma_b
            / tau;
        let pres = rp_orig / (1.0 + sc.b_norm);
        let dres = norm_inf(&r2) * sc.sigma_c / tau / (1.0 + sc.c_norm);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let xs = dot(&x, &s);
        let mu = (xs + tau * kappa) / (nu as f64 + 1.0);
        let complementarity = unscale * xs / (tau * tau);
        let residual_term = unscale * (dot(&y, &r1) - dot(&x, &r2)) / (tau * tau);
        debug_assert!(complementarity >= -1e-9 * (1.0 + pobj.abs() + dobj.abs()));
        history.push(IterateLog {
            iter,
            pobj,
            dobj,
            complementarity,
            residual_term,
            primal_res: pres,
            dual_res: dres,
            mu,
            tau,
            kappa,
            step: last_step,
        });

        if pres <= settings.feas_tol && dres <= settings.feas_tol && gap <= settings.gap_tol {
            break Status::Optimal;
        }
        // infeasibility certificates in original units (rays, so tau drops out)
        if bty > 0.0 {
            let aty_s: Vec<f64> = (0..n).map(|j| r2[j] + sc.c[j] * tau).collect();
            if norm_inf(&aty_s) * sc.sigma_c <= settings.infeas_tol * unscale * bty {
                break Status::PrimalInfeasible;
            }
        }
        if ctx < 0.0 {
            let ax_orig = r1
                .iter()
                .zip(&sc.b)
                .zip(&sc.d)
                .map(|((r, b), d)| ((r + b * tau) / d).abs())
                .fold(0.0, f64::max)
                * sc.sigma_b;
            if ax_orig <= settings.infeas_tol * unscale * (-ctx) {
                break Status::DualInfeasible;
            }
        }
        let score = pres.max(dres).max(gap);
        if pres <= settings.reduced_tol
            && dres <= settings.reduced_tol
            && gap <= settings.reduced_tol
            && best.as_ref().is_none_or(|b: &Best| score < b.score)
        {
            best = Some(Best {
                x: x.clone(),
                y: y.clone(),
                s: s.clone(),
                tau,
                score,
                iter,
            });
        }
        if iter >= settings.max_iter {
            if let Some(b) = best.take() {
                (x, y, s, tau, iter) = (b.x, b.y, b.s, b.tau, b.iter);
                break Status::AlmostOptimal;
            }
            break Status::MaxIter;
        }
        iter += 1;

        let outcome = (|| -> Result<(), ConicError> {
            // scalings and the KKT matrix
            let mut scalings = Vec::with_capacity(cones_list.len());
            let mut ws = Vec::with_capacity(cones_list.len());
            for (k, &cone) in cones_list.iter().enumerate() {
                let r = off[k]..off[k + 1];
                let sc_k = Scaling::new(
                    cone,
                    &x[r.clone()],
                    &s[r.clone()],
                    &mut state.lambda[r.clone()],
                )
                .ok_or_else(|| {
                    ConicError::NumericalFailure("iterate left the cone interior".into())
                })?;
                ws.push(BlockW::of(&sc_k, r.len()));
                scalings.push(sc_k);
            }
            state.scalings = scalings;
            kkt.update(ws)?;
            let mut rhs2 = vec![0.0; n + m];
            for j in 0..n {
                rhs2[j] = -sc.c[j];
            }
            rhs2[n..].copy_from_slice(&sc.b);
            let z2 = kkt.solve(&rhs2);
            state.x2 = z2[..n].to_vec();
            state.y2 = z2[n..].to_vec();

            // predictor
            let mut lam_sq = vec![0.0; n];
            for (k, &cone) in cones_list.iter().enumerate() {
                if !cone.is_free() {
                    let r = off[k]..off[k + 1];
                    cones::jordan_prod(
                        cone,
                        &state.lambda[r.clone()],
                        &state.lambda[r.clone()],
                        &mut lam_sq[r],
                    );
                }
            }
            let ds_aff: Vec<f64> = lam_sq.iter().map(|v| -v).collect();
            let aff = state.direction(&kkt, &r1, &r2, r3, 1.0, &ds_aff, -tau * kappa, tau, kappa);
            let alpha_aff = state.step_length(&x, &s, tau, kappa, &aff).min(1.0);
            let sigma = (1.0 - alpha_aff).powi(3);

            // corrector
            let mut ds_cc = vec![0.0; n];
            let mut e = Vec::new();
            let mut t1 = Vec::new();
            let mut t2 = Vec::new();
            let mut t3 = Vec::new();
            for (k, &cone) in cones_list.iter().enumerate() {
                if cone.is_free() {
                    continue;
                }
                let r = off[k]..off[k + 1];
                let d = r.len();
                e.resize(d, 0.0);
                t1.resize(d, 0.0);
                t2.resize(d, 0.0);
                t3.resize(d, 0.0);
                cones::identity(cone, &mut e);
                state.scalings[k].apply_winv_t(&aff.dx[r.clone()], &mut t1);
                state.scalings[k].apply_w(&aff.ds[r.clone()], &mut t2);
                cones::jordan_prod(cone, &t1, &t2, &mut t3);
                for (q, j) in r.enumerate() {
                    ds_cc[j] = -lam_sq[j] - t3[q] + sigma * mu * e[q];
                }
            }
            let dk_cc = -tau * kappa - aff.dtau * aff.dkappa + sigma * mu;
            let dir = state.direction(&kkt, &r1, &r2, r3, 1.0 - sigma, &ds_cc, dk_cc, tau, kappa);
            let alpha =
                (settings.step_fraction * state.step_length(&x, &s, tau, kappa, &dir)).min(1.0);
            if !alpha.is_finite() || alpha <= 0.0 {
                return Err(ConicError::NumericalFailure(
                    "no progress along the search direction".into(),
                ));
            }
            for j in 0..n {
                x[j] += alpha * dir.dx[j];
                s[j] += alpha * dir.ds[j];
            }
            for i in 0..m {
                y[i] += alpha * dir.dy[i];
            }
            tau += alpha * dir.dtau;
            kappa += alpha * dir.dkappa;
            last_step = alpha;
            if !(tau.is_finite() && kappa.is_finite()) || x.iter().chain(&y).any(|v| !v.is_finite())
            {
                return Err(ConicError::NumericalFailure("non-finite iterate".into()));
            }
            Ok(())
        })();
        // once the iterate is near the boundary, rounding can end progress
        // before the strict tolerances are met; fall back to the best point
        if let Err(e) = outcome {
            match best.take() {
                Some(b) => {
                    (x, y, s, tau, iter) = (b.x, b.y, b.s, b.tau, b.iter);
                    break Status::AlmostOptimal;
                }
                None => return Err(e),
            }
        }
    };

    // map back to original units and rows
    let mut y_full = vec![0.0; m_orig];
    let (xo, yo, so, pobj, dobj) = match status {
        Status::Optimal | Status::AlmostOptimal | Status::MaxIter => {
            let xo: Vec<f64> = x.iter().map(|v| v * sc.sigma_b / tau).collect();
            let yo: Vec<f64> = (0..m).map(|i| y[i] * sc.d[i] * sc.sigma_c / tau).collect();
            let so: Vec<f64> = s.iter().map(|v| v * sc.sigma_c / tau).collect();
            let p = dot(&prog.c, &xo);
            let d = dot(&b_red, &yo);
            (xo, yo, so, p, d)
        }
        Status::PrimalInfeasible => {
            let yo: Vec<f64> = (0..m).map(|i| y[i] * sc.d[i]).collect();
            let scale = dot(&b_red, &yo);
            let yo: Vec<f64> = yo.iter().map(|v| v / scale).collect();
            let so: Vec<f64> = s.iter().map(|v| v / scale).collect();
            (vec![0.0; n], yo, so, f64::NAN, 1.0)
        }
        Status::DualInfeasible => {
            let cx = dot(&prog.c, &x);
            let xo: Vec<f64> = x.iter().map(|v| v / -cx).collect();
            (xo, vec![0.0; m], vec![0.0; n], -1.0, f64::NAN)
        }
    };
    for (k, &i) in keep.iter().enumerate() {
        y_full[i] = yo[k];
    }
    let gap = if pobj.is_finite() && dobj.is_finite() {
        (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs())
    } else {
        f64::NAN
    };
    Ok(ConeSolution {
        status,
        x: xo,
        y: y_full,
        s: so,
        pobj,
        dobj,
        gap,
        iterations: iter,
        dropped_rows: dropped,
        history,
    })
}
