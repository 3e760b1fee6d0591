use std::ops::Range;
use std::time::Instant;

use crate::dense::{sym_eig_full, sym_eig_range_with, DenseEigConfig, DenseMatrix};
use crate::error::{Error, Result};
use crate::multivec::{
    apply, combine, dot, gram, inner_prod_raw, Block, LinearOperator, MultiVector, ReduceMode,
    SubmatrixMut,
};
use crate::orth::{orth_against, recursive_orth_svd, stacked_orth_error, OrthConfig};

use super::cg::shifted_block_cg;
use super::{
    select_shift, IterationRecord, OrthAudit, SolveStatus, SolverConfig, SolverReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Converged,
    Continue,
}

/// Convergence criterion for each column of `x`:
/// `‖Ax − λx‖/‖x‖` without `B`, `‖Ax − λBx‖/(λ·‖x‖_B)` with it (the `λ`
/// factor is dropped when `λ ≤ 0`).
pub fn residual_criterion(
    a: &dyn LinearOperator,
    b: Option<&dyn LinearOperator>,
    x: Block<'_>,
    lambda: &[f64],
    mode: ReduceMode,
) -> Result<Vec<f64>> {
    if lambda.len() != x.ncols() {
        return Err(Error::InvalidShape("one eigenvalue per column expected".into()));
    }
    if x.ncols() == 0 {
        return Ok(Vec::new());
    }
    let ax = apply(a, x)?;
    let bx = b.map(|op| apply(op, x)).transpose()?;
    let mut out = Vec::with_capacity(x.ncols());
    for (j, &lam) in lambda.iter().enumerate() {
        let bxj = bx.as_ref().map_or(x.col(j), |m| m.col(j));
        let r: Vec<f64> = ax.col(j).iter().zip(bxj).map(|(a, b)| a - lam * b).collect();
        let rn = dot(&r, &r, mode).sqrt();
        let xn = dot(x.col(j), bxj, mode).sqrt();
        let denom = if b.is_some() && lam > 0.0 { lam * xn } else { xn };
        out.push(rn / denom);
    }
    Ok(out)
}

/// Length of the leading run of residuals below `tol`.
pub fn prefix_converged(residuals: &[f64], tol: f64) -> usize {
    residuals.iter().take_while(|&&r| r < tol).count()
}

/// Coefficients of the new search direction in the current basis.
///
/// Starts from the Ritz coefficient columns `cols` of `xhat`, clears the
/// first `zero_rows` rows (the previous active block), orthogonalizes in the
/// Euclidean inner product against every column of `xhat` and among
/// themselves, and drops columns whose squared norm falls below
/// `dependence_tol` times its starting value.
pub fn small_p_coefficients(
    xhat: &DenseMatrix,
    cols: Range<usize>,
    zero_rows: usize,
    dependence_tol: f64,
) -> DenseMatrix {
    let d = xhat.rows();
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for c in cols {
        let mut p = xhat.col(c).to_vec();
        p[..zero_rows.min(d)].iter_mut().for_each(|v| *v = 0.0);
        let start: f64 = p.iter().map(|v| v * v).sum();
        if start == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for k in 0..xhat.cols() {
                let q = xhat.col(k);
                let s: f64 = q.iter().zip(&p).map(|(a, b)| a * b).sum();
                p.iter_mut().zip(q).for_each(|(v, qi)| *v -= s * qi);
            }
            for q in &kept {
                let s: f64 = q.iter().zip(&p).map(|(a, b)| a * b).sum();
                p.iter_mut().zip(q).for_each(|(v, qi)| *v -= s * qi);
            }
        }
        let nrm2: f64 = p.iter().map(|v| v * v).sum();
        if nrm2 > dependence_tol * start {
            let f = 1.0 / nrm2.sqrt();
            p.iter_mut().for_each(|v| *v *= f);
            kept.push(p);
        }
    }
    let mut out = DenseMatrix::zeros(d, kept.len());
    for (j, p) in kept.iter().enumerate() {
        out.col_mut(j).copy_from_slice(p);
    }
    out
}

/// Solver state between iterations.
///
/// `v` holds `[X | P | W]`. The first `locked` columns of `X` have
/// converged and take no further part; the rest of `V` (see
/// [`GcgWorkspace::active_basis`]) is B-orthonormal and `abar` is its
/// projection of `A`. In moving mode converged columns are periodically
/// moved out of `v` into a separate store.
pub struct GcgWorkspace<'a> {
    a: &'a dyn LinearOperator,
    b: Option<&'a dyn LinearOperator>,
    cfg: SolverConfig,
    bs0: usize,
    /// Target width of `X`.
    window: usize,
    mode: ReduceMode,
    v: MultiVector,
    nx: usize,
    np: usize,
    nw: usize,
    ritz: Vec<f64>,
    locked: usize,
    store: MultiVector,
    store_vals: Vec<f64>,
    abar: DenseMatrix,
    /// Rows of the previous active block in the current basis.
    xn_width: usize,
    theta: f64,
    iter: usize,
    history: Vec<IterationRecord>,
    last_progress: usize,
    stagnation: Option<usize>,
    cg_breakdowns: usize,
    dropped_p: usize,
    compactions: usize,
    max_proj_seen: usize,
    non_monotone: usize,
    total_reductions: usize,
    audit: Option<OrthAudit>,
    /// Time and reductions of the initial orthogonalization, charged to the
    /// first iteration.
    pending: (f64, usize, Option<f64>),
}

impl<'a> GcgWorkspace<'a> {
    /// Random B-orthonormal start block and its projected matrix.
    pub fn new(
        a: &'a dyn LinearOperator,
        b: Option<&'a dyn LinearOperator>,
        cfg: &SolverConfig,
    ) -> Result<Self> {
        let n = a.dim();
        if let Some(op) = b {
            if op.dim() != n {
                return Err(Error::InvalidShape(format!(
                    "A is {n}x{n} but B is {0}x{0}",
                    op.dim()
                )));
            }
        }
        let cfg = cfg.resolve(n)?;
        let bs0 = cfg.block_size.expect("resolved");
        let window = if cfg.moving {
            (cfg.max_proj_dim.expect("resolved") - 2 * bs0).min(n)
        } else {
            cfg.size_x.expect("resolved")
        };
        let mode = cfg.orth.reduce;
        let audit = cfg.audit_orthogonality.then(OrthAudit::default);

        let t0 = Instant::now();
        let mut x = MultiVector::zeros(n, window)?;
        x.set_random(cfg.seed);
        let ocfg = orth_cfg(&cfg);
        let out = recursive_orth_svd(&mut x, 0..window, b, &ocfg)?;
        let nx = out.num_kept;
        let ax = apply(a, x.as_block())?;
        let mut abar = gram(x.as_block(), ax.as_block(), mode)?;
        abar.symmetrize();
        let t_init = t0.elapsed().as_secs_f64();

        let mut ws = Self {
            a,
            b,
            bs0,
            window,
            mode,
            v: x,
            nx,
            np: 0,
            nw: 0,
            ritz: vec![0.0; nx],
            locked: 0,
            store: MultiVector::zeros(n, 0)?,
            store_vals: Vec::new(),
            abar,
            xn_width: 0,
            theta: 0.0,
            iter: 0,
            history: Vec::new(),
            last_progress: 0,
            stagnation: None,
            cg_breakdowns: 0,
            dropped_p: 0,
            compactions: 0,
            max_proj_seen: 0,
            non_monotone: 0,
            total_reductions: out.reduction_count,
            audit,
            pending: (t_init, out.reduction_count, out.max_orth_error),
            cfg,
        };
        if let (Some(au), Some(e)) = (ws.audit.as_mut(), out.max_orth_error) {
            au.record(e);
        }
        Ok(ws)
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn iterations(&self) -> usize {
        self.iter
    }

    pub fn num_converged(&self) -> usize {
        self.store.ncols() + self.locked
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Projected matrix for the next Rayleigh-Ritz solve.
    pub fn abar(&self) -> &DenseMatrix {
        &self.abar
    }

    /// `[X_active, P, W]`, the basis `abar` is built on.
    pub fn active_basis(&self) -> Block<'_> {
        self.v.cols(self.locked..self.nx + self.np + self.nw)
    }

    /// `[X, P, W]` including the locked columns still in the window.
    pub fn full_basis(&self) -> Block<'_> {
        self.v.cols(0..self.nx + self.np + self.nw)
    }

    /// Block widths `(active X, P, W)` of [`Self::active_basis`].
    pub fn block_widths(&self) -> (usize, usize, usize) {
        (self.nx - self.locked, self.np, self.nw)
    }

    /// Ritz values of the active `X` columns.
    pub fn active_ritz_values(&self) -> &[f64] {
        &self.ritz[self.locked..]
    }

    pub fn history(&self) -> &[IterationRecord] {
        &self.history
    }

    fn nev(&self) -> usize {
        self.cfg.num_eigen
    }

    fn locked_values(&self) -> Vec<f64> {
        let mut v = self.store_vals.clone();
        v.extend_from_slice(&self.ritz[..self.locked]);
        v
    }

    fn orth_audit(&mut self, err: Option<f64>) {
        if let (Some(au), Some(e)) = (self.audit.as_mut(), err) {
            au.record(e);
        }
    }

    /// One GCG iteration: Rayleigh-Ritz, convergence check, new search
    /// direction, shifted CG, orthogonalization of the new block and the
    /// projected matrix for the next iteration.
    pub fn step(&mut self) -> Result<StepOutcome> {
        self.iter += 1;
        let (mut t2, mut reductions, mut orth_err) = std::mem::take(&mut self.pending);

        // Rayleigh-Ritz on the active basis.
        let t = Instant::now();
        let d = self.abar.rows();
        let locked_old = self.locked;
        let want = (self.window - locked_old).min(d);
        let eig = if self.cfg.moving {
            sym_eig_full(&self.abar)?
        } else {
            sym_eig_range_with(&self.abar, 1, want, self.cfg.rr_workers, &DenseEigConfig::default())?
        };
        let xhat = eig.vectors.columns(0, want);
        let lam = eig.values[..want].to_vec();
        let xnew = combine(self.active_basis(), &xhat)?;
        self.max_proj_seen = self.max_proj_seen.max(d);
        let mut t3 = t.elapsed().as_secs_f64();

        // Convergence, prefix-wise over the candidates.
        let t = Instant::now();
        let need = self.nev() - self.num_converged();
        let limit = need.min(want);
        let chunk = self.bs0.min(need).max(1);
        let mut newly = 0;
        let mut first_res = None;
        let mut c0 = 0;
        'check: while c0 < limit {
            let c1 = (c0 + chunk).min(limit);
            let res = residual_criterion(self.a, self.b, xnew.cols(c0..c1), &lam[c0..c1], self.mode)?;
            for r in res {
                if r < self.cfg.tol {
                    newly += 1;
                } else {
                    first_res = Some(r);
                    break 'check;
                }
            }
            c0 = c1;
        }
        let t4 = t.elapsed().as_secs_f64();

        for (k, (&new, &old)) in lam.iter().zip(&self.ritz[locked_old..]).enumerate() {
            if k < self.xn_width + newly && new > old + 1e-12 * old.abs().max(1.0) {
                self.non_monotone += 1;
            }
        }

        let converged_total = self.num_converged() + newly;
        if newly > 0 {
            self.last_progress = self.iter;
        } else if self.stagnation.is_none()
            && self.iter - self.last_progress >= self.cfg.stall_window
        {
            self.stagnation = Some(self.iter);
        }

        let mut record = IterationRecord {
            iter: self.iter,
            num_converged: converged_total,
            first_unconverged_residual: first_res,
            theta: self.theta,
            cg_iters: 0,
            block_size: 0,
            proj_dim: d,
            t_step2: t2,
            t_step3: t3,
            t_step4: t4,
            t_step5: 0.0,
            t_step6: 0.0,
            reductions,
            orth_error: orth_err,
        };

        if converged_total >= self.nev() {
            self.replace_x(xnew, lam, None)?;
            self.locked = locked_old + newly;
            self.np = 0;
            self.nw = 0;
            self.history.push(record);
            return Ok(StepOutcome::Converged);
        }

        // New search direction, or compaction in moving mode.
        let t = Instant::now();
        let bs = self.bs0.min(self.nev() - converged_total);
        let compact = self.cfg.moving && locked_old + newly >= 2 * self.bs0;
        let mut alpha0 = DenseMatrix::zeros(0, 0);
        if compact {
            let all = combine(self.active_basis(), &eig.vectors)?;
            let mut moved = MultiVector::from_block(self.v.cols(0..locked_old));
            moved.append(all.cols(0..newly))?;
            self.store.append(moved.as_block())?;
            self.store_vals.extend_from_slice(&self.ritz[..locked_old]);
            self.store_vals.extend_from_slice(&eig.values[..newly]);
            let keep = (d - newly).min(self.window);
            self.v = MultiVector::from_block(all.cols(newly..newly + keep));
            self.nx = keep;
            self.ritz = eig.values[newly..newly + keep].to_vec();
            self.locked = 0;
            self.np = 0;
            self.nw = 0;
            self.compactions += 1;
        } else {
            let phat = small_p_coefficients(
                &xhat,
                newly..(newly + bs).min(want),
                self.xn_width,
                self.cfg.orth.dependence_tol,
            );
            self.dropped_p += bs.min(want - newly) - phat.cols();
            let pnew = combine(self.active_basis(), &phat)?;
            alpha0 = phat.tr_matmul(&self.abar.matmul(&phat)?)?;
            alpha0.symmetrize();
            self.replace_x(xnew, lam, Some(pnew))?;
            self.locked = locked_old + newly;
        }
        record.t_step5 = t.elapsed().as_secs_f64();

        // W: a few CG steps on (A − θB)W = B·X_n·(Λ_n − θ), warm-started at X_n.
        let t = Instant::now();
        self.theta = select_shift(&self.locked_values(), self.cfg.shift_mode);
        let xn_range = self.locked..(self.locked + bs).min(self.nx);
        self.xn_width = xn_range.len();
        let mut w = MultiVector::from_block(self.v.cols(xn_range.clone()));
        let mut rhs = match self.b {
            Some(op) => apply(op, w.as_block())?,
            None => w.clone(),
        };
        for (c, j) in xn_range.clone().enumerate() {
            let f = self.ritz[j] - self.theta;
            rhs.col_mut(c).iter_mut().for_each(|v| *v *= f);
        }
        let stats = shifted_block_cg(
            self.a,
            self.b,
            self.theta,
            &rhs,
            &mut w,
            self.cfg.cg_max_iters,
            self.cfg.cg_rel_tol,
            self.mode,
        )?;
        self.cg_breakdowns += stats.breakdowns;
        record.cg_iters = stats.iterations;
        record.block_size = self.xn_width;
        record.theta = self.theta;
        record.t_step6 = t.elapsed().as_secs_f64();

        // Orthogonalize W against everything kept.
        let t = Instant::now();
        let ocfg = orth_cfg(&self.cfg);
        let basis = [self.store.as_block(), self.v.cols(0..self.nx + self.np)];
        let res = if w.ncols() > 0 {
            orth_against(&mut w, &basis, self.b, &ocfg)
        } else {
            Err(Error::AllDependent)
        };
        match res {
            Ok(out) => {
                reductions += out.reduction_count;
                self.total_reductions += out.reduction_count;
                orth_err = out.max_orth_error;
                self.v.resize_cols(self.nx + self.np);
                self.v.append(w.as_block())?;
                self.nw = w.ncols();
            }
            Err(Error::AllDependent) => {
                self.v.resize_cols(self.nx + self.np);
                self.nw = 0;
                orth_err = if self.audit.is_some() {
                    Some(stacked_orth_error(
                        &[self.store.as_block(), self.v.as_block()],
                        self.b,
                        self.mode,
                    )?)
                } else {
                    None
                };
            }
            Err(e) => return Err(e),
        }
        self.orth_audit(orth_err);
        t2 += t.elapsed().as_secs_f64();

        let t = Instant::now();
        self.abar = self.assemble_abar(&alpha0)?;
        t3 += t.elapsed().as_secs_f64();

        record.t_step2 = t2;
        record.t_step3 = t3;
        record.reductions = reductions;
        record.orth_error = orth_err;
        self.history.push(record);
        Ok(StepOutcome::Continue)
    }

    /// Writes the new active `X` (and `P`) behind the locked columns.
    fn replace_x(&mut self, xnew: MultiVector, lam: Vec<f64>, p: Option<MultiVector>) -> Result<()> {
        let locked = self.locked;
        let mut v = MultiVector::from_block(self.v.cols(0..locked));
        v.append(xnew.as_block())?;
        self.nx = locked + xnew.ncols();
        self.ritz.truncate(locked);
        self.ritz.extend_from_slice(&lam);
        self.np = 0;
        if let Some(p) = p {
            v.append(p.as_block())?;
            self.np = p.ncols();
        }
        self.nw = 0;
        self.v = v;
        Ok(())
    }

    /// Projected matrix of `[X_active, P, W]` using the known structure: the
    /// X block is `diag(Λ)`, the X–P block vanishes, the P block comes from
    /// the previous projected matrix and only the W rows need `A`.
    fn assemble_abar(&self, alpha0: &DenseMatrix) -> Result<DenseMatrix> {
        let nxa = self.nx - self.locked;
        let (np, nw) = (self.np, self.nw);
        let d = nxa + np + nw;
        let mut m = DenseMatrix::zeros(d, d);
        for i in 0..nxa {
            m[(i, i)] = self.ritz[self.locked + i];
        }
        if np > 0 {
            m.set_block(nxa, nxa, alpha0);
        }
        if nw > 0 {
            let wb = self.v.cols(self.nx + np..self.nx + np + nw);
            let aw = apply(self.a, wb)?;
            let xp = self.v.cols(self.locked..self.nx + np);
            inner_prod_raw(xp, aw.as_block(), &mut SubmatrixMut::new(&mut m, 0, nxa + np, nxa + np, nw)?, self.mode)?;
            inner_prod_raw(wb, aw.as_block(), &mut SubmatrixMut::new(&mut m, nxa + np, nxa + np, nw, nw)?, self.mode)?;
            for j in nxa + np..d {
                for i in 0..j {
                    let v = if i >= nxa + np { 0.5 * (m[(i, j)] + m[(j, i)]) } else { m[(i, j)] };
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
        }
        Ok(m)
    }

    pub fn into_report(self, status: SolveStatus) -> Result<SolverReport> {
        let nev = self.nev();
        let mut vals = self.store_vals.clone();
        let mut vecs = self.store.clone();
        let take = (nev - vals.len().min(nev)).min(self.nx);
        vals.extend_from_slice(&self.ritz[..take]);
        vecs.append(self.v.cols(0..take))?;
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
        order.truncate(nev);
        let mut eigenvectors = MultiVector::zeros(vecs.dim(), order.len())?;
        for (c, &j) in order.iter().enumerate() {
            eigenvectors.col_mut(c).copy_from_slice(vecs.col(j));
        }
        let eigenvalues: Vec<f64> = order.iter().map(|&j| vals[j]).collect();
        let residuals =
            residual_criterion(self.a, self.b, eigenvectors.as_block(), &eigenvalues, self.mode)?;
        Ok(SolverReport {
            status,
            eigenvalues,
            eigenvectors,
            residuals,
            iterations: self.iter,
            history: self.history,
            stagnation: self.stagnation,
            cg_breakdowns: self.cg_breakdowns,
            dropped_p_columns: self.dropped_p,
            compactions: self.compactions,
            max_proj_dim_seen: self.max_proj_seen,
            non_monotone_ritz: self.non_monotone,
            total_reductions: self.total_reductions,
            orth_audit: self.audit,
        })
    }
}

fn orth_cfg(cfg: &SolverConfig) -> OrthConfig {
    OrthConfig {
        verify: cfg.audit_orthogonality,
        ..cfg.orth.clone()
    }
}
