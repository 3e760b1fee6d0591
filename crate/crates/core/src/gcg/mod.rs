//! The GCG block eigensolver for `A x = λ B x` with `A` symmetric and `B`
//! symmetric positive definite (or absent).
//!
//! Each iteration keeps a B-orthonormal basis `V = [X, P, W]`: `X` holds the
//! current Ritz vectors (converged ones locked at the front), `P` the
//! previous search direction and `W` a few shifted CG steps applied to the
//! active block of `X`. See [`GcgWorkspace`] for the step-level interface and
//! [`gcg_solve`] for the driver.

mod cg;
mod workspace;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multivec::{LinearOperator, MultiVector};
use crate::orth::OrthConfig;

pub use cg::{shifted_block_cg, CgStats};
pub use workspace::{
    prefix_converged, residual_criterion, small_p_coefficients, GcgWorkspace, StepOutcome,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftMode {
    /// Largest locked Ritz value.
    #[default]
    Dynamic,
    /// Always zero.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub num_eigen: usize,
    pub tol: f64,
    /// `None` means `⌈num_eigen/5⌉`.
    pub block_size: Option<usize>,
    /// `None` means `min(num_eigen + 3·block_size, N)`.
    pub size_x: Option<usize>,
    pub max_gcg_iters: usize,
    pub cg_max_iters: usize,
    pub cg_rel_tol: f64,
    pub shift_mode: ShiftMode,
    pub moving: bool,
    /// Projected dimension cap in moving mode; `None` means `5·block_size`.
    pub max_proj_dim: Option<usize>,
    pub orth: OrthConfig,
    pub deterministic_reduction: bool,
    pub seed: u64,
    /// Iterations without a newly converged pair before stagnation is
    /// flagged.
    pub stall_window: usize,
    /// Threads for the projected eigenproblem.
    pub rr_workers: usize,
    /// Measure `max|VᵀBV − I|` after every orthogonalization.
    pub audit_orthogonality: bool,
}

impl SolverConfig {
    pub fn new(num_eigen: usize) -> Self {
        Self {
            num_eigen,
            tol: 1e-8,
            block_size: None,
            size_x: None,
            max_gcg_iters: 1000,
            cg_max_iters: 30,
            cg_rel_tol: 0.01,
            shift_mode: ShiftMode::Dynamic,
            moving: false,
            max_proj_dim: None,
            orth: OrthConfig::default(),
            deterministic_reduction: false,
            seed: 0,
            stall_window: 50,
            rr_workers: 1,
            audit_orthogonality: false,
        }
    }

    /// Fills every defaulted size for a problem of dimension `n` and checks
    /// the result.
    pub fn resolve(&self, n: usize) -> Result<SolverConfig> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let nev = self.num_eigen;
        if nev == 0 || nev > n {
            return bad(format!("num_eigen must be in 1..={n}, got {nev}"));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad("tol must be positive".into());
        }
        if !(self.cg_rel_tol > 0.0 && self.cg_rel_tol.is_finite()) {
            return bad("cg_rel_tol must be positive".into());
        }
        if self.rr_workers == 0 {
            return bad("rr_workers must be at least 1".into());
        }
        self.orth.validate()?;
        let bs = self.block_size.unwrap_or(nev.div_ceil(5));
        if bs == 0 || bs > nev {
            return bad(format!("block_size must be in 1..={nev}, got {bs}"));
        }
        let sx = self.size_x.unwrap_or((nev + 3 * bs).min(n));
        if sx < nev || sx > n {
            return bad(format!("size_x must be in {nev}..={n}, got {sx}"));
        }
        let mpd = self.max_proj_dim.unwrap_or(5 * bs);
        if self.moving && mpd < 3 * bs {
            return bad(format!("max_proj_dim must be at least 3·block_size = {}", 3 * bs));
        }
        let mut out = self.clone();
        out.block_size = Some(bs);
        out.size_x = Some(sx);
        out.max_proj_dim = Some(mpd);
        if self.deterministic_reduction {
            out.orth.reduce = crate::multivec::ReduceMode::Deterministic;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub num_converged: usize,
    pub first_unconverged_residual: Option<f64>,
    pub theta: f64,
    /// Batched CG sweeps (operator applications) in the W solve.
    pub cg_iters: usize,
    pub block_size: usize,
    /// Order of the projected matrix solved in this iteration.
    pub proj_dim: usize,
    pub t_step2: f64,
    pub t_step3: f64,
    pub t_step4: f64,
    pub t_step5: f64,
    pub t_step6: f64,
    /// Global reductions spent in orthogonalization.
    pub reductions: usize,
    /// `max|VᵀBV − I|` after this iteration's orthogonalization, when audited.
    pub orth_error: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OrthAudit {
    pub calls: usize,
    pub max_error: f64,
    /// Calls whose error exceeded 1e-9.
    pub violations: usize,
}

impl OrthAudit {
    pub const LIMIT: f64 = 1e-9;

    pub(crate) fn record(&mut self, err: f64) {
        self.calls += 1;
        self.max_error = self.max_error.max(err);
        if !(err <= Self::LIMIT) {
            self.violations += 1;
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverReport {
    pub status: SolveStatus,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: MultiVector,
    /// Convergence criterion of every returned pair, recomputed on exit.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
    /// Iteration at which no pair had converged for `stall_window`
    /// iterations.
    pub stagnation: Option<usize>,
    /// CG columns stopped early on non-positive curvature.
    pub cg_breakdowns: usize,
    /// Search-direction columns dropped as dependent.
    pub dropped_p_columns: usize,
    pub compactions: usize,
    pub max_proj_dim_seen: usize,
    /// Ritz values that rose between iterations by more than 1e-12
    /// (relative).
    pub non_monotone_ritz: usize,
    pub total_reductions: usize,
    pub orth_audit: Option<OrthAudit>,
}

/// Runs the solver to convergence or `max_gcg_iters`.
pub fn gcg_solve(
    a: &dyn LinearOperator,
    b: Option<&dyn LinearOperator>,
    cfg: &SolverConfig,
) -> Result<SolverReport> {
    let mut ws = GcgWorkspace::new(a, b, cfg)?;
    let max_iters = ws.config().max_gcg_iters;
    let mut status = SolveStatus::MaxIterations;
    while ws.iterations() < max_iters {
        if ws.step()? == StepOutcome::Converged {
            status = SolveStatus::Converged;
            break;
        }
    }
    ws.into_report(status)
}

/// Shift for the inner solve: the largest locked Ritz value, or zero.
pub fn select_shift(locked_values: &[f64], mode: ShiftMode) -> f64 {
    match mode {
        ShiftMode::None => 0.0,
        ShiftMode::Dynamic => locked_values.iter().cloned().fold(0.0, f64::max),
    }
}

/// Reals held by the projected-problem arrays in moving mode: eigenvalues,
/// two dense matrices, dense-solver workspace and the coefficient block.
pub fn moving_memory_budget(size_x: usize, block_size: usize, max_proj_dim: usize) -> usize {
    (size_x + 2 * block_size)
        + 2 * max_proj_dim * max_proj_dim
        + 10 * max_proj_dim
        + size_x * block_size
}
