use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::multivec::{dot, LinearOperator, MultiVector, ReduceMode, ShiftedOperator};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CgStats {
    /// Batched operator applications after the initial residual.
    pub iterations: usize,
    /// Iterations performed by each column.
    pub column_iters: Vec<usize>,
    /// Columns stopped on `pᵀ(A − θB)p ≤ 0`.
    pub breakdowns: usize,
}

/// Conjugate gradients on `(A − θB)·W = F`, one independent recurrence per
/// column, starting from the current contents of `w`.
///
/// A column stops once its residual drops below `rel_tol` times its initial
/// residual, after `max_iters` steps, or when it meets non-positive
/// curvature; in the last case it keeps its current iterate.
#[allow(clippy::too_many_arguments)]
pub fn shifted_block_cg(
    a: &dyn LinearOperator,
    b: Option<&dyn LinearOperator>,
    theta: f64,
    rhs: &MultiVector,
    w: &mut MultiVector,
    max_iters: usize,
    rel_tol: f64,
    mode: ReduceMode,
) -> Result<CgStats> {
    let (n, k) = (w.dim(), w.ncols());
    if rhs.dim() != n || rhs.ncols() != k || a.dim() != n {
        return Err(shape_err("CG right-hand side, iterate and operator disagree"));
    }
    let op = ShiftedOperator::new(a, b, theta);
    let mut stats = CgStats {
        column_iters: vec![0; k],
        ..CgStats::default()
    };
    if k == 0 {
        return Ok(stats);
    }

    let mut r = MultiVector::zeros(n, k)?;
    op.apply_block(w.as_block(), r.as_block_mut());
    for (ri, fi) in r.data_mut().iter_mut().zip(rhs.data()) {
        *ri = fi - *ri;
    }
    let mut rr: Vec<f64> = (0..k).map(|j| dot(r.col(j), r.col(j), mode)).collect();
    let stop: Vec<f64> = rr.iter().map(|v| rel_tol * v.sqrt()).collect();
    let mut active: Vec<usize> = (0..k).filter(|&j| rr[j] > 0.0).collect();
    let mut p = r.clone();

    while stats.iterations < max_iters && !active.is_empty() {
        stats.iterations += 1;
        let mut pa = MultiVector::zeros(n, active.len())?;
        for (c, &j) in active.iter().enumerate() {
            pa.col_mut(c).copy_from_slice(p.col(j));
        }
        let mut q = MultiVector::zeros(n, active.len())?;
        op.apply_block(pa.as_block(), q.as_block_mut());

        let mut still = Vec::with_capacity(active.len());
        for (c, &j) in active.iter().enumerate() {
            let pq = dot(pa.col(c), q.col(c), mode);
            if !(pq > 0.0) {
                stats.breakdowns += 1;
                continue;
            }
            stats.column_iters[j] += 1;
            let alpha = rr[j] / pq;
            for (wi, pi) in w.col_mut(j).iter_mut().zip(pa.col(c)) {
                *wi += alpha * pi;
            }
            for (ri, qi) in r.col_mut(j).iter_mut().zip(q.col(c)) {
                *ri -= alpha * qi;
            }
            let rr_new = dot(r.col(j), r.col(j), mode);
            if rr_new.sqrt() < stop[j] {
                continue;
            }
            let beta = rr_new / rr[j];
            rr[j] = rr_new;
            let rj = r.col(j).to_vec();
            for (pi, ri) in p.col_mut(j).iter_mut().zip(&rj) {
                *pi = ri + beta * *pi;
            }
            still.push(j);
        }
        active = still;
    }
    Ok(stats)
}
