//! Block B-orthonormalization.
//!
//! Two schemes are provided: a blocked modified Gram-Schmidt
//! ([`modified_block_orth`]) and a recursive halving scheme whose leaves are
//! normalized through the eigendecomposition of their Gram matrix
//! ([`recursive_orth_svd`]). Both count the global reductions they would
//! need in a distributed setting; one count is one fused collective, however
//! many inner products it carries.
//!
//! Every repeat-until loop exits as soon as either the projection
//! coefficients are below `reorth_tol` (relative to the column norm) or the
//! pass removed less than half of each column's squared norm, which is the
//! classical criterion for one pass having been enough. The column norms for
//! the second test travel in the same reduction as the coefficients.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::dense::{gram_svd, DenseMatrix, Trans};
use crate::error::{Error, Result};
use crate::multivec::{
    block_gemm, combine, dot, gram, orthonormality_error, Block, LinearOperator, MultiVector,
    ReduceMode,
};

/// Norm-squared amplification above which the tracked `B·X` is recomputed
/// instead of updated.
const BX_REFRESH: f64 = 1e4;
/// Norm ratio below which a deflated column is treated as rounding noise.
const NOISE: f64 = 1e3 * f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrthMethod {
    #[default]
    RecursiveSvd,
    ModifiedBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthConfig {
    pub method: OrthMethod,
    /// Block width for [`modified_block_orth`]; `None` means `min(m/4, 200)`.
    pub block_width: Option<usize>,
    /// Leaf length for [`recursive_orth_svd`]; `None` means `min(m, 16)`.
    pub svd_leaf: Option<usize>,
    pub reorth_tol: f64,
    /// Columns are dependent when the unit-diagonal Gram matrix of their
    /// block has an eigenvalue below this, or when deflation leaves only
    /// rounding noise.
    pub dependence_tol: f64,
    pub max_reorth_passes: usize,
    pub reduce: ReduceMode,
    /// Measure `max|VᵀBV − I|` on exit and store it in the outcome.
    pub verify: bool,
}

impl Default for OrthConfig {
    fn default() -> Self {
        Self {
            method: OrthMethod::default(),
            block_width: None,
            svd_leaf: None,
            reorth_tol: 1e-10,
            dependence_tol: 1e-10,
            max_reorth_passes: 3,
            reduce: ReduceMode::Fast,
            verify: false,
        }
    }
}

impl OrthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.reorth_tol > 0.0 && self.reorth_tol.is_finite()) {
            return bad("reorth_tol must be positive");
        }
        if !(self.dependence_tol > 0.0 && self.dependence_tol.is_finite()) {
            return bad("dependence_tol must be positive");
        }
        if self.max_reorth_passes == 0 {
            return bad("max_reorth_passes must be at least 1");
        }
        if self.block_width == Some(0) {
            return bad("block_width must be at least 1");
        }
        if self.svd_leaf == Some(0) {
            return bad("svd_leaf must be at least 1");
        }
        Ok(())
    }

    pub fn block_width_for(&self, m: usize) -> usize {
        self.block_width.unwrap_or((m / 4).min(200)).max(1)
    }

    pub fn svd_leaf_for(&self, m: usize) -> usize {
        self.svd_leaf.unwrap_or(m.min(16)).max(1)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OrthOutcome {
    pub num_kept: usize,
    /// Positions found dependent; each was overwritten by a rearmost column
    /// or dropped when none was left.
    pub replaced_indices: Vec<usize>,
    pub reduction_count: usize,
    /// Pass count of every deflation loop, in execution order.
    pub deflation_passes: Vec<usize>,
    /// Pass count of every leaf normalization loop.
    pub leaf_passes: Vec<usize>,
    /// Pass count of every Gram-Schmidt column.
    pub mgs_passes: Vec<usize>,
    pub max_orth_error: Option<f64>,
}

/// Orthonormalizes all columns of `x` against `x0` (a list of B-orthonormal
/// blocks, possibly empty) and among themselves with blocked modified
/// Gram-Schmidt. `x` is truncated to the kept columns.
pub fn modified_block_orth(
    x: &mut MultiVector,
    x0: &[Block<'_>],
    b: Option<&dyn LinearOperator>,
    cfg: &OrthConfig,
) -> Result<OrthOutcome> {
    let m = x.ncols();
    let mut eng = Engine::new(x, x0, b, cfg, 0..m)?;
    eng.deflate(0..m, 0..0, true);
    eng.block_mgs(cfg.block_width_for(m))?;
    eng.finish(0..m)
}

/// Orthonormalizes columns `cols` of `x` by recursive halving. Columns
/// outside the range are neither read nor written; dropped columns are
/// removed, so the kept ones occupy `cols.start..cols.start + num_kept`.
pub fn recursive_orth_svd(
    x: &mut MultiVector,
    cols: Range<usize>,
    b: Option<&dyn LinearOperator>,
    cfg: &OrthConfig,
) -> Result<OrthOutcome> {
    if cols.start >= cols.end || cols.end > x.ncols() {
        return Err(Error::InvalidRange {
            lo: cols.start,
            hi: cols.end,
            dim: x.ncols(),
        });
    }
    let c = cfg.svd_leaf_for(cols.len());
    let mut eng = Engine::new(x, &[], b, cfg, cols.clone())?;
    eng.recurse(cols.start, cols.end, c, cols.start)?;
    eng.finish(cols)
}

/// Makes `x` B-orthogonal to `basis` and B-orthonormal, using the method
/// selected in `cfg`.
pub fn orth_against(
    x: &mut MultiVector,
    basis: &[Block<'_>],
    b: Option<&dyn LinearOperator>,
    cfg: &OrthConfig,
) -> Result<OrthOutcome> {
    let m = x.ncols();
    if m == 0 {
        return Err(Error::AllDependent);
    }
    match cfg.method {
        OrthMethod::ModifiedBlock => modified_block_orth(x, basis, b, cfg),
        OrthMethod::RecursiveSvd => {
            let c = cfg.svd_leaf_for(m);
            let mut eng = Engine::new(x, basis, b, cfg, 0..m)?;
            eng.deflate(0..m, 0..0, true);
            eng.recurse(0, m, c, 0)?;
            eng.finish(0..m)
        }
    }
}

/// `max|VᵀBV − I|` for `V` the concatenation of `blocks`.
pub fn stacked_orth_error(
    blocks: &[Block<'_>],
    b: Option<&dyn LinearOperator>,
    mode: ReduceMode,
) -> Result<f64> {
    let Some(first) = blocks.iter().find(|blk| blk.ncols() > 0) else {
        return Ok(0.0);
    };
    let mut v = MultiVector::zeros(first.dim(), 0)?;
    for blk in blocks {
        v.append(*blk)?;
    }
    orthonormality_error(v.as_block(), b, mode)
}

struct Engine<'a, 'b> {
    x: &'a mut MultiVector,
    /// `B·X`, or `None` when `B` is the identity.
    bx: Option<MultiVector>,
    b: Option<&'a dyn LinearOperator>,
    basis: Vec<Block<'b>>,
    cfg: &'a OrthConfig,
    /// Largest squared B-norm observed per column; the scale for the
    /// dependence test.
    ref_norm2: Vec<f64>,
    active_end: usize,
    out: OrthOutcome,
}

impl<'a, 'b> Engine<'a, 'b> {
    fn new(
        x: &'a mut MultiVector,
        basis: &[Block<'b>],
        b: Option<&'a dyn LinearOperator>,
        cfg: &'a OrthConfig,
        range: Range<usize>,
    ) -> Result<Self> {
        cfg.validate()?;
        let n = x.dim();
        if let Some(op) = b {
            if op.dim() != n {
                return Err(Error::InvalidShape(format!(
                    "B has dimension {} but vectors have length {n}",
                    op.dim()
                )));
            }
        }
        if basis.iter().any(|blk| blk.ncols() > 0 && blk.dim() != n) {
            return Err(Error::InvalidShape("basis block length differs from X".into()));
        }
        let bx = match b {
            Some(op) => {
                let mut bx = MultiVector::zeros(n, x.ncols())?;
                op.apply_block(x.cols(range.clone()), bx.cols_mut(range.clone()));
                Some(bx)
            }
            None => None,
        };
        let ncols = x.ncols();
        Ok(Self {
            x,
            bx,
            b,
            basis: basis.iter().copied().filter(|blk| blk.ncols() > 0).collect(),
            cfg,
            ref_norm2: vec![0.0; ncols],
            active_end: range.end,
            out: OrthOutcome::default(),
        })
    }

    fn mode(&self) -> ReduceMode {
        self.cfg.reduce
    }

    fn bxb(&self, r: Range<usize>) -> Block<'_> {
        match &self.bx {
            Some(m) => m.cols(r),
            None => self.x.cols(r),
        }
    }

    fn norms2(&self, r: Range<usize>) -> Vec<f64> {
        r.map(|j| dot(self.x.col(j), self.bxb(j..j + 1).col(0), self.mode()))
            .collect()
    }

    fn note_ref(&mut self, start: usize, n2: &[f64]) {
        for (k, v) in n2.iter().enumerate() {
            let r = &mut self.ref_norm2[start + k];
            *r = r.max(*v);
        }
    }

    fn refresh_bx(&mut self, r: Range<usize>) {
        if let (Some(op), Some(bx)) = (self.b, self.bx.as_mut()) {
            op.apply_block(self.x.cols(r.clone()), bx.cols_mut(r));
        }
    }

    /// `X[dst] -= X[src]·c` and the same on `B·X`; requires `src` before `dst`.
    fn sub_update(&mut self, src: Range<usize>, c: &DenseMatrix, dst: Range<usize>) -> Result<()> {
        debug_assert!(src.end <= dst.start);
        let len = dst.len();
        let targets = std::iter::once(&mut *self.x).chain(self.bx.as_mut());
        for mv in targets {
            let mut whole = mv.as_block_mut();
            let (left, mut right) = whole.split_at(dst.start);
            block_gemm(
                -1.0,
                left.as_block().cols(src.clone()),
                c,
                Trans::No,
                1.0,
                right.cols_mut(0..len),
            )?;
        }
        Ok(())
    }

    /// Replaces `X[r]` by `X[r]·t` (written to the first `t.cols()` columns).
    fn transform(&mut self, r: Range<usize>, t: &DenseMatrix, refresh: bool) -> Result<()> {
        let k = t.cols();
        let new_x = combine(self.x.cols(r.clone()), t)?;
        self.x.cols_mut(r.start..r.start + k).copy_from(new_x.as_block())?;
        if self.bx.is_some() {
            if refresh {
                self.refresh_bx(r.start..r.start + k);
            } else if let Some(bx) = self.bx.as_mut() {
                let new_bx = combine(bx.cols(r.clone()), t)?;
                bx.cols_mut(r.start..r.start + k).copy_from(new_bx.as_block())?;
            }
        }
        Ok(())
    }

    fn move_col(&mut self, from: usize, to: usize) {
        self.x.as_block_mut().copy_col(from, to);
        if let Some(bx) = self.bx.as_mut() {
            bx.as_block_mut().copy_col(from, to);
        }
        self.ref_norm2[to] = self.ref_norm2[from];
    }

    /// Projects `targets` out of the basis (when `with_basis`) and out of the
    /// orthonormal columns `internal`, which must precede `targets`.
    fn deflate(&mut self, targets: Range<usize>, internal: Range<usize>, with_basis: bool) {
        let nb = if with_basis { self.basis.len() } else { 0 };
        if targets.is_empty() || (nb == 0 && internal.is_empty()) {
            return;
        }
        let t = targets.len();
        let mut passes = 0;
        loop {
            passes += 1;
            self.out.reduction_count += 1;
            let mode = self.mode();
            let mut coefs = Vec::with_capacity(nb + 1);
            for blk in &self.basis[..nb] {
                coefs.push(gram(*blk, self.bxb(targets.clone()), mode).expect("shapes checked"));
            }
            let ci = (!internal.is_empty()).then(|| {
                gram(self.x.cols(internal.clone()), self.bxb(targets.clone()), mode)
                    .expect("shapes checked")
            });
            let n2 = self.norms2(targets.clone());
            self.note_ref(targets.start, &n2);

            for (blk, c) in self.basis[..nb].iter().zip(&coefs) {
                block_gemm(-1.0, *blk, c, Trans::No, 1.0, self.x.cols_mut(targets.clone()))
                    .expect("shapes checked");
            }
            if let Some(c) = &ci {
                self.sub_update(internal.clone(), c, targets.clone())
                    .expect("shapes checked");
            }

            let mut small = true;
            let mut no_cancel = true;
            for j in 0..t {
                let mut proj2 = 0.0;
                let mut cmax: f64 = 0.0;
                for c in coefs.iter().chain(ci.iter()) {
                    for &v in c.col(j) {
                        proj2 += v * v;
                        cmax = cmax.max(v.abs());
                    }
                }
                let scale = n2[j].max(0.0).sqrt();
                small &= cmax <= self.cfg.reorth_tol * scale;
                no_cancel &= n2[j] - proj2 >= 0.5 * n2[j];
            }
            if nb > 0 || !no_cancel {
                self.refresh_bx(targets.clone());
            }
            if small || no_cancel || passes >= self.cfg.max_reorth_passes {
                break;
            }
        }
        self.out.deflation_passes.push(passes);
    }

    /// One Gram-Schmidt column against the finished columns `ks..j` of its
    /// block; returns `false` when the column is dependent.
    fn mgs_column(&mut self, ks: usize, j: usize) -> Result<bool> {
        let mode = self.mode();
        let mut passes = 0;
        let mut rem;
        loop {
            passes += 1;
            self.out.reduction_count += 1;
            let r = (j > ks)
                .then(|| gram(self.x.cols(ks..j), self.bxb(j..j + 1), mode))
                .transpose()?;
            let n2 = self.norms2(j..j + 1)[0];
            self.note_ref(j, &[n2]);
            let mut proj2 = 0.0;
            if let Some(r) = &r {
                self.sub_update(ks..j, r, j..j + 1)?;
                proj2 = r.data().iter().map(|v| v * v).sum();
            }
            rem = n2 - proj2;
            let no_cancel = rem >= 0.5 * n2;
            if no_cancel {
                break;
            }
            self.refresh_bx(j..j + 1);
            if passes >= self.cfg.max_reorth_passes {
                self.out.reduction_count += 1;
                rem = self.norms2(j..j + 1)[0];
                break;
            }
        }
        self.out.mgs_passes.push(passes);
        if !(rem > NOISE * NOISE * self.ref_norm2[j]) {
            return Ok(false);
        }
        let s = 1.0 / rem.sqrt();
        self.x.as_block_mut().scale_col(j, s);
        if let Some(bx) = self.bx.as_mut() {
            bx.as_block_mut().scale_col(j, s);
        }
        if self.ref_norm2[j] > BX_REFRESH * rem {
            self.refresh_bx(j..j + 1);
        }
        Ok(true)
    }

    fn block_mgs(&mut self, bw: usize) -> Result<()> {
        let mut ks = 0;
        while ks < self.active_end {
            let mut j = ks;
            while j < (ks + bw).min(self.active_end) {
                if self.mgs_column(ks, j)? {
                    j += 1;
                    continue;
                }
                self.out.replaced_indices.push(j);
                let last = self.active_end - 1;
                if last > j {
                    self.move_col(last, j);
                }
                self.active_end -= 1;
            }
            let ke = (ks + bw).min(self.active_end);
            if ke >= self.active_end {
                break;
            }
            self.deflate(ke..self.active_end, ks..ke, false);
            ks = ke;
        }
        Ok(())
    }

    fn recurse(&mut self, s: usize, e: usize, c: usize, range_start: usize) -> Result<()> {
        let e = e.min(self.active_end);
        if s >= e {
            return Ok(());
        }
        let len = e - s;
        if len <= c {
            return self.leaf(s, e, range_start);
        }
        let e1 = s + len / 2;
        self.recurse(s, e1, c, range_start)?;
        let e2 = e.min(self.active_end);
        if e1 >= e2 {
            return Ok(());
        }
        self.deflate(e1..e2, s..e1, false);
        self.recurse(e1, e, c, range_start)
    }

    fn leaf(&mut self, s: usize, e: usize, range_start: usize) -> Result<()> {
        let mode = self.mode();
        let mut e = e;
        let mut passes = 0;
        while s < e {
            passes += 1;
            self.out.reduction_count += 1;
            let mut m = gram(self.x.cols(s..e), self.bxb(s..e), mode)?;
            let diag = m.diag();
            self.note_ref(s, &diag);
            let len = e - s;
            let tol = self.cfg.dependence_tol;
            // Jacobi scaling; columns reduced to cancellation noise get zero.
            let scale: Vec<f64> = (0..len)
                .map(|i| {
                    let d = diag[i];
                    if d > NOISE * NOISE * self.ref_norm2[s + i] && d > 0.0 {
                        1.0 / d.sqrt()
                    } else {
                        0.0
                    }
                })
                .collect();
            for j in 0..len {
                for i in 0..len {
                    m[(i, j)] *= scale[i] * scale[j];
                }
            }
            let eig = gram_svd(&m)?;
            let refmax = self.ref_norm2[s..e].iter().cloned().fold(0.0, f64::max);
            let kept: Vec<usize> = (0..len).filter(|&i| eig.values[i] > tol).collect();
            let dev = eig.values.iter().map(|l| (l - 1.0).abs()).fold(0.0, f64::max)
                .max(diag.iter().map(|d| (d - 1.0).abs()).fold(0.0, f64::max));

            if kept.len() == len {
                // X ← X·Q·Λ^{-1/2}·Qᵀ: same span as X·Q·Λ^{-1/2}, but the
                // identity when the block is already orthonormal.
                let mut scaled = eig.vectors.clone();
                for (i, l) in eig.values.iter().enumerate() {
                    let f = 1.0 / l.sqrt();
                    scaled.col_mut(i).iter_mut().for_each(|v| *v *= f);
                }
                let mut t = scaled.matmul(&eig.vectors.transpose())?;
                for c in 0..len {
                    for r in 0..len {
                        t[(r, c)] *= scale[r];
                    }
                }
                let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
                let refresh = refmax > BX_REFRESH * dmin * eig.values[0];
                self.transform(s..e, &t, refresh)?;
                if dev <= self.cfg.reorth_tol || passes >= self.cfg.max_reorth_passes {
                    break;
                }
                continue;
            }

            let k = kept.len();
            let mut t = DenseMatrix::zeros(len, k);
            for (c, &i) in kept.iter().enumerate() {
                let f = 1.0 / eig.values[i].sqrt();
                for r in 0..len {
                    t[(r, c)] = scale[r] * eig.vectors[(r, i)] * f;
                }
            }
            self.transform(s..e, &t, true)?;
            let fill_start = s + k;
            let mut pos = fill_start;
            self.out.replaced_indices.extend(fill_start..e);
            while pos < e && self.active_end > e {
                self.move_col(self.active_end - 1, pos);
                self.active_end -= 1;
                pos += 1;
            }
            if pos < e {
                self.active_end = pos;
                e = pos;
            }
            if fill_start < pos {
                self.deflate(fill_start..pos, range_start..fill_start, true);
            }
            self.out.leaf_passes.push(passes);
            passes = 0;
        }
        if passes > 0 {
            self.out.leaf_passes.push(passes);
        }
        Ok(())
    }

    fn finish(mut self, range: Range<usize>) -> Result<OrthOutcome> {
        let kept_end = self.active_end;
        self.out.num_kept = kept_end - range.start;
        if kept_end < range.end {
            self.x.remove_cols(kept_end..range.end);
        }
        if self.out.num_kept == 0 {
            return Err(Error::AllDependent);
        }
        if self.cfg.verify {
            let mut blocks: Vec<Block<'_>> = self.basis.clone();
            let kept = self.x.cols(range.start..kept_end);
            blocks.push(kept);
            self.out.max_orth_error = Some(stacked_orth_error(&blocks, self.b, self.mode())?);
        }
        Ok(self.out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multivec::{CsrMatrix, DiagonalOperator};

    fn random_mv(n: usize, m: usize, seed: u64) -> MultiVector {
        let mut x = MultiVector::zeros(n, m).unwrap();
        x.set_random(seed);
        x
    }

    fn mass_matrix(n: usize) -> CsrMatrix {
        CsrMatrix::tridiagonal(n, 1.0, 4.0, 1.0)
    }

    fn verify_cfg(method: OrthMethod) -> OrthConfig {
        OrthConfig {
            method,
            verify: true,
            ..OrthConfig::default()
        }
    }

    /// Columns `g0 + 1e-3·g_j` per leaf, so each leaf Gram matrix has a
    /// condition number near 1e7 and needs three normalization passes.
    fn ill_conditioned_leaves(n: usize, m: usize, c: usize, seed: u64) -> MultiVector {
        let g = random_mv(n, m, seed);
        let mut x = MultiVector::zeros(n, m).unwrap();
        for j in 0..m {
            let lead = (j / c) * c;
            for i in 0..n {
                x.col_mut(j)[i] = g.col(lead)[i] + if j == lead { 0.0 } else { 1e-3 * g.col(j)[i] };
            }
        }
        x
    }

    #[test]
    fn modified_block_reduction_count() {
        let mut x = random_mv(200, 8, 5);
        let cfg = OrthConfig {
            block_width: Some(2),
            ..verify_cfg(OrthMethod::ModifiedBlock)
        };
        let out = modified_block_orth(&mut x, &[], None, &cfg).unwrap();
        assert_eq!(out.reduction_count, 8 + 8 / 2 - 1);
        assert!(out.mgs_passes.iter().all(|&p| p == 1));
        assert!(out.deflation_passes.iter().all(|&p| p == 1));
        assert!(out.max_orth_error.unwrap() < 1e-12);
    }

    #[test]
    fn recursive_reduction_count() {
        let mut x = ill_conditioned_leaves(400, 32, 16, 2);
        let cfg = OrthConfig {
            svd_leaf: Some(16),
            ..verify_cfg(OrthMethod::RecursiveSvd)
        };
        let out = recursive_orth_svd(&mut x, 0..32, None, &cfg).unwrap();
        assert_eq!(out.leaf_passes, vec![3, 3]);
        assert_eq!(out.deflation_passes, vec![1]);
        assert_eq!(out.reduction_count, 32 / 4 - 1);
        assert_eq!(out.num_kept, 32);
        assert!(out.max_orth_error.unwrap() < 1e-10);
    }

    #[test]
    fn orthonormal_input_is_left_alone() {
        let mut x = random_mv(60, 6, 1);
        recursive_orth_svd(&mut x, 0..6, None, &OrthConfig::default()).unwrap();
        for method in [OrthMethod::ModifiedBlock, OrthMethod::RecursiveSvd] {
            let mut y = x.clone();
            let out = orth_against(&mut y, &[], None, &verify_cfg(method)).unwrap();
            for (a, b) in x.data().iter().zip(y.data()) {
                assert!((a - b).abs() < 1e-12);
            }
            if method == OrthMethod::RecursiveSvd {
                assert_eq!(out.leaf_passes, vec![1]);
            }
        }
    }

    #[test]
    fn duplicated_column_is_replaced() {
        let b = mass_matrix(40);
        for method in [OrthMethod::ModifiedBlock, OrthMethod::RecursiveSvd] {
            let mut x = random_mv(40, 7, 11);
            let dup = x.col(1).to_vec();
            x.col_mut(4).copy_from_slice(&dup);
            let out = orth_against(&mut x, &[], Some(&b), &verify_cfg(method)).unwrap();
            assert!(!out.replaced_indices.is_empty(), "{method:?}");
            assert_eq!(out.num_kept, 6);
            assert_eq!(x.ncols(), 6);
            let err = orthonormality_error(x.as_block(), Some(&b), ReduceMode::Fast).unwrap();
            assert!(err < 1e-10, "{method:?}: {err}");
        }
    }

    #[test]
    fn random_block_with_mass_matrix() {
        let b = mass_matrix(50);
        let mut x = random_mv(50, 8, 4);
        recursive_orth_svd(&mut x, 0..8, Some(&b), &OrthConfig::default()).unwrap();
        let g = crate::multivec::gram(x.as_block(), crate::multivec::apply(&b, x.as_block()).unwrap().as_block(), ReduceMode::Fast).unwrap();
        for j in 0..8 {
            for i in 0..8 {
                let t = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - t).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sub_range_only_touches_range() {
        let mut x = random_mv(30, 9, 8);
        let before = x.clone();
        let out = recursive_orth_svd(&mut x, 2..7, None, &OrthConfig::default()).unwrap();
        assert_eq!(out.num_kept, 5);
        assert_eq!(x.cols(0..2).data(), before.cols(0..2).data());
        assert_eq!(x.cols(7..9).data(), before.cols(7..9).data());
        assert!(orthonormality_error(x.cols(2..7), None, ReduceMode::Fast).unwrap() < 1e-13);
        assert!(recursive_orth_svd(&mut x, 3..3, None, &OrthConfig::default()).is_err());
    }

    #[test]
    fn odd_widths_and_small_leaves() {
        let b = DiagonalOperator::new((0..80).map(|i| 1.0 + (i % 7) as f64).collect());
        for m in [1, 3, 17, 37] {
            let cfg = OrthConfig {
                svd_leaf: Some(4),
                ..verify_cfg(OrthMethod::RecursiveSvd)
            };
            let mut x = random_mv(80, m, m as u64);
            let out = orth_against(&mut x, &[], Some(&b), &cfg).unwrap();
            assert_eq!(out.num_kept, m);
            assert!(out.max_orth_error.unwrap() < 1e-12);
        }
    }

    #[test]
    fn against_basis() {
        let b = mass_matrix(60);
        let mut basis = random_mv(60, 5, 1);
        recursive_orth_svd(&mut basis, 0..5, Some(&b), &OrthConfig::default()).unwrap();
        for method in [OrthMethod::ModifiedBlock, OrthMethod::RecursiveSvd] {
            let mut x = random_mv(60, 6, 2);
            let out = orth_against(&mut x, &[basis.as_block()], Some(&b), &verify_cfg(method)).unwrap();
            assert!(out.max_orth_error.unwrap() < 1e-11);

            // Already orthogonal to the basis: deflation changes nothing.
            let mut y = x.clone();
            let out = orth_against(&mut y, &[basis.as_block()], Some(&b), &verify_cfg(method)).unwrap();
            assert_eq!(out.deflation_passes[0], 1);
            for (a, c) in x.data().iter().zip(y.data()) {
                assert!((a - c).abs() < 1e-12);
            }

            let mut copies = MultiVector::from_block(basis.cols(1..4));
            let err = orth_against(&mut copies, &[basis.as_block()], Some(&b), &verify_cfg(method));
            assert!(matches!(err, Err(Error::AllDependent)), "{method:?}");
        }
    }

    #[test]
    fn basis_given_in_pieces() {
        let mut basis = random_mv(45, 6, 3);
        recursive_orth_svd(&mut basis, 0..6, None, &OrthConfig::default()).unwrap();
        let pieces = [basis.cols(0..2), basis.cols(2..6)];
        let mut x = random_mv(45, 4, 4);
        let out = orth_against(&mut x, &pieces, None, &verify_cfg(OrthMethod::RecursiveSvd)).unwrap();
        assert!(out.max_orth_error.unwrap() < 1e-12);
    }

    #[test]
    fn config_rules() {
        let cfg = OrthConfig::default();
        assert_eq!(cfg.block_width_for(8), 2);
        assert_eq!(cfg.block_width_for(3), 1);
        assert_eq!(cfg.block_width_for(4000), 200);
        assert_eq!(cfg.svd_leaf_for(10), 10);
        assert_eq!(cfg.svd_leaf_for(64), 16);
        for bad in [
            OrthConfig { reorth_tol: 0.0, ..OrthConfig::default() },
            OrthConfig { dependence_tol: -1.0, ..OrthConfig::default() },
            OrthConfig { max_reorth_passes: 0, ..OrthConfig::default() },
            OrthConfig { block_width: Some(0), ..OrthConfig::default() },
            OrthConfig { svd_leaf: Some(0), ..OrthConfig::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn zero_block_is_all_dependent() {
        let mut x = MultiVector::zeros(10, 3).unwrap();
        for method in [OrthMethod::ModifiedBlock, OrthMethod::RecursiveSvd] {
            let mut y = x.clone();
            assert!(matches!(
                orth_against(&mut y, &[], None, &verify_cfg(method)),
                Err(Error::AllDependent)
            ));
        }
        x.col_mut(1)[3] = 2.0;
        let out = orth_against(&mut x, &[], None, &OrthConfig::default()).unwrap();
        assert_eq!(out.num_kept, 1);
        assert!((x.col(0)[3] - 1.0).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use nalgebra::DMatrix;
        use proptest::prelude::*;

        fn method_strategy() -> impl Strategy<Value = OrthMethod> {
            prop_oneof![Just(OrthMethod::ModifiedBlock), Just(OrthMethod::RecursiveSvd)]
        }

        fn to_na(m: &MultiVector) -> DMatrix<f64> {
            DMatrix::from_column_slice(m.dim(), m.ncols(), m.data())
        }

        /// B-orthogonal projector `X (XᵀBX)⁻¹ XᵀB`.
        fn projector(x: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
            let g = x.transpose() * b * x;
            let ginv = g.try_inverse().expect("full rank");
            x * ginv * x.transpose() * b
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn output_orthonormal_and_idempotent(
                seed in any::<u64>(), n in 20usize..60, m in 1usize..12,
                leaf in 1usize..6, bw in 1usize..5, method in method_strategy(),
            ) {
                prop_assume!(m <= n);
                let b = mass_matrix(n);
                let cfg = OrthConfig {
                    method, svd_leaf: Some(leaf), block_width: Some(bw), verify: true,
                    ..OrthConfig::default()
                };
                let mut x = random_mv(n, m, seed);
                let out = orth_against(&mut x, &[], Some(&b), &cfg).unwrap();
                prop_assert!(out.num_kept <= m);
                prop_assert!(out.max_orth_error.unwrap() <= 1e-10);
                let mut again = x.clone();
                orth_against(&mut again, &[], Some(&b), &cfg).unwrap();
                for (a, c) in x.data().iter().zip(again.data()) {
                    prop_assert!((a - c).abs() <= 1e-12);
                }
            }

            #[test]
            fn span_is_preserved(
                seed in any::<u64>(), n in 8usize..20, m in 1usize..6, method in method_strategy(),
            ) {
                let b = mass_matrix(n);
                let bd = to_na(&MultiVector::from_col_major(n, n, b.to_dense().into_data()).unwrap());
                let x_in = random_mv(n, m, seed);
                let mut x = x_in.clone();
                let cfg = OrthConfig { method, svd_leaf: Some(2), block_width: Some(2), ..OrthConfig::default() };
                let out = orth_against(&mut x, &[], Some(&b), &cfg).unwrap();
                prop_assert_eq!(out.num_kept, m);
                let diff = projector(&to_na(&x_in), &bd) - projector(&to_na(&x), &bd);
                prop_assert!(diff.norm() <= 1e-10, "{}", diff.norm());
            }

            #[test]
            fn against_random_basis(seed in any::<u64>(), n in 20usize..50, k in 1usize..6, m in 1usize..8, method in method_strategy()) {
                let b = mass_matrix(n);
                let mut basis = random_mv(n, k, seed ^ 0x55);
                recursive_orth_svd(&mut basis, 0..k, Some(&b), &OrthConfig::default()).unwrap();
                let mut x = random_mv(n, m, seed);
                let cfg = OrthConfig { method, verify: true, ..OrthConfig::default() };
                let out = orth_against(&mut x, &[basis.as_block()], Some(&b), &cfg).unwrap();
                prop_assert!(out.max_orth_error.unwrap() <= 1e-11);
            }
        }
    }
}
