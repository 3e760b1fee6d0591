//! Multi-vectors and the matrix-free operator contract.
//!
//! A [`MultiVector`] stores `num_cols` vectors of length `dim` one after the
//! other, so any contiguous column range is a plain sub-slice. [`Block`] and
//! [`BlockMut`] are those sub-slices; they are what operators and kernels
//! consume, which means working on a column window never copies.

mod operator;

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::{DenseMatrix, Trans};
use crate::error::{shape_err, Result};

pub use operator::{
    CsrMatrix, DenseOperator, DiagonalOperator, LinearOperator, OperatorKind, ShiftedOperator,
};

/// How long dot products are summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReduceMode {
    /// Whatever is fastest; long reductions may be split across threads.
    #[default]
    Fast,
    /// Fixed-length chunks combined by a fixed pairwise tree, so results are
    /// bit-identical across runs and thread counts.
    Deterministic,
}

const CHUNK: usize = 1024;
const PAR_WORK: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiVector {
    dim: usize,
    ncols: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct Block<'a> {
    dim: usize,
    data: &'a [f64],
}

#[derive(Debug)]
pub struct BlockMut<'a> {
    dim: usize,
    data: &'a mut [f64],
}

impl MultiVector {
    pub fn zeros(dim: usize, ncols: usize) -> Result<Self> {
        if dim == 0 {
            return Err(shape_err("multi-vector dimension must be positive"));
        }
        Ok(Self {
            dim,
            ncols,
            data: vec![0.0; dim * ncols],
        })
    }

    /// Zero block shaped to the operator's domain.
    pub fn create_like(op: &dyn LinearOperator, ncols: usize) -> Result<Self> {
        if ncols == 0 {
            return Err(shape_err("num_cols must be at least 1"));
        }
        Self::zeros(op.dim(), ncols)
    }

    pub fn from_col_major(dim: usize, ncols: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() != dim * ncols {
            return Err(shape_err(format!(
                "{} values do not form {ncols} columns of length {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, ncols, data })
    }

    pub fn from_block(b: Block<'_>) -> Self {
        Self {
            dim: b.dim,
            ncols: b.ncols(),
            data: b.data.to_vec(),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn as_block(&self) -> Block<'_> {
        Block {
            dim: self.dim,
            data: &self.data,
        }
    }

    pub fn as_block_mut(&mut self) -> BlockMut<'_> {
        BlockMut {
            dim: self.dim,
            data: &mut self.data,
        }
    }

    pub fn cols(&self, r: Range<usize>) -> Block<'_> {
        self.as_block().cols(r)
    }

    pub fn cols_mut(&mut self, r: Range<usize>) -> BlockMut<'_> {
        assert!(r.end <= self.ncols, "column range out of bounds");
        BlockMut {
            dim: self.dim,
            data: &mut self.data[r.start * self.dim..r.end * self.dim],
        }
    }

    /// Grows (with zero columns) or shrinks to `ncols` columns.
    pub fn resize_cols(&mut self, ncols: usize) {
        self.data.resize(ncols * self.dim, 0.0);
        self.ncols = ncols;
    }

    /// Deletes a column range, shifting later columns left.
    pub fn remove_cols(&mut self, r: Range<usize>) {
        assert!(r.start <= r.end && r.end <= self.ncols, "column range out of bounds");
        self.data.drain(r.start * self.dim..r.end * self.dim);
        self.ncols -= r.end - r.start;
    }

    pub fn append(&mut self, b: Block<'_>) -> Result<()> {
        if b.dim != self.dim {
            return Err(shape_err("appended block has a different dimension"));
        }
        self.data.extend_from_slice(b.data);
        self.ncols += b.ncols();
        Ok(())
    }

    /// Fills every entry with i.i.d. uniform(−1, 1) samples from ChaCha8
    /// seeded with `seed`.
    pub fn set_random(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.data
            .iter_mut()
            .for_each(|v| *v = rng.gen_range(-1.0..1.0));
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::from_col_major(self.dim, self.ncols, self.data.clone())
            .expect("consistent shape")
    }
}

impl<'a> Block<'a> {
    pub fn new(dim: usize, data: &'a [f64]) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(shape_err("slice length is not a multiple of dim"));
        }
        Ok(Self { dim, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn data(&self) -> &'a [f64] {
        self.data
    }

    #[inline]
    pub fn col(&self, j: usize) -> &'a [f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn cols(&self, r: Range<usize>) -> Block<'a> {
        assert!(r.end <= self.ncols(), "column range out of bounds");
        Block {
            dim: self.dim,
            data: &self.data[r.start * self.dim..r.end * self.dim],
        }
    }

    pub fn empty(dim: usize) -> Block<'static> {
        Block { dim, data: &[] }
    }
}

impl<'a> BlockMut<'a> {
    pub fn new(dim: usize, data: &'a mut [f64]) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(shape_err("slice length is not a multiple of dim"));
        }
        Ok(Self { dim, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn data(&self) -> &[f64] {
        self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        self.data
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn as_block(&self) -> Block<'_> {
        Block {
            dim: self.dim,
            data: self.data,
        }
    }

    pub fn reborrow(&mut self) -> BlockMut<'_> {
        BlockMut {
            dim: self.dim,
            data: self.data,
        }
    }

    pub fn cols(&self, r: Range<usize>) -> Block<'_> {
        self.as_block().cols(r)
    }

    pub fn cols_mut(&mut self, r: Range<usize>) -> BlockMut<'_> {
        assert!(r.end <= self.ncols(), "column range out of bounds");
        BlockMut {
            dim: self.dim,
            data: &mut self.data[r.start * self.dim..r.end * self.dim],
        }
    }

    /// Splits into columns `..at` and `at..`.
    pub fn split_at(&mut self, at: usize) -> (BlockMut<'_>, BlockMut<'_>) {
        let (a, b) = self.data.split_at_mut(at * self.dim);
        (
            BlockMut {
                dim: self.dim,
                data: a,
            },
            BlockMut {
                dim: self.dim,
                data: b,
            },
        )
    }

    pub fn copy_from(&mut self, src: Block<'_>) -> Result<()> {
        if src.dim != self.dim || src.data.len() != self.data.len() {
            return Err(shape_err("copy between blocks of different shape"));
        }
        self.data.copy_from_slice(src.data);
        Ok(())
    }

    /// Copies column `from` over column `to`.
    pub fn copy_col(&mut self, from: usize, to: usize) {
        if from != to {
            let d = self.dim;
            self.data.copy_within(from * d..(from + 1) * d, to * d);
        }
    }

    pub fn swap_cols(&mut self, a: usize, b: usize) {
        if a != b {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let d = self.dim;
            let (left, right) = self.data.split_at_mut(hi * d);
            left[lo * d..(lo + 1) * d].swap_with_slice(&mut right[..d]);
        }
    }

    pub fn scale_col(&mut self, j: usize, s: f64) {
        self.col_mut(j).iter_mut().for_each(|v| *v *= s);
    }
}

/// Writable window `rows x cols` of a column-major dense matrix whose
/// leading dimension is larger than the window height.
#[derive(Debug)]
pub struct SubmatrixMut<'a> {
    data: &'a mut [f64],
    ld: usize,
    row_off: usize,
    col_off: usize,
    rows: usize,
    cols: usize,
}

impl<'a> SubmatrixMut<'a> {
    pub fn new(
        target: &'a mut DenseMatrix,
        row_off: usize,
        col_off: usize,
        rows: usize,
        cols: usize,
    ) -> Result<Self> {
        if row_off + rows > target.rows() || col_off + cols > target.cols() {
            return Err(shape_err(format!(
                "view {rows}x{cols} at ({row_off},{col_off}) exceeds {}x{}",
                target.rows(),
                target.cols()
            )));
        }
        let ld = target.rows();
        Ok(Self {
            data: target.data_mut(),
            ld,
            row_off,
            col_off,
            rows,
            cols,
        })
    }

    /// View covering the whole matrix.
    pub fn whole(target: &'a mut DenseMatrix) -> Self {
        let (r, c) = (target.rows(), target.cols());
        Self::new(target, 0, 0, r, c).expect("whole matrix view")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[(self.row_off + r) + (self.col_off + c) * self.ld] = v;
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[(self.row_off + r) + (self.col_off + c) * self.ld]
    }
}

/// `Y ← α·X + β·Y` over whole blocks.
pub fn axpby(alpha: f64, x: Block<'_>, beta: f64, mut y: BlockMut<'_>) -> Result<()> {
    if x.dim != y.dim || x.data.len() != y.data.len() {
        return Err(shape_err("axpby: blocks differ in shape"));
    }
    let body = |(yi, xi): (&mut f64, &f64)| {
        *yi = if beta == 0.0 {
            alpha * xi
        } else {
            alpha * xi + beta * *yi
        }
    };
    if y.data.len() >= PAR_WORK {
        y.data_mut().par_iter_mut().zip(x.data.par_iter()).for_each(body);
    } else {
        y.data_mut().iter_mut().zip(x.data.iter()).for_each(body);
    }
    Ok(())
}

/// `Y ← op·X`, column by column.
pub fn mat_dot_mv(op: &dyn LinearOperator, x: Block<'_>, y: BlockMut<'_>) -> Result<()> {
    if op.dim() != x.dim || x.dim != y.dim || x.ncols() != y.ncols() {
        return Err(shape_err(format!(
            "operator of dim {} applied to {}x{} into {}x{}",
            op.dim(),
            x.dim,
            x.ncols(),
            y.dim,
            y.ncols()
        )));
    }
    op.apply_block(x, y);
    Ok(())
}

/// Allocating variant of [`mat_dot_mv`].
pub fn apply(op: &dyn LinearOperator, x: Block<'_>) -> Result<MultiVector> {
    let mut y = MultiVector::zeros(x.dim, x.ncols())?;
    mat_dot_mv(op, x, y.as_block_mut())?;
    Ok(y)
}

#[inline]
fn dot_serial(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut xc = x.chunks_exact(4);
    let mut yc = y.chunks_exact(4);
    for (a, b) in (&mut xc).zip(&mut yc) {
        acc[0] += a[0] * b[0];
        acc[1] += a[1] * b[1];
        acc[2] += a[2] * b[2];
        acc[3] += a[3] * b[3];
    }
    let mut tail = 0.0;
    for (a, b) in xc.remainder().iter().zip(yc.remainder()) {
        tail += a * b;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn pairwise_sum(v: &mut [f64]) -> f64 {
    let mut len = v.len();
    if len == 0 {
        return 0.0;
    }
    while len > 1 {
        let half = len.div_ceil(2);
        for i in 0..len / 2 {
            v[i] = v[2 * i] + v[2 * i + 1];
        }
        if len % 2 == 1 {
            v[half - 1] = v[len - 1];
        }
        len = half;
    }
    v[0]
}

/// Dot product under the given reduction mode.
pub fn dot(x: &[f64], y: &[f64], mode: ReduceMode) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    match mode {
        ReduceMode::Deterministic => {
            let mut partial: Vec<f64> = x
                .chunks(CHUNK)
                .zip(y.chunks(CHUNK))
                .map(|(a, b)| dot_serial(a, b))
                .collect();
            pairwise_sum(&mut partial)
        }
        ReduceMode::Fast => {
            if x.len() >= 16 * CHUNK {
                x.par_chunks(CHUNK)
                    .zip(y.par_chunks(CHUNK))
                    .map(|(a, b)| dot_serial(a, b))
                    .sum()
            } else {
                dot_serial(x, y)
            }
        }
    }
}

/// `out[r, c] = ⟨x_r, y_c⟩` written straight into the strided window.
pub fn inner_prod_raw(
    x: Block<'_>,
    y: Block<'_>,
    out: &mut SubmatrixMut<'_>,
    mode: ReduceMode,
) -> Result<()> {
    let (k1, k2) = (x.ncols(), y.ncols());
    if x.dim != y.dim || out.rows != k1 || out.cols != k2 {
        return Err(shape_err(format!(
            "inner product of {k1} x {k2} columns into a {}x{} view",
            out.rows, out.cols
        )));
    }
    let entries = k1 * k2;
    if entries == 0 {
        return Ok(());
    }
    if entries > 1 && x.dim * entries >= PAR_WORK {
        let vals: Vec<f64> = (0..entries)
            .into_par_iter()
            .map(|e| dot(x.col(e % k1), y.col(e / k1), mode))
            .collect();
        for (e, v) in vals.into_iter().enumerate() {
            out.set(e % k1, e / k1, v);
        }
    } else {
        for c in 0..k2 {
            for r in 0..k1 {
                out.set(r, c, dot(x.col(r), y.col(c), mode));
            }
        }
    }
    Ok(())
}

/// `out = Xᵀ·B·Y` (or `XᵀY` when `b` is `None`) into a submatrix view.
pub fn inner_prod(
    x: Block<'_>,
    y: Block<'_>,
    b: Option<&dyn LinearOperator>,
    out: &mut SubmatrixMut<'_>,
    mode: ReduceMode,
) -> Result<()> {
    match b {
        None => inner_prod_raw(x, y, out, mode),
        Some(op) => {
            let by = apply(op, y)?;
            inner_prod_raw(x, by.as_block(), out, mode)
        }
    }
}

/// Allocating `XᵀY`.
pub fn gram(x: Block<'_>, y: Block<'_>, mode: ReduceMode) -> Result<DenseMatrix> {
    let mut m = DenseMatrix::zeros(x.ncols(), y.ncols());
    inner_prod_raw(x, y, &mut SubmatrixMut::whole(&mut m), mode)?;
    Ok(m)
}

/// `out ← α·V·op(C) + β·out`.
pub fn block_gemm(
    alpha: f64,
    v: Block<'_>,
    c: &DenseMatrix,
    tc: Trans,
    beta: f64,
    mut out: BlockMut<'_>,
) -> Result<()> {
    let (cr, cc) = match tc {
        Trans::No => (c.rows(), c.cols()),
        Trans::Yes => (c.cols(), c.rows()),
    };
    if v.dim != out.dim || v.ncols() != cr || out.ncols() != cc {
        return Err(shape_err(format!(
            "block gemm: V has {} columns, op(C) is {cr}x{cc}, out has {}",
            v.ncols(),
            out.ncols()
        )));
    }
    let n = v.dim;
    let coef = |p: usize, j: usize| match tc {
        Trans::No => c[(p, j)],
        Trans::Yes => c[(j, p)],
    };
    let kernel = |(j, oj): (usize, &mut [f64])| {
        if beta == 0.0 {
            oj.iter_mut().for_each(|x| *x = 0.0);
        } else if beta != 1.0 {
            oj.iter_mut().for_each(|x| *x *= beta);
        }
        for p in 0..cr {
            let s = alpha * coef(p, j);
            if s != 0.0 {
                for (o, vi) in oj.iter_mut().zip(v.col(p)) {
                    *o += s * vi;
                }
            }
        }
    };
    if n * cr * cc >= PAR_WORK && cc > 1 {
        out.data_mut().par_chunks_mut(n).enumerate().for_each(kernel);
    } else {
        out.data_mut().chunks_mut(n).enumerate().for_each(kernel);
    }
    Ok(())
}

/// Allocating `V·C`.
pub fn combine(v: Block<'_>, c: &DenseMatrix) -> Result<MultiVector> {
    let mut out = MultiVector::zeros(v.dim, c.cols())?;
    block_gemm(1.0, v, c, Trans::No, 0.0, out.as_block_mut())?;
    Ok(out)
}

/// Largest `|(XᵀBX − I)_{rc}|`; used by the orthogonality checks.
pub fn orthonormality_error(
    x: Block<'_>,
    b: Option<&dyn LinearOperator>,
    mode: ReduceMode,
) -> Result<f64> {
    let k = x.ncols();
    let mut g = DenseMatrix::zeros(k, k);
    inner_prod(x, x, b, &mut SubmatrixMut::whole(&mut g), mode)?;
    let mut err: f64 = 0.0;
    for j in 0..k {
        for i in 0..k {
            let t = if i == j { 1.0 } else { 0.0 };
            err = err.max((g[(i, j)] - t).abs());
        }
    }
    Ok(err)
}
