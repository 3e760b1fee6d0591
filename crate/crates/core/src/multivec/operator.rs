use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Block, BlockMut, PAR_WORK};
use crate::dense::DenseMatrix;
use crate::error::{shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    Dense,
    CsrSparse,
    Diagonal,
    ShiftedCombination,
}

/// Matrix-free access to a square symmetric matrix: the solver only ever
/// asks for `Y = A·X` on a block of columns.
pub trait LinearOperator: Send + Sync {
    fn dim(&self) -> usize;

    /// `y ← A·x`. Callers guarantee matching shapes.
    fn apply_block(&self, x: Block<'_>, y: BlockMut<'_>);

    fn kind(&self) -> OperatorKind;

    /// Stored non-zeros, when the representation knows them.
    fn nnz(&self) -> Option<usize> {
        None
    }
}

/// Compressed sparse row matrix with sorted, duplicate-free rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from 0-based `(row, col, value)` triplets. Entries are sorted
    /// by `(row, col)` and duplicates summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|(r, c, _)| *r >= nrows || *c >= ncols) {
            return Err(shape_err(format!(
                "entry ({r},{c}) outside a {nrows}x{ncols} matrix"
            )));
        }
        triplets.sort_by_key(|a| (a.0, a.1));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Ok(Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    /// Symmetric tridiagonal matrix with constant bands.
    pub fn tridiagonal(n: usize, sub: f64, diag: f64, sup: f64) -> Self {
        let mut t = Vec::with_capacity(3 * n);
        for i in 0..n {
            if i > 0 {
                t.push((i, i - 1, sub));
            }
            t.push((i, i, diag));
            if i + 1 < n {
                t.push((i, i + 1, sup));
            }
        }
        Self::from_triplets(n, n, t).expect("indices in range")
    }

    /// Random symmetric sparse matrix with entries in (−1, 1) and roughly
    /// `density` fill, plus a full diagonal.
    pub fn random_symmetric(n: usize, density: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, rng.gen_range(-1.0..1.0)));
            for j in 0..i {
                if rng.gen::<f64>() < density {
                    let v = rng.gen_range(-1.0..1.0);
                    t.push((i, j, v));
                    t.push((j, i, v));
                }
            }
        }
        Self::from_triplets(n, n, t).expect("indices in range")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let row = self.indptr[r]..self.indptr[r + 1];
        match self.indices[row.clone()].binary_search(&c) {
            Ok(k) => self.values[row.start + k],
            Err(_) => 0.0,
        }
    }

    /// Iterates stored entries in `(row, col)` order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.indptr[r]..self.indptr[r + 1]).map(move |k| (r, self.indices[k], self.values[k]))
        })
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// Exact structural and numerical symmetry up to `tol`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.nrows == self.ncols && self.triplets().all(|(r, c, v)| (self.get(c, r) - v).abs() <= tol)
    }

    /// `self + alpha·other` on the union pattern.
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix) -> Result<CsrMatrix> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(shape_err("add_scaled: shapes differ"));
        }
        let t = self
            .triplets()
            .chain(other.triplets().map(|(r, c, v)| (r, c, alpha * v)))
            .collect();
        Self::from_triplets(self.nrows, self.ncols, t)
    }

    fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in self.indptr[r]..self.indptr[r + 1] {
            s += self.values[k] * x[self.indices[k]];
        }
        s
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows
    }

    fn apply_block(&self, x: Block<'_>, mut y: BlockMut<'_>) {
        let n = self.nrows;
        let k = x.ncols();
        let body = |(j, yj): (usize, &mut [f64])| {
            let xj = x.col(j);
            for (r, out) in yj.iter_mut().enumerate() {
                *out = self.row_dot(r, xj);
            }
        };
        if self.values.len() * k >= PAR_WORK {
            y.data_mut().par_chunks_mut(n).enumerate().for_each(body);
        } else {
            y.data_mut().chunks_mut(n).enumerate().for_each(body);
        }
    }

    fn kind(&self) -> OperatorKind {
        OperatorKind::CsrSparse
    }

    fn nnz(&self) -> Option<usize> {
        Some(self.values.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator(DenseMatrix);

impl DenseOperator {
    pub fn new(m: DenseMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(shape_err("dense operator must be square"));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }
}

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.0.rows()
    }

    fn apply_block(&self, x: Block<'_>, mut y: BlockMut<'_>) {
        let n = self.dim();
        for j in 0..x.ncols() {
            let yj = y.col_mut(j);
            yj.iter_mut().for_each(|v| *v = 0.0);
            for (p, &xp) in x.col(j).iter().enumerate() {
                if xp != 0.0 {
                    for (yi, ai) in yj.iter_mut().zip(self.0.col(p)) {
                        *yi += ai * xp;
                    }
                }
            }
            debug_assert_eq!(yj.len(), n);
        }
    }

    fn kind(&self) -> OperatorKind {
        OperatorKind::Dense
    }

    fn nnz(&self) -> Option<usize> {
        Some(self.0.data().iter().filter(|v| **v != 0.0).count())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalOperator(Vec<f64>);

impl DiagonalOperator {
    pub fn new(diag: Vec<f64>) -> Self {
        Self(diag)
    }

    pub fn identity(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn entries(&self) -> &[f64] {
        &self.0
    }
}

impl LinearOperator for DiagonalOperator {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn apply_block(&self, x: Block<'_>, mut y: BlockMut<'_>) {
        for j in 0..x.ncols() {
            for ((yi, xi), di) in y.col_mut(j).iter_mut().zip(x.col(j)).zip(&self.0) {
                *yi = di * xi;
            }
        }
    }

    fn kind(&self) -> OperatorKind {
        OperatorKind::Diagonal
    }

    fn nnz(&self) -> Option<usize> {
        Some(self.0.len())
    }
}

/// `A − θ·B` (with `B = I` when absent), applied without forming it.
pub struct ShiftedOperator<'a> {
    a: &'a dyn LinearOperator,
    b: Option<&'a dyn LinearOperator>,
    theta: f64,
}

impl<'a> ShiftedOperator<'a> {
    pub fn new(a: &'a dyn LinearOperator, b: Option<&'a dyn LinearOperator>, theta: f64) -> Self {
        Self { a, b, theta }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

impl LinearOperator for ShiftedOperator<'_> {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn apply_block(&self, x: Block<'_>, mut y: BlockMut<'_>) {
        self.a.apply_block(x, y.reborrow());
        if self.theta == 0.0 {
            return;
        }
        match self.b {
            None => {
                for (yi, xi) in y.data_mut().iter_mut().zip(x.data()) {
                    *yi -= self.theta * xi;
                }
            }
            Some(b) => {
                let mut bx = vec![0.0; x.data().len()];
                b.apply_block(x, BlockMut::new(x.dim(), &mut bx).expect("same shape"));
                for (yi, bi) in y.data_mut().iter_mut().zip(&bx) {
                    *yi -= self.theta * bi;
                }
            }
        }
    }

    fn kind(&self) -> OperatorKind {
        OperatorKind::ShiftedCombination
    }
}
