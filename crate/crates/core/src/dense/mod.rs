//! Small host-side dense linear algebra.
//!
//! Everything here works on column-major [`DenseMatrix`] values whose leading
//! dimension equals the row count. The symmetric eigensolvers reduce to
//! tridiagonal form with Householder reflections and then either run implicit
//! QL on the whole spectrum ([`sym_eig_full`]) or pick an index window and
//! compute only those eigenvectors by inverse iteration ([`sym_eig_range`]).

mod tridiag;

use std::ops::{Index, IndexMut};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

pub(crate) use tridiag::Tridiagonal;

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape_err(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row slices; handy for literals in tests.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(shape_err("ragged rows"));
        }
        Ok(Self::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for j in 0..cols {
            for i in 0..rows {
                m.data[i + j * rows] = f(i, j);
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Copy of columns `start..end`.
    pub fn columns(&self, start: usize, end: usize) -> Self {
        Self {
            rows: self.rows,
            cols: end - start,
            data: self.data[start * self.rows..end * self.rows].to_vec(),
        }
    }

    /// Copy of the block with rows `r0..r1` and columns `c0..c1`.
    pub fn block(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> Self {
        Self::from_fn(r1 - r0, c1 - c0, |i, j| self[(r0 + i, c0 + j)])
    }

    /// Writes `src` into this matrix with its top-left corner at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, src: &DenseMatrix) {
        for j in 0..src.cols {
            for i in 0..src.rows {
                self[(r0 + i, c0 + j)] = src[(i, j)];
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `true` when `|M[i,j] - M[j,i]| <= rel_tol * max|M|` for all entries.
    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let bound = rel_tol * self.max_abs();
        (0..self.rows).all(|j| (0..j).all(|i| (self[(i, j)] - self[(j, i)]).abs() <= bound))
    }

    /// Replaces the matrix by `(M + Mᵀ) / 2`.
    pub fn symmetrize(&mut self) {
        let n = self.rows;
        for j in 0..n {
            for i in 0..j {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        let mut c = DenseMatrix::zeros(self.rows, other.cols);
        gemm(1.0, self, Trans::No, other, Trans::No, 0.0, &mut c)?;
        Ok(c)
    }

    /// `selfᵀ · other`.
    pub fn tr_matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        let mut c = DenseMatrix::zeros(self.cols, other.cols);
        gemm(1.0, self, Trans::Yes, other, Trans::No, 0.0, &mut c)?;
        Ok(c)
    }

    /// Largest entry of `|MᵀM - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.tr_matmul(self).expect("conformable by construction");
        let mut err: f64 = 0.0;
        for j in 0..g.cols {
            for i in 0..g.rows {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((g[(i, j)] - target).abs());
            }
        }
        err
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i + j * self.rows]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i + j * self.rows]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trans {
    No,
    Yes,
}

/// `C ← α·op(A)·op(B) + β·C`.
pub fn gemm(
    alpha: f64,
    a: &DenseMatrix,
    ta: Trans,
    b: &DenseMatrix,
    tb: Trans,
    beta: f64,
    c: &mut DenseMatrix,
) -> Result<()> {
    let (m, ka) = match ta {
        Trans::No => (a.rows, a.cols),
        Trans::Yes => (a.cols, a.rows),
    };
    let (kb, n) = match tb {
        Trans::No => (b.rows, b.cols),
        Trans::Yes => (b.cols, b.rows),
    };
    if ka != kb || c.rows != m || c.cols != n {
        return Err(shape_err(format!(
            "gemm: op(A) is {m}x{ka}, op(B) is {kb}x{n}, C is {}x{}",
            c.rows, c.cols
        )));
    }
    let rows = c.rows;
    c.data.chunks_mut(rows.max(1)).take(n).enumerate().for_each(|(j, cj)| {
        if beta == 0.0 {
            cj.iter_mut().for_each(|v| *v = 0.0);
        } else if beta != 1.0 {
            cj.iter_mut().for_each(|v| *v *= beta);
        }
        if alpha == 0.0 {
            return;
        }
        for p in 0..ka {
            let bpj = match tb {
                Trans::No => b[(p, j)],
                Trans::Yes => b[(j, p)],
            };
            if bpj == 0.0 {
                continue;
            }
            let s = alpha * bpj;
            match ta {
                Trans::No => {
                    for (ci, ai) in cj.iter_mut().zip(a.col(p)) {
                        *ci += s * ai;
                    }
                }
                Trans::Yes => {
                    for (i, ci) in cj.iter_mut().enumerate() {
                        *ci += s * a[(p, i)];
                    }
                }
            }
        }
    });
    Ok(())
}

/// Eigenvalues in ascending order with matching orthonormal eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

impl SpectralDecomposition {
    /// `‖M·V − V·diag(λ)‖_max`.
    pub fn residual(&self, m: &DenseMatrix) -> f64 {
        let mv = m.matmul(&self.vectors).expect("conformable");
        let mut err: f64 = 0.0;
        for (j, &lam) in self.values.iter().enumerate() {
            for i in 0..mv.rows() {
                err = err.max((mv[(i, j)] - lam * self.vectors[(i, j)]).abs());
            }
        }
        err
    }
}

/// Tolerance knobs for the dense eigensolvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseEigConfig {
    /// Relative deflation threshold for off-diagonal entries of the
    /// tridiagonal form, in units of machine epsilon.
    pub eps_factor: f64,
    pub max_sweeps_per_value: usize,
}

impl Default for DenseEigConfig {
    fn default() -> Self {
        Self {
            eps_factor: 1.0,
            max_sweeps_per_value: 60,
        }
    }
}

fn check_symmetric_input(m: &DenseMatrix) -> Result<()> {
    if !m.is_square() {
        return Err(shape_err(format!(
            "expected a square matrix, got {}x{}",
            m.rows, m.cols
        )));
    }
    if !m.is_finite() {
        return Err(Error::InvalidMatrix("non-finite entry".into()));
    }
    Ok(())
}

/// Flips each column so that its largest-magnitude entry is positive.
/// Ties go to the first such entry.
pub(crate) fn normalize_signs(v: &mut DenseMatrix) {
    for j in 0..v.cols {
        let col = v.col_mut(j);
        let mut best = 0.0;
        let mut sign = 1.0;
        for &x in col.iter() {
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        if sign < 0.0 {
            col.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Full symmetric eigendecomposition, ascending.
pub fn sym_eig_full(m: &DenseMatrix) -> Result<SpectralDecomposition> {
    sym_eig_full_with(m, &DenseEigConfig::default())
}

pub fn sym_eig_full_with(m: &DenseMatrix, cfg: &DenseEigConfig) -> Result<SpectralDecomposition> {
    check_symmetric_input(m)?;
    let n = m.rows;
    if n == 0 {
        return Ok(SpectralDecomposition {
            values: vec![],
            vectors: DenseMatrix::zeros(0, 0),
        });
    }
    let mut t = Tridiagonal::reduce(m);
    let mut q = t.q.clone();
    t.ql_implicit(Some(&mut q), cfg)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| t.diag[a].total_cmp(&t.diag[b]));
    let values = order.iter().map(|&k| t.diag[k]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.col_mut(dst).copy_from_slice(q.col(src));
    }
    normalize_signs(&mut vectors);
    Ok(SpectralDecomposition { values, vectors })
}

/// Eigenpairs `lo..=hi` (1-based, ascending) of a symmetric matrix.
pub fn sym_eig_range(m: &DenseMatrix, lo: usize, hi: usize) -> Result<SpectralDecomposition> {
    sym_eig_range_with(m, lo, hi, 1, &DenseEigConfig::default())
}

/// Like [`sym_eig_range`], splitting the requested window across up to
/// `workers` threads. Each worker gets at least ten eigenpairs and clusters
/// of close eigenvalues are never split between workers.
pub fn sym_eig_range_with(
    m: &DenseMatrix,
    lo: usize,
    hi: usize,
    workers: usize,
    cfg: &DenseEigConfig,
) -> Result<SpectralDecomposition> {
    check_symmetric_input(m)?;
    let n = m.rows;
    if lo < 1 || lo > hi || hi > n {
        return Err(Error::InvalidRange { lo, hi, dim: n });
    }
    let t = Tridiagonal::reduce(m);
    let spectrum = t.selected_values(lo - 1, hi, cfg)?;
    let chunks = t.partition_for_workers(&spectrum, workers.max(1), MIN_PAIRS_PER_WORKER);
    let pieces: Vec<Option<DenseMatrix>> = if chunks.len() > 1 {
        chunks
            .par_iter()
            .map(|r| t.inverse_iteration(&spectrum[r.clone()]))
            .collect()
    } else {
        vec![t.inverse_iteration(&spectrum)]
    };

    let k = hi - lo + 1;
    let mut z = DenseMatrix::zeros(n, k);
    let mut col = 0;
    for piece in &pieces {
        match piece {
            Some(p) => {
                z.set_block(0, col, p);
                col += p.cols();
            }
            None => return full_slice(m, lo, hi, cfg),
        }
    }
    let mut vectors = t.q.matmul(&z)?;
    normalize_signs(&mut vectors);
    Ok(SpectralDecomposition {
        values: spectrum.iter().map(|s| s.value).collect(),
        vectors,
    })
}

const MIN_PAIRS_PER_WORKER: usize = 10;

fn full_slice(
    m: &DenseMatrix,
    lo: usize,
    hi: usize,
    cfg: &DenseEigConfig,
) -> Result<SpectralDecomposition> {
    let full = sym_eig_full_with(m, cfg)?;
    Ok(SpectralDecomposition {
        values: full.values[lo - 1..hi].to_vec(),
        vectors: full.vectors.columns(lo - 1, hi),
    })
}

/// Eigendecomposition `M = QΛQᵀ` of a Gram matrix. Near-zero values are
/// reported, never rejected; callers decide what counts as dependent.
pub fn gram_svd(m: &DenseMatrix) -> Result<SpectralDecomposition> {
    let mut sym = m.clone();
    sym.symmetrize();
    sym_eig_full(&sym)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        m.symmetrize();
        m
    }

    /// Cyclic Jacobi rotations: slow, simple and independent of the
    /// tridiagonal path under test.
    fn jacobi_eigenvalues(m: &DenseMatrix) -> Vec<f64> {
        let n = m.rows();
        let mut a = m.clone();
        for _ in 0..100 {
            let mut off = 0.0;
            for j in 0..n {
                for i in 0..j {
                    off += a[(i, j)] * a[(i, j)];
                }
            }
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut v = a.diag();
        v.sort_by(f64::total_cmp);
        v
    }

    fn assert_contract(m: &DenseMatrix, sd: &SpectralDecomposition) {
        assert!(sd.values.windows(2).all(|w| w[0] <= w[1]));
        let scale = m.max_abs().max(f64::MIN_POSITIVE);
        assert!(
            sd.residual(m) <= 1e-12 * scale,
            "residual {} vs scale {scale}",
            sd.residual(m)
        );
        assert!(sd.vectors.orthonormality_error() <= 1e-12);
    }

    #[test]
    fn identity_spectrum() {
        let sd = sym_eig_full(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(sd.values, vec![1.0, 1.0, 1.0]);
        assert_contract(&DenseMatrix::identity(3), &sd);
    }

    #[test]
    fn diagonal_gives_permutation() {
        let m = DenseMatrix::from_diag(&[3.0, 1.0, 2.0]);
        let sd = sym_eig_full(&m).unwrap();
        assert_eq!(sd.values, vec![1.0, 2.0, 3.0]);
        let expected = [1usize, 2, 0];
        for (j, &row) in expected.iter().enumerate() {
            for i in 0..3 {
                let want = if i == row { 1.0 } else { 0.0 };
                assert_eq!(sd.vectors[(i, j)], want);
            }
        }
    }

    #[test]
    fn random_8x8_matches_jacobi() {
        let m = random_symmetric(8, 7);
        let sd = sym_eig_full(&m).unwrap();
        let oracle = jacobi_eigenvalues(&m);
        for (a, b) in sd.values.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        assert_contract(&m, &sd);
    }

    #[test]
    fn range_of_diagonal() {
        let m = DenseMatrix::from_diag(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let sd = sym_eig_range(&m, 3, 5).unwrap();
        assert_eq!(sd.values, vec![3.0, 4.0, 5.0]);
        assert_eq!(sd.vectors.cols(), 3);
        assert_eq!(sd.vectors[(2, 0)], 1.0);
        assert_eq!(sd.vectors[(4, 2)], 1.0);
    }

    #[test]
    fn full_range_equals_full() {
        let m = random_symmetric(8, 7);
        let full = sym_eig_full(&m).unwrap();
        let range = sym_eig_range(&m, 1, 8).unwrap();
        for (a, b) in full.values.iter().zip(&range.values) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_contract(&m, &range);
    }

    #[test]
    fn range_10x10_window() {
        let m = random_symmetric(10, 3);
        let full = sym_eig_full(&m).unwrap();
        let range = sym_eig_range(&m, 4, 7).unwrap();
        assert_eq!(range.values.len(), 4);
        for (a, b) in full.values[3..7].iter().zip(&range.values) {
            assert!((a - b).abs() < 1e-12);
        }
        let r = range.residual(&m);
        assert!(r <= 1e-12 * m.max_abs());
        assert!(range.vectors.orthonormality_error() <= 1e-12);
    }

    #[test]
    fn invalid_range_rejected() {
        let m = DenseMatrix::identity(4);
        assert!(matches!(sym_eig_range(&m, 0, 2), Err(Error::InvalidRange { .. })));
        assert!(matches!(sym_eig_range(&m, 3, 2), Err(Error::InvalidRange { .. })));
        assert!(matches!(sym_eig_range(&m, 1, 5), Err(Error::InvalidRange { .. })));
    }

    #[test]
    fn non_finite_rejected() {
        let mut m = DenseMatrix::identity(2);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(sym_eig_full(&m), Err(Error::InvalidMatrix(_))));
    }

    #[test]
    fn gram_identity_and_rank_deficient() {
        let sd = gram_svd(&DenseMatrix::identity(4)).unwrap();
        assert_eq!(sd.values, vec![1.0; 4]);
        let m = DenseMatrix::from_rows(&[&[2.0, 0.0], &[0.0, 0.0]]).unwrap();
        let sd = gram_svd(&m).unwrap();
        assert_eq!(sd.values, vec![0.0, 2.0]);
    }

    #[test]
    fn gram_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = DenseMatrix::from_fn(30, 4, |_, _| rng.gen_range(-1.0..1.0));
        let m = x.tr_matmul(&x).unwrap();
        let sd = gram_svd(&m).unwrap();
        assert!(sd.values[0] >= -1e-12 * m.max_abs());
        let lam = DenseMatrix::from_diag(&sd.values);
        let back = sd
            .vectors
            .matmul(&lam)
            .unwrap()
            .matmul(&sd.vectors.transpose())
            .unwrap();
        for (a, b) in back.data().iter().zip(m.data()) {
            assert!((a - b).abs() < 1e-12 * m.max_abs().max(1.0));
        }
    }

    #[test]
    fn gemm_identities_and_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = DenseMatrix::from_fn(4, 3, |_, _| rng.gen_range(-1.0..1.0));
        let mut c = DenseMatrix::from_fn(4, 3, |_, _| 9.0);
        gemm(1.0, &DenseMatrix::identity(4), Trans::No, &b, Trans::No, 0.0, &mut c).unwrap();
        assert_eq!(c, b);

        let before = c.clone();
        let a = DenseMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
        gemm(0.0, &a, Trans::No, &b, Trans::No, 1.0, &mut c).unwrap();
        assert_eq!(c, before);

        let a = DenseMatrix::from_fn(5, 4, |_, _| rng.gen_range(-1.0..1.0));
        let mut c = DenseMatrix::zeros(5, 3);
        gemm(1.0, &a, Trans::No, &b, Trans::No, 0.0, &mut c).unwrap();
        for i in 0..5 {
            for j in 0..3 {
                let mut s = 0.0;
                for p in 0..4 {
                    s += a[(i, p)] * b[(p, j)];
                }
                assert!((c[(i, j)] - s).abs() < 1e-14);
            }
        }

        let at = a.transpose();
        let mut c2 = DenseMatrix::zeros(5, 3);
        gemm(1.0, &at, Trans::Yes, &b, Trans::No, 0.0, &mut c2).unwrap();
        for (x, y) in c.data().iter().zip(c2.data()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn gemm_shape_mismatch() {
        let a = DenseMatrix::zeros(2, 3);
        let b = DenseMatrix::zeros(2, 3);
        let mut c = DenseMatrix::zeros(2, 3);
        assert!(matches!(
            gemm(1.0, &a, Trans::No, &b, Trans::No, 0.0, &mut c),
            Err(Error::InvalidShape(_))
        ));
    }

    #[test]
    fn parallel_range_matches_serial() {
        let m = random_symmetric(60, 21);
        let serial = sym_eig_range(&m, 1, 45).unwrap();
        let par = sym_eig_range_with(&m, 1, 45, 4, &DenseEigConfig::default()).unwrap();
        for (a, b) in serial.values.iter().zip(&par.values) {
            assert!((a - b).abs() < 1e-13);
        }
        assert!(par.residual(&m) <= 1e-12 * m.max_abs());
        assert!(par.vectors.orthonormality_error() <= 1e-12);
    }

    #[test]
    fn clustered_spectrum_range() {
        // Q diag(1, 1+1e-9, 1+2e-9, 2, 3, ...) Qᵀ: tight cluster at the bottom.
        let n = 12;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let q = sym_eig_full(&{
            let mut s = x.tr_matmul(&x).unwrap();
            s.symmetrize();
            s
        })
        .unwrap()
        .vectors;
        let mut d: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        d[1] = 1.0 + 1e-9;
        d[2] = 1.0 + 2e-9;
        let mut m = q
            .matmul(&DenseMatrix::from_diag(&d))
            .unwrap()
            .matmul(&q.transpose())
            .unwrap();
        m.symmetrize();
        let sd = sym_eig_range(&m, 1, 5).unwrap();
        assert!(sd.residual(&m) <= 1e-12 * m.max_abs());
        assert!(sd.vectors.orthonormality_error() <= 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]
            #[test]
            fn range_is_slice_of_full(n in 1usize..=20, seed in any::<u64>(), a in 0usize..20, b in 0usize..20) {
                let m = random_symmetric(n, seed);
                let (mut lo, mut hi) = (a % n + 1, b % n + 1);
                if lo > hi { std::mem::swap(&mut lo, &mut hi); }
                let full = sym_eig_full(&m).unwrap();
                let range = sym_eig_range(&m, lo, hi).unwrap();
                prop_assert_eq!(range.values.len(), hi - lo + 1);
                for (x, y) in full.values[lo - 1..hi].iter().zip(&range.values) {
                    prop_assert!((x - y).abs() <= 1e-12 * m.max_abs().max(1.0));
                }
                prop_assert!(range.residual(&m) <= 1e-12 * m.max_abs());
                prop_assert!(range.vectors.orthonormality_error() <= 1e-12);
            }

            #[test]
            fn gram_rank_is_detected(dim in 2usize..10, rank_seed in any::<u64>(), seed in any::<u64>()) {
                let r = (rank_seed as usize) % dim + 1;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let f = DenseMatrix::from_fn(40, r, |_, _| rng.gen_range(-1.0..1.0));
                let mix = DenseMatrix::from_fn(r, dim, |_, _| rng.gen_range(-1.0..1.0));
                let x = f.matmul(&mix).unwrap();
                let m = x.tr_matmul(&x).unwrap();
                let sd = gram_svd(&m).unwrap();
                let small = sd.values.iter().filter(|v| v.abs() < 1e-10 * m.max_abs()).count();
                prop_assert_eq!(small, dim - r);
            }
        }
    }
}
