#![allow(dead_code)]

use gcge::multivec::{CsrMatrix, MultiVector};
use nalgebra::DMatrix;

pub fn to_na(m: &CsrMatrix) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(m.nrows(), m.ncols());
    for (r, c, v) in m.triplets() {
        d[(r, c)] += v;
    }
    d
}

pub fn mv_to_na(x: &MultiVector) -> DMatrix<f64> {
    DMatrix::from_column_slice(x.dim(), x.ncols(), x.data())
}

/// Ascending eigenvalues of `B^{-1/2} A B^{-1/2}`, computed with nalgebra.
pub fn dense_eigenvalues(a: &CsrMatrix, b: Option<&CsrMatrix>) -> Vec<f64> {
    let a = to_na(a);
    let c = match b {
        None => a,
        Some(b) => {
            let e = to_na(b).symmetric_eigen();
            let inv_sqrt = DMatrix::from_diagonal(&e.eigenvalues.map(|l| 1.0 / l.sqrt()));
            let s = &e.eigenvectors * inv_sqrt * e.eigenvectors.transpose();
            &s * a * &s
        }
    };
    let c = (&c + c.transpose()) * 0.5;
    let mut v: Vec<f64> = c.symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// `2 − 2cos(kπ/(n+1))`, `k` 1-based.
pub fn laplacian_eigenvalue(k: usize, n: usize) -> f64 {
    2.0 - 2.0 * (k as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos()
}

/// SPD tridiagonal mass-like matrix `tridiag(1, 4, 1)`.
pub fn mass(n: usize) -> CsrMatrix {
    CsrMatrix::tridiagonal(n, 1.0, 4.0, 1.0)
}

/// Random symmetric sparse matrix shifted to be SPD.
pub fn random_spd(n: usize, density: f64, seed: u64) -> CsrMatrix {
    let r = CsrMatrix::random_symmetric(n, density, seed);
    let shift = CsrMatrix::tridiagonal(n, 0.0, 3.0 + 2.0 * density * n as f64, 0.0);
    r.add_scaled(1.0, &shift).unwrap()
}

pub fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}
