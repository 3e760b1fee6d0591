//! Householder tridiagonalization, implicit QL and tridiagonal inverse
//! iteration.

use std::ops::Range;

use super::{DenseEigConfig, DenseMatrix};
use crate::error::{Error, Result};

/// `M = Q·T·Qᵀ` with `T` symmetric tridiagonal.
#[derive(Debug, Clone)]
pub(crate) struct Tridiagonal {
    pub diag: Vec<f64>,
    /// `off[i]` couples rows `i` and `i + 1`; the last entry is always zero.
    pub off: Vec<f64>,
    pub q: DenseMatrix,
}

/// One selected eigenvalue together with the unreduced block it lives in.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SpecEntry {
    pub value: f64,
    pub block: (usize, usize),
}

impl Tridiagonal {
    /// Householder reduction with accumulated transformations.
    pub fn reduce(m: &DenseMatrix) -> Self {
        let n = m.rows();
        let mut v = m.clone();
        let mut d = vec![0.0; n];
        let mut e = vec![0.0; n];
        if n == 0 {
            return Self {
                diag: d,
                off: e,
                q: v,
            };
        }
        for j in 0..n {
            d[j] = v[(n - 1, j)];
        }
        for i in (1..n).rev() {
            let mut scale = 0.0;
            let mut h = 0.0;
            for dk in d.iter().take(i) {
                scale += dk.abs();
            }
            if scale == 0.0 {
                e[i] = d[i - 1];
                for j in 0..i {
                    d[j] = v[(i - 1, j)];
                    v[(i, j)] = 0.0;
                    v[(j, i)] = 0.0;
                }
            } else {
                for dk in d.iter_mut().take(i) {
                    *dk /= scale;
                    h += *dk * *dk;
                }
                let mut f = d[i - 1];
                let mut g = h.sqrt();
                if f > 0.0 {
                    g = -g;
                }
                e[i] = scale * g;
                h -= f * g;
                d[i - 1] = f - g;
                for ej in e.iter_mut().take(i) {
                    *ej = 0.0;
                }
                for j in 0..i {
                    f = d[j];
                    v[(j, i)] = f;
                    g = e[j] + v[(j, j)] * f;
                    for k in j + 1..i {
                        g += v[(k, j)] * d[k];
                        e[k] += v[(k, j)] * f;
                    }
                    e[j] = g;
                }
                f = 0.0;
                for j in 0..i {
                    e[j] /= h;
                    f += e[j] * d[j];
                }
                let hh = f / (h + h);
                for j in 0..i {
                    e[j] -= hh * d[j];
                }
                for j in 0..i {
                    f = d[j];
                    g = e[j];
                    for k in j..i {
                        let upd = f * e[k] + g * d[k];
                        v[(k, j)] -= upd;
                    }
                    d[j] = v[(i - 1, j)];
                    v[(i, j)] = 0.0;
                }
            }
            d[i] = h;
        }
        for i in 0..n - 1 {
            v[(n - 1, i)] = v[(i, i)];
            v[(i, i)] = 1.0;
            let h = d[i + 1];
            if h != 0.0 {
                for k in 0..=i {
                    d[k] = v[(k, i + 1)] / h;
                }
                for j in 0..=i {
                    let mut g = 0.0;
                    for k in 0..=i {
                        g += v[(k, i + 1)] * v[(k, j)];
                    }
                    for k in 0..=i {
                        let dk = d[k];
                        v[(k, j)] -= g * dk;
                    }
                }
            }
            for k in 0..=i {
                v[(k, i + 1)] = 0.0;
            }
        }
        for j in 0..n {
            d[j] = v[(n - 1, j)];
            v[(n - 1, j)] = 0.0;
        }
        v[(n - 1, n - 1)] = 1.0;

        let mut off = vec![0.0; n];
        off[..n - 1].copy_from_slice(&e[1..n]);
        Self {
            diag: d,
            off,
            q: v,
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn norm(&self) -> f64 {
        (0..self.len()).fold(0.0, |m, i| {
            let left = if i > 0 { self.off[i - 1].abs() } else { 0.0 };
            m.max(self.diag[i].abs() + self.off[i].abs() + left)
        })
    }

    /// Implicit QL. On return `diag` holds the (unsorted) eigenvalues and, if
    /// given, `vectors` has been right-multiplied by the accumulated
    /// rotations.
    pub fn ql_implicit(
        &mut self,
        mut vectors: Option<&mut DenseMatrix>,
        cfg: &DenseEigConfig,
    ) -> Result<()> {
        let n = self.len();
        let d = &mut self.diag;
        let e = &mut self.off;
        let eps = f64::EPSILON * cfg.eps_factor;
        let mut f = 0.0;
        let mut tst1: f64 = 0.0;
        for l in 0..n {
            tst1 = tst1.max(d[l].abs() + e[l].abs());
            let mut m = l;
            while m < n - 1 && e[m].abs() > eps * tst1 {
                m += 1;
            }
            if m > l {
                let mut iter = 0;
                loop {
                    iter += 1;
                    if iter > cfg.max_sweeps_per_value {
                        return Err(Error::NoConvergence(iter - 1));
                    }
                    let mut g = d[l];
                    let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                    let mut r = p.hypot(1.0);
                    if p < 0.0 {
                        r = -r;
                    }
                    d[l] = e[l] / (p + r);
                    d[l + 1] = e[l] * (p + r);
                    let dl1 = d[l + 1];
                    let mut h = g - d[l];
                    for di in d.iter_mut().take(n).skip(l + 2) {
                        *di -= h;
                    }
                    f += h;

                    p = d[m];
                    let mut c = 1.0;
                    let mut c2 = c;
                    let mut c3 = c;
                    let el1 = e[l + 1];
                    let mut s = 0.0;
                    let mut s2 = 0.0;
                    for i in (l..m).rev() {
                        c3 = c2;
                        c2 = c;
                        s2 = s;
                        g = c * e[i];
                        h = c * p;
                        r = p.hypot(e[i]);
                        e[i + 1] = s * r;
                        s = e[i] / r;
                        c = p / r;
                        p = c * d[i] - s * g;
                        d[i + 1] = h + s * (c * g + s * d[i]);
                        if let Some(v) = vectors.as_deref_mut() {
                            let rows = v.rows();
                            let data = v.data_mut();
                            let (left, right) = data.split_at_mut((i + 1) * rows);
                            let vi = &mut left[i * rows..];
                            let vi1 = &mut right[..rows];
                            for k in 0..rows {
                                let hk = vi1[k];
                                vi1[k] = s * vi[k] + c * hk;
                                vi[k] = c * vi[k] - s * hk;
                            }
                        }
                    }
                    p = -s * s2 * c3 * el1 * e[l] / dl1;
                    e[l] = s * p;
                    d[l] = c * p;
                    if e[l].abs() <= eps * tst1 {
                        break;
                    }
                }
            }
            d[l] += f;
            e[l] = 0.0;
        }
        Ok(())
    }

    /// Unreduced diagonal blocks `[start, end)` after dropping negligible
    /// off-diagonal couplings.
    fn blocks(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        let tiny = f64::EPSILON * self.norm();
        let mut out = Vec::new();
        let mut start = 0;
        for i in 0..n {
            if i + 1 == n || self.off[i].abs() <= tiny {
                out.push((start, i + 1));
                start = i + 1;
            }
        }
        out
    }

    /// Eigenvalues with 0-based ascending indices `start..end`.
    pub fn selected_values(
        &self,
        start: usize,
        end: usize,
        cfg: &DenseEigConfig,
    ) -> Result<Vec<SpecEntry>> {
        let mut all = Vec::with_capacity(self.len());
        for (b0, b1) in self.blocks() {
            let mut sub = Tridiagonal {
                diag: self.diag[b0..b1].to_vec(),
                off: self.off[b0..b1].to_vec(),
                q: DenseMatrix::zeros(0, 0),
            };
            *sub.off.last_mut().expect("non-empty block") = 0.0;
            sub.ql_implicit(None, cfg)?;
            all.extend(sub.diag.into_iter().map(|value| SpecEntry {
                value,
                block: (b0, b1),
            }));
        }
        all.sort_by(|a, b| a.value.total_cmp(&b.value));
        Ok(all[start..end].to_vec())
    }

    /// Splits a sorted selection into contiguous index ranges, one per
    /// worker, never cutting through a cluster of close eigenvalues.
    pub fn partition_for_workers(
        &self,
        spectrum: &[SpecEntry],
        workers: usize,
        min_per_worker: usize,
    ) -> Vec<Range<usize>> {
        let k = spectrum.len();
        let nworkers = workers.min(k / min_per_worker.max(1)).max(1);
        if nworkers == 1 {
            return vec![0..k];
        }
        let ortol = CLUSTER_TOL * self.norm();
        let target = k / nworkers;
        let mut out = Vec::new();
        let mut start = 0;
        while start < k {
            let mut cut = (start + target).min(k);
            if k - cut < min_per_worker || out.len() + 1 == nworkers {
                cut = k;
            }
            while cut < k && spectrum[cut].value - spectrum[cut - 1].value <= ortol {
                cut += 1;
            }
            out.push(start..cut);
            start = cut;
        }
        out
    }

    /// Eigenvectors of `T` for the given eigenvalues, as columns of an
    /// `n x k` matrix. Returns `None` when the computed vectors fail the
    /// residual or orthogonality check; the caller then falls back to QL.
    pub fn inverse_iteration(&self, entries: &[SpecEntry]) -> Option<DenseMatrix> {
        let n = self.len();
        let k = entries.len();
        let mut z = DenseMatrix::zeros(n, k);
        let mut by_block: Vec<((usize, usize), Vec<usize>)> = Vec::new();
        for (idx, entry) in entries.iter().enumerate() {
            match by_block.iter_mut().find(|(b, _)| *b == entry.block) {
                Some((_, list)) => list.push(idx),
                None => by_block.push((entry.block, vec![idx])),
            }
        }
        for ((b0, b1), cols) in by_block {
            let values: Vec<f64> = cols.iter().map(|&c| entries[c].value).collect();
            let vecs = self.block_vectors(b0, b1, &values)?;
            for (local, &c) in cols.iter().enumerate() {
                z.col_mut(c)[b0..b1].copy_from_slice(&vecs[local]);
            }
        }
        Some(z)
    }

    fn block_vectors(&self, b0: usize, b1: usize, values: &[f64]) -> Option<Vec<Vec<f64>>> {
        let m = b1 - b0;
        if m == 1 {
            return Some(vec![vec![1.0]; values.len()]);
        }
        let d = &self.diag[b0..b1];
        let off = &self.off[b0..b1 - 1];
        let bnorm = (0..m).fold(0.0f64, |acc, i| {
            let left = if i > 0 { off[i - 1].abs() } else { 0.0 };
            let right = if i + 1 < m { off[i].abs() } else { 0.0 };
            acc.max(d[i].abs() + left + right)
        });
        let bnorm = bnorm.max(f64::MIN_POSITIVE);
        let eps3 = 10.0 * f64::EPSILON * bnorm;
        let ortol = CLUSTER_TOL * bnorm;

        let mut out: Vec<Vec<f64>> = Vec::with_capacity(values.len());
        let mut cluster_start = 0;
        let mut prev_shift = f64::NEG_INFINITY;
        let mut seed = 0x9E37_79B9_7F4A_7C15u64 ^ (b0 as u64);
        for (j, &lambda) in values.iter().enumerate() {
            if j > 0 && lambda - values[j - 1] > ortol {
                cluster_start = j;
            }
            let mut shift = lambda;
            if j > cluster_start && shift - prev_shift < eps3 {
                shift = prev_shift + eps3;
            }
            prev_shift = shift;

            let lu = TridiagLu::factor(d, off, shift, eps3);
            let mut x: Vec<f64> = (0..m)
                .map(|_| {
                    seed = seed
                        .wrapping_mul(6_364_136_223_846_793_005)
                        .wrapping_add(1_442_695_040_888_963_407);
                    ((seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
                })
                .collect();
            for _ in 0..INVERSE_STEPS {
                normalize(&mut x);
                lu.solve(&mut x);
                if !x.iter().all(|v| v.is_finite()) {
                    return None;
                }
                for _ in 0..2 {
                    for prev in &out[cluster_start..j] {
                        let c = dot(prev, &x);
                        x.iter_mut().zip(prev).for_each(|(xi, pi)| *xi -= c * pi);
                    }
                }
            }
            normalize(&mut x);

            let mut res: f64 = 0.0;
            for i in 0..m {
                let mut t = (d[i] - lambda) * x[i];
                if i > 0 {
                    t += off[i - 1] * x[i - 1];
                }
                if i + 1 < m {
                    t += off[i] * x[i + 1];
                }
                res = res.max(t.abs());
            }
            if res > RESIDUAL_SLACK * m as f64 * f64::EPSILON * bnorm {
                return None;
            }
            out.push(x);
        }
        for a in 0..out.len() {
            for b in 0..a {
                if dot(&out[a], &out[b]).abs() > ORTH_SLACK {
                    return None;
                }
            }
        }
        Some(out)
    }
}

const CLUSTER_TOL: f64 = 1e-3;
const INVERSE_STEPS: usize = 3;
const RESIDUAL_SLACK: f64 = 4.0;
const ORTH_SLACK: f64 = 1e-13;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(x: &mut [f64]) {
    let nrm = dot(x, x).sqrt();
    if nrm > 0.0 {
        x.iter_mut().for_each(|v| *v /= nrm);
    }
}

/// LU factorization with partial pivoting of `T - shift·I`.
struct TridiagLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    fn factor(diag: &[f64], off: &[f64], shift: f64, pivmin: f64) -> Self {
        let n = diag.len();
        let mut d: Vec<f64> = diag.iter().map(|v| v - shift).collect();
        let mut dl = off.to_vec();
        let mut du = off.to_vec();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n - 1 {
            if d[i].abs() >= dl[i].abs() {
                if d[i] != 0.0 {
                    let fact = dl[i] / d[i];
                    dl[i] = fact;
                    d[i + 1] -= fact * du[i];
                } else {
                    dl[i] = 0.0;
                }
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -fact;
                }
                swapped[i] = true;
            }
        }
        for di in d.iter_mut() {
            if di.abs() < pivmin {
                *di = if *di < 0.0 { -pivmin } else { pivmin };
            }
        }
        Self {
            dl,
            d,
            du,
            du2,
            swapped,
        }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = self.d.len();
        for i in 0..n - 1 {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale > 0.0 && scale.is_finite() {
            b.iter_mut().for_each(|v| *v /= scale);
        }
    }
}
