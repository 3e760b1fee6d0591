//! Built-in test problems.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multivec::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    /// `tridiag(−1, 2, −1)`.
    Laplacian1d,
    /// Linear finite elements for `−u'' = λu` on (0, 1) with Dirichlet ends:
    /// stiffness `(1/h)·tridiag(−1, 2, −1)` and mass `(h/6)·tridiag(1, 4, 1)`,
    /// `h = 1/(n+1)`.
    Fem1dP1,
    /// `diag(1, 2, …, n)`.
    DiagRange,
    /// Clusters of nearby diagonal values with weak random symmetric
    /// coupling; diagonally dominant and SPD.
    ClusteredRandom,
}

impl GeneratorKind {
    pub const NAMES: [&'static str; 4] = ["laplacian1d", "fem1d-p1", "diag-range", "clustered-random"];

    pub fn name(self) -> &'static str {
        match self {
            Self::Laplacian1d => "laplacian1d",
            Self::Fem1dP1 => "fem1d-p1",
            Self::DiagRange => "diag-range",
            Self::ClusteredRandom => "clustered-random",
        }
    }
}

impl std::str::FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "laplacian1d" => Self::Laplacian1d,
            "fem1d-p1" => Self::Fem1dP1,
            "diag-range" => Self::DiagRange,
            "clustered-random" => Self::ClusteredRandom,
            _ => return Err(Error::UnknownGenerator(s.to_string())),
        })
    }
}

/// Options used only by [`GeneratorKind::ClusteredRandom`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    /// Probability of each off-diagonal pair being coupled.
    pub density: f64,
    pub seed: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            density: 0.005,
            seed: 1,
        }
    }
}

/// Builds `(A, B)`; `B` is `None` for standard problems.
pub fn generate_builtin(
    kind: GeneratorKind,
    n: usize,
    params: &GeneratorParams,
) -> Result<(CsrMatrix, Option<CsrMatrix>)> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!("generator size must be at least 2, got {n}")));
    }
    Ok(match kind {
        GeneratorKind::Laplacian1d => (CsrMatrix::tridiagonal(n, -1.0, 2.0, -1.0), None),
        GeneratorKind::Fem1dP1 => {
            let h = 1.0 / (n as f64 + 1.0);
            let k = CsrMatrix::tridiagonal(n, -1.0 / h, 2.0 / h, -1.0 / h);
            let m = CsrMatrix::tridiagonal(n, h / 6.0, 4.0 * h / 6.0, h / 6.0);
            (k, Some(m))
        }
        GeneratorKind::DiagRange => {
            let t = (0..n).map(|i| (i, i, (i + 1) as f64)).collect();
            (CsrMatrix::from_triplets(n, n, t)?, None)
        }
        GeneratorKind::ClusteredRandom => (clustered_random(n, params)?, None),
    })
}

fn clustered_random(n: usize, p: &GeneratorParams) -> Result<CsrMatrix> {
    if !(p.density >= 0.0 && p.density <= 1.0) {
        return Err(Error::InvalidConfig(format!("density must be in [0, 1], got {}", p.density)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut diag = Vec::with_capacity(n);
    let mut center = 1.0;
    while diag.len() < n {
        let size = rng.gen_range(3..=8).min(n - diag.len());
        for _ in 0..size {
            diag.push(center + rng.gen_range(0.0..0.02));
        }
        center += rng.gen_range(0.5..1.5);
    }
    diag.shuffle(&mut rng);

    // Coupling scaled so each row's off-diagonal mass stays near 0.1.
    let scale = 0.1 / (p.density * n as f64).max(1.0);
    let mut t: Vec<(usize, usize, f64)> = diag.iter().enumerate().map(|(i, &d)| (i, i, d)).collect();
    for i in 0..n {
        for j in 0..i {
            if rng.gen::<f64>() < p.density {
                let v = scale * rng.gen_range(-1.0..1.0);
                t.push((i, j, v));
                t.push((j, i, v));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, t)
}
