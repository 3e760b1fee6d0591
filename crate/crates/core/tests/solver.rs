mod common;

use common::*;
use gcge::dense::sym_eig_full;
use gcge::gcg::*;
use gcge::io::{generate_builtin, GeneratorKind, GeneratorParams};
use gcge::multivec::{
    apply, gram, orthonormality_error, CsrMatrix, DiagonalOperator, LinearOperator, MultiVector,
    ReduceMode,
};
use gcge::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn opt(b: &Option<CsrMatrix>) -> Option<&dyn LinearOperator> {
    b.as_ref().map(|m| m as &dyn LinearOperator)
}

#[test]
fn laplacian_matches_analytic_spectrum() {
    let n = 200;
    let a = CsrMatrix::tridiagonal(n, -1.0, 2.0, -1.0);
    let rep = gcg_solve(&a, None, &SolverConfig::new(12)).unwrap();
    assert_eq!(rep.status, SolveStatus::Converged);
    for (k, v) in rep.eigenvalues.iter().enumerate() {
        assert!((v - laplacian_eigenvalue(k + 1, n)).abs() < 1e-7);
    }
    assert!(rep.residuals.iter().all(|r| *r <= 1e-8));
    assert!(orthonormality_error(rep.eigenvectors.as_block(), None, ReduceMode::Fast).unwrap() < 1e-9);
}

#[test]
fn fem_pair_matches_dense_oracle() {
    let (a, b) = generate_builtin(GeneratorKind::Fem1dP1, 120, &GeneratorParams::default()).unwrap();
    let rep = gcg_solve(&a, opt(&b), &SolverConfig::new(8)).unwrap();
    let oracle = dense_eigenvalues(&a, b.as_ref());
    for (v, w) in rep.eigenvalues.iter().zip(&oracle) {
        assert!(((v - w) / w).abs() < 1e-6, "{v} vs {w}");
    }
    let bop = b.as_ref().unwrap() as &dyn LinearOperator;
    assert!(orthonormality_error(rep.eigenvectors.as_block(), Some(bop), ReduceMode::Fast).unwrap() < 1e-9);
}

#[test]
fn fem_smallest_eigenvalue_converges_quadratically() {
    let err = |n: usize| {
        let (a, b) = generate_builtin(GeneratorKind::Fem1dP1, n, &GeneratorParams::default()).unwrap();
        let rep = gcg_solve(&a, opt(&b), &SolverConfig::new(1)).unwrap();
        rep.eigenvalues[0] - std::f64::consts::PI.powi(2)
    };
    let (e1, e2) = (err(49), err(99));
    assert!(e1 > 0.0 && e2 > 0.0);
    let ratio = e1 / e2;
    assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
}

#[test]
fn diagonal_problem_and_iteration_limit() {
    let a = DiagonalOperator::new((1..=100).map(f64::from).collect());
    let mut cfg = SolverConfig::new(10);
    cfg.max_gcg_iters = 3;
    let rep = gcg_solve(&a, None, &cfg).unwrap();
    assert_eq!(rep.status, SolveStatus::MaxIterations);
    assert_eq!(rep.history.len(), 3);
    assert_eq!(rep.eigenvalues.len(), 10);
}

#[test]
fn dimension_mismatch_rejected() {
    let a = CsrMatrix::tridiagonal(10, -1.0, 2.0, -1.0);
    let b = mass(11);
    assert!(matches!(
        gcg_solve(&a, Some(&b), &SolverConfig::new(2)),
        Err(Error::InvalidShape(_))
    ));
}

/// Steps a solve and checks the per-iteration invariants at every
/// Rayleigh-Ritz entry.
fn check_invariants(a: &CsrMatrix, b: Option<&CsrMatrix>, cfg: &SolverConfig) -> SolverReport {
    let bop = b.map(|m| m as &dyn LinearOperator);
    let mut ws = GcgWorkspace::new(a, bop, cfg).unwrap();
    let mut theta = 0.0;
    let mut conv = 0;
    loop {
        let out = ws.step().unwrap();
        let h = ws.history().last().unwrap().clone();
        assert!(h.num_converged >= conv);
        conv = h.num_converged;
        if out == StepOutcome::Converged {
            break;
        }
        assert!(ws.theta() >= theta);
        theta = ws.theta();

        let v = ws.active_basis();
        let av = apply(a, v).unwrap();
        let naive = gram(v, av.as_block(), ReduceMode::Fast).unwrap();
        let s = ws.abar();
        for j in 0..s.cols() {
            for i in 0..s.rows() {
                assert!((s[(i, j)] - naive[(i, j)]).abs() < 1e-10);
            }
        }
        let full = ws.full_basis();
        assert!(orthonormality_error(full, bop, ReduceMode::Fast).unwrap() < 1e-9);

        let (nxa, np, _) = ws.block_widths();
        if np > 0 {
            let x = v.cols(0..nxa);
            let p = v.cols(nxa..nxa + np);
            let bp = match bop {
                Some(op) => apply(op, p).unwrap(),
                None => MultiVector::from_block(p),
            };
            let xp = gram(x, bp.as_block(), ReduceMode::Fast).unwrap();
            assert!(xp.max_abs() < 1e-10);
            let pp = gram(p, bp.as_block(), ReduceMode::Fast).unwrap();
            for j in 0..np {
                for i in 0..np {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((pp[(i, j)] - want).abs() < 1e-10);
                }
            }
        }
        assert!(ws.iterations() < 500);
    }
    ws.into_report(SolveStatus::Converged).unwrap()
}

#[test]
fn invariants_hold_on_generalized_problem() {
    let a = random_spd(60, 0.1, 3);
    let b = mass(60);
    let mut cfg = SolverConfig::new(8);
    cfg.seed = 2;
    let rep = check_invariants(&a, Some(&b), &cfg);
    let oracle = dense_eigenvalues(&a, Some(&b));
    for (v, w) in rep.eigenvalues.iter().zip(&oracle) {
        assert!((v - w).abs() < 1e-8 * w.abs().max(1.0));
    }
    assert!(rep.residuals.iter().all(|r| *r <= cfg.tol));
}

#[test]
fn invariants_hold_in_moving_mode() {
    let a = CsrMatrix::tridiagonal(300, -1.0, 2.0, -1.0);
    let mut cfg = SolverConfig::new(30);
    cfg.moving = true;
    cfg.block_size = Some(5);
    let rep = check_invariants(&a, None, &cfg);
    assert!(rep.compactions > 0);
    assert!(rep.max_proj_dim_seen <= 25);
    for (k, v) in rep.eigenvalues.iter().enumerate() {
        assert!((v - laplacian_eigenvalue(k + 1, 300)).abs() < 1e-7);
    }
}

#[test]
fn moving_and_standard_modes_agree() {
    let a = CsrMatrix::tridiagonal(400, -1.0, 2.0, -1.0);
    let mut cfg = SolverConfig::new(40);
    cfg.block_size = Some(8);
    let plain = gcg_solve(&a, None, &cfg).unwrap();
    cfg.moving = true;
    let moving = gcg_solve(&a, None, &cfg).unwrap();
    assert_eq!(moving.status, SolveStatus::Converged);
    assert!(moving.max_proj_dim_seen <= 40);
    for (x, y) in plain.eigenvalues.iter().zip(&moving.eigenvalues) {
        assert!((x - y).abs() < 1e-7);
    }
}

#[test]
fn ritz_values_match_dense_oracle_on_subspace() {
    let a = random_spd(40, 0.2, 8);
    let mut cfg = SolverConfig::new(4);
    cfg.seed = 1;
    let mut ws = GcgWorkspace::new(&a, None, &cfg).unwrap();
    for _ in 0..3 {
        if ws.step().unwrap() == StepOutcome::Converged {
            break;
        }
        let v = ws.active_basis();
        let vn = DMatrix::from_fn(v.dim(), v.ncols(), |i, j| v.col(j)[i]);
        let naive = vn.transpose() * to_na(&a) * &vn;
        let naive = (&naive + naive.transpose()) * 0.5;
        let mut want: Vec<f64> = naive.symmetric_eigen().eigenvalues.iter().copied().collect();
        want.sort_by(f64::total_cmp);
        let got = sym_eig_full(ws.abar()).unwrap().values;
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-11, "{g} vs {w}");
        }
    }
}

#[test]
fn deterministic_runs_repeat_bitwise() {
    let (a, _) = generate_builtin(GeneratorKind::ClusteredRandom, 500, &GeneratorParams::default()).unwrap();
    let mut cfg = SolverConfig::new(10);
    cfg.deterministic_reduction = true;
    let r1 = gcg_solve(&a, None, &cfg).unwrap();
    let r2 = gcg_solve(&a, None, &cfg).unwrap();
    assert_eq!(r1.eigenvalues, r2.eigenvalues);
    assert_eq!(r1.eigenvectors.data(), r2.eigenvectors.data());
    assert_eq!(r1.iterations, r2.iterations);
}

#[test]
fn one_cg_step_contracts_by_shifted_ratio() {
    let lam = [1.0, 2.0, 4.0];
    let a = DiagonalOperator::new(lam.to_vec());
    let (a2, a3) = (0.8, 0.6);
    for theta in [0.0, 1.0] {
        let x0 = MultiVector::from_col_major(3, 1, vec![0.0, a2, a3]).unwrap();
        let lt = (a2 * a2 * lam[1] + a3 * a3 * lam[2]) / (a2 * a2 + a3 * a3);
        let rhs = MultiVector::from_col_major(3, 1, x0.data().iter().map(|v| (lt - theta) * v).collect()).unwrap();
        let mut w = x0.clone();
        shifted_block_cg(&a, None, theta, &rhs, &mut w, 1, 1e-300, ReduceMode::Fast).unwrap();
        let x1 = w.col(0);
        let rate = (x1[2] / x1[1]) / (a3 / a2);
        assert!((rate - (lam[1] - theta) / (lam[2] - theta)).abs() < 1e-10);
        let s = (a2 * a2 + a3 * a3) / (a3 * a3 * (lam[1] - theta) + a2 * a2 * (lam[2] - theta));
        assert!((x1[1] - s * (lam[2] - theta) * a2).abs() < 1e-12);
        assert!((x1[2] - s * (lam[1] - theta) * a3).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn structured_projection_matches_naive(n in 20usize..50, nev in 1usize..6, seed in 0u64..1000, gen in any::<bool>()) {
        let a = random_spd(n, 0.15, seed);
        let b = gen.then(|| mass(n));
        let mut cfg = SolverConfig::new(nev);
        cfg.seed = seed;
        cfg.max_gcg_iters = 6;
        let bop = b.as_ref().map(|m| m as &dyn LinearOperator);
        let mut ws = GcgWorkspace::new(&a, bop, &cfg).unwrap();
        while ws.iterations() < 6 && ws.step().unwrap() == StepOutcome::Continue {
            let v = ws.active_basis();
            let av = apply(&a, v).unwrap();
            let naive = gram(v, av.as_block(), ReduceMode::Fast).unwrap();
            let s = ws.abar();
            for j in 0..s.cols() {
                for i in 0..s.rows() {
                    prop_assert!((s[(i, j)] - naive[(i, j)]).abs() < 1e-10);
                }
            }
        }
    }
}
