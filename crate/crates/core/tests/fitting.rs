use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use tir_core::fit::{apply_weights, assemble, fitness, solve_ls};
use tir_core::linalg::lstsq;
use tir_core::{InvertibleFn, ItExpr, Term, TirExpr, TransformFn};

fn to_columns(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.ncols()).map(|j| a.column(j).iter().copied().collect()).collect()
}

/// Minimum-norm solution through the spectrum of `A^T A`.
fn pseudo_inverse_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let eig = (a.transpose() * a).symmetric_eigen();
    let lmax = eig.eigenvalues.amax();
    let atb = a.transpose() * b;
    let mut x = DVector::zeros(a.ncols());
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        if l > 1e-12 * lmax {
            let v = eig.eigenvectors.column(j);
            x += v * (v.dot(&atb) / l);
        }
    }
    x
}

fn matrix_strategy() -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>)> {
    (2usize..30, 1usize..7, 0usize..3).prop_flat_map(|(n, m, dup)| {
        (
            prop::collection::vec(-5.0f64..5.0, n * m),
            prop::collection::vec(-5.0f64..5.0, n),
        )
            .prop_map(move |(a, b)| {
                let mut a = DMatrix::from_vec(n, m, a);
                // force rank deficiency by copying columns
                for k in 0..dup.min(m.saturating_sub(1)) {
                    let c = a.column(0).clone_owned() * (k as f64 + 2.0);
                    a.set_column(m - 1 - k, &c);
                }
                (a, DVector::from_vec(b))
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn least_squares_predictions_match_pseudo_inverse((a, b) in matrix_strategy()) {
        let sol = lstsq(&to_columns(&a), b.as_slice(), 1e-10).unwrap();
        let ours = &a * DVector::from_vec(sol.coef.clone());
        let oracle = &a * pseudo_inverse_solve(&a, &b);
        let scale = b.norm().max(1.0);
        prop_assert!((ours - oracle).norm() <= 1e-8 * scale);
    }

    #[test]
    fn residual_is_orthogonal_to_columns((a, b) in matrix_strategy()) {
        let sol = lstsq(&to_columns(&a), b.as_slice(), 1e-10).unwrap();
        let r = &b - &a * DVector::from_vec(sol.coef);
        let g = a.transpose() * r;
        prop_assert!(g.amax() <= 1e-8 * (a.norm() * b.norm()).max(1.0), "{}", g.amax());
    }

    #[test]
    fn minimum_norm_for_rank_deficient((a, b) in matrix_strategy()) {
        let sol = lstsq(&to_columns(&a), b.as_slice(), 1e-10).unwrap();
        let oracle = pseudo_inverse_solve(&a, &b);
        let ours = DVector::from_vec(sol.coef);
        prop_assert!(ours.norm() <= oracle.norm() * (1.0 + 1e-7) + 1e-9);
    }
}

fn grid(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            vec![0.5 + 2.0 * t, 1.5 - t * t]
        })
        .collect()
}

#[test]
fn rational_target_is_fitted_exactly() {
    let x = grid(60);
    let y: Vec<f64> = x.iter().map(|r| (1.0 + 2.0 * r[0]) / (1.0 + 0.5 * r[1])).collect();
    let m = TirExpr::new(
        InvertibleFn::Id,
        ItExpr::new(vec![Term::single(2, 0, 1, TransformFn::Id)]),
        ItExpr::new(vec![Term::single(2, 1, 1, TransformFn::Id)]),
    );
    let w = solve_ls(&assemble(&m, &x, &y).unwrap()).unwrap();
    for (got, want) in w.iter().zip([1.0, 2.0, 0.5]) {
        assert!((got - want).abs() < 1e-10, "{w:?}");
    }
    let fitted = apply_weights(&m, &w);
    for (r, &t) in x.iter().zip(&y) {
        assert!((fitted.eval(r) - t).abs() < 1e-12);
    }
}

#[test]
fn non_finite_fraction_decides_validity() {
    let mut x = grid(40);
    let y: Vec<f64> = x.iter().map(|r| 1.0 + r[0]).collect();
    let m = TirExpr::new(
        InvertibleFn::Id,
        ItExpr::new(vec![Term::single(2, 0, -1, TransformFn::Id)]),
        ItExpr::empty(),
    );
    // 4 of 40 rows produce an infinite column entry: allowed
    for r in x.iter_mut().take(4) {
        r[0] = 0.0;
    }
    assert_eq!(assemble(&m, &x, &y).unwrap().dropped_rows, 4);
    x[4][0] = 0.0;
    assert!(assemble(&m, &x, &y).is_err());
    let (_, res) = fitness(&m, (&x, &y), (&x, &y), 0.0);
    assert!(!res.valid && res.penalized_fitness == f64::NEG_INFINITY);
}

#[test]
fn outer_log_fits_exponential_target() {
    let x = grid(50);
    let y: Vec<f64> = x.iter().map(|r| (2.0 + r[0]).exp()).collect();
    let m = TirExpr::new(
        InvertibleFn::Exp,
        ItExpr::new(vec![Term::single(2, 0, 1, TransformFn::Id)]),
        ItExpr::empty(),
    );
    let (fitted, res) = fitness(&m, (&x, &y), (&x, &y), 0.0);
    assert!(res.valid);
    assert!((fitted.p.intercept.unwrap() - 2.0).abs() < 1e-10);
    assert!((fitted.p.weights[0] - 1.0).abs() < 1e-10);
    assert!((res.fitness - 1.0).abs() < 1e-12);
}
