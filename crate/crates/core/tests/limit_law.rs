use mlp_lr::limit_law::{gram_matrix_with, GramMode, ScoreBasis};
use mlp_lr::rng::stream_rng;
use mlp_lr::stats::quantile;
use mlp_lr::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Per-entry standard deviation of `v_i(x)v_j(x)` from an independent sample.
fn product_sd(spec: &RegressionSpec, draws: usize) -> DMatrix<f64> {
    let mut rng = stream_rng(77, 0);
    let p = ScoreBasis::new(spec).dim();
    let (mut m1, mut m2) = (DMatrix::zeros(p, p), DMatrix::zeros(p, p));
    for _ in 0..draws {
        let x: f64 = rng.sample(StandardNormal);
        let v = DVector::from_vec(eval_score_basis(spec, &[x]).unwrap());
        let prod = &v * v.transpose();
        m2 += prod.component_mul(&prod);
        m1 += prod;
    }
    let n = draws as f64;
    (m2 / n - (&m1 / n).component_mul(&(&m1 / n))).map(|v| v.max(0.0).sqrt())
}

#[test]
fn monte_carlo_gram_agrees_across_seeds() {
    let spec = RegressionSpec::default();
    let draws = 100_000;
    let a = gram_matrix_with(&spec, ScoreBasis::new(&spec), GramMode::MonteCarlo, draws, 1).unwrap();
    let b = gram_matrix_with(&spec, ScoreBasis::new(&spec), GramMode::MonteCarlo, draws, 2).unwrap();
    let exact = gram_matrix_with(&spec, ScoreBasis::new(&spec), GramMode::GaussHermite, 0, 0).unwrap();
    let se = product_sd(&spec, 20_000) / (draws as f64).sqrt();
    for i in 0..se.nrows() {
        for j in 0..se.ncols() {
            let tol = 4.0 * se[(i, j)] + 1e-12;
            assert!((a.x_gram[(i, j)] - b.x_gram[(i, j)]).abs() <= tol * 2f64.sqrt(), "({i},{j})");
            assert!((a.x_gram[(i, j)] - exact.x_gram[(i, j)]).abs() <= tol, "({i},{j})");
        }
    }
    assert_eq!(a.x_gram[(0, 0)], 1.0);
}

#[test]
fn regular_limit_matches_chi_square_quantiles() {
    let spec = RegressionSpec::default();
    let gram = gram_matrix(&spec, 100_000, 3).unwrap();
    let s = simulate_limit(&spec, 1, &gram, 4000, 4, &LimitOptions::default()).unwrap();
    let chi = ChiSquared::new(4.0).unwrap();
    for p in [0.25, 0.5, 0.75, 0.9] {
        let q = quantile(&s.values, p).unwrap();
        let f = chi.cdf(q);
        // 4 SE of an empirical cdf at 4000 draws is below 0.032
        assert!((f - p).abs() <= 0.032, "p {p}: q {q}, cdf {f}");
    }
}

#[test]
fn overparameterized_limit_dominates_the_regular_one() {
    let spec = RegressionSpec::default();
    let gram = gram_matrix(&spec, 50_000, 5).unwrap();
    let opt = LimitOptions::default();
    let one = simulate_limit(&spec, 1, &gram, 300, 6, &opt).unwrap();
    let two = simulate_limit(&spec, 2, &gram, 300, 6, &opt).unwrap();
    assert!(one.values.iter().zip(&two.values).all(|(a, b)| *a <= *b + 1e-9));
    let m1 = one.values.iter().sum::<f64>() / 300.0;
    let m2 = two.values.iter().sum::<f64>() / 300.0;
    assert!(m2 > m1 + 0.5, "{m1} {m2}");
}
