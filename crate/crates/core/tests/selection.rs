use mlp_lr::*;

fn zero_table(k_max: usize) -> PenaltySchedule {
    PenaltySchedule::CustomTable { log_n_coefficients: vec![0.0; k_max], offset: 0.0 }
}

#[test]
fn noiseless_data_select_the_true_width() {
    let spec = RegressionSpec { sigma2: 0.0, ..Default::default() };
    let data = generate_dataset(&spec, 200, 7).unwrap().with_sigma2(1.0);
    let cfg = FitConfig { n_starts: 4, ..Default::default() }.with_warm_starts(vec![spec.theta0.clone()]);
    let r = select_architecture(&data, 3, &ConstraintBox::default(), &cfg, &PenaltySchedule::bic(1)).unwrap();
    assert_eq!(r.k_hat, 1);
    assert_eq!(r.per_k.len(), 3);
    assert!(r.per_k.windows(2).all(|w| w[1].t_n < w[0].t_n));
}

#[test]
fn zero_penalty_picks_the_largest_supremum() {
    let spec = RegressionSpec::default();
    let data = generate_dataset(&spec, 200, 8).unwrap();
    let cfg = FitConfig { n_starts: 6, ..Default::default() };
    let r = select_architecture(&data, 2, &ConstraintBox::default(), &cfg, &zero_table(2)).unwrap();
    assert!(r.per_k[1].sup_loglik > r.per_k[0].sup_loglik);
    assert_eq!(r.k_hat, 2);
    for e in &r.per_k {
        assert_eq!(e.penalty, 0.0);
        assert_eq!(e.t_n, e.sup_loglik);
    }
}

#[test]
fn bic_report_reconstructs_from_penalties() {
    let spec = RegressionSpec::default();
    let data = generate_dataset(&spec, 400, 9).unwrap();
    let s = PenaltySchedule::bic(1);
    let r = select_architecture(&data, 2, &ConstraintBox::default(), &FitConfig { n_starts: 6, ..Default::default() }, &s).unwrap();
    for e in &r.per_k {
        assert!((e.penalty - penalty_value(&s, 400, e.k)).abs() < 1e-12);
        assert!((e.t_n - (e.sup_loglik - e.penalty)).abs() < 1e-9);
    }
    let best = r.per_k.iter().map(|e| e.t_n).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(r.per_k[r.k_hat - 1].t_n, best);
    assert_eq!(r.k_hat, 1);
}
