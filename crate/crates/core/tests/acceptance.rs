//! Desk-scale acceptance suite. Each criterion prints one PASS/FAIL line to
//! stderr (uncaptured), then asserts. Run with
//! `cargo test --release -p mlp-lr --test acceptance -- --nocapture`.

use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use mlp_lr::harness::{basis_for, run_check_h4, run_gradcheck, run_replicates, ExperimentConfig, ReplicateMatrix};
use mlp_lr::likelihood::{taylor_terms, FdSteps, Reparameterization};
use mlp_lr::limit_law::{gram_matrix_with, LimitEngine};
use mlp_lr::rng::stream_rng;
use mlp_lr::stats::{ks_distance, median, quantile};
use mlp_lr::*;
use rand::Rng;

const CHI2_4_MEAN: f64 = 4.0;
const CHI2_4_Q95: f64 = 9.487729036781154;
const LIMIT_DRAWS: usize = 10_000;

fn report(id: u32, name: &str, pass: bool, detail: String) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[criterion {id}] {tag} {name}: {detail}");
}

fn spec() -> RegressionSpec {
    RegressionSpec::default()
}

fn gram() -> &'static GramMatrix {
    static G: OnceLock<GramMatrix> = OnceLock::new();
    G.get_or_init(|| gram_matrix(&spec(), 200_000, 71).unwrap())
}

fn limit_sample(k: usize) -> &'static LimitSample {
    static L1: OnceLock<LimitSample> = OnceLock::new();
    static L2: OnceLock<LimitSample> = OnceLock::new();
    let cell = match k {
        1 => &L1,
        2 => &L2,
        _ => unreachable!(),
    };
    cell.get_or_init(|| simulate_limit(&spec(), k, gram(), LIMIT_DRAWS, 900 + k as u64, &LimitOptions::default()).unwrap())
}

fn overparameterized() -> &'static ReplicateMatrix {
    static M: OnceLock<ReplicateMatrix> = OnceLock::new();
    M.get_or_init(|| run_replicates(&ExperimentConfig::desk(vec![200, 500, 1000], vec![2], 100, 606)).unwrap())
}

fn clean(sample: Vec<f64>) -> Vec<f64> {
    sample.into_iter().filter(|v| v.is_finite()).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn criterion_1_derivative_catalog() {
    let t = Instant::now();
    let r = run_gradcheck(&spec(), 2, 100, 11, FdSteps::default()).unwrap();
    let pass = r.max_first_rel <= 1e-5 && r.max_second_rel <= 1e-4;
    report(
        1,
        "finite-difference derivative catalog",
        pass,
        format!("first {:.2e} (<=1e-5), second {:.2e} (<=1e-4), {:.1}s", r.max_first_rel, r.max_second_rel, t.elapsed().as_secs_f64()),
    );
    assert!(pass);
}

#[test]
fn criterion_2_cubic_remainder() {
    let t = Instant::now();
    let spec = spec();
    let part = Partition::new(vec![0, 2]).unwrap();
    let rep = Reparameterization::base_point(&spec, &part, vec![0.35, 0.65]).unwrap();
    let phi0 = rep.phi();
    let data = generate_dataset(&spec, 100, 21).unwrap();
    let mut rng = stream_rng(22, 0);
    let scales = [1e-2, 5e-3, 2.5e-3];
    let mut avg = [0.0; 3];
    for (x, y) in data.rows() {
        let dir: Vec<f64> = (0..phi0.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        for (s, &h) in scales.iter().enumerate() {
            let phi: Vec<f64> = phi0.iter().zip(&dir).map(|(a, b)| a + h * b).collect();
            avg[s] += taylor_terms(&rep.with_phi(&phi).unwrap(), &spec, x, y).remainder / data.len() as f64;
        }
    }
    let ratios = [avg[0] / avg[1], avg[1] / avg[2]];
    let pass = ratios.iter().all(|r| (6.0..=10.0).contains(r));
    report(
        2,
        "cubic Taylor remainder",
        pass,
        format!("ratios {:.3}, {:.3} (in [6,10]), {:.1}s", ratios[0], ratios[1], t.elapsed().as_secs_f64()),
    );
    assert!(pass);
}

#[test]
fn criterion_3_identifiability_certificate() {
    let t = Instant::now();
    let h = run_check_h4(&spec(), 200_000, 31).unwrap();
    let gh = h.gauss_hermite.clone().unwrap();
    let pass = h.monte_carlo.pass && gh.pass && h.agree && gh.min_eigenvalue > 1e-8 && h.monte_carlo.min_eigenvalue > 1e-8;
    report(
        3,
        "Gram linear independence",
        pass,
        format!(
            "GH min eig {:.3e} (raw {:.3e}), MC min eig {:.3e} (raw {:.3e}), agree {}, {:.1}s",
            gh.min_eigenvalue,
            gh.raw_min_eigenvalue,
            h.monte_carlo.min_eigenvalue,
            h.monte_carlo.raw_min_eigenvalue,
            h.agree,
            t.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_regular_limit_is_chi_square() {
    let t = Instant::now();
    let s = limit_sample(1);
    let m = mean(&s.values);
    let q = quantile(&s.values, 0.95).unwrap();
    let pass = (m - CHI2_4_MEAN).abs() <= 0.05 * CHI2_4_MEAN && (q - CHI2_4_Q95).abs() <= 0.05 * CHI2_4_Q95;
    report(
        4,
        "regular-case limit vs chi2(4)",
        pass,
        format!("mean {m:.4} (4 +- 5%), q95 {q:.4} (9.4877 +- 5%), {:.1}s", t.elapsed().as_secs_f64()),
    );
    assert!(pass);
}

#[test]
fn criterion_5_regular_empirical_lr() {
    let t = Instant::now();
    let m = run_replicates(&ExperimentConfig::desk(vec![500], vec![1], 200, 505)).unwrap();
    let sample = clean(m.two_lambda(500, 1));
    let mu = mean(&sample);
    let ks = ks_distance(&sample, &limit_sample(1).values).unwrap();
    let pass = sample.len() == 200 && (mu - CHI2_4_MEAN).abs() <= 0.2 * CHI2_4_MEAN && ks <= 0.15;
    report(
        5,
        "regular-case empirical 2lambda",
        pass,
        format!(
            "{} replicates, mean {mu:.4} (4 +- 20%), KS {ks:.4} (<=0.15), failed cells {}, {:.1}s",
            sample.len(),
            m.failed_cells(),
            t.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_tightness_over_n() {
    let t = Instant::now();
    let m = overparameterized();
    let samples: Vec<Vec<f64>> = [200, 500, 1000].iter().map(|&n| clean(m.two_lambda(n, 2))).collect();
    let medians: Vec<f64> = samples.iter().map(|s| median(s).unwrap()).collect();
    let pooled: Vec<f64> = samples.concat();
    let pm = median(&pooled).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in i + 1..3 {
            worst = worst.max((medians[i] - medians[j]).abs());
        }
    }
    let pass = worst <= 0.3 * pm;
    report(
        6,
        "tightness of 2lambda at k0+1",
        pass,
        format!(
            "medians n=200/500/1000: {:.3}/{:.3}/{:.3}, max gap {worst:.3} (<= {:.3} = 30% of pooled {pm:.3}), {:.1}s",
            medians[0],
            medians[1],
            medians[2],
            0.3 * pm,
            t.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_overparameterized_limit_law() {
    let t = Instant::now();
    let sample = clean(overparameterized().two_lambda(1000, 2));
    let limit = limit_sample(2);
    let ks = ks_distance(&sample, &limit.values).unwrap();
    let pass = ks <= 0.2;
    report(
        7,
        "empirical 2lambda at k0+1 vs simulated limit",
        pass,
        format!(
            "KS {ks:.4} (<=0.2); empirical mean {:.3} median {:.3}, limit mean {:.3} median {:.3}, {:.1}s",
            mean(&sample),
            median(&sample).unwrap(),
            mean(&limit.values),
            median(&limit.values).unwrap(),
            t.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_selection_consistency() {
    let t = Instant::now();
    let config = ExperimentConfig::desk(vec![500, 2000], vec![1, 2, 3], 100, 808);
    let m = run_replicates(&config).unwrap();
    let freq = |n: usize| {
        let ks = m.k_hats(n);
        (ks.iter().filter(|&&k| k == 1).count() as f64 / ks.len() as f64, ks.len())
    };
    let (p500, r500) = freq(500);
    let (p2000, r2000) = freq(2000);
    let se = (p500 * (1.0 - p500) / r500 as f64 + p2000 * (1.0 - p2000) / r2000 as f64).sqrt();
    let pass = r2000 == 100 && p2000 >= 0.9 && p2000 >= p500 - 2.0 * se;
    report(
        8,
        "BIC-like selection consistency",
        pass,
        format!(
            "P(k_hat=1) n=500 {p500:.2}, n=2000 {p2000:.2} (>=0.9), 2 SE {:.3}, {:.1}s",
            2.0 * se,
            t.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

fn structural_checks() -> Vec<(&'static str, bool)> {
    let spec = spec();
    let mut out = Vec::new();
    let count = |k, k0| enumerate_partitions(k, k0).map(|p| p.len()).unwrap_or(0);
    out.push(("partition counts", count(2, 1) == 2 && count(3, 2) == 3));

    let singleton = delta_feasible(&[vec![1.0, 0.5]]);
    let antiparallel = delta_feasible(&[vec![1.0, -2.0], vec![-0.5, 1.0]]);
    let orthant = delta_feasible(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 3.0]]);
    let zeros = delta_feasible(&[vec![0.0, 0.0], vec![0.0, 0.0]]);
    out.push(("delta truth table", !singleton && antiparallel && !orthant && zeros));

    let g = gram();
    let mut rng = stream_rng(91, 0);
    let mut idem = true;
    for _ in 0..50 {
        let c: Vec<f64> = (0..g.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let once = normalize_score(&c, g).unwrap();
        let twice = normalize_score(&once, g).unwrap();
        let norm = nalgebra::DVector::from_column_slice(&once);
        let q = (norm.transpose() * &g.sigma * &norm)[(0, 0)];
        idem &= (q - 1.0).abs() < 1e-10 && once.iter().zip(&twice).all(|(a, b)| (a - b).abs() < 1e-10);
    }
    out.push(("normalization idempotence", idem));

    let opt = LimitOptions::default();
    let engines: Vec<LimitEngine> = (1..=3).map(|k| LimitEngine::new(&spec, k, g, &opt).unwrap()).collect();
    let mut monotone = true;
    for draw in 0..200 {
        let v: Vec<f64> = engines.iter().map(|e| e.evaluate(92, draw).unwrap().value).collect();
        monotone &= v[0] <= v[1] + 1e-9 && v[1] <= v[2] + 1e-9;
    }
    out.push(("per-draw monotonicity in k", monotone));

    let mut gram_ok = true;
    for (mode, draws) in [(GramMode::MonteCarlo, 50_000), (GramMode::GaussHermite, 0)] {
        let m = gram_matrix_with(&spec, basis_for(&spec, &ConstraintBox::default(), &opt), mode, draws, 93).unwrap();
        let sym = (&m.sigma - m.sigma.transpose()).abs().max() == 0.0;
        let eig = m.sigma.clone().symmetric_eigen().eigenvalues.min();
        gram_ok &= sym && eig >= -1e-12;
    }
    out.push(("Gram symmetry and PSD", gram_ok));
    out
}

#[test]
fn criterion_9_structural_invariants() {
    let t = Instant::now();
    let checks = structural_checks();
    let pass = checks.iter().all(|(_, ok)| *ok);
    let detail: Vec<String> = checks.iter().map(|(n, ok)| format!("{n}={}", if *ok { "ok" } else { "FAIL" })).collect();
    report(9, "structural invariants", pass, format!("{}, {:.1}s", detail.join(", "), t.elapsed().as_secs_f64()));
    assert!(pass);
}

#[test]
fn extended_index_set_tracks_overparameterized_lr() {
    let t = Instant::now();
    let spec = spec();
    let opt = LimitOptions { extended_index_set: true, extra_points_per_axis: 25, extra_radius: 40.0, ..Default::default() };
    let g = gram_matrix_with(&spec, basis_for(&spec, &ConstraintBox::default(), &opt), GramMode::MonteCarlo, 100_000, 72).unwrap();
    let limit = simulate_limit(&spec, 2, &g, LIMIT_DRAWS, 902, &opt).unwrap();
    let sample = clean(overparameterized().two_lambda(1000, 2));
    let ks = ks_distance(&sample, &limit.values).unwrap();
    let pass = ks <= 0.2;
    let _ = writeln!(
        std::io::stderr(),
        "[extended index set] {} empirical 2lambda at k0+1 vs limit with free units: KS {ks:.4} (<=0.2), limit mean {:.3} median {:.3}, {:.1}s",
        if pass { "PASS" } else { "FAIL" },
        mean(&limit.values),
        median(&limit.values).unwrap(),
        t.elapsed().as_secs_f64()
    );
    assert!(pass);
}
