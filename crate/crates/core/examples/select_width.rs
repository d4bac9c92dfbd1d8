//! Penalized-likelihood width selection with the BIC-like schedule.

use mlp_lr::*;

fn main() -> Result<()> {
    let spec = RegressionSpec::default();
    let schedule = PenaltySchedule::bic(spec.input_dim);
    for n in [200, 2000] {
        let data = generate_dataset(&spec, n, 3)?;
        let r = select_architecture(&data, 3, &ConstraintBox::default(), &FitConfig::default(), &schedule)?;
        println!("n={n} k_hat={}", r.k_hat);
        for e in &r.per_k {
            println!("  k={} sup={:.3} penalty={:.3} T={:.3}", e.k, e.sup_loglik, e.penalty, e.t_n);
        }
    }
    Ok(())
}
