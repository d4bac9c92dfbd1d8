//! Simulate data from the default one-unit model and fit widths 1 and 2.

use mlp_lr::*;

fn main() -> Result<()> {
    let spec = RegressionSpec::default();
    let data = generate_dataset(&spec, 500, 1)?;
    let bx = ConstraintBox::default();
    for k in 1..=2 {
        let fit = fit_mle(&data, k, &bx, &FitConfig::default().with_seed(7))?;
        println!("k={k} loglik={:.4} converged={}", fit.loglik, fit.converged);
        println!("  theta_hat = {:?}", fit.theta_hat.flatten());
    }
    println!("loglik at the truth = {:.4}", conditional_loglik(&spec.theta0, &data)?);
    Ok(())
}
