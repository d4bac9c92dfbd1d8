//! Likelihood-ratio statistics `2λ` for a range of widths on one dataset.

use mlp_lr::harness::lr_report;
use mlp_lr::*;

fn main() -> Result<()> {
    let spec = RegressionSpec::default();
    let data = generate_dataset(&spec, 1000, 2)?;
    for k in 1..=3 {
        let r = lr_report(&data, &spec, k, &ConstraintBox::default(), &FitConfig::default())?;
        println!("k={k} 2lambda={:.4} converged={}", r.two_lambda, r.converged);
    }
    Ok(())
}
