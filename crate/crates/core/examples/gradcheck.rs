//! Analytic versus finite-difference derivatives of the density ratio.

use mlp_lr::harness::run_gradcheck;
use mlp_lr::likelihood::FdSteps;
use mlp_lr::*;

fn main() -> Result<()> {
    let spec = RegressionSpec::default();
    for k in 1..=3 {
        let r = run_gradcheck(&spec, k, 100, 1, FdSteps::default())?;
        println!("k={k} first={:.2e} second={:.2e}", r.max_first_rel, r.max_second_rel);
    }
    Ok(())
}
