//! Simulated limiting law of `2λ` at the true width and one unit above it.

use mlp_lr::stats::summarize;
use mlp_lr::*;

fn main() -> Result<()> {
    let spec = RegressionSpec::default();
    let gram = gram_matrix(&spec, 200_000, 1)?;
    for k in 1..=2 {
        let s = simulate_limit(&spec, k, &gram, 5000, 2, &LimitOptions::default())?;
        let st = summarize(&s.values)?;
        println!("k={k} mean={:.3} quantiles(5,25,50,75,95%)={:.3?}", st.mean, st.quantiles);
    }
    Ok(())
}
