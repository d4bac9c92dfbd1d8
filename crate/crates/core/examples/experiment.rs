//! A small replicated experiment written to `target/experiment-example`.

use std::path::Path;

use mlp_lr::harness::{run_experiment, ExperimentConfig};
use mlp_lr::*;

fn main() -> Result<()> {
    let mut config = ExperimentConfig::desk(vec![200, 500], vec![1, 2], 10, 42);
    config.limit_draws = 2000;
    let out = run_experiment(&config, Path::new("target/experiment-example"))?;
    for c in &out.summary.cells {
        println!(
            "n={} k={} median 2lambda={:.3} KS={:?}",
            c.n, c.k, c.two_lambda.quantiles[2], c.two_lambda.ks_distance
        );
    }
    for f in &out.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
