//! Linear-independence certificate for the score basis, both Gram estimators.

use mlp_lr::harness::run_check_h4;
use mlp_lr::*;

fn main() -> Result<()> {
    let r = run_check_h4(&RegressionSpec::default(), 200_000, 1)?;
    println!("{}", serde_json::to_string_pretty(&r)?);
    Ok(())
}
