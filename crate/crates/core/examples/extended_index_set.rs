//! The limit law with free-unit columns on a weight grid that covers the
//! parameter box, next to the default index set.

use mlp_lr::harness::basis_for;
use mlp_lr::limit_law::gram_matrix_with;
use mlp_lr::stats::summarize;
use mlp_lr::*;

fn main() -> Result<()> {
    let spec = RegressionSpec::default();
    let bx = ConstraintBox::default();
    let variants = [
        ("default", LimitOptions::default()),
        (
            "extended",
            LimitOptions { extended_index_set: true, extra_points_per_axis: 25, extra_radius: 40.0, ..Default::default() },
        ),
    ];
    for (name, opt) in variants {
        let gram = gram_matrix_with(&spec, basis_for(&spec, &bx, &opt), GramMode::MonteCarlo, 100_000, 1)?;
        let s = simulate_limit(&spec, 2, &gram, 1000, 2, &opt)?;
        let st = summarize(&s.values)?;
        println!("{name}: basis dim {} mean {:.3} median {:.3}", gram.dim(), st.mean, st.quantiles[2]);
    }
    Ok(())
}
