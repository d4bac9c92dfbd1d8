//! The MLP regression model: parameters, the constrained parameter set, the
//! data-generating specification and datasets.

mod constraints;
mod data;
mod params;

pub use constraints::{check_constraints, project_to_box, ConstraintBox, FeasibilityReport};
pub use data::{generate_dataset, Dataset, InputLaw, RegressionSpec};
pub use params::{HiddenUnit, MlpParams};
