//! Constrained maximum likelihood, likelihood-ratio statistics and
//! architecture selection for one-hidden-layer MLP regression with Gaussian
//! noise, together with a Monte-Carlo simulator for the limiting law of the
//! likelihood-ratio statistic when hidden units are redundant.
//!
//! The crate is organised bottom-up:
//!
//! - [`transfer`] and [`model`]: the sigmoid transfer function, MLP parameters,
//!   the constrained parameter set and synthetic data.
//! - [`likelihood`]: Gaussian log-likelihood, residual score, LR statistic and
//!   the second-order expansion of the density ratio around the true parameter.
//! - [`estimation`]: multi-start projected quasi-Newton maximum likelihood.
//! - [`selection`]: penalized-likelihood choice of the number of hidden units.
//! - [`limit_law`]: score basis, Gram matrix, identifiability certificate and the
//!   supremum-of-Gaussian-process simulator.
//! - [`stats`] and [`harness`]: summaries, KS distance and replicated experiments.

pub mod error;
pub mod estimation;
pub mod harness;
pub mod likelihood;
pub mod limit_law;
pub mod model;
pub mod provenance;
pub mod rng;
pub mod selection;
pub mod stats;
pub mod transfer;

pub use error::{Error, Result};
pub use estimation::{fit_mle, profile_lr_curve, FitConfig, FitResult, ProfileEntry};
pub use likelihood::{conditional_loglik, lr_statistic, residual_score};
pub use limit_law::{
    check_h4, delta_feasible, enumerate_partitions, eval_score_basis, gram_matrix,
    normalize_score, simulate_limit, GramMatrix, GramMode, LimitOptions, LimitSample, Partition,
    ScoreBasis,
};
pub use model::{
    check_constraints, generate_dataset, project_to_box, ConstraintBox, Dataset, HiddenUnit,
    InputLaw, MlpParams, RegressionSpec,
};
pub use selection::{penalty_value, select_architecture, PenaltySchedule, SelectionReport};
pub use stats::{ks_distance, summarize, SummaryStats};
pub use transfer::TransferFunction;
