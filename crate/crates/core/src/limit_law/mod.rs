//! Limit law of the likelihood-ratio statistic when fitted units are
//! redundant: the score basis, its Gram matrix, the linear-independence
//! certificate, partition enumeration, quadratic feasibility and the
//! Monte-Carlo simulator of `sup_S max(W_S, 0)²`.

mod basis;
mod cone;
mod gram;
mod partition;
mod simulate;

pub use basis::{eval_score_basis, ScoreBasis};
pub use cone::{delta_feasible, nnls, normalize_score, rank_cap, rank_one_generator, rayleigh_value, ConeSpec, NnlsSolution};
pub use gram::{
    check_h4, gauss_hermite_rule, gram_matrix, gram_matrix_with, GramMatrix, GramMetadata, GramMode, H4Report,
    GAUSS_HERMITE_NODES, H4_TOLERANCE,
};
pub use partition::{enumerate_partitions, Partition};
pub use simulate::{simulate_limit, DrawDiagnostics, DrawOutcome, LimitEngine, LimitOptions, LimitSample};
