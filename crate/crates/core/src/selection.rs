//! Penalized-likelihood choice of the number of hidden units:
//! `T_n(k) = sup_{Θ_k} l_n − p_n(k)` and `k̂ = argmax_k T_n(k)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{profile_lr_curve, FitConfig};
use crate::model::{ConstraintBox, Dataset};

/// Sample sizes on which schedule growth conditions are checked.
pub const VALIDATION_SIZES: [usize; 3] = [100, 10_000, 1_000_000];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltySchedule {
    /// `p_n(k) = (k(d+2)+1)/2 · log n`.
    BicLike { input_dim: usize },
    /// `p_n(k) = log_n_coefficients[k−1] · log n + offset`.
    CustomTable {
        log_n_coefficients: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
}

impl PenaltySchedule {
    pub fn bic(input_dim: usize) -> Self {
        PenaltySchedule::BicLike { input_dim }
    }

    /// Largest `k` the schedule defines, if bounded.
    pub fn max_k(&self) -> Option<usize> {
        match self {
            PenaltySchedule::BicLike { .. } => None,
            PenaltySchedule::CustomTable { log_n_coefficients, .. } => Some(log_n_coefficients.len()),
        }
    }

    /// Growth conditions on [`VALIDATION_SIZES`] for `k ≤ k_max`: strictly
    /// increasing in `k`, differences growing with `n`, `p_n(k)/n` shrinking.
    pub fn validate(&self, k_max: usize) -> Result<()> {
        if let Some(m) = self.max_k() {
            if m < k_max {
                return Err(Error::Config(format!("penalty table covers k <= {m}, need {k_max}")));
            }
        }
        let v = |n: usize, k: usize| penalty_value(self, n, k);
        for k in 1..=k_max {
            let ratios: Vec<f64> = VALIDATION_SIZES.iter().map(|&n| v(n, k) / n as f64).collect();
            if !ratios.windows(2).all(|w| w[1] < w[0]) && ratios.iter().any(|r| *r != 0.0) {
                return Err(Error::Config(format!("p_n({k})/n does not decrease along the n grid")));
            }
            if k > 1 {
                let diffs: Vec<f64> = VALIDATION_SIZES.iter().map(|&n| v(n, k) - v(n, k - 1)).collect();
                if diffs.iter().any(|d| *d <= 0.0) {
                    return Err(Error::Config(format!("penalty not increasing between k={} and k={k}", k - 1)));
                }
                if !diffs.windows(2).all(|w| w[1] > w[0]) {
                    return Err(Error::Config(format!("penalty gap between k={} and k={k} does not grow with n", k - 1)));
                }
            }
        }
        Ok(())
    }
}

/// `p_n(k)` per the schedule.
pub fn penalty_value(schedule: &PenaltySchedule, n: usize, k: usize) -> f64 {
    penalty_at_log_n(schedule, (n as f64).ln(), k)
}

pub fn penalty_at_log_n(schedule: &PenaltySchedule, log_n: f64, k: usize) -> f64 {
    match schedule {
        PenaltySchedule::BicLike { input_dim } => (k * (input_dim + 2) + 1) as f64 / 2.0 * log_n,
        PenaltySchedule::CustomTable { log_n_coefficients, offset } => {
            log_n_coefficients.get(k - 1).copied().unwrap_or(f64::INFINITY) * log_n + offset
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionEntry {
    pub k: usize,
    pub sup_loglik: f64,
    pub penalty: f64,
    pub t_n: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub per_k: Vec<SelectionEntry>,
    pub k_hat: usize,
    pub n: usize,
}

impl SelectionReport {
    /// Builds the report from per-width suprema (entry `j` is `k = j + 1`).
    pub fn from_suprema(suprema: &[(f64, bool)], n: usize, schedule: &PenaltySchedule) -> Result<Self> {
        if suprema.is_empty() {
            return Err(Error::Config("no widths to select from".into()));
        }
        let per_k: Vec<SelectionEntry> = suprema
            .iter()
            .enumerate()
            .map(|(j, &(sup, converged))| {
                let penalty = penalty_value(schedule, n, j + 1);
                SelectionEntry { k: j + 1, sup_loglik: sup, penalty, t_n: sup - penalty, converged }
            })
            .collect();
        let mut k_hat = 1;
        let mut best = f64::NEG_INFINITY;
        for e in &per_k {
            if e.t_n > best {
                best = e.t_n;
                k_hat = e.k;
            }
        }
        Ok(Self { per_k, k_hat, n })
    }

    pub fn all_converged(&self) -> bool {
        self.per_k.iter().all(|e| e.converged)
    }
}

/// Profiles the suprema for `k = 1..=k_max`, subtracts the penalties and
/// picks the smallest maximizer of `T_n`.
pub fn select_architecture(
    data: &Dataset,
    k_max: usize,
    bx: &ConstraintBox,
    config: &FitConfig,
    schedule: &PenaltySchedule,
) -> Result<SelectionReport> {
    if data.len() < 2 {
        return Err(Error::Config("selection needs n >= 2".into()));
    }
    let profile = profile_lr_curve(data, k_max, bx, config)?;
    let suprema: Vec<(f64, bool)> = profile.iter().map(|e| (e.sup_loglik, e.fit.converged)).collect();
    SelectionReport::from_suprema(&suprema, data.len(), schedule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bic_values() {
        let s = PenaltySchedule::bic(1);
        assert_eq!(penalty_at_log_n(&s, 2.0, 1), 4.0);
        assert!((penalty_value(&s, 100, 2) - 3.5 * 100f64.ln()).abs() < 1e-12);
        assert!((penalty_value(&s, 100, 2) - 16.118_095_650_958_32).abs() < 1e-9);
        s.validate(5).unwrap();
        for n in [2, 50, 1000, 1_000_000] {
            assert!(penalty_value(&s, n, 3) > penalty_value(&s, n, 2));
        }
    }

    #[test]
    fn custom_table_validation() {
        let ok = PenaltySchedule::CustomTable { log_n_coefficients: vec![1.0, 2.0, 4.0], offset: 3.0 };
        ok.validate(3).unwrap();
        assert!(ok.validate(4).is_err());
        let flat = PenaltySchedule::CustomTable { log_n_coefficients: vec![1.0, 1.0], offset: 0.0 };
        assert!(flat.validate(2).is_err());
        let json = serde_json::to_string(&ok).unwrap();
        assert!(json.contains("\"kind\":\"custom_table\""));
        assert_eq!(serde_json::from_str::<PenaltySchedule>(&json).unwrap(), ok);
    }

    #[test]
    fn argmax_prefers_smallest_k_on_ties() {
        let zero = PenaltySchedule::CustomTable { log_n_coefficients: vec![0.0; 3], offset: 0.0 };
        let r = SelectionReport::from_suprema(&[(1.0, true), (1.0, true), (1.0, true)], 10, &zero).unwrap();
        assert_eq!(r.k_hat, 1);
        let r = SelectionReport::from_suprema(&[(1.0, true), (2.0, true), (2.0, true)], 10, &zero).unwrap();
        assert_eq!(r.k_hat, 2);
    }

    proptest! {
        #[test]
        fn report_reconstructs_and_shift_is_invariant(
            sups in prop::collection::vec(-100.0f64..100.0, 1..5),
            n in 2usize..100_000,
            c in -50.0f64..50.0,
        ) {
            let coefs: Vec<f64> = (1..=sups.len()).map(|k| k as f64).collect();
            let a = PenaltySchedule::CustomTable { log_n_coefficients: coefs.clone(), offset: 0.0 };
            let b = PenaltySchedule::CustomTable { log_n_coefficients: coefs, offset: c };
            let input: Vec<(f64, bool)> = sups.iter().map(|s| (*s, true)).collect();
            let ra = SelectionReport::from_suprema(&input, n, &a).unwrap();
            let rb = SelectionReport::from_suprema(&input, n, &b).unwrap();
            for e in &ra.per_k {
                prop_assert_eq!(e.t_n, e.sup_loglik - e.penalty);
            }
            prop_assert_eq!(ra.k_hat, rb.k_hat);
        }
    }
}
