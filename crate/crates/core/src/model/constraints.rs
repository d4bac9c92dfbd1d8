use serde::{Deserialize, Serialize};

use super::params::MlpParams;
use crate::error::{Error, Result};

fn default_true() -> bool {
    true
}

/// The compact parameter set: `‖w_i‖ ≥ η`, amplitude bound `a_i ≥ η`
/// (or `|a_i| ≥ η`) and `‖θ‖ ≤ M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintBox {
    pub eta: f64,
    #[serde(rename = "M")]
    pub norm_bound: f64,
    #[serde(default = "default_true")]
    pub positive_amplitudes: bool,
}

impl Default for ConstraintBox {
    fn default() -> Self {
        Self { eta: 0.1, norm_bound: 50.0, positive_amplitudes: true }
    }
}

impl ConstraintBox {
    pub fn new(eta: f64, norm_bound: f64, positive_amplitudes: bool) -> Result<Self> {
        let b = Self { eta, norm_bound, positive_amplitudes };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < self.norm_bound) {
            return Err(Error::Config(format!(
                "constraint box needs 0 < eta < M (eta={}, M={})",
                self.eta, self.norm_bound
            )));
        }
        Ok(())
    }

    /// Whether some point of `Θ_k` exists: the smallest feasible norm is
    /// `η·sqrt(2k)`.
    pub fn is_consistent_for(&self, k: usize) -> bool {
        self.eta * ((2 * k) as f64).sqrt() <= self.norm_bound
    }

    fn amplitude_slack(&self, a: f64) -> f64 {
        if self.positive_amplitudes {
            a - self.eta
        } else {
            a.abs() - self.eta
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    /// `‖w_i‖ − η` per unit.
    pub weight_slack: Vec<f64>,
    /// `a_i − η` (or `|a_i| − η`) per unit.
    pub amplitude_slack: Vec<f64>,
    /// `M − ‖θ‖`.
    pub norm_slack: f64,
}

impl FeasibilityReport {
    pub fn min_slack(&self) -> f64 {
        self.weight_slack
            .iter()
            .chain(&self.amplitude_slack)
            .fold(self.norm_slack, |m, &s| m.min(s))
    }
}

pub fn check_constraints(theta: &MlpParams, bx: &ConstraintBox) -> FeasibilityReport {
    let weight_slack: Vec<f64> = theta.units.iter().map(|u| u.weight_norm() - bx.eta).collect();
    let amplitude_slack: Vec<f64> =
        theta.units.iter().map(|u| bx.amplitude_slack(u.a)).collect();
    let norm_slack = bx.norm_bound - theta.norm();
    let feasible = norm_slack >= 0.0
        && weight_slack.iter().all(|&s| s >= 0.0)
        && amplitude_slack.iter().all(|&s| s >= 0.0);
    FeasibilityReport { feasible, weight_slack, amplitude_slack, norm_slack }
}

/// `eta / norm`, nudged up so the rescaled norm does not round below `eta`.
fn floor_scale(eta: f64, norm: f64) -> f64 {
    eta / norm * (1.0 + 4.0 * f64::EPSILON)
}

fn push_out(theta: &mut MlpParams, bx: &ConstraintBox) {
    for u in &mut theta.units {
        let n = u.weight_norm();
        if n < bx.eta {
            if n == 0.0 {
                u.w.iter_mut().for_each(|v| *v = 0.0);
                u.w[0] = bx.eta;
            } else {
                let s = floor_scale(bx.eta, n);
                u.w.iter_mut().for_each(|v| *v *= s);
            }
        }
        if bx.positive_amplitudes {
            u.a = u.a.max(bx.eta);
        } else if u.a.abs() < bx.eta {
            u.a = if u.a < 0.0 { -bx.eta } else { bx.eta };
        }
    }
}

/// Shrinks every block (β, each `a_i`, each `w_i`) by `s`, keeping the blocks
/// bounded by `η` from below, and returns the resulting squared norm.
fn shrink_with_floors(base: &MlpParams, s: f64, eta: f64, out: &mut MlpParams) -> f64 {
    out.beta = base.beta * s;
    let mut sq = out.beta * out.beta;
    for (o, b) in out.units.iter_mut().zip(&base.units) {
        let an = b.a.abs() * s;
        o.a = b.a.signum() * an.max(eta);
        let wn = b.weight_norm();
        let ws = if wn * s >= eta { s } else { floor_scale(eta, wn) };
        for (ov, bv) in o.w.iter_mut().zip(&b.w) {
            *ov = bv * ws;
        }
        sq += o.a * o.a + (wn * ws).powi(2);
    }
    sq
}

/// Maps `theta` to a feasible point of the box.
///
/// Per-unit lower bounds are enforced first (radial push-out of `w_i`, clamp
/// of `a_i`). If the norm then exceeds `M`, the vector is shrunk by
/// `M/‖θ‖` with lower bounds re-applied; when the re-applied bounds push the
/// norm back over `M`, the shrink factor is found by bisection instead.
/// Feasible inputs are returned unchanged.
pub fn project_to_box(theta: &MlpParams, bx: &ConstraintBox) -> Result<MlpParams> {
    bx.validate()?;
    let mut p = theta.clone();
    push_out(&mut p, bx);
    // a hair inside the ball so the recomputed norm never rounds past M
    let m2 = bx.norm_bound * bx.norm_bound * (1.0 - 1e-12);
    let norm = p.norm();
    if norm > bx.norm_bound {
        if !bx.is_consistent_for(p.k()) {
            return Err(Error::Infeasible(format!(
                "eta={} and M={} admit no point with k={}",
                bx.eta,
                bx.norm_bound,
                p.k()
            )));
        }
        let base = p.clone();
        let mut s = bx.norm_bound / norm;
        if shrink_with_floors(&base, s, bx.eta, &mut p) > m2 {
            let (mut lo, mut hi) = (0.0, s);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if shrink_with_floors(&base, mid, bx.eta, &mut p) > m2 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            s = lo;
            shrink_with_floors(&base, s, bx.eta, &mut p);
        }
    }
    if !check_constraints(&p, bx).feasible {
        return Err(Error::Infeasible("projection did not reach the feasible set".into()));
    }
    Ok(p)
}
