//! Transfer functions with derivatives up to third order.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferFunction {
    /// Logistic sigmoid `1 / (1 + exp(-t))`.
    #[default]
    Sigmoid,
}

/// Logistic sigmoid, evaluated without overflow for any finite `t`.
#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl TransferFunction {
    /// Evaluates the derivative of order `order` (0..=3) at `t`.
    ///
    /// Orders above 3 are a programming error and panic.
    pub fn eval(self, t: f64, order: usize) -> f64 {
        let d = self.derivatives(t);
        assert!(order <= 3, "transfer derivative order {order} > 3");
        d[order]
    }

    /// `[φ(t), φ'(t), φ''(t), φ'''(t)]`.
    #[inline]
    pub fn derivatives(self, t: f64) -> [f64; 4] {
        match self {
            TransferFunction::Sigmoid => {
                let p = sigmoid(t);
                // 1 - p computed directly so the tails keep full relative precision.
                let q = sigmoid(-t);
                let d1 = p * q;
                let d2 = d1 * (q - p);
                let d3 = d1 * (1.0 - 6.0 * d1);
                [p, d1, d2, d3]
            }
        }
    }

    /// `[φ(t), φ'(t), φ''(t)]`, the orders used by the score basis and the
    /// quadratic expansion.
    #[inline]
    pub fn value_and_two(self, t: f64) -> (f64, f64, f64) {
        let d = self.derivatives(t);
        (d[0], d[1], d[2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PHI: TransferFunction = TransferFunction::Sigmoid;

    #[test]
    fn values_at_zero() {
        assert_eq!(PHI.eval(0.0, 0), 0.5);
        assert_eq!(PHI.eval(0.0, 1), 0.25);
        assert_eq!(PHI.eval(0.0, 2), 0.0);
        assert!((PHI.eval(0.0, 3) + 0.125).abs() < 1e-15);
    }

    #[test]
    fn derivative_identities_on_grid() {
        let mut t = -30.0;
        while t <= 30.0 {
            let p = 1.0 / (1.0 + (-t as f64).exp());
            let [v, d1, d2, _] = PHI.derivatives(t);
            assert!((v - p).abs() < 1e-12);
            assert!((d1 - p * (1.0 - p)).abs() < 1e-12, "t={t}");
            assert!((d2 - d1 * (1.0 - 2.0 * p)).abs() < 1e-12, "t={t}");
            t += 0.01;
        }
    }

    #[test]
    fn bounded_and_finite_in_extreme_tails() {
        for &t in &[-1e4, -745.0, -40.0, 40.0, 745.0, 1e4] {
            let d = PHI.derivatives(t);
            assert!(d.iter().all(|v| v.is_finite()));
            assert!(d[0] >= 0.0 && d[0] <= 1.0);
            assert!(d[1].abs() <= 0.25 && d[2].abs() <= 0.1 && d[3].abs() <= 0.125);
        }
        assert!(PHI.eval(-40.0, 0) > 0.0);
    }

    #[test]
    fn matches_central_differences_of_lower_order() {
        let h = 1e-5;
        let mut t = -10.0;
        while t <= 10.0 {
            for order in 1..=3 {
                let fd = (PHI.eval(t + h, order - 1) - PHI.eval(t - h, order - 1)) / (2.0 * h);
                let exact = PHI.eval(t, order);
                let rel = (fd - exact).abs() / exact.abs().max(1e-3);
                assert!(rel <= 1e-6, "order {order} at t={t}: {fd} vs {exact}");
            }
            t += 0.137;
        }
    }
}
