use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transfer::TransferFunction;

/// One hidden unit: output amplitude `a` and augmented weight vector `w`
/// (`w[0]` is the unit bias, `w[1..]` multiplies the inputs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenUnit {
    pub a: f64,
    pub w: Vec<f64>,
}

impl HiddenUnit {
    pub fn new(a: f64, w: Vec<f64>) -> Self {
        Self { a, w }
    }

    /// Pre-activation `wᵀ(1, x)`.
    #[inline]
    pub fn activation(&self, x: &[f64]) -> f64 {
        self.w[0] + self.w[1..].iter().zip(x).map(|(w, x)| w * x).sum::<f64>()
    }

    pub fn weight_norm(&self) -> f64 {
        self.w.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Parameters `θ = (β, a_1..a_k, w_1..w_k)` of an MLP with `k` hidden units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub beta: f64,
    pub units: Vec<HiddenUnit>,
}

impl MlpParams {
    pub fn new(beta: f64, units: Vec<HiddenUnit>) -> Result<Self> {
        let p = Self { beta, units };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .units
            .first()
            .ok_or_else(|| Error::Config("an MLP needs at least one hidden unit".into()))?;
        if first.w.is_empty() {
            return Err(Error::Config("weight vectors must contain the bias".into()));
        }
        for u in &self.units {
            if u.w.len() != first.w.len() {
                return Err(Error::Dimension { expected: first.w.len(), got: u.w.len() });
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.units.len()
    }

    /// Input dimension `d` (weight vectors have length `d + 1`).
    pub fn input_dim(&self) -> usize {
        self.units[0].w.len() - 1
    }

    /// `k(d+2)+1`.
    pub fn flat_dim(&self) -> usize {
        Self::flat_dim_for(self.k(), self.input_dim())
    }

    pub fn flat_dim_for(k: usize, d: usize) -> usize {
        k * (d + 2) + 1
    }

    /// Flattens as `(β, a_1..a_k, w_10..w_1d, .., w_k0..w_kd)`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.flat_dim());
        v.push(self.beta);
        v.extend(self.units.iter().map(|u| u.a));
        for u in &self.units {
            v.extend_from_slice(&u.w);
        }
        v
    }

    pub fn unflatten(flat: &[f64], k: usize, d: usize) -> Result<Self> {
        let expected = Self::flat_dim_for(k, d);
        if flat.len() != expected || k == 0 {
            return Err(Error::Dimension { expected, got: flat.len() });
        }
        let w0 = 1 + k;
        let units = (0..k)
            .map(|i| HiddenUnit {
                a: flat[1 + i],
                w: flat[w0 + i * (d + 1)..w0 + (i + 1) * (d + 1)].to_vec(),
            })
            .collect();
        Ok(Self { beta: flat[0], units })
    }

    pub fn norm(&self) -> f64 {
        self.flatten().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `F_θ(x) = β + Σ a_i φ(w_iᵀ(1, x))`.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        let d = self.input_dim();
        if x.len() != d {
            return Err(Error::Dimension { expected: d, got: x.len() });
        }
        Ok(self.forward_unchecked(x))
    }

    #[inline]
    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> f64 {
        let phi = TransferFunction::Sigmoid;
        self.beta
            + self
                .units
                .iter()
                .map(|u| u.a * phi.eval(u.activation(x), 0))
                .sum::<f64>()
    }
}
